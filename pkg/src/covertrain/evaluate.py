"""Bag-level evaluation and cross-validation over the (C, mu) grid.

Each fold standardizes with training-fold statistics only, builds one
initial model per C from bag-averaged positives and all negative instances,
and refines it with every requested method from that same initialization.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, FoldSplit, feature_means, kfold_split, split_dataset, standardize
from .errors import DataError
from .losses import LossKind
from .lsvm import Model, TrainConfig, decision, train_initial_svm, train_lsvm_cccp
from .optim import OptConfig
from .slsvm import Omega, SmoothConfig, train_slsvm

METHODS = ("svm", "lsvm", "slsvm")

CellKey = tuple[float, float, str, bool]  # (c, mu, method, use_bias)


@dataclass(frozen=True)
class CvCell:
    mean: float
    std: float
    fold_accuracies: tuple[float, ...]


@dataclass
class CvReport:
    cells: dict[CellKey, CvCell]
    k: int
    seed: int
    best: CellKey


def bag_accuracy(model: Model, ds: Dataset) -> float:
    """Percentage of bags whose decision label matches the bag label."""
    if not ds.bags:
        raise DataError("cannot evaluate an empty dataset")
    correct = sum(1 for bag in ds.bags if decision(model, bag)[0] == bag.label)
    return 100.0 * correct / len(ds.bags)


def prepare_fold(ds: Dataset, split: FoldSplit, fold: int) -> tuple[Dataset, Dataset]:
    """Standardized (train, test) pair for one fold; centering statistics
    come from the training split only."""
    train, test = split_dataset(ds, split, fold)
    means = feature_means(train)
    return standardize(train, means), standardize(test, means)


def run_fold_method(
    train: Dataset,
    test: Dataset,
    init: Model,
    method: str,
    c: float,
    mu: float,
    *,
    loss: LossKind = LossKind.hinge,
    n_top: int = 0,
    omega: Omega = Omega.euclidean,
    inner: OptConfig | None = None,
    max_outer: int = 50,
    outer_tol: float = 1e-6,
) -> tuple[Model, float]:
    """Train one method from a shared initialization and score the test fold."""
    inner = inner or OptConfig()
    if method == "svm":
        model = init
    elif method == "lsvm":
        cfg = TrainConfig(
            c=c, loss=loss, use_bias=init.use_bias,
            max_outer=max_outer, outer_tol=outer_tol, inner=inner,
        )
        model, _ = train_lsvm_cccp(init, train, cfg)
    elif method == "slsvm":
        cfg = SmoothConfig(mu=mu, c=c, n_top=n_top, omega=omega)
        model, _ = train_slsvm(init, train, cfg, inner)
    else:
        raise ValueError(f"unknown method {method!r}")
    return model, bag_accuracy(model, test)


def cross_validate(
    ds: Dataset,
    methods: Iterable[str],
    c_values: Sequence[float],
    mu_values: Sequence[float],
    k: int = 10,
    seed: int = 0,
    use_bias: bool = False,
    *,
    loss: LossKind = LossKind.hinge,
    n_top: int = 0,
    omega: Omega = Omega.euclidean,
    inner: OptConfig | None = None,
    max_outer: int = 50,
    outer_tol: float = 1e-6,
    threads: int = 1,
) -> CvReport:
    """Stratified k-fold grid evaluation.

    All methods in one cell start from the bit-identical initial model for
    that (fold, C); methods that ignore mu are computed once per C and the
    result reused across the mu axis, so cells never depend on enumeration
    order. Accuracies are means and sample standard deviations over folds.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected subset of {METHODS}")
    if not methods:
        raise ValueError("no methods requested")
    if not c_values or not mu_values:
        raise ValueError("empty hyperparameter grid")
    inner = inner or OptConfig()
    split = kfold_split(ds, k, seed)

    def fold_accuracies(fold: int) -> dict[CellKey, float]:
        train, test = prepare_fold(ds, split, fold)
        out: dict[CellKey, float] = {}
        for c in c_values:
            init_cfg = TrainConfig(c=c, loss=loss, use_bias=use_bias, inner=inner)
            init = train_initial_svm(train, None, init_cfg)
            mu_free: dict[str, float] = {}
            for method in methods:
                if method in ("svm", "lsvm"):
                    _, acc = run_fold_method(
                        train, test, init, method, c, mu_values[0],
                        loss=loss, n_top=n_top, omega=omega,
                        inner=inner, max_outer=max_outer, outer_tol=outer_tol,
                    )
                    mu_free[method] = acc
            for mu in mu_values:
                for method in methods:
                    if method in mu_free:
                        out[(c, mu, method, use_bias)] = mu_free[method]
                    else:
                        _, acc = run_fold_method(
                            train, test, init, method, c, mu,
                            loss=loss, n_top=n_top, omega=omega,
                            inner=inner, max_outer=max_outer, outer_tol=outer_tol,
                        )
                        out[(c, mu, method, use_bias)] = acc
        return out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_fold = list(pool.map(fold_accuracies, range(k)))
    else:
        per_fold = [fold_accuracies(f) for f in range(k)]

    cells: dict[CellKey, CvCell] = {}
    for key in per_fold[0]:
        accs = tuple(per_fold[f][key] for f in range(k))
        arr = np.array(accs)
        cells[key] = CvCell(float(arr.mean()), float(arr.std(ddof=1)), accs)

    best = min(cells, key=lambda key: (-cells[key].mean, key[0], key[1], key[2]))
    return CvReport(cells=cells, k=k, seed=seed, best=best)


def cv_report_to_rows(report: CvReport) -> list[dict]:
    """Flatten a report into sortable row dicts (one per cell)."""
    rows = []
    for (c, mu, method, bias), cell in sorted(report.cells.items()):
        rows.append(
            {
                "c": c,
                "mu": mu,
                "method": method,
                "bias": bias,
                "mean": cell.mean,
                "std": cell.std,
                "folds": list(cell.fold_accuracies),
            }
        )
    return rows

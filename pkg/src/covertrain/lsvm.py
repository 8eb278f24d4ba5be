"""Linear max-instance classifier and latent SVM training.

A bag is scored by the best instance under the linear model; the bag label
is the sign of that score. Training alternates between imputing the best
instance of each positive bag and solving the resulting convex problem,
where negative bags keep the maximization inside the loss (a pointwise
maximum of convex functions). Each alternation cannot increase the
objective being minimized, so the recorded trace is nonincreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Bag, Dataset
from .errors import DataError, NumericalError, ParseError
from .graph import NodeId
from .losses import LossKind, effective_loss, loss_grad, loss_value
from .optim import OptConfig, minimize


@dataclass(frozen=True, eq=False)
class Model:
    """Weight vector with an optional unregularized bias."""

    w: np.ndarray
    bias: float | None = None

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise DataError("model weights must be a nonempty 1-D vector")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        if self.bias is not None:
            object.__setattr__(self, "bias", float(self.bias))

    @property
    def use_bias(self) -> bool:
        return self.bias is not None

    @property
    def dim(self) -> int:
        return int(self.w.size)

    def instance_scores(self, bag: Bag) -> np.ndarray:
        if bag.instances[0].dim != self.dim:
            raise DataError(
                f"bag {bag.bag_id} has dimension {bag.instances[0].dim}, model has {self.dim}"
            )
        s = bag.feature_matrix @ self.w
        return s + self.bias if self.bias is not None else s


@dataclass(frozen=True)
class TrainConfig:
    """Regularization trade-off, loss, bias switch, and solver settings."""

    c: float = 1.0
    loss: LossKind = LossKind.hinge
    use_bias: bool = False
    max_outer: int = 50
    outer_tol: float = 1e-6
    inner: OptConfig = field(default_factory=OptConfig)

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.outer_tol <= 0 or self.max_outer < 1:
            raise ValueError("outer tolerance and iteration cap must be positive")


def decision(model: Model, bag: Bag) -> tuple[int, int, float]:
    """Label, best instance id, and best score for one bag.

    sign(0) is +1; equal scores resolve to the lowest instance_id.
    """
    scores = model.instance_scores(bag)
    pos = int(np.lexsort((bag.instance_ids, -scores))[0])
    score = float(scores[pos])
    label = 1 if score >= 0.0 else -1
    return label, int(bag.instance_ids[pos]), score


def lsvm_objective(model: Model, ds: Dataset, cfg: TrainConfig) -> float:
    """0.5||w||^2 + C * sum of per-bag losses at the max instance score.
    The bias is not regularized."""
    val = 0.5 * float(np.dot(model.w, model.w))
    for bag in ds.bags:
        s = float(model.instance_scores(bag).max())
        val += cfg.c * loss_value(cfg.loss, bag.label, s)
    return val


def _pack(w: np.ndarray, bias: float | None) -> np.ndarray:
    return np.concatenate([w, [bias]]) if bias is not None else w.copy()


def _unpack(x: np.ndarray, use_bias: bool) -> Model:
    if use_bias:
        return Model(x[:-1], float(x[-1]))
    return Model(x, None)


def _instance_problem(X: np.ndarray, y: np.ndarray, c: float, loss: LossKind, use_bias: bool):
    d = X.shape[1]

    def fun(xp: np.ndarray):
        w = xp[:d]
        b = xp[d] if use_bias else 0.0
        s = X @ w + b
        val = 0.5 * float(np.dot(w, w)) + c * float(loss_value(loss, y, s).sum())
        der = loss_grad(loss, y, s)
        gw = w + c * (X.T @ der)
        if use_bias:
            return val, np.concatenate([gw, [c * float(der.sum())]])
        return val, gw

    return fun


def train_initial_svm(
    ds: Dataset,
    positives: Iterable[NodeId] | None,
    cfg: TrainConfig,
) -> Model:
    """Train a plain (non-latent) regularized linear classifier.

    Negatives are every instance of every negative bag. Positives are either
    the per-bag averages of positive bags (``positives=None``) or an explicit
    set of (bag_id, instance_id) pairs, e.g. from cover extraction or
    negative mining. Hinge is solved as squared hinge.
    """
    if not ds.negative_bags:
        raise DataError("initial training needs at least one negative bag")
    if positives is None:
        pos_rows = [bag.feature_matrix.mean(axis=0) for bag in ds.positive_bags]
        if not pos_rows:
            raise DataError("initial training needs at least one positive bag")
    else:
        nodes = sorted(set(positives))
        if not nodes:
            raise DataError("empty positive instance set")
        pos_rows = []
        for bag_id, inst_id in nodes:
            bag = ds.bag_by_id.get(bag_id)
            if bag is None:
                raise DataError(f"unknown bag id {bag_id} in positive set")
            pos_rows.append(bag.instance_by_id(inst_id).features)
    neg_rows = [bag.feature_matrix for bag in ds.negative_bags]
    X = np.vstack([np.vstack(pos_rows)] + neg_rows)
    y = np.concatenate([np.ones(len(pos_rows)), -np.ones(sum(len(m) for m in neg_rows))])

    fun = _instance_problem(X, y, cfg.c, effective_loss(cfg.loss), cfg.use_bias)
    x0 = np.zeros(ds.dim + (1 if cfg.use_bias else 0))
    x, _ = minimize(fun, x0, cfg.inner)
    return _unpack(x, cfg.use_bias)


def _impute(model: Model, ds: Dataset) -> dict[int, int]:
    """Row position of the best-scoring instance per positive bag,
    ties to the lowest instance_id."""
    imputed = {}
    for bag in ds.positive_bags:
        scores = model.instance_scores(bag)
        imputed[bag.bag_id] = int(np.lexsort((bag.instance_ids, -scores))[0])
    return imputed


def _surrogate_problem(ds: Dataset, imputed: dict[int, int], c: float, loss: LossKind, use_bias: bool):
    """Convex problem for one alternation: positive bags pinned to their
    imputed instances, negative bags keeping the max inside the loss."""
    pos_X = (
        np.vstack([ds.bag_by_id[b].feature_matrix[r] for b, r in sorted(imputed.items())])
        if imputed
        else np.zeros((0, ds.dim))
    )
    ones = np.ones(pos_X.shape[0])
    neg_bags = ds.negative_bags
    d = ds.dim

    def fun(xp: np.ndarray):
        w = xp[:d]
        b = xp[d] if use_bias else 0.0
        val = 0.5 * float(np.dot(w, w))
        gw = w.copy()
        gb = 0.0
        if pos_X.shape[0]:
            s = pos_X @ w + b
            val += c * float(loss_value(loss, ones, s).sum())
            der = loss_grad(loss, ones, s)
            gw += c * (pos_X.T @ der)
            gb += c * float(der.sum())
        for bag in neg_bags:
            scores = bag.feature_matrix @ w + b
            pos = int(np.lexsort((bag.instance_ids, -scores))[0])
            s_max = float(scores[pos])
            val += c * loss_value(loss, -1.0, s_max)
            der = c * loss_grad(loss, -1.0, s_max)
            gw += der * bag.feature_matrix[pos]
            gb += der
        if use_bias:
            return val, np.concatenate([gw, [gb]])
        return val, gw

    return fun


def train_lsvm_cccp(
    init: Model, ds: Dataset, cfg: TrainConfig
) -> tuple[Model, tuple[float, ...]]:
    """Alternating (impute, solve) refinement from an initial model.

    The trace records the objective under the loss actually minimized
    (squared hinge when the configured loss is hinge) before training and
    after each alternation; it is nonincreasing. Stops when the relative
    decrease falls below ``outer_tol`` or after ``max_outer`` rounds.
    """
    if init.dim != ds.dim:
        raise DataError(f"model dimension {init.dim} != dataset dimension {ds.dim}")
    loss = effective_loss(cfg.loss)
    eff_cfg = TrainConfig(
        c=cfg.c, loss=loss, use_bias=init.use_bias,
        max_outer=cfg.max_outer, outer_tol=cfg.outer_tol, inner=cfg.inner,
    )
    model = init
    trace = [lsvm_objective(model, ds, eff_cfg)]
    if not np.isfinite(trace[0]):
        raise NumericalError("objective not finite at the initial model")
    for _ in range(cfg.max_outer):
        imputed = _impute(model, ds)
        fun = _surrogate_problem(ds, imputed, cfg.c, loss, init.use_bias)
        x, _ = minimize(fun, _pack(model.w, model.bias), cfg.inner)
        model = _unpack(x, init.use_bias)
        obj = lsvm_objective(model, ds, eff_cfg)
        if not np.isfinite(obj):
            raise NumericalError("objective became non-finite during refinement")
        trace.append(obj)
        rel_decrease = (trace[-2] - trace[-1]) / max(1.0, abs(trace[-2]))
        if rel_decrease < cfg.outer_tol:
            break
    return model, tuple(trace)


# ---------------------------------------------------------------------------
# Model file IO: header "dim d bias|nobias", one weight per line, then the
# bias value when present. '#' lines are ignored on load.
# ---------------------------------------------------------------------------

def save_model(model: Model, path: str | Path, footer_comments: Sequence[str] = ()) -> None:
    lines = [f"dim {model.dim} {'bias' if model.use_bias else 'nobias'}"]
    lines += [repr(float(x)) for x in model.w]
    if model.use_bias:
        lines.append(repr(float(model.bias)))
    lines += [f"# {c}" for c in footer_comments]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> Model:
    lines = [
        ln.strip()
        for ln in Path(path).read_text(encoding="utf-8").splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines:
        raise DataError(f"{path}: empty model file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dim" or head[2] not in ("bias", "nobias"):
        raise ParseError(1, "expected header 'dim d bias|nobias'")
    try:
        dim = int(head[1])
    except ValueError:
        raise ParseError(1, f"bad dimension {head[1]!r}") from None
    use_bias = head[2] == "bias"
    expected = dim + (1 if use_bias else 0)
    if len(lines) - 1 != expected:
        raise DataError(f"{path}: expected {expected} values, found {len(lines) - 1}")
    try:
        values = [float(v) for v in lines[1:]]
    except ValueError:
        raise DataError(f"{path}: bad numeric value") from None
    w = np.array(values[:dim])
    return Model(w, values[dim] if use_bias else None)

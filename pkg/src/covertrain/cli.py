"""Command-line interface: reproducible dataset generation, graph export,
cover discovery, training, evaluation, and cross-validation runs.

Every command resolves its parameters from built-in defaults, then an
optional JSON config file, then explicit flags (which win), and embeds a
run manifest (command, parameters, dataset digest, seed, version, creation
time) in each artifact it writes. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .cover import ConcaveFn, ConcaveKind, CoverConfig, CoverResult, extract_positives, greedy_cover, negative_mine
from .data import (
    DENSE_CSV,
    FORMATS,
    Dataset,
    kfold_split,
    load_dataset,
    save_dataset,
    save_truth,
    split_dataset,
    synth_generate,
    synth_generate_confounded,
)
from .errors import DataError, NumericalError, UsageError
from .evaluate import METHODS, bag_accuracy, cross_validate, cv_report_to_rows
from .graph import build_graph, write_graph_summary, write_graph_text
from .losses import LossKind
from .lsvm import Model, TrainConfig, decision, load_model, lsvm_objective, save_model, train_initial_svm, train_lsvm_cccp
from .optim import OptConfig
from .slsvm import Omega, SmoothConfig, train_slsvm
from . import report as rpt


@dataclass(frozen=True)
class RunManifest:
    """Provenance record embedded in every emitted artifact."""

    command: str
    parameters: dict
    dataset_path: str | None
    dataset_sha256: str | None
    seed: int
    version: str
    created: str

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "parameters": self.parameters,
            "dataset": {"path": self.dataset_path, "sha256": self.dataset_sha256},
            "seed": self.seed,
            "version": self.version,
            "created": self.created,
        }


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = list(obj) if not isinstance(obj, (set, frozenset)) else sorted(obj)
        return [_jsonable(v) for v in items]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _manifest(command: str, params: Mapping[str, Any], data_path: str | None) -> RunManifest:
    timestamp = params.get("timestamp") or datetime.now(timezone.utc).isoformat(timespec="seconds")
    clean = {k: _jsonable(v) for k, v in sorted(params.items()) if k != "timestamp"}
    return RunManifest(
        command=command,
        parameters=clean,
        dataset_path=str(data_path) if data_path else None,
        dataset_sha256=_sha256(data_path) if data_path else None,
        seed=int(params.get("seed", 0)),
        version=__version__,
        created=timestamp,
    )


# ---------------------------------------------------------------------------
# Argument handling: defaults < config file < explicit flags
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would call sys.exit(2)
        raise UsageError(message)


_COMMON = {
    "config": None,
    "format": DENSE_CSV,
    "out_dir": ".",
    "seed": 0,
    "threads": 1,
    "figures": True,
    "timestamp": None,
}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "synth": {
        **_COMMON,
        "n_pos": 40, "n_neg": 40, "bag_size": 10, "dim": 10,
        "signal_sep": 6.0, "clutter_sep": 0.0, "test_fraction": 0.0,
    },
    "graph": {**_COMMON, "data": None, "k": 5},
    "cover": {
        **_COMMON,
        "data": None, "k": 5, "t": 1, "alpha": 0.9, "g": "identity", "n_clusters": 3,
        "lazy": True,
    },
    "train": {
        **_COMMON,
        "data": None, "method": "slsvm", "init": "bagavg",
        "c": 1.0, "mu": 0.1, "n_top": 0, "omega": "euclidean", "loss": None,
        "bias": True, "k": 5, "t": 1, "alpha": 0.9, "g": "identity", "n_clusters": 3,
        "max_outer": 50, "outer_tol": 1e-6,
        "grad_tol": 1e-6, "max_iters": 500, "memory": 10,
    },
    "eval": {**_COMMON, "data": None, "model": None},
    "cv": {
        **_COMMON,
        "data": None, "methods": "lsvm,slsvm", "c_grid": "0.1,1,10,100",
        "mu_grid": "0.01,0.1,1,10", "folds": 10, "bias": False,
        "n_top": 0, "omega": "euclidean",
        "max_outer": 50, "outer_tol": 1e-6, "grad_tol": 1e-6, "max_iters": 500, "memory": 10,
    },
}


def _add_common(p: _Parser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, help="JSON file supplying any flag; explicit flags win")
    p.add_argument("--format", default=S, choices=FORMATS)
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--threads", type=int, default=S)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--timestamp", default=S, help="fixed creation timestamp for reproducible artifacts")


def _build_parser() -> _Parser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="covertrain", description=__doc__)
    parser.add_argument("--version", action="version", version=f"covertrain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted-signal dataset")
    _add_common(p)
    p.add_argument("--n-pos", dest="n_pos", type=int, default=S)
    p.add_argument("--n-neg", dest="n_neg", type=int, default=S)
    p.add_argument("--bag-size", dest="bag_size", type=int, default=S)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--signal-sep", dest="signal_sep", type=float, default=S)
    p.add_argument("--clutter-sep", dest="clutter_sep", type=float, default=S,
                   help="when positive, add one far-out clutter instance per positive bag")
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=S)

    p = sub.add_parser("graph", help="build and export the neighbor graph")
    _add_common(p)
    p.add_argument("--data", default=S)
    p.add_argument("--k", type=int, default=S)

    p = sub.add_parser("cover", help="greedy cover selection and positive extraction")
    _add_common(p)
    p.add_argument("--data", default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--t", type=int, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--g", default=S, choices=[k.value for k in ConcaveKind])
    p.add_argument("--n-clusters", dest="n_clusters", type=int, default=S)
    p.add_argument("--lazy", action=argparse.BooleanOptionalAction, default=S)

    p = sub.add_parser("train", help="train svm | lsvm | slsvm from a chosen initialization")
    _add_common(p)
    p.add_argument("--data", default=S)
    p.add_argument("--method", default=S, choices=METHODS)
    p.add_argument("--init", default=S, choices=("cover", "bagavg", "negmine"))
    p.add_argument("--c", type=float, default=S)
    p.add_argument("--mu", type=float, default=S)
    p.add_argument("--n-top", dest="n_top", type=int, default=S)
    p.add_argument("--omega", default=S, choices=[o.value for o in Omega])
    p.add_argument("--loss", default=S, choices=[k.value for k in LossKind])
    p.add_argument("--bias", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--t", type=int, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--g", default=S, choices=[k.value for k in ConcaveKind])
    p.add_argument("--n-clusters", dest="n_clusters", type=int, default=S)
    p.add_argument("--max-outer", dest="max_outer", type=int, default=S)
    p.add_argument("--outer-tol", dest="outer_tol", type=float, default=S)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=S)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    p.add_argument("--memory", type=int, default=S)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    _add_common(p)
    p.add_argument("--data", default=S)
    p.add_argument("--model", default=S)

    p = sub.add_parser("cv", help="cross-validate methods over the (C, mu) grid")
    _add_common(p)
    p.add_argument("--data", default=S)
    p.add_argument("--methods", default=S, help="comma-separated subset of svm,lsvm,slsvm")
    p.add_argument("--c-grid", dest="c_grid", default=S)
    p.add_argument("--mu-grid", dest="mu_grid", default=S)
    p.add_argument("--folds", type=int, default=S)
    p.add_argument("--bias", action=argparse.BooleanOptionalAction, default=S)
    p.add_argument("--n-top", dest="n_top", type=int, default=S)
    p.add_argument("--omega", default=S, choices=[o.value for o in Omega])
    p.add_argument("--max-outer", dest="max_outer", type=int, default=S)
    p.add_argument("--outer-tol", dest="outer_tol", type=float, default=S)
    p.add_argument("--grad-tol", dest="grad_tol", type=float, default=S)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    p.add_argument("--memory", type=int, default=S)

    return parser


def _resolve(command: str, explicit: dict) -> dict:
    defaults = dict(_DEFAULTS[command])
    config_path = explicit.get("config", defaults.get("config"))
    from_config: dict = {}
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
        for key, value in loaded.items():
            norm = key.replace("-", "_")
            if norm not in defaults:
                raise UsageError(f"config key {key!r} is not a flag of 'covertrain {command}'")
            from_config[norm] = value
    merged = {**defaults, **from_config, **explicit}
    merged["config"] = config_path
    return merged


def _require_data(opts: dict, key: str = "data") -> Path:
    value = opts.get(key)
    if not value:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    path = Path(value)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    return path


def _out_dir(opts: dict) -> Path:
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"--{flag} expects comma-separated numbers, got {text!r}") from None
    if not values:
        raise UsageError(f"--{flag} is empty")
    return values


def _opt_config(opts: dict) -> OptConfig:
    return OptConfig(
        memory=int(opts["memory"]),
        grad_tol=float(opts["grad_tol"]),
        max_iters=int(opts["max_iters"]),
    )


def _cover_config(opts: dict) -> CoverConfig:
    return CoverConfig(
        t=int(opts["t"]),
        alpha=float(opts["alpha"]),
        g=ConcaveFn(ConcaveKind(opts["g"])),
        k=int(opts["k"]),
    )


def _cover_result_payload(result: CoverResult) -> dict:
    return {
        "selected": [list(v) for v in result.selected],
        "gains": list(result.gains),
        "f_final": result.f_final,
        "f_total": result.f_total,
        "coverage_fraction": (result.f_final / result.f_total) if result.f_total else 1.0,
        "covered": {str(b): sorted(list(u) for u in us) for b, us in result.covered.items()},
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(opts: dict) -> int:
    out = _out_dir(opts)
    if float(opts["clutter_sep"]) > 0:
        ds, truth = synth_generate_confounded(
            int(opts["n_pos"]), int(opts["n_neg"]), int(opts["bag_size"]), int(opts["dim"]),
            float(opts["signal_sep"]), float(opts["clutter_sep"]), int(opts["seed"]),
        )
    else:
        ds, truth = synth_generate(
            int(opts["n_pos"]), int(opts["n_neg"]), int(opts["bag_size"]), int(opts["dim"]),
            float(opts["signal_sep"]), int(opts["seed"]),
        )
    manifest = _manifest("synth", opts, None)
    comment = f"manifest: {json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)}"

    frac = float(opts["test_fraction"])
    if frac > 0:
        if not 0 < frac < 1:
            raise UsageError("--test-fraction must lie in (0, 1)")
        k = max(2, round(1.0 / frac))
        split = kfold_split(ds, k, int(opts["seed"]))
        train, test = split_dataset(ds, split, 0)
        for part, name in ((train, "data_train"), (test, "data_test")):
            save_dataset(part, out / f"{name}.csv", opts["format"], header_comments=[comment])
            part_truth = {b.bag_id: truth[b.bag_id] for b in part.bags if b.bag_id in truth}
            save_truth(part_truth, out / f"{name.replace('data', 'truth')}.txt", header_comments=[comment])
    else:
        save_dataset(ds, out / "data.csv", opts["format"], header_comments=[comment])
        save_truth(truth, out / "truth.txt", header_comments=[comment])
    return 0


def cmd_graph(opts: dict) -> int:
    data = _require_data(opts)
    out = _out_dir(opts)
    ds = load_dataset(data, opts["format"])
    graph = build_graph(ds, int(opts["k"]))
    manifest = _manifest("graph", opts, data)
    comment = f"manifest: {json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)}"
    write_graph_text(graph, out / "edges.txt", header_comments=[comment])
    write_graph_summary(graph, out / "graph.json", manifest.to_dict())
    return 0


def _run_cover(ds: Dataset, opts: dict) -> tuple[CoverResult, dict[int, frozenset]]:
    graph = build_graph(ds, int(opts["k"]))
    cfg = _cover_config(opts)
    result = greedy_cover(graph, cfg, lazy=bool(opts.get("lazy", True)))
    if not result.selected:
        raise DataError("cover selected no nodes (graph has no edges)")
    n_clusters = min(int(opts["n_clusters"]), len(result.selected))
    clusters = extract_positives(result, graph, n_clusters)
    return result, clusters


def cmd_cover(opts: dict) -> int:
    data = _require_data(opts)
    out = _out_dir(opts)
    ds = load_dataset(data, opts["format"])
    result, clusters = _run_cover(ds, opts)
    manifest = _manifest("cover", opts, data)

    payload = {"manifest": manifest.to_dict(), **_cover_result_payload(result)}
    payload["clusters"] = {str(i): sorted(list(n) for n in nodes) for i, nodes in clusters.items()}
    _write_json(out / "cover.json", payload)

    comment = f"manifest: {json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)}"
    lines = [f"# {comment}", "# cluster bag_id instance_id"]
    for i in sorted(clusters):
        for bag_id, inst_id in sorted(clusters[i]):
            lines.append(f"{i} {bag_id} {inst_id}")
    (out / "positives.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    rows = []
    acc = 0.0
    for step, (node, gain) in enumerate(zip(result.selected, result.gains), start=1):
        acc += gain
        rows.append([step, node[0], node[1], repr(gain), repr(acc)])
    rpt.write_csv(out / "cover_trace.csv", ["step", "v_bag", "v_instance", "gain", "f_value"], rows)
    if opts["figures"]:
        rpt.save_cover_figure(result, out / "cover_trace.png")
    return 0


def _train_pipeline(ds: Dataset, opts: dict) -> tuple[Model, dict]:
    method = opts["method"]
    use_bias = bool(opts["bias"])
    loss_name = opts.get("loss")
    if loss_name is None:
        loss = LossKind.hinge if method == "lsvm" else LossKind.squared_hinge
    else:
        loss = LossKind(loss_name)
        if method == "slsvm" and loss is LossKind.hinge:
            raise UsageError("--method slsvm needs a smooth loss (squared_hinge or logistic)")
    inner = _opt_config(opts)

    init_mode = opts["init"]
    extra: dict = {"init": init_mode}
    if init_mode == "bagavg":
        positives = None
    elif init_mode == "negmine":
        positives = sorted(negative_mine(ds).items())
        extra["n_positives"] = len(positives)
    else:
        result, clusters = _run_cover(ds, opts)
        positives = sorted({node for nodes in clusters.values() for node in nodes})
        extra["n_positives"] = len(positives)
        extra["cover"] = _cover_result_payload(result)

    init_cfg = TrainConfig(c=float(opts["c"]), loss=loss, use_bias=use_bias, inner=inner)
    init = train_initial_svm(ds, positives, init_cfg)

    if method == "svm":
        model = init
        report = {
            "method": "svm",
            "objective": [lsvm_objective(model, ds, init_cfg)],
            "grad_norm": [],
            "termination": "converged",
        }
    elif method == "lsvm":
        cfg = TrainConfig(
            c=float(opts["c"]), loss=loss, use_bias=use_bias,
            max_outer=int(opts["max_outer"]), outer_tol=float(opts["outer_tol"]), inner=inner,
        )
        model, trace = train_lsvm_cccp(init, ds, cfg)
        report = {
            "method": "lsvm",
            "objective": list(trace),
            "grad_norm": [],
            "termination": "converged" if len(trace) - 1 < cfg.max_outer else "max_iters",
        }
        if loss is LossKind.hinge:
            report["hinge_objective_final"] = lsvm_objective(model, ds, cfg)
    else:
        cfg = SmoothConfig(
            mu=float(opts["mu"]), c=float(opts["c"]), n_top=int(opts["n_top"]),
            omega=Omega(opts["omega"]), loss=loss,
        )
        model, train_report = train_slsvm(init, ds, cfg, inner)
        report = {
            "method": "slsvm",
            "objective": list(train_report.objective),
            "grad_norm": list(train_report.grad_norm),
            "iterations": train_report.iterations,
            "termination": train_report.termination,
            "certified_rate": train_report.certified_rate,
            "config": train_report.config,
        }
    report.update(extra)
    return model, report


def cmd_train(opts: dict) -> int:
    data = _require_data(opts)
    out = _out_dir(opts)
    ds = load_dataset(data, opts["format"])
    written: list[Path] = []
    try:
        model, report = _train_pipeline(ds, opts)
        manifest = _manifest("train", opts, data)
        comment = f"manifest: {json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)}"

        path = out / "model.txt"
        save_model(model, path, footer_comments=[comment])
        written.append(path)

        payload = {"manifest": manifest.to_dict(), **report,
                   "train_accuracy": bag_accuracy(model, ds)}
        path = out / "train_report.json"
        _write_json(path, payload)
        written.append(path)

        objective = report.get("objective", [])
        grad_norm = report.get("grad_norm", [])
        rows = [
            [i, repr(o), repr(grad_norm[i]) if i < len(grad_norm) else ""]
            for i, o in enumerate(objective)
        ]
        path = out / "train_trace.csv"
        rpt.write_csv(path, ["iteration", "objective", "grad_norm"], rows)
        written.append(path)

        if opts["figures"]:
            path = out / "train_trace.png"
            rpt.save_trace_figure(objective, grad_norm, path)
            written.append(path)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return 0


def cmd_eval(opts: dict) -> int:
    data = _require_data(opts)
    model_path = _require_data(opts, "model")
    out = _out_dir(opts)
    ds = load_dataset(data, opts["format"])
    model = load_model(model_path)
    accuracy = bag_accuracy(model, ds)
    per_bag = []
    for bag in ds.bags:
        label, inst, score = decision(model, bag)
        per_bag.append(
            {"bag_id": bag.bag_id, "label": bag.label, "predicted": label,
             "argmax_instance": inst, "score": score}
        )
    manifest = _manifest("eval", opts, data)
    _write_json(out / "eval.json", {"manifest": manifest.to_dict(), "accuracy": accuracy, "bags": per_bag})

    lines = [
        f"# manifest: {json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)}",
        f"accuracy: {accuracy:.2f}%",
        f"{'bag':>6}  {'label':>5}  {'pred':>4}  {'argmax':>6}  score",
    ]
    for row in per_bag:
        lines.append(
            f"{row['bag_id']:>6}  {row['label']:>5}  {row['predicted']:>4}  "
            f"{row['argmax_instance']:>6}  {row['score']:.6f}"
        )
    (out / "eval.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_cv(opts: dict) -> int:
    data = _require_data(opts)
    out = _out_dir(opts)
    ds = load_dataset(data, opts["format"])
    methods = tuple(m.strip() for m in str(opts["methods"]).split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r} in --methods")
    report = cross_validate(
        ds,
        methods,
        _parse_float_list(opts["c_grid"], "c-grid"),
        _parse_float_list(opts["mu_grid"], "mu-grid"),
        k=int(opts["folds"]),
        seed=int(opts["seed"]),
        use_bias=bool(opts["bias"]),
        n_top=int(opts["n_top"]),
        omega=Omega(opts["omega"]),
        inner=_opt_config(opts),
        max_outer=int(opts["max_outer"]),
        outer_tol=float(opts["outer_tol"]),
        threads=int(opts["threads"]),
    )
    manifest = _manifest("cv", opts, data)
    rows = cv_report_to_rows(report)
    best = report.best
    _write_json(
        out / "cv.json",
        {
            "manifest": manifest.to_dict(),
            "k": report.k,
            "seed": report.seed,
            "best": {"c": best[0], "mu": best[1], "method": best[2], "bias": best[3]},
            "cells": rows,
        },
    )
    comment = f"# manifest: {json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)}"
    table = rpt.format_cv_table(report, ds.name)
    (out / "cv.txt").write_text(comment + "\n" + table, encoding="utf-8")
    rpt.write_csv(
        out / "cv_cells.csv",
        ["c", "mu", "method", "bias", "mean", "std"],
        [[r["c"], r["mu"], r["method"], int(r["bias"]), repr(r["mean"]), repr(r["std"])] for r in rows],
    )
    if opts["figures"]:
        rpt.save_cv_figure(report, out / "cv.png")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "graph": cmd_graph,
    "cover": cmd_cover,
    "train": cmd_train,
    "eval": cmd_eval,
    "cv": cmd_cv,
}


def main(argv: list[str] | None = None) -> int:
    try:
        parser = _build_parser()
        ns = parser.parse_args(argv)
        explicit = {k: v for k, v in vars(ns).items() if k != "command"}
        opts = _resolve(ns.command, explicit)
        return _COMMANDS[ns.command](opts)
    except UsageError as exc:
        print(f"covertrain: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError) as exc:
        print(f"covertrain: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"covertrain: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Rendering of run artifacts: delimited trace files, text tables, and
matplotlib figures written next to the machine-readable outputs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .cover import CoverResult
from .evaluate import CvReport, cv_report_to_rows

_PNG_METADATA = {"Software": "covertrain"}


def write_csv(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _save(fig, path: str | Path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)


def save_cover_figure(result: CoverResult, path: str | Path) -> None:
    """Marginal gain per greedy step and the cumulative coverage fraction."""
    steps = range(1, len(result.gains) + 1)
    cumulative = []
    total = result.f_total if result.f_total > 0 else 1.0
    acc = 0.0
    for gain in result.gains:
        acc += gain
        cumulative.append(acc / total)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(list(steps), result.gains, marker="o")
    ax1.set_xlabel("greedy step")
    ax1.set_ylabel("marginal gain")
    ax1.grid(True, alpha=0.3)
    ax2.plot(list(steps), cumulative, marker="o")
    ax2.set_xlabel("greedy step")
    ax2.set_ylabel("coverage fraction")
    ax2.set_ylim(0, 1.05)
    ax2.grid(True, alpha=0.3)
    _save(fig, path)


def save_trace_figure(objective: Sequence[float], grad_norm: Sequence[float], path: str | Path) -> None:
    """Objective and gradient-norm traces of one training run."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(range(len(objective)), objective)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("objective")
    ax1.grid(True, alpha=0.3)
    if grad_norm:
        ax2.semilogy(range(len(grad_norm)), grad_norm)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("gradient norm")
    ax2.grid(True, alpha=0.3)
    _save(fig, path)


def save_cv_figure(report: CvReport, path: str | Path) -> None:
    """Mean accuracy against C, one line per (method, mu)."""
    rows = cv_report_to_rows(report)
    series: dict[tuple[str, float], list[tuple[float, float, float]]] = {}
    for row in rows:
        series.setdefault((row["method"], row["mu"]), []).append(
            (row["c"], row["mean"], row["std"])
        )
    fig, ax = plt.subplots(figsize=(6, 4))
    for (method, mu), pts in sorted(series.items()):
        pts.sort()
        cs = [p[0] for p in pts]
        means = [p[1] for p in pts]
        stds = [p[2] for p in pts]
        label = method if method in ("svm", "lsvm") else f"{method} (mu={mu:g})"
        ax.errorbar(cs, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xscale("log")
    ax.set_xlabel("C")
    ax.set_ylabel("mean accuracy (%)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def format_cv_table(report: CvReport, dataset_name: str) -> str:
    """Text table: one summary row per method at its best cell, then the
    full per-cell grid."""
    rows = cv_report_to_rows(report)
    methods = sorted({r["method"] for r in rows})
    bias = rows[0]["bias"] if rows else False

    best_by_method: dict[str, dict] = {}
    for row in rows:
        cur = best_by_method.get(row["method"])
        if cur is None or row["mean"] > cur["mean"]:
            best_by_method[row["method"]] = row

    suffix = "w/ bias" if bias else "w/o bias"
    headers = ["Dataset"] + [f"{m.upper()} {suffix}" for m in methods]
    summary = [dataset_name] + [
        f"{best_by_method[m]['mean']:.1f} ± {best_by_method[m]['std']:.1f}" for m in methods
    ]
    widths = [max(len(h), len(s)) for h, s in zip(headers, summary)]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join(s.ljust(w) for s, w in zip(summary, widths)),
        "",
        f"{'C':>10}  {'mu':>10}  {'method':>6}  {'bias':>5}  {'mean':>7}  {'std':>7}",
    ]
    for row in rows:
        lines.append(
            f"{row['c']:>10g}  {row['mu']:>10g}  {row['method']:>6}  "
            f"{'yes' if row['bias'] else 'no':>5}  {row['mean']:>7.2f}  {row['std']:>7.2f}"
        )
    best = report.best
    lines.append("")
    lines.append(
        f"best: method={best[2]} C={best[0]:g} mu={best[1]:g} "
        f"mean={report.cells[best].mean:.2f} std={report.cells[best].std:.2f}"
    )
    return "\n".join(lines) + "\n"

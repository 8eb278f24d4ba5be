"""Limited-memory quasi-Newton minimizer with a strong-Wolfe line search.

The two-loop recursion builds the search direction from the last ``memory``
curvature pairs; pairs with non-positive s'y are skipped. The line search
brackets and then zooms with safeguarded cubic interpolation, always trying
a unit step first. Non-finite trial values are treated as failed trial
steps, never as fatal errors.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import NumericalError


class Termination(str, Enum):
    converged = "converged"
    max_iters = "max_iters"
    line_search_failure = "line_search_failure"


@dataclass(frozen=True)
class OptConfig:
    memory: int = 10
    grad_tol: float = 1e-6
    max_iters: int = 500
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_steps: int = 40

    def __post_init__(self) -> None:
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.grad_tol <= 0 or self.max_iters < 1 or self.max_ls_steps < 1:
            raise ValueError("tolerances and iteration caps must be positive")


@dataclass
class OptReport:
    iterations: int
    final_grad_norm: float
    trace: tuple[float, ...]
    grad_norm_trace: tuple[float, ...]
    termination: Termination


FunGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


def _inf_norm(g: np.ndarray) -> float:
    return float(np.max(np.abs(g))) if g.size else 0.0


def minimize(fun_grad: FunGrad, x0, cfg: OptConfig | None = None) -> tuple[np.ndarray, OptReport]:
    """Minimize a smooth function given a ``(value, gradient)`` callback.

    Deterministic given a deterministic callback. On line-search breakdown
    the best iterate found so far is returned, flagged in the report.
    """
    cfg = cfg or OptConfig()
    x = np.array(x0, dtype=np.float64)
    f, g = fun_grad(x)
    g = np.asarray(g, dtype=np.float64)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError("objective or gradient not finite at the starting point")

    hist: deque[tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=cfg.memory)
    trace = [float(f)]
    gnorms = [_inf_norm(g)]
    iters = 0
    termination = Termination.max_iters

    while iters < cfg.max_iters:
        if _inf_norm(g) <= cfg.grad_tol:
            termination = Termination.converged
            break
        d = _direction(g, hist)
        if np.dot(d, g) >= 0.0:
            d = -g
        step = _wolfe_search(fun_grad, x, f, g, d, cfg)
        if step is None:
            termination = Termination.line_search_failure
            break
        alpha, f_new, g_new, satisfied = step
        s = alpha * d
        y = g_new - g
        sy = float(np.dot(s, y))
        if satisfied and sy > 0.0:
            hist.append((s, y, 1.0 / sy))
        x = x + s
        f, g = f_new, g_new
        iters += 1
        trace.append(float(f))
        gnorms.append(_inf_norm(g))
        if not satisfied:
            termination = Termination.line_search_failure
            break
    else:
        if _inf_norm(g) <= cfg.grad_tol:
            termination = Termination.converged

    if termination is Termination.max_iters and _inf_norm(g) <= cfg.grad_tol:
        termination = Termination.converged
    report = OptReport(
        iterations=iters,
        final_grad_norm=_inf_norm(g),
        trace=tuple(trace),
        grad_norm_trace=tuple(gnorms),
        termination=termination,
    )
    return x, report


def _direction(g: np.ndarray, hist) -> np.ndarray:
    if not hist:
        return -g
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(hist):
        a = rho * float(np.dot(s, q))
        alphas.append(a)
        q -= a * y
    s, y, _ = hist[-1]
    gamma = float(np.dot(s, y) / np.dot(y, y))
    r = gamma * q
    for (s, y, rho), a in zip(hist, reversed(alphas)):
        b = rho * float(np.dot(y, r))
        r += s * (a - b)
    return -r


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolant through (a, fa, da) and (b, fb, db),
    or None when the interpolation is degenerate."""
    if a == b:
        return None
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0.0 or not np.isfinite(disc):
        return None
    d2 = np.sqrt(disc) * (1.0 if b >= a else -1.0)
    denom = db - da + 2.0 * d2
    if denom == 0.0 or not np.isfinite(denom):
        return None
    t = b - (b - a) * ((db + d2 - d1) / denom)
    return t if np.isfinite(t) else None


def _wolfe_search(fun_grad: FunGrad, x, f0, g0, d, cfg: OptConfig):
    """Strong-Wolfe line search: bracketing phase with step doubling, then
    zoom with safeguarded cubic interpolation.

    Returns (alpha, f, g, satisfied). When the conditions cannot be met
    within the evaluation budget, the best strictly-improving trial point is
    returned with satisfied=False; None means no improving point was found.
    """
    c1, c2 = cfg.c1, cfg.c2
    dphi0 = float(np.dot(g0, d))
    if not np.isfinite(dphi0) or dphi0 >= 0.0:
        return None

    evals = 0
    best = None  # (f, alpha, g) with the lowest finite f below f0

    def phi(alpha):
        nonlocal evals, best
        evals += 1
        f, g = fun_grad(x + alpha * d)
        g = np.asarray(g, dtype=np.float64)
        if np.isfinite(f) and np.all(np.isfinite(g)):
            if f < (best[0] if best is not None else f0):
                best = (float(f), float(alpha), g)
            return float(f), g, float(np.dot(g, d))
        return np.inf, None, np.nan

    def finish(alpha, f, g):
        return float(alpha), float(f), g, True

    def give_up():
        if best is None:
            return None
        f, alpha, g = best
        return alpha, f, g, False

    alpha_prev, f_prev, dphi_prev = 0.0, float(f0), dphi0
    alpha = 1.0
    bracket = None
    while evals < cfg.max_ls_steps:
        f_a, g_a, dphi_a = phi(alpha)
        if f_a > f0 + c1 * alpha * dphi0 or (alpha_prev > 0.0 and f_a >= f_prev) or not np.isfinite(f_a):
            bracket = (alpha_prev, f_prev, dphi_prev, alpha, f_a, dphi_a)
            break
        if abs(dphi_a) <= -c2 * dphi0:
            return finish(alpha, f_a, g_a)
        if dphi_a >= 0.0:
            bracket = (alpha, f_a, dphi_a, alpha_prev, f_prev, dphi_prev)
            break
        alpha_prev, f_prev, dphi_prev = alpha, f_a, dphi_a
        alpha = 2.0 * alpha
    if bracket is None:
        return give_up()

    lo, f_lo, dphi_lo, hi, f_hi, dphi_hi = bracket
    while evals < cfg.max_ls_steps:
        lo_b, hi_b = (lo, hi) if lo < hi else (hi, lo)
        width = hi_b - lo_b
        cand = None
        if np.isfinite(f_hi) and np.isfinite(dphi_hi):
            cand = _cubic_min(lo, f_lo, dphi_lo, hi, f_hi, dphi_hi)
        if cand is None or not (lo_b + 0.1 * width <= cand <= hi_b - 0.1 * width):
            cand = 0.5 * (lo + hi)
        f_j, g_j, dphi_j = phi(cand)
        if f_j > f0 + c1 * cand * dphi0 or f_j >= f_lo or not np.isfinite(f_j):
            hi, f_hi, dphi_hi = cand, f_j, dphi_j
        else:
            if abs(dphi_j) <= -c2 * dphi0:
                return finish(cand, f_j, g_j)
            if dphi_j * (hi - lo) >= 0.0:
                hi, f_hi, dphi_hi = lo, f_lo, dphi_lo
            lo, f_lo, dphi_lo = cand, f_j, dphi_j
        if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
            break
    return give_up()

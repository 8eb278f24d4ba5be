"""Classification losses shared by the trainers.

All losses take the true label y in {-1, +1} and a real-valued score, and
are vectorized over either argument. ``loss_grad`` differentiates with
respect to the score; for the (non-smooth) hinge it returns the standard
subgradient that is zero at the kink.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class LossKind(str, Enum):
    hinge = "hinge"
    squared_hinge = "squared_hinge"
    logistic = "logistic"


SMOOTH_LOSSES = (LossKind.squared_hinge, LossKind.logistic)


def effective_loss(kind: LossKind) -> LossKind:
    """The loss actually minimized by the smooth inner solvers; hinge is
    substituted by squared hinge."""
    return LossKind.squared_hinge if kind is LossKind.hinge else kind


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def loss_value(kind: LossKind, y, score):
    m = np.asarray(y, dtype=np.float64) * np.asarray(score, dtype=np.float64)
    if kind is LossKind.hinge:
        out = np.maximum(0.0, 1.0 - m)
    elif kind is LossKind.squared_hinge:
        out = np.maximum(0.0, 1.0 - m) ** 2
    else:
        out = np.logaddexp(0.0, -m)
    return float(out) if out.ndim == 0 else out


def loss_grad(kind: LossKind, y, score):
    y = np.asarray(y, dtype=np.float64)
    m = y * np.asarray(score, dtype=np.float64)
    if kind is LossKind.hinge:
        out = np.where(m < 1.0, -y, 0.0)
    elif kind is LossKind.squared_hinge:
        out = -2.0 * y * np.maximum(0.0, 1.0 - m)
    else:
        out = -y * _sigmoid(-m)
    return float(out) if out.ndim == 0 else out

"""Instantaneous command-tracking indicators and tracking ratios."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, UndefinedMetricError
from .sampling import V_X_MAX, V_Y_MAX

LIN_THRESHOLD = 0.3 * float(np.hypot(V_X_MAX, V_Y_MAX))  # 0.375 m/s
ZERO_THRESHOLD = 0.2


def nu_lin(v_body, cmd) -> int:
    """1 iff the body velocity's scalar projection on the command exceeds the threshold."""
    v = np.asarray(v_body, dtype=float)[:2]
    c = np.asarray(cmd, dtype=float)[:2]
    n = float(np.hypot(c[0], c[1]))
    if n == 0.0:
        raise DomainError("linear tracking indicator needs a nonzero command; use nu_zero")
    return int(float(v[0] * c[0] + v[1] * c[1]) / n > LIN_THRESHOLD)


def nu_zero(v) -> int:
    """1 iff |(v_x, v_y, w_z)| is strictly below the zero-command threshold."""
    v = np.asarray(v, dtype=float)
    return int(float(np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])) < ZERO_THRESHOLD)


def tracking_ratio(indicators) -> float:
    ind = np.asarray(indicators, dtype=float).ravel()
    if ind.size == 0:
        raise UndefinedMetricError("tracking ratio of an empty indicator sequence")
    return float(ind.sum() / ind.size)

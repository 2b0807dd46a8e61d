"""Fixed-step classical Runge-Kutta integration.

Works on states of any ndarray shape (vectors, matrices, or packed
concatenations); negative step widths integrate backward in time.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Deriv = Callable[[float, np.ndarray], np.ndarray]


class OdeError(RuntimeError):
    """Non-finite derivative or state during integration."""


def _check_finite(y: np.ndarray, t: float, what: str) -> None:
    if not np.isfinite(y).all():
        bad = int(np.flatnonzero(~np.isfinite(np.asarray(y).ravel()))[0])
        raise OdeError(f"non-finite {what} at t={t:g} (flat component {bad})")


def rk4_step(deriv: Deriv, t: float, state: np.ndarray, h: float) -> np.ndarray:
    """One classical RK4 update from t to t + h (h may be negative)."""
    if h == 0.0:
        raise ValueError("rk4_step requires h != 0")
    k1 = np.asarray(deriv(t, state))
    _check_finite(k1, t, "derivative")
    k2 = np.asarray(deriv(t + 0.5 * h, state + 0.5 * h * k1))
    _check_finite(k2, t + 0.5 * h, "derivative")
    k3 = np.asarray(deriv(t + 0.5 * h, state + 0.5 * h * k2))
    _check_finite(k3, t + 0.5 * h, "derivative")
    k4 = np.asarray(deriv(t + h, state + h * k3))
    _check_finite(k4, t + h, "derivative")
    return state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    deriv: Deriv,
    t_start: float,
    t_end: float,
    num_steps: int,
    state0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate with num_steps uniform RK4 steps from t_start to t_end.

    Returns (times, states) with num_steps + 1 samples; the direction is
    inferred from the sign of t_end - t_start.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    state0 = np.asarray(state0, dtype=float)
    h = (t_end - t_start) / num_steps
    times = t_start + h * np.arange(num_steps + 1)
    states = np.empty((num_steps + 1,) + state0.shape)
    states[0] = state0
    y = state0
    for k in range(num_steps):
        y = rk4_step(deriv, times[k], y, h)
        _check_finite(y, times[k + 1], "state")
        states[k + 1] = y
    return times, states

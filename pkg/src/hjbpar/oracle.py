"""Closed-form analytic ground truths.

Two families: a scalar LQR problem (f = x + u, l = (x^2 + u^2)/2,
phi = S_f x^2 / 2 on [0, t_f]) whose value-function and conditional
parameters have tanh/exp closed forms, and a scalar bilinear reachability
problem (dx/dt = u x, u in [0, 1], terminal cost -x(1)).

This module deliberately has no dependency on any solver code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class ScalarLqrClosedForm:
    """Analytic solution of the scalar LQR problem."""

    S_f: float = 1.0
    t_f: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.S_f < 1.0 + _SQRT2:
            raise ValueError(f"S_f must lie in (0, 1 + sqrt(2)), got {self.S_f}")

    def S(self, t: float) -> float:
        """Riccati solution S(t); v(t) is identically zero."""
        th = math.tanh(_SQRT2 * (t - self.t_f))
        return (self.S_f * (_SQRT2 - th) - th) / (_SQRT2 + (1.0 - self.S_f) * th)

    def v(self, t: float) -> float:
        return 0.0

    def cond_params(self, s: float, tau: float) -> tuple[float, float, float, float, float]:
        """Conditional value parameters (A, b, C, eta, J) over [s, tau]."""
        if tau < s:
            raise ValueError("requires tau >= s")
        if tau == s:
            return (1.0, 0.0, 0.0, 0.0, 0.0)
        th = math.tanh(_SQRT2 * (s - tau))
        A = _SQRT2 * math.exp(-_SQRT2 * (s - tau)) * (th + 1.0) / (th + _SQRT2)
        CJ = _SQRT2 / (th + _SQRT2) - 1.0
        return (A, 0.0, CJ, 0.0, CJ)


def scalar_S(t: float, S_f: float = 1.0, t_f: float = 1.0) -> float:
    return ScalarLqrClosedForm(S_f, t_f).S(t)


def scalar_cond_params(s: float, tau: float) -> tuple[float, float, float, float, float]:
    return ScalarLqrClosedForm().cond_params(s, tau)


def wang_value(x: float, t: float) -> float:
    """Value function of the bilinear reachability problem on [0, 1]."""
    if x > 0.0:
        return -x * math.exp(1.0 - t)
    return -x


def wang_reachable(y: float, s: float, t: float) -> tuple[float, float]:
    """Interval of states reachable at time t from x(s) = y."""
    if t < s:
        raise ValueError("requires t >= s")
    g = math.exp(t - s)
    if y > 0.0:
        return (y, y * g)
    return (y * g, y)


@dataclass(frozen=True)
class ReachableScalarElement:
    """Growth-factor parameterisation gamma(s, t) = exp(t - s) of a block."""

    gamma: float
    s: float
    t: float

    def __post_init__(self):
        if self.gamma < 1.0 and self.t >= self.s:
            raise ValueError("gamma must be >= 1 for t >= s")

    @classmethod
    def for_interval(cls, s: float, t: float) -> "ReachableScalarElement":
        return cls(gamma=math.exp(t - s), s=s, t=t)

    def reachable(self, y: float) -> tuple[float, float]:
        if y > 0.0:
            return (y, y * self.gamma)
        return (y * self.gamma, y)


def gamma_combine(e1: ReachableScalarElement, e2: ReachableScalarElement) -> ReachableScalarElement:
    """Merge adjacent blocks by multiplying growth factors."""
    if not math.isclose(e1.t, e2.s, rel_tol=0.0, abs_tol=1e-12):
        raise ValueError(f"non-adjacent intervals [{e1.s},{e1.t}] and [{e2.s},{e2.t}]")
    return ReachableScalarElement(gamma=e1.gamma * e2.gamma, s=e1.s, t=e2.t)


def wang_terminal_min(element: ReachableScalarElement, y: float) -> float:
    """Combine a reachability element with the terminal cost -z.

    min over reachable z of -z picks the largest reachable state.
    """
    lo, hi = element.reachable(y)
    return -hi

"""Problem definitions, time grids, and value-function parameter records.

These types are shared by every solver in the package. All records are
immutable after construction and safe to hand to parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Matrix = np.ndarray
Vector = np.ndarray
MatFn = Callable[[float], np.ndarray]
VecFn = Callable[[float], np.ndarray]

SYM_TOL = 1e-10
PSD_TOL = 1e-9


class ModelError(ValueError):
    """Invalid problem data or grid parameters."""


def _as_matrix(M, rows, cols, name):
    M = np.asarray(M, dtype=float)
    if M.shape != (rows, cols):
        raise ModelError(f"{name} must be {rows}x{cols}, got {M.shape}")
    return M


def _check_symmetric(M, name, tol=SYM_TOL):
    scale = max(np.linalg.norm(M), 1.0)
    if np.linalg.norm(M - M.T) > tol * scale:
        raise ModelError(f"{name} is not symmetric to {tol:g} relative")


def _check_psd(M, name, tol=PSD_TOL):
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    floor = -tol * max(np.linalg.norm(M), 1.0)
    if w.min() < floor:
        raise ModelError(f"{name} is not PSD: min eigenvalue {w.min():g}")


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Average a square matrix with its transpose to suppress drift."""
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid split into blocks of equal sub-steps.

    The global grid has ``num_blocks * steps_per_block + 1`` points; block
    edge ``j`` sits at ``t0 + j * (tf - t0) / num_blocks``.
    """

    t0: float
    tf: float
    num_blocks: int
    steps_per_block: int

    def __post_init__(self):
        if not self.tf > self.t0:
            raise ModelError(f"degenerate interval: tf={self.tf} <= t0={self.t0}")
        if self.num_blocks < 1 or self.steps_per_block < 1:
            raise ModelError("num_blocks and steps_per_block must be >= 1")

    @property
    def block_width(self) -> float:
        return (self.tf - self.t0) / self.num_blocks

    @property
    def step(self) -> float:
        return self.block_width / self.steps_per_block

    @property
    def num_points(self) -> int:
        return self.num_blocks * self.steps_per_block + 1

    @property
    def block_edges(self) -> np.ndarray:
        j = np.arange(self.num_blocks + 1)
        return self.t0 + j * (self.tf - self.t0) / self.num_blocks

    @property
    def times(self) -> np.ndarray:
        k = np.arange(self.num_points)
        return self.t0 + k * (self.tf - self.t0) / (self.num_blocks * self.steps_per_block)

    def block_interval(self, j: int) -> tuple[float, float]:
        edges = self.block_edges
        return float(edges[j]), float(edges[j + 1])


def make_uniform_grid(t0: float, tf: float, num_blocks: int, steps_per_block: int) -> TimeGrid:
    return TimeGrid(float(t0), float(tf), int(num_blocks), int(steps_per_block))


@dataclass(frozen=True)
class LqtProblem:
    """Linear quadratic tracking problem with time-varying coefficients.

    Dynamics dx/dt = F(t) x + L(t) u + c(t); the running cost penalizes
    the deviation of H(t) x from the reference r(t) through X(t) and the
    control energy through U(t). The terminal cost uses Hf, Xf, r(tf).
    """

    dim_x: int
    dim_u: int
    dim_r: int
    F: MatFn
    L: MatFn
    c: VecFn
    H: MatFn
    X: MatFn
    U: MatFn
    r: VecFn
    Hf: Matrix
    Xf: Matrix
    x0: Vector

    def __post_init__(self):
        # The terminal output dimension may differ from the running one
        # (e.g. full-state terminal weighting with a partial-state tracker).
        Hf = np.asarray(self.Hf, dtype=float)
        if Hf.ndim != 2 or Hf.shape[1] != self.dim_x:
            raise ModelError(f"Hf must have {self.dim_x} columns, got {Hf.shape}")
        n_rf = Hf.shape[0]
        object.__setattr__(self, "Hf", Hf)
        object.__setattr__(self, "Xf", _as_matrix(self.Xf, n_rf, n_rf, "Xf"))
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.dim_x,):
            raise ModelError(f"x0 must have length {self.dim_x}, got {x0.shape}")
        object.__setattr__(self, "x0", x0)
        _check_symmetric(self.Xf, "Xf", 1e-12)
        _check_psd(self.Xf, "Xf")

    def check_at(self, t: float) -> None:
        """Validate shapes and cost-matrix definiteness at time t."""
        _as_matrix(self.F(t), self.dim_x, self.dim_x, "F(t)")
        _as_matrix(self.L(t), self.dim_x, self.dim_u, "L(t)")
        _as_matrix(self.H(t), self.dim_r, self.dim_x, "H(t)")
        X = _as_matrix(self.X(t), self.dim_r, self.dim_r, "X(t)")
        U = _as_matrix(self.U(t), self.dim_u, self.dim_u, "U(t)")
        if np.asarray(self.c(t), dtype=float).reshape(-1).shape != (self.dim_x,):
            raise ModelError("c(t) has wrong length")
        if np.asarray(self.r(t), dtype=float).reshape(-1).shape != (self.dim_r,):
            raise ModelError("r(t) has wrong length")
        _check_symmetric(X, "X(t)", 1e-12)
        _check_psd(X, "X(t)")
        _check_symmetric(U, "U(t)", 1e-12)
        try:
            np.linalg.cholesky(U)
        except np.linalg.LinAlgError as exc:
            raise ModelError(f"U({t}) is not positive definite") from exc

    @classmethod
    def constant(cls, F, L, c, H, X, U, r, Hf, Xf, x0) -> "LqtProblem":
        """Build a problem from constant matrices; r may be a callable."""
        F = np.asarray(F, dtype=float)
        L = np.asarray(L, dtype=float)
        H = np.asarray(H, dtype=float)
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        c = np.asarray(c, dtype=float).reshape(-1)
        n_x, n_u = L.shape
        n_r = H.shape[0]
        if callable(r):
            r_fn = lambda t: np.asarray(r(t), dtype=float).reshape(-1)
        else:
            r_const = np.asarray(r, dtype=float).reshape(-1)
            r_fn = lambda t: r_const
        return cls(
            dim_x=n_x, dim_u=n_u, dim_r=n_r,
            F=lambda t: F, L=lambda t: L, c=lambda t: c,
            H=lambda t: H, X=lambda t: X, U=lambda t: U, r=r_fn,
            Hf=Hf, Xf=Xf, x0=x0,
        )


@dataclass(frozen=True)
class ValueParams:
    """Quadratic value function parameters S(t), v(t) at a single time."""

    S: Matrix
    v: Vector
    t: float

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        v = np.asarray(self.v, dtype=float).reshape(-1)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] != v.shape[0]:
            raise ModelError(f"inconsistent ValueParams shapes {S.shape}, {v.shape}")
        if not (np.isfinite(S).all() and np.isfinite(v).all()):
            raise ModelError(f"non-finite ValueParams at t={self.t}")
        _check_symmetric(S, "S")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class CondValueParams:
    """Dual-form parameters (A, b, C, eta, J) of a conditional value function.

    Covers the interval [s, tau]; ``includes_terminal`` marks elements that
    absorb the terminal cost (the interval end is "just after" tf, which is
    kept as a flag rather than a real number).
    """

    A: Matrix
    b: Vector
    C: Matrix
    eta: Vector
    J: Matrix
    s: float
    tau: float
    includes_terminal: bool = False

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        n = A.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(-1)
        C = np.asarray(self.C, dtype=float)
        eta = np.asarray(self.eta, dtype=float).reshape(-1)
        J = np.asarray(self.J, dtype=float)
        for M, name in ((A, "A"), (C, "C"), (J, "J")):
            if M.shape != (n, n):
                raise ModelError(f"{name} must be {n}x{n}")
        if b.shape != (n,) or eta.shape != (n,):
            raise ModelError("b and eta must be length n_x")
        _check_symmetric(C, "C")
        _check_symmetric(J, "J")
        _check_psd(C, "C")
        _check_psd(J, "J")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "J", J)

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @classmethod
    def identity(cls, n: int, t: float = 0.0) -> "CondValueParams":
        """Zero-length interval: the neutral element of the combination."""
        return cls(
            A=np.eye(n), b=np.zeros(n), C=np.zeros((n, n)),
            eta=np.zeros(n), J=np.zeros((n, n)), s=t, tau=t,
        )


@dataclass(frozen=True)
class TransitionSegment:
    """State transition pair Psi(t, s), alpha(t, s) over [s, t]."""

    Psi: Matrix
    alpha: Vector
    s: float
    t: float

    def __post_init__(self):
        Psi = np.asarray(self.Psi, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if Psi.ndim != 2 or Psi.shape[0] != Psi.shape[1] or Psi.shape[0] != alpha.shape[0]:
            raise ModelError("inconsistent TransitionSegment shapes")
        object.__setattr__(self, "Psi", Psi)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def identity(cls, n: int, t: float = 0.0) -> "TransitionSegment":
        return cls(Psi=np.eye(n), alpha=np.zeros(n), s=t, t=t)


@dataclass(frozen=True)
class Trajectory:
    """Optimal trajectory samples: times, states x*, controls u*."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        if not (len(times) == len(states) == len(controls)):
            raise ModelError("trajectory arrays must have equal length")
        if np.any(np.diff(times) <= 0):
            raise ModelError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)


@dataclass(frozen=True)
class FourierSeries:
    """Reference curve r(t) as a truncated Fourier series per output dim.

    r_d(t) = sum_k a[d, k] cos(2 pi k t / period) + b[d, k] sin(2 pi k t / period)
    """

    period: float
    a: np.ndarray  # (n_r, K)
    b: np.ndarray  # (n_r, K)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape != b.shape:
            raise ModelError("Fourier a and b coefficient tables must match in shape")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def __call__(self, t: float) -> np.ndarray:
        k = np.arange(self.a.shape[1])
        w = 2.0 * np.pi * k * t / self.period
        return self.a @ np.cos(w) + self.b @ np.sin(w)


# Default closed 2-d reference curve used when a config does not supply one.
DEFAULT_TRACK = FourierSeries(
    period=50.0,
    a=np.array([[0.0, 8.0, 0.0, 2.5], [0.0, 0.0, 1.5, 0.0]]),
    b=np.array([[0.0, 0.0, -2.0, 0.0], [0.0, 8.0, 0.0, -1.5]]),
)


def tracking_problem(fourier_coeffs: FourierSeries | None = None) -> LqtProblem:
    """Planar double-integrator tracking problem.

    State [px, py, vx, vy], control [ax, ay]; position tracks the 2-d
    reference curve. X = I2, U = 0.1 I2, terminal Hf = Xf = I4,
    x0 = [5, 5, 0, 0].
    """
    ref = fourier_coeffs if fourier_coeffs is not None else DEFAULT_TRACK
    F = np.zeros((4, 4))
    F[0, 2] = 1.0
    F[1, 3] = 1.0
    L = np.zeros((4, 2))
    L[2, 0] = 1.0
    L[3, 1] = 1.0
    H = np.zeros((2, 4))
    H[0, 0] = 1.0
    H[1, 1] = 1.0

    def r(t):
        pos = ref(t)
        return np.asarray(pos, dtype=float).reshape(-1)

    return LqtProblem(
        dim_x=4, dim_u=2, dim_r=2,
        F=lambda t: F, L=lambda t: L, c=lambda t: np.zeros(4),
        H=lambda t: H, X=lambda t: np.eye(2), U=lambda t: 0.1 * np.eye(2),
        r=r,
        Hf=np.eye(4), Xf=np.eye(4), x0=np.array([5.0, 5.0, 0.0, 0.0]),
    )


def terminal_reference(problem: LqtProblem, tf: float) -> np.ndarray:
    """Reference vector used by the terminal cost, padded to dim_r of Hf."""
    r_tf = np.asarray(problem.r(tf), dtype=float).reshape(-1)
    n_rf = problem.Hf.shape[0]
    if r_tf.shape[0] == n_rf:
        return r_tf
    out = np.zeros(n_rf)
    out[: r_tf.shape[0]] = r_tf
    return out


def scalar_lqr_problem(S_f: float = 1.0, x0: float = 1.0) -> LqtProblem:
    """Scalar LQR test problem: f = x + u, l = (x^2 + u^2) / 2, phi = S_f x^2 / 2."""
    return LqtProblem.constant(
        F=[[1.0]], L=[[1.0]], c=[0.0], H=[[1.0]], X=[[1.0]], U=[[1.0]],
        r=[0.0], Hf=[[1.0]], Xf=[[S_f]], x0=[x0],
    )

"""Scalar nonlinear HJB path.

Three cooperating pieces: a sequential upwind finite-difference baseline,
grid-valued conditional value functions computed by multiple direct
shooting with an equality-constrained SQP (derivatives via forward-mode
autodiff), and the interpolated associative grid combination used by the
parallel scan.

Problems are scalar with control-affine dynamics f(x, u) = f0(x) + u and
running cost l(x, u) = q(x) + u^2 / 2, which keeps the pointwise upwind
minimisation analytic. Unreachable or failed grid pairs carry a true +inf
sentinel; arithmetic with it saturates naturally in float64.
"""

from __future__ import annotations

import hashlib
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

import jax
import jax.numpy as jnp

jax.config.update("jax_enable_x64", True)

from .model import ModelError
from .scan import ScanPlan, inclusive_scan


class NlSolverError(RuntimeError):
    pass


class CflError(NlSolverError):
    """Upwind time step exceeds the stability limit."""

    def __init__(self, dt: float, dt_max: float):
        super().__init__(
            f"upwind time step {dt:g} violates the CFL condition; "
            f"maximum stable step is {dt_max:g}"
        )
        self.dt_max = dt_max


@dataclass(frozen=True)
class StateGrid:
    x_min: float
    x_max: float
    num_points: int

    def __post_init__(self):
        if self.num_points < 3:
            raise ModelError("state grid needs at least 3 points")
        if not self.x_max > self.x_min:
            raise ModelError("state grid requires x_max > x_min")

    @property
    def delta(self) -> float:
        return (self.x_max - self.x_min) / (self.num_points - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.num_points)


@dataclass(frozen=True)
class GridValueFn:
    """Value function sampled on the state grid at one time."""

    grid: StateGrid
    values: np.ndarray  # (M,)
    time: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.num_points,):
            raise ModelError("GridValueFn values must match the grid size")
        if np.isnan(v).any():
            raise ModelError("GridValueFn values must be finite or +inf")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class GridCondValueFn:
    """Conditional value table: entry (i, k) = V(x_i, t_start; x_k, t_end)."""

    grid: StateGrid
    values: np.ndarray  # (M, M)
    t_start: float
    t_end: float
    diagnostics: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        M = self.grid.num_points
        if v.shape != (M, M):
            raise ModelError("GridCondValueFn values must be M x M")
        if np.isnan(v).any():
            raise ModelError("GridCondValueFn values must be finite or +inf")
        object.__setattr__(self, "values", v)

    @classmethod
    def identity(cls, grid: StateGrid, t: float = 0.0) -> "GridCondValueFn":
        """Zero-length interval: 0 on the diagonal, +inf off it."""
        M = grid.num_points
        vals = np.full((M, M), np.inf)
        np.fill_diagonal(vals, 0.0)
        return cls(grid=grid, values=vals, t_start=t, t_end=t)

    @property
    def is_identity(self) -> bool:
        return self.t_start == self.t_end

    def relabel(self, t_start: float, t_end: float) -> "GridCondValueFn":
        return GridCondValueFn(
            grid=self.grid, values=self.values, t_start=t_start, t_end=t_end,
            diagnostics=self.diagnostics,
        )


@dataclass(frozen=True)
class NonlinearScalarProblem:
    """Scalar control problem f(x,u) = f0(x) + u, l(x,u) = q(x) + u^2/2.

    ``drift`` and ``state_cost`` must be plain arithmetic so they trace
    under jax and broadcast under numpy. ``key`` identifies the problem in
    the element cache.
    """

    drift: Callable
    state_cost: Callable
    terminal_cost: Callable
    key: str

    def f(self, x, u):
        return self.drift(x) + u

    def ell(self, x, u):
        return self.state_cost(x) + 0.5 * u * u


def falling_body_problem(beta: float = 0.1) -> NonlinearScalarProblem:
    """Velocity of a falling body with quadratic drag, controlled by force."""
    return NonlinearScalarProblem(
        drift=lambda x: 1.0 - beta * x * x,
        state_cost=lambda x: 0.5 * x * x,
        terminal_cost=lambda x: 2.0 * x * x,
        key=f"falling-body-beta={beta:g}",
    )


def scalar_lqr_subcase(S_f: float = 1.0) -> NonlinearScalarProblem:
    """The scalar LQR test problem expressed in the nonlinear interface."""
    return NonlinearScalarProblem(
        drift=lambda x: x,
        state_cost=lambda x: 0.5 * x * x,
        terminal_cost=lambda x: 0.5 * S_f * x * x,
        key=f"scalar-lqr-Sf={S_f:g}",
    )


# ---------------------------------------------------------------------------
# Sequential upwind finite-difference baseline
# ---------------------------------------------------------------------------

def _upwind_step(problem, x, V, delta):
    """One backward-time Godunov update; returns (hamiltonian, max speed)."""
    Dp = np.empty_like(V)
    Dm = np.empty_like(V)
    Dp[:-1] = (V[1:] - V[:-1]) / delta
    Dm[1:] = (V[1:] - V[:-1]) / delta
    # boundary points fall back to the available one-sided derivative
    Dp[-1] = Dm[-1]
    Dm[0] = Dp[0]

    f0 = problem.drift(x)
    q = problem.state_cost(x)
    # unconstrained minimiser of q + u^2/2 + D (f0 + u) is u = -D
    up, um = -Dp, -Dm
    ap, am = f0 + up, f0 + um
    Hp = q + 0.5 * up * up + ap * Dp
    Hm = q + 0.5 * um * um + am * Dm
    ok_p = ap >= 0.0
    ok_m = am <= 0.0
    # sonic fallback: drift pinned to zero by u = -f0
    Hs = q + 0.5 * f0 * f0
    H = np.where(
        ok_p & ok_m, np.minimum(Hp, Hm),
        np.where(ok_p, Hp, np.where(ok_m, Hm, Hs)),
    )
    speed = max(
        np.abs(np.where(ok_p, ap, 0.0)).max(),
        np.abs(np.where(ok_m, am, 0.0)).max(),
    )
    return H, speed


def upwind_solve(problem: NonlinearScalarProblem, grid: StateGrid, time_grid) -> list[GridValueFn]:
    """Backward upwind sweep; value functions stored at block edges."""
    x = grid.points
    delta = grid.delta
    dt = time_grid.step
    n = time_grid.steps_per_block
    V = np.asarray(problem.terminal_cost(x), dtype=float)
    edges = time_grid.block_edges
    out = [GridValueFn(grid=grid, values=V.copy(), time=float(edges[-1]))]
    for j in range(time_grid.num_blocks - 1, -1, -1):
        for _ in range(n):
            H, speed = _upwind_step(problem, x, V, delta)
            if speed > 0 and dt > delta / speed:
                raise CflError(dt, delta / speed)
            V = V + dt * H
        out.append(GridValueFn(grid=grid, values=V.copy(), time=float(edges[j])))
    return out[::-1]


def upwind_stable_solve(
    problem: NonlinearScalarProblem,
    grid: StateGrid,
    time_grid,
    max_doublings: int = 12,
) -> list[GridValueFn]:
    """Run ``upwind_solve`` with the time sub-steps doubled until CFL holds.

    Block edges are unchanged, so the returned value functions stay
    comparable with the parallel path. The stable-step information carried
    by :class:`CflError` drives the retry.
    """
    from .model import make_uniform_grid

    n = time_grid.steps_per_block
    for _ in range(max_doublings + 1):
        refined = make_uniform_grid(time_grid.t0, time_grid.tf, time_grid.num_blocks, n)
        try:
            return upwind_solve(problem, grid, refined)
        except CflError:
            n *= 2
    raise NlSolverError(
        f"upwind CFL condition unsatisfied after {max_doublings} step doublings"
    )


# ---------------------------------------------------------------------------
# Multiple direct shooting with equality-constrained SQP
# ---------------------------------------------------------------------------

_ALPHAS = jnp.asarray(2.0 ** -np.arange(8, dtype=float))


def _make_shooting_fns(problem: NonlinearScalarProblem, h: float, n: int):
    """Cost and constraint functions of the multiple-shooting variables.

    Unknowns z = [u_0 .. u_n, s_1 .. s_{n-1}] with piecewise-linear control
    between node values (node parameterisation makes control continuity
    automatic). Each sub-step integrates state and running cost with one
    RK4 step.
    """
    f0 = problem.drift
    q = problem.state_cost

    def substep(x, u0, u1):
        um = 0.5 * (u0 + u1)
        k1x = f0(x) + u0
        k1c = q(x) + 0.5 * u0 * u0
        x2 = x + 0.5 * h * k1x
        k2x = f0(x2) + um
        k2c = q(x2) + 0.5 * um * um
        x3 = x + 0.5 * h * k2x
        k3x = f0(x3) + um
        k3c = q(x3) + 0.5 * um * um
        x4 = x + h * k3x
        k4x = f0(x4) + u1
        k4c = q(x4) + 0.5 * u1 * u1
        xn = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        c = (h / 6.0) * (k1c + 2 * k2c + 2 * k3c + k4c)
        return xn, c

    def split(z, x_start, x_end):
        u = z[: n + 1]
        s = jnp.concatenate([jnp.array([x_start]), z[n + 1:], jnp.array([x_end])])
        return u, s

    def cost(z, x_start, x_end):
        u, s = split(z, x_start, x_end)
        total = 0.0
        for m in range(n):
            _, c = substep(s[m], u[m], u[m + 1])
            total = total + c
        return total

    def constraints(z, x_start, x_end):
        u, s = split(z, x_start, x_end)
        resid = []
        for m in range(n):
            xn, _ = substep(s[m], u[m], u[m + 1])
            resid.append(xn - s[m + 1])
        return jnp.stack(resid)

    return cost, constraints


def _newton_kkt_step(cost_fn, con_fn, penalty: float = 10.0):
    """Build one damped-Newton KKT update (jit-compiled, vmappable)."""

    def lagrangian(z, lam, xa, xb):
        return cost_fn(z, xa, xb) + lam @ con_fn(z, xa, xb)

    grad_l = jax.grad(lagrangian, argnums=0)
    hess_l = jax.hessian(lagrangian, argnums=0)
    jac_c = jax.jacfwd(con_fn, argnums=0)

    def merit(z, lam, xa, xb):
        gL = grad_l(z, lam, xa, xb)
        g = con_fn(z, xa, xb)
        return gL @ gL + penalty * (g @ g)

    def residuals(z, lam, xa, xb):
        gL = grad_l(z, lam, xa, xb)
        g = con_fn(z, xa, xb)
        return jnp.abs(gL).max(), jnp.abs(g).max()

    def step(z, lam, xa, xb):
        nz = z.shape[0]
        nc = lam.shape[0]
        H = hess_l(z, lam, xa, xb)
        Jc = jac_c(z, xa, xb)
        gL = grad_l(z, lam, xa, xb)
        g = con_fn(z, xa, xb)
        kkt = jnp.block([[H, Jc.T], [Jc, jnp.zeros((nc, nc))]])
        rhs = -jnp.concatenate([gL, g])
        sol = jnp.linalg.solve(kkt, rhs)
        # regularized retry if the KKT system was (numerically) singular
        kkt_reg = kkt + 1e-8 * jnp.eye(nz + nc)
        sol_reg = jnp.linalg.solve(kkt_reg, rhs)
        sol = jnp.where(jnp.isfinite(sol).all(), sol, sol_reg)
        dz, dlam = sol[:nz], sol[nz:]

        m0 = merit(z, lam, xa, xb)
        merits = jax.vmap(lambda a: merit(z + a * dz, lam + a * dlam, xa, xb))(_ALPHAS)
        ok = jnp.isfinite(merits) & (merits < m0)
        idx = jnp.where(ok.any(), jnp.argmax(ok), len(_ALPHAS) - 1)
        alpha = _ALPHAS[idx]
        return z + alpha * dz, lam + alpha * dlam

    return step, residuals


def sqp_solve_equality(
    objective: Callable,
    constraints: Callable,
    q0: np.ndarray,
    max_iter: int = 100,
    tol_grad: float = 1e-8,
    tol_con: float = 1e-10,
    penalty: float = 10.0,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Equality-constrained minimisation by damped Newton on the KKT system.

    ``objective`` and ``constraints`` must be jax-traceable functions of the
    decision vector alone. Returns (q*, multipliers, diagnostics).
    """
    cost_fn = lambda z, xa, xb: objective(z)
    con_fn = lambda z, xa, xb: jnp.atleast_1d(constraints(z))
    step, residuals = _newton_kkt_step(cost_fn, con_fn, penalty)
    step = jax.jit(step)
    residuals = jax.jit(residuals)

    z = jnp.asarray(q0, dtype=jnp.float64)
    m = int(np.atleast_1d(np.asarray(constraints(z))).shape[0])
    lam = jnp.zeros(m)
    dummy = jnp.asarray(0.0)
    it = 0
    for it in range(1, max_iter + 1):
        gnorm, cviol = residuals(z, lam, dummy, dummy)
        if gnorm <= tol_grad and cviol <= tol_con:
            break
        z, lam = step(z, lam, dummy, dummy)
    gnorm, cviol = residuals(z, lam, dummy, dummy)
    diag = {
        "converged": bool(gnorm <= tol_grad and cviol <= tol_con),
        "iterations": it,
        "grad_norm": float(gnorm),
        "constraint_violation": float(cviol),
    }
    return np.asarray(z), np.asarray(lam), diag


def _batched_shooting_solve(
    problem: NonlinearScalarProblem,
    x_start: np.ndarray,
    x_end: np.ndarray,
    block_len: float,
    n: int,
    max_iter: int = 100,
    tol_grad: float = 1e-8,
    tol_con: float = 1e-10,
):
    """Solve the shooting problem for every (x_start, x_end) pair at once."""
    h = block_len / n
    cost_fn, con_fn = _make_shooting_fns(problem, h, n)
    step, residuals = _newton_kkt_step(cost_fn, con_fn)
    vstep = jax.jit(jax.vmap(step, in_axes=(0, 0, 0, 0)))
    vres = jax.jit(jax.vmap(residuals, in_axes=(0, 0, 0, 0)))
    vcost = jax.jit(jax.vmap(cost_fn, in_axes=(0, 0, 0)))

    xa = jnp.asarray(x_start)
    xb = jnp.asarray(x_end)
    B = xa.shape[0]

    # init: straight-line state path, control compensating the drift
    frac = jnp.arange(n + 1) / n
    nodes = xa[:, None] + (xb - xa)[:, None] * frac[None, :]
    u0 = (xb - xa)[:, None] / block_len - problem.drift(nodes)
    z = jnp.concatenate([u0, nodes[:, 1:-1]], axis=1)
    lam = jnp.zeros((B, n))

    converged = jnp.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    for it in range(1, max_iter + 1):
        gnorm, cviol = vres(z, lam, xa, xb)
        now = (gnorm <= tol_grad) & (cviol <= tol_con)
        iters[np.asarray(~converged & now)] = it - 1
        converged = converged | now
        if bool(converged.all()):
            break
        z_new, lam_new = vstep(z, lam, xa, xb)
        keep = converged[:, None]
        z = jnp.where(keep, z, z_new)
        lam = jnp.where(keep, lam, lam_new)
    gnorm, cviol = vres(z, lam, xa, xb)
    converged = (gnorm <= tol_grad) & (cviol <= tol_con)
    costs = vcost(z, xa, xb)
    states = z[:, n + 1:]
    return (
        np.asarray(costs),
        np.asarray(converged),
        np.asarray(states),
        np.asarray(gnorm),
        np.asarray(cviol),
    )


def shoot_conditional_value(
    problem: NonlinearScalarProblem,
    x_start: float,
    x_end: float,
    block_len: float,
    n: int,
) -> tuple[float, dict]:
    """Cost of the optimal transfer x_start -> x_end over one block.

    Returns (+inf, diagnostics) when the SQP fails to converge.
    """
    costs, conv, _, gnorm, cviol = _batched_shooting_solve(
        problem, np.array([x_start]), np.array([x_end]), block_len, n
    )
    diag = {
        "converged": bool(conv[0]),
        "grad_norm": float(gnorm[0]),
        "constraint_violation": float(cviol[0]),
    }
    value = float(costs[0]) if conv[0] else np.inf
    return value, diag


def build_block_element(
    problem: NonlinearScalarProblem,
    grid: StateGrid,
    t_start: float,
    t_end: float,
    n: int,
    cache_dir: Optional[Union[str, Path]] = None,
) -> GridCondValueFn:
    """Shooting solves for every grid pair; failures become +inf entries.

    Endpoints whose optimised intermediate states leave the padded grid
    range are marked unreachable rather than clamped.
    """
    block_len = t_end - t_start
    key = _cache_key(problem, grid, block_len, n)
    if cache_dir is not None:
        cached = _cache_load(Path(cache_dir), key)
        if cached is not None:
            values, diag = cached
            return GridCondValueFn(
                grid=grid, values=values, t_start=t_start, t_end=t_end, diagnostics=diag
            )

    pts = grid.points
    X, Z = np.meshgrid(pts, pts, indexing="ij")
    costs, conv, states, gnorm, cviol = _batched_shooting_solve(
        problem, X.ravel(), Z.ravel(), block_len, n
    )
    margin = 0.5 * (grid.x_max - grid.x_min)
    in_range = (np.abs(states) <= max(abs(grid.x_max), abs(grid.x_min)) + margin).all(axis=1)
    ok = conv & in_range
    values = np.where(ok, costs, np.inf).reshape(grid.num_points, grid.num_points)
    diag = {
        "pairs": int(conv.size),
        "converged": int(conv.sum()),
        "out_of_range": int((~in_range).sum()),
        "max_constraint_violation": float(cviol[conv].max()) if conv.any() else np.inf,
    }
    if cache_dir is not None:
        _cache_store(Path(cache_dir), key, values, diag)
    return GridCondValueFn(
        grid=grid, values=values, t_start=t_start, t_end=t_end, diagnostics=diag
    )


def _cache_key(problem, grid, block_len, n) -> str:
    raw = f"{problem.key}|{grid.x_min}|{grid.x_max}|{grid.num_points}|{block_len!r}|{n}"
    return hashlib.sha256(raw.encode()).hexdigest()[:24]


def _cache_load(cache_dir: Path, key: str):
    path = cache_dir / f"element-{key}.npz"
    if not path.exists():
        return None
    with np.load(path, allow_pickle=True) as data:
        return data["values"], data["diag"].item()


def _cache_store(cache_dir: Path, key: str, values, diag) -> None:
    cache_dir.mkdir(parents=True, exist_ok=True)
    np.savez(cache_dir / f"element-{key}.npz", values=values, diag=np.asarray(diag, dtype=object))


# ---------------------------------------------------------------------------
# Interpolated grid combination and the parallel scan
# ---------------------------------------------------------------------------

def quad_interp_min(g_triplet, f_triplet, delta: float) -> float:
    """Quadratic-interpolation correction of a grid minimum of g + f.

    The middle point must be the grid argmin of the sum. Non-finite
    neighbours disable the correction.
    """
    g = np.asarray(g_triplet, dtype=float)
    f = np.asarray(f_triplet, dtype=float)
    base = g[1] + f[1]
    if not (np.isfinite(g).all() and np.isfinite(f).all()):
        return float(base)
    bg = (g[2] - g[0]) / (2.0 * delta)
    ag = (g[2] + g[0] - 2.0 * g[1]) / (2.0 * delta * delta)
    bf = (f[2] - f[0]) / (2.0 * delta)
    af = (f[2] + f[0] - 2.0 * f[1]) / (2.0 * delta * delta)
    a = ag + af
    if a > 0.0:
        return float(base - (bg + bf) ** 2 / (4.0 * a))
    return float(base)


def _combine_tables(G: np.ndarray, Fv: np.ndarray, delta: float) -> np.ndarray:
    """min over the shared grid index of G[i, m] + Fv[m, k], interpolated.

    G is (R, M) and Fv is (M, C); rows with no finite pairing yield +inf.
    Interior argmins get the Appendix-style quadratic correction computed
    from the separate G and Fv triplets around the minimiser.
    """
    R, M = G.shape
    C = Fv.shape[1]
    total = G[:, :, None] + Fv[None, :, :]  # (R, M, C)
    total = np.where(np.isnan(total), np.inf, total)  # inf + (-inf) cannot occur; guard anyway
    m_star = np.argmin(total, axis=1)  # first minimum on ties
    ii = np.arange(R)[:, None]
    kk = np.arange(C)[None, :]
    base = total[ii, m_star, kk]
    out = base.copy()

    interior = (m_star > 0) & (m_star < M - 1) & np.isfinite(base)
    if interior.any():
        i_idx, k_idx = np.nonzero(interior)
        m_idx = m_star[interior]
        g0 = G[i_idx, m_idx - 1]
        g1 = G[i_idx, m_idx]
        g2 = G[i_idx, m_idx + 1]
        f0 = Fv[m_idx - 1, k_idx]
        f1 = Fv[m_idx, k_idx]
        f2 = Fv[m_idx + 1, k_idx]
        finite = (
            np.isfinite(g0) & np.isfinite(g1) & np.isfinite(g2)
            & np.isfinite(f0) & np.isfinite(f1) & np.isfinite(f2)
        )
        bg = (g2 - g0) / (2.0 * delta)
        ag = (g2 + g0 - 2.0 * g1) / (2.0 * delta * delta)
        bf = (f2 - f0) / (2.0 * delta)
        af = (f2 + f0 - 2.0 * f1) / (2.0 * delta * delta)
        a = ag + af
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.where(finite & (a > 0.0), (bg + bf) ** 2 / (4.0 * a), 0.0)
        out[i_idx, k_idx] = base[interior] - corr
    return out


GridElement = Union[GridCondValueFn, GridValueFn]


def grid_combine(e1: GridElement, e2: GridElement) -> GridElement:
    """Associative grid combination: min over the intermediate state.

    Conditional x conditional yields a conditional table; conditional x
    value-function yields a value function. The zero-length identity is
    exact on both sides.
    """
    if isinstance(e1, GridCondValueFn) and e1.is_identity:
        return e2
    if isinstance(e2, GridCondValueFn) and e2.is_identity:
        return e1
    if isinstance(e1, GridValueFn):
        raise NlSolverError("cannot combine past a value function (terminal side)")
    grid = e1.grid
    if isinstance(e2, GridValueFn):
        if grid != e2.grid:
            raise NlSolverError("grid mismatch in combination")
        if abs(e1.t_end - e2.time) > 1e-9 * max(1.0, abs(e1.t_end)):
            raise NlSolverError(
                f"non-adjacent combination: [{e1.t_start:g},{e1.t_end:g}] then t={e2.time:g}"
            )
        vals = _combine_tables(e1.values, e2.values[:, None], grid.delta)[:, 0]
        return GridValueFn(grid=grid, values=vals, time=e1.t_start)
    if grid != e2.grid:
        raise NlSolverError("grid mismatch in combination")
    if abs(e1.t_end - e2.t_start) > 1e-9 * max(1.0, abs(e1.t_end)):
        raise NlSolverError(
            f"non-adjacent combination: [{e1.t_start:g},{e1.t_end:g}] "
            f"then [{e2.t_start:g},{e2.t_end:g}]"
        )
    vals = _combine_tables(e1.values, e2.values, grid.delta)
    return GridCondValueFn(grid=grid, values=vals, t_start=e1.t_start, t_end=e2.t_end)


@dataclass(frozen=True)
class NonlinearParallelSolution:
    edge_values: list[GridValueFn]
    element_diagnostics: dict
    wall_ms: dict


def nl_parallel_solve(
    problem: NonlinearScalarProblem,
    grid: StateGrid,
    time_grid,
    backend: str = "sequential",
    workers: Optional[int] = None,
    cache_dir: Optional[Union[str, Path]] = None,
) -> NonlinearParallelSolution:
    """Shooting elements plus interpolated reverse scan.

    The problems handled here are time-invariant, so a single block element
    is built (or loaded from cache) and relabelled for every block.
    """
    t0 = _time.perf_counter()
    edges = time_grid.block_edges
    base = build_block_element(
        problem, grid, float(edges[0]), float(edges[1]), time_grid.steps_per_block,
        cache_dir=cache_dir,
    )
    t1 = _time.perf_counter()
    elements: list[GridElement] = [
        base.relabel(float(edges[j]), float(edges[j + 1]))
        for j in range(time_grid.num_blocks)
    ]
    terminal = GridValueFn(
        grid=grid,
        values=np.asarray(problem.terminal_cost(grid.points), dtype=float),
        time=float(edges[-1]),
    )
    seq: list[GridElement] = elements + [terminal]
    plan = ScanPlan(length=len(seq), direction="reverse", backend=backend, workers=workers)
    ident = GridCondValueFn.identity(grid)
    suffixes = inclusive_scan(seq, grid_combine, plan, identity=ident)
    t2 = _time.perf_counter()
    edge_values = [
        s if isinstance(s, GridValueFn) else GridValueFn(grid=grid, values=np.diag(s.values), time=s.t_start)
        for s in suffixes
    ]
    return NonlinearParallelSolution(
        edge_values=edge_values,
        element_diagnostics=base.diagnostics or {},
        wall_ms={"elements": 1e3 * (t1 - t0), "scan": 1e3 * (t2 - t1)},
    )

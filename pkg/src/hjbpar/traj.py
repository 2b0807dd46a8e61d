"""Optimal trajectory recovery for the parallel LQT solver.

Method 1 scans per-block state transition pairs (Psi, alpha); Method 2
solves the closed-form minimisation that couples the prefix conditional
value function with the value function at the same time.
"""

from __future__ import annotations

import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .lqt_seq import SolverError, ValueTable, closed_loop_rhs, control_law
from .model import CondValueParams, LqtProblem, TimeGrid, Trajectory, TransitionSegment, ValueParams
from .ode_rk4 import OdeError, rk4_step
from .scan import ScanPlan, inclusive_scan

COND_LIMIT = 1e12


@dataclass(frozen=True)
class BlockTransitions:
    """Fine-grid transition pairs Psi(t, t_j), alpha(t, t_j) within a block."""

    times: np.ndarray   # (n + 1,)
    Psi: np.ndarray     # (n + 1, n_x, n_x)
    alpha: np.ndarray   # (n + 1, n_x)

    @property
    def segment(self) -> TransitionSegment:
        return TransitionSegment(
            Psi=self.Psi[-1], alpha=self.alpha[-1],
            s=float(self.times[0]), t=float(self.times[-1]),
        )


def psi_alpha_block(
    problem: LqtProblem,
    table: ValueTable,
    t_start: float,
    t_end: float,
    n: int,
) -> BlockTransitions:
    """Integrate dPsi/dt = F~ Psi, dalpha/dt = F~ alpha + c~ over one block.

    ``table`` must hold S, v at half the block sub-step (the usual densified
    resolution) so the RK4 stages hit table entries.
    """
    nx = problem.dim_x

    def deriv(t, y):
        Psi = y[: nx * nx].reshape(nx, nx)
        alpha = y[nx * nx:]
        dPsi = closed_loop_rhs_matrix(problem, table, t) @ Psi
        dalpha = closed_loop_rhs(problem, table, t, alpha)
        return np.concatenate([dPsi.ravel(), dalpha])

    h = (t_end - t_start) / n
    times = t_start + h * np.arange(n + 1)
    Psi_out = np.empty((n + 1, nx, nx))
    alpha_out = np.empty((n + 1, nx))
    Psi_out[0] = np.eye(nx)
    alpha_out[0] = np.zeros(nx)
    y = np.concatenate([np.eye(nx).ravel(), np.zeros(nx)])
    for k in range(n):
        try:
            y = rk4_step(deriv, times[k], y, h)
        except OdeError as exc:
            raise SolverError(f"transition integration failed near t={times[k]:g}") from exc
        Psi_out[k + 1] = y[: nx * nx].reshape(nx, nx)
        alpha_out[k + 1] = y[nx * nx:]
    return BlockTransitions(times=times, Psi=Psi_out, alpha=alpha_out)


def closed_loop_rhs_matrix(problem: LqtProblem, table: ValueTable, t: float) -> np.ndarray:
    from .lqt_seq import gain_matrix

    S, _ = table.at(t)
    return problem.F(t) - gain_matrix(problem, t) @ S


def compose_transitions(seg1: TransitionSegment, seg2: TransitionSegment) -> TransitionSegment:
    """Chain adjacent segments: Psi composes by product, alpha by affine push."""
    if seg1.s == seg1.t:
        return seg2 if seg2.s != seg2.t else seg1
    if seg2.s == seg2.t:
        return seg1
    if abs(seg1.t - seg2.s) > 1e-9 * max(1.0, abs(seg1.t)):
        raise SolverError(
            f"non-adjacent segments: [{seg1.s:g},{seg1.t:g}] then [{seg2.s:g},{seg2.t:g}]"
        )
    return TransitionSegment(
        Psi=seg2.Psi @ seg1.Psi,
        alpha=seg2.Psi @ seg1.alpha + seg2.alpha,
        s=seg1.s,
        t=seg2.t,
    )


def _map_blocks(fn, items, backend, workers):
    if backend == "parallel":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def build_block_transitions(
    problem: LqtProblem,
    grid: TimeGrid,
    table: ValueTable,
    backend: str = "sequential",
    workers: Optional[int] = None,
) -> list[BlockTransitions]:
    edges = grid.block_edges

    def build(j):
        return psi_alpha_block(problem, table, float(edges[j]), float(edges[j + 1]), grid.steps_per_block)

    return _map_blocks(build, range(grid.num_blocks), backend, workers)


def recover_method1(
    problem: LqtProblem,
    blocks: list[BlockTransitions],
    table: ValueTable,
    x0: Optional[np.ndarray] = None,
    backend: str = "sequential",
    workers: Optional[int] = None,
) -> Trajectory:
    """Scan block transitions, then expand each block on its fine grid."""
    x0 = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    nx = problem.dim_x
    segments = [b.segment for b in blocks]
    plan = ScanPlan(length=len(segments), direction="forward", backend=backend, workers=workers)
    ident = TransitionSegment.identity(nx)
    prefixes = inclusive_scan(segments, compose_transitions, plan, identity=ident)

    edge_states = [x0]
    for p in prefixes:
        edge_states.append(p.Psi @ x0 + p.alpha)

    n = len(blocks[0].times) - 1
    total = len(blocks) * n + 1
    times = np.empty(total)
    states = np.empty((total, nx))

    def expand(j):
        b = blocks[j]
        xj = edge_states[j]
        return np.einsum("kij,j->ki", b.Psi, xj) + b.alpha

    block_states = _map_blocks(expand, range(len(blocks)), backend, workers)
    for j, b in enumerate(blocks):
        times[j * n: (j + 1) * n] = b.times[:-1]
        states[j * n: (j + 1) * n] = block_states[j][:-1]
    times[-1] = blocks[-1].times[-1]
    states[-1] = edge_states[-1]

    controls = controls_along(problem, table, times, states, backend=backend, workers=workers)
    return Trajectory(times=times, states=states, controls=controls)


def recover_method2(
    problem: LqtProblem,
    prefix_elements: list[CondValueParams],
    edge_values: list[ValueParams],
    x0: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Block-edge states x*(t_k) = (I + C S)^-1 (A x0 + b + C v).

    ``prefix_elements[k-1]`` covers [t_0, t_k]; ``edge_values`` has T + 1
    entries aligned with the block edges. Returns (times, states).
    """
    x0 = problem.x0 if x0 is None else np.asarray(x0, dtype=float)
    if len(edge_values) != len(prefix_elements) + 1:
        raise ValueError("edge_values must have one more entry than prefix_elements")
    nx = problem.dim_x
    I = np.eye(nx)
    times = np.array([vp.t for vp in edge_values])
    states = np.empty((len(edge_values), nx))
    states[0] = x0
    for k, e in enumerate(prefix_elements, start=1):
        vp = edge_values[k]
        M = I + e.C @ vp.S
        cond_est = float(np.linalg.cond(M))
        if not np.isfinite(cond_est) or cond_est > COND_LIMIT:
            raise SolverError(
                f"(I + C S) solve at t={vp.t:g} is ill-conditioned (estimate {cond_est:.3g})"
            )
        rhs = e.A @ x0 + e.b + e.C @ vp.v
        states[k] = lu_solve(lu_factor(M), rhs)
    return times, states


def controls_along(
    problem: LqtProblem,
    table: ValueTable,
    times: np.ndarray,
    states: np.ndarray,
    backend: str = "sequential",
    workers: Optional[int] = None,
) -> np.ndarray:
    """Optimal control at each sample, pointwise from the control law."""
    def one(k):
        return control_law(problem, table.value_params(float(times[k])), states[k])

    rows = _map_blocks(one, range(len(times)), backend, workers)
    return np.asarray(rows)


@dataclass(frozen=True)
class ParallelTrajectorySolution:
    method1: Trajectory
    method2_times: np.ndarray
    method2_states: np.ndarray
    wall_ms: dict


def recover_parallel(
    problem: LqtProblem,
    grid: TimeGrid,
    table: ValueTable,
    edge_values: list[ValueParams],
    backend: str = "sequential",
    workers: Optional[int] = None,
    init: str = "forward",
) -> ParallelTrajectorySolution:
    """Run both recovery methods and time the phases."""
    from .lqt_par import forward_conditional_pass

    t0 = _time.perf_counter()
    blocks = build_block_transitions(problem, grid, table, backend=backend, workers=workers)
    traj1 = recover_method1(problem, blocks, table, backend=backend, workers=workers)
    t1 = _time.perf_counter()
    prefixes = forward_conditional_pass(problem, grid, backend=backend, init=init, workers=workers)
    times2, states2 = recover_method2(problem, prefixes, edge_values)
    t2 = _time.perf_counter()
    return ParallelTrajectorySolution(
        method1=traj1,
        method2_times=times2,
        method2_states=states2,
        wall_ms={"method1": 1e3 * (t1 - t0), "method2": 1e3 * (t2 - t1)},
    )

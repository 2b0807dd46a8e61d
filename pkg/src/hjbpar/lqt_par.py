"""Parallel LQT solver.

Per-block conditional value elements are integrated from the backward or
forward conditional HJB ODEs, combined with the associative dual-form rule,
and scanned to recover value functions at all block edges. Intra-block
values are densified by integrating the plain Riccati ODEs from each edge.
"""

from __future__ import annotations

import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .lqt_seq import SolverError, ValueTable, _integrate_riccati, gain_matrix, terminal_value
from .model import CondValueParams, LqtProblem, TimeGrid, ValueParams, symmetrize, terminal_reference
from .ode_rk4 import OdeError, rk4_step
from .scan import ScanPlan, ScanStats, inclusive_scan

COND_LIMIT = 1e12


class CombineError(SolverError):
    """Ill-conditioned combination solve."""

    def __init__(self, message: str, cond_estimate: float):
        super().__init__(message)
        self.cond_estimate = cond_estimate


def _pack(A, b, C, eta, J):
    return np.concatenate([A.ravel(), b, C.ravel(), eta, J.ravel()])


def _unpack(y, n):
    m = n * n
    A = y[:m].reshape(n, n)
    b = y[m: m + n]
    C = y[m + n: 2 * m + n].reshape(n, n)
    eta = y[2 * m + n: 2 * m + 2 * n]
    J = y[2 * m + 2 * n:].reshape(n, n)
    return A, b, C, eta, J


def _integrate_element(problem, deriv, t_from, t_to, n_steps, label):
    """Integrate the packed five-parameter system with per-step symmetrization."""
    n = problem.dim_x
    y = _pack(np.eye(n), np.zeros(n), np.zeros((n, n)), np.zeros(n), np.zeros((n, n)))
    h = (t_to - t_from) / n_steps
    t = t_from
    for k in range(n_steps):
        try:
            y = rk4_step(deriv, t, y, h)
        except OdeError as exc:
            raise SolverError(f"conditional HJB integration failed in {label}") from exc
        A, b, C, eta, J = _unpack(y, n)
        y = _pack(A, b, symmetrize(C), eta, symmetrize(J))
        t = t_from + (k + 1) * h
    return _unpack(y, n)


def init_element_backward(
    problem: LqtProblem, t_start: float, t_end: float, n: int
) -> CondValueParams:
    """Conditional value element over [t_start, t_end] from the backward ODEs.

    Integrates in s from the zero-length boundary at t_end down to t_start.
    """
    if t_end == t_start:
        return CondValueParams.identity(problem.dim_x, t_start)
    nx = problem.dim_x

    def deriv(s, y):
        A, b, C, eta, J = _unpack(y, nx)
        F = problem.F(s)
        c = problem.c(s)
        H = problem.H(s)
        X = problem.X(s)
        r = problem.r(s)
        Gam = gain_matrix(problem, s)
        AG = A @ Gam
        dA = AG @ J - A @ F
        db = -AG @ eta - A @ c
        dC = -AG @ A.T
        HXr = H.T @ (X @ r)
        HXH = H.T @ X @ H
        deta = -HXr - F.T @ eta + J @ c + J @ Gam @ eta
        dJ = -HXH - J @ F - F.T @ J + J @ Gam @ J
        return _pack(dA, db, dC, deta, dJ)

    A, b, C, eta, J = _integrate_element(
        problem, deriv, t_end, t_start, n, f"block [{t_start:g}, {t_end:g}] (backward)"
    )
    return CondValueParams(A=A, b=b, C=C, eta=eta, J=J, s=t_start, tau=t_end)


def init_element_forward(
    problem: LqtProblem, t_start: float, t_end: float, n: int
) -> CondValueParams:
    """Same element as init_element_backward, from the forward ODEs in tau."""
    if t_end == t_start:
        return CondValueParams.identity(problem.dim_x, t_start)
    nx = problem.dim_x

    def deriv(tau, y):
        A, b, C, eta, J = _unpack(y, nx)
        F = problem.F(tau)
        c = problem.c(tau)
        H = problem.H(tau)
        X = problem.X(tau)
        r = problem.r(tau)
        Gam = gain_matrix(problem, tau)
        HXr = H.T @ (X @ r)
        HXH = H.T @ X @ H
        CHXH = C @ HXH
        dA = -CHXH @ A + F @ A
        db = C @ HXr + F @ b - CHXH @ b + c
        dC = -CHXH @ C + Gam + F @ C + C @ F.T
        deta = A.T @ HXr - A.T @ HXH @ b
        dJ = A.T @ HXH @ A
        return _pack(dA, db, dC, deta, dJ)

    A, b, C, eta, J = _integrate_element(
        problem, deriv, t_start, t_end, n, f"block [{t_start:g}, {t_end:g}] (forward)"
    )
    return CondValueParams(A=A, b=b, C=C, eta=eta, J=J, s=t_start, tau=t_end)


def final_element(problem: LqtProblem, tf: float) -> CondValueParams:
    """Terminal-cost element: A = b = C = 0, J = Hf' Xf Hf, eta = Hf' Xf r(tf)."""
    n = problem.dim_x
    S_tf, v_tf = terminal_value(problem, tf)
    return CondValueParams(
        A=np.zeros((n, n)), b=np.zeros(n), C=np.zeros((n, n)),
        eta=v_tf, J=S_tf, s=tf, tau=tf, includes_terminal=True,
    )


def _is_identity(e: CondValueParams) -> bool:
    return e.s == e.tau and not e.includes_terminal


def combine(e1: CondValueParams, e2: CondValueParams) -> CondValueParams:
    """Associative combination of adjacent conditional value elements."""
    if _is_identity(e2):
        return e1
    if _is_identity(e1):
        return e2
    if e1.includes_terminal:
        raise SolverError("cannot combine past a terminal-cost element")
    if abs(e1.tau - e2.s) > 1e-9 * max(1.0, abs(e1.tau)):
        raise SolverError(
            f"non-adjacent elements: [{e1.s:g},{e1.tau:g}] then [{e2.s:g},{e2.tau:g}]"
        )
    n = e1.dim
    I = np.eye(n)
    M = I + e1.C @ e2.J          # left-solve matrix (I + C1 J2)
    N = I + e2.J @ e1.C          # for the eta / J updates (I + J2 C1)
    cond_est = float(np.linalg.cond(M))
    if not np.isfinite(cond_est) or cond_est > COND_LIMIT:
        raise CombineError(
            f"(I + C J) solve over [{e1.s:g},{e2.tau:g}] is ill-conditioned "
            f"(estimate {cond_est:.3g})",
            cond_est,
        )
    luM = lu_factor(M)
    luN = lu_factor(N)
    A = e2.A @ lu_solve(luM, e1.A)
    b = e2.A @ lu_solve(luM, e1.b + e1.C @ e2.eta) + e2.b
    C = symmetrize(e2.A @ lu_solve(luM, e1.C) @ e2.A.T + e2.C)
    eta = e1.A.T @ lu_solve(luN, e2.eta - e2.J @ e1.b) + e1.eta
    J = symmetrize(e1.A.T @ lu_solve(luN, e2.J) @ e1.A + e1.J)
    return CondValueParams(
        A=A, b=b, C=C, eta=eta, J=J, s=e1.s, tau=e2.tau,
        includes_terminal=e2.includes_terminal,
    )


def _map_blocks(fn, items, backend, workers):
    if backend == "parallel":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def block_elements(
    problem: LqtProblem,
    grid: TimeGrid,
    init: str = "backward",
    backend: str = "sequential",
    workers: Optional[int] = None,
    refine: int = 2,
) -> list[CondValueParams]:
    """Elements a_0 .. a_{T-1}, one per block, computed independently.

    Elements are integrated at the same half-step resolution as the
    sequential baseline (refine = 2) so the two solvers agree to RK4
    rounding rather than differing by a step-size factor.
    """
    if init == "backward":
        make = init_element_backward
    elif init == "forward":
        make = init_element_forward
    else:
        raise ValueError(f"unknown element initialization {init!r}")
    edges = grid.block_edges
    n = grid.steps_per_block * refine

    def build(j):
        return make(problem, float(edges[j]), float(edges[j + 1]), n)

    return _map_blocks(build, range(grid.num_blocks), backend, workers)


def backward_value_pass(
    problem: LqtProblem,
    grid: TimeGrid,
    backend: str = "sequential",
    init: str = "backward",
    workers: Optional[int] = None,
    elements: Optional[list[CondValueParams]] = None,
    stats: Optional[ScanStats] = None,
    refine: int = 4,
) -> list[ValueParams]:
    """Value function parameters at all block edges via a reverse scan."""
    if elements is None:
        elements = block_elements(
            problem, grid, init=init, backend=backend, workers=workers, refine=refine
        )
    seq = list(elements) + [final_element(problem, grid.tf)]
    plan = ScanPlan(length=len(seq), direction="reverse", backend=backend, workers=workers)
    ident = CondValueParams.identity(problem.dim_x)
    suffixes = inclusive_scan(seq, combine, plan, identity=ident, stats=stats)
    edges = grid.block_edges
    out = []
    for k, e in enumerate(suffixes):
        scale = max(1.0, float(np.linalg.norm(e.J)))
        residual = max(np.abs(e.A).max(), np.abs(e.b).max(), np.abs(e.C).max())
        if residual > 1e-9 * scale:
            raise SolverError(
                f"suffix element at t={edges[k]:g} retains non-zero A/b/C "
                f"(residual {residual:.3g}); terminal reduction failed"
            )
        out.append(ValueParams(S=symmetrize(e.J), v=e.eta, t=float(edges[k])))
    return out


def forward_conditional_pass(
    problem: LqtProblem,
    grid: TimeGrid,
    backend: str = "sequential",
    init: str = "forward",
    workers: Optional[int] = None,
    elements: Optional[list[CondValueParams]] = None,
    stats: Optional[ScanStats] = None,
    refine: int = 4,
) -> list[CondValueParams]:
    """Prefix conditional value functions V(., t0; ., t_k) for k = 1..T."""
    if elements is None:
        elements = block_elements(
            problem, grid, init=init, backend=backend, workers=workers, refine=refine
        )
    plan = ScanPlan(length=len(elements), direction="forward", backend=backend, workers=workers)
    ident = CondValueParams.identity(problem.dim_x)
    return inclusive_scan(elements, combine, plan, identity=ident, stats=stats)


def densify_block(
    problem: LqtProblem,
    edge_value: ValueParams,
    t_start: float,
    t_end: float,
    n: int,
    refine: int = 2,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intra-block S, v by integrating the Riccati ODEs back from the edge.

    ``edge_value`` holds S, v at t_end; returns ascending arrays with
    n * refine + 1 samples on [t_start, t_end].
    """
    return _integrate_riccati(problem, t_end, t_start, n * refine, edge_value.S, edge_value.v)


def parallel_value_table(
    problem: LqtProblem,
    grid: TimeGrid,
    edge_values: list[ValueParams],
    backend: str = "sequential",
    workers: Optional[int] = None,
    refine: int = 2,
) -> ValueTable:
    """Densify every block (independently) into one global fine table."""
    edges = grid.block_edges
    n = grid.steps_per_block

    def densify(j):
        return densify_block(problem, edge_values[j + 1], float(edges[j]), float(edges[j + 1]), n, refine)

    blocks = _map_blocks(densify, range(grid.num_blocks), backend, workers)
    per_block = n * refine
    total = grid.num_blocks * per_block + 1
    nx = problem.dim_x
    times = grid.t0 + (grid.tf - grid.t0) / (grid.num_blocks * n * refine) * np.arange(total)
    S = np.empty((total, nx, nx))
    v = np.empty((total, nx))
    for j, (bt, bS, bv) in enumerate(blocks):
        S[j * per_block: (j + 1) * per_block] = bS[:-1]
        v[j * per_block: (j + 1) * per_block] = bv[:-1]
    S[-1] = edge_values[-1].S
    v[-1] = edge_values[-1].v
    return ValueTable(times=times, S=S, v=v)


@dataclass(frozen=True)
class ParallelBackwardSolution:
    edge_values: list[ValueParams]
    table: ValueTable
    wall_ms: dict
    scan_stats: ScanStats


def solve_backward_parallel(
    problem: LqtProblem,
    grid: TimeGrid,
    backend: str = "sequential",
    init: str = "backward",
    workers: Optional[int] = None,
    refine: int = 4,
) -> ParallelBackwardSolution:
    """Elements, reverse scan, and densification; timing per phase."""
    t0 = _time.perf_counter()
    elements = block_elements(
        problem, grid, init=init, backend=backend, workers=workers, refine=refine
    )
    t1 = _time.perf_counter()
    stats = ScanStats()
    edge_values = backward_value_pass(
        problem, grid, backend=backend, workers=workers, elements=elements, stats=stats
    )
    t2 = _time.perf_counter()
    table = parallel_value_table(
        problem, grid, edge_values, backend=backend, workers=workers, refine=refine
    )
    t3 = _time.perf_counter()
    return ParallelBackwardSolution(
        edge_values=edge_values,
        table=table,
        wall_ms={
            "elements": 1e3 * (t1 - t0),
            "scan": 1e3 * (t2 - t1),
            "densify": 1e3 * (t3 - t2),
        },
        scan_stats=stats,
    )

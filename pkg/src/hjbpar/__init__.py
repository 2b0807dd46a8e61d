"""Temporal-parallel solvers for continuous-time optimal control.

Linear-quadratic tracking problems get a closed-form conditional-value
path (backward/forward element ODEs, associative combination, parallel
scan, two trajectory-recovery methods). Scalar nonlinear problems get a
grid-valued path (multiple-shooting elements, interpolated combination).
"""

from .model import (
    CondValueParams,
    LqtProblem,
    ModelError,
    TimeGrid,
    Trajectory,
    TransitionSegment,
    ValueParams,
    make_uniform_grid,
    scalar_lqr_problem,
    tracking_problem,
)
from .scan import ScanPlan, ScanStats, inclusive_scan, scan_depth
from .lqt_seq import SequentialSolution, SolverError, ValueTable, solve_sequential
from .lqt_par import CombineError, combine, solve_backward_parallel
from .traj import ParallelTrajectorySolution, recover_parallel
from .nl_hjb import (
    GridCondValueFn,
    GridValueFn,
    NonlinearScalarProblem,
    StateGrid,
    grid_combine,
    nl_parallel_solve,
    upwind_solve,
)

__version__ = "0.1.0"

__all__ = [
    "CondValueParams",
    "CombineError",
    "GridCondValueFn",
    "GridValueFn",
    "LqtProblem",
    "ModelError",
    "NonlinearScalarProblem",
    "ParallelTrajectorySolution",
    "ScanPlan",
    "ScanStats",
    "SequentialSolution",
    "SolverError",
    "StateGrid",
    "TimeGrid",
    "Trajectory",
    "TransitionSegment",
    "ValueParams",
    "ValueTable",
    "combine",
    "grid_combine",
    "inclusive_scan",
    "make_uniform_grid",
    "nl_parallel_solve",
    "recover_parallel",
    "scalar_lqr_problem",
    "scan_depth",
    "solve_backward_parallel",
    "solve_sequential",
    "tracking_problem",
    "upwind_solve",
]

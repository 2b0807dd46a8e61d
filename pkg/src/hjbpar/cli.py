"""Command-line harness.

Loads YAML problem configs, runs the sequential and/or parallel solvers,
and writes plot-ready artifacts: trajectory and value CSVs plus a JSON
report. Deterministic outputs (CSV, report.json) are byte-identical across
runs and thread counts; wall-clock numbers live in a separate timings.json.

Exit codes: 0 success, 2 config/usage error, 3 solver failure, 4 check
failure.
"""

from __future__ import annotations

import json
import os
import statistics
import sys
import time as _time
from pathlib import Path

import click
import numpy as np
import yaml

from .lqt_par import CombineError, solve_backward_parallel
from .lqt_seq import SolverError, solve_sequential
from .model import (
    FourierSeries,
    LqtProblem,
    ModelError,
    TimeGrid,
    make_uniform_grid,
    scalar_lqr_problem,
    tracking_problem,
)
from .nl_hjb import (
    NlSolverError,
    NonlinearScalarProblem,
    StateGrid,
    falling_body_problem,
    nl_parallel_solve,
    scalar_lqr_subcase,
    upwind_stable_solve,
)
from .oracle import (
    ReachableScalarElement,
    ScalarLqrClosedForm,
    gamma_combine,
    wang_terminal_min,
    wang_value,
)
from .scan import ScanPlan, inclusive_scan, scan_depth
from .traj import recover_parallel

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


class ConfigError(Exception):
    pass


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"config parse error in {path}{where}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return cfg


def _time_grid_from(cfg: dict, T=None, n=None) -> TimeGrid:
    try:
        t = cfg["time"]
        return make_uniform_grid(
            float(t.get("t0", 0.0)),
            float(t["tf"]),
            int(T if T is not None else t["num_blocks"]),
            int(n if n is not None else t["steps_per_block"]),
        )
    except (KeyError, TypeError, ValueError, ModelError) as exc:
        raise ConfigError(f"bad time section: {exc}") from exc


def lqt_problem_from(cfg: dict) -> LqtProblem:
    kind = cfg.get("problem")
    try:
        if kind == "tracking":
            ref = cfg.get("reference")
            series = None
            if ref is not None:
                series = FourierSeries(
                    period=float(ref["period"]),
                    a=np.asarray(ref["a"], dtype=float),
                    b=np.asarray(ref["b"], dtype=float),
                )
            return tracking_problem(series)
        if kind == "scalar-lqr":
            return scalar_lqr_problem(
                S_f=float(cfg.get("terminal_weight", 1.0)),
                x0=float(cfg.get("x0", 1.0)),
            )
        if kind == "constant":
            m = cfg["matrices"]
            return LqtProblem.constant(
                F=m["F"], L=m["L"], c=m["c"], H=m["H"], X=m["X"], U=m["U"],
                r=m["r"], Hf=m["Hf"], Xf=m["Xf"], x0=m["x0"],
            )
    except (KeyError, TypeError, ValueError, ModelError) as exc:
        raise ConfigError(f"bad problem definition: {exc}") from exc
    raise ConfigError(f"unknown LQT problem kind {kind!r}")


def nonlinear_problem_from(cfg: dict) -> NonlinearScalarProblem:
    kind = cfg.get("problem")
    try:
        if kind == "falling-body":
            return falling_body_problem(beta=float(cfg.get("beta", 0.1)))
        if kind == "scalar-lqr":
            return scalar_lqr_subcase(S_f=float(cfg.get("terminal_weight", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad problem definition: {exc}") from exc
    raise ConfigError(f"unknown nonlinear problem kind {kind!r}")


def _rel_max(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) / scale


def _median_run(fn, repeats: int):
    """Run fn; with repeats > 1 discard one warm-up and report median times.

    fn returns (result, wall_ms_dict); the result of the last run is kept.
    """
    if repeats <= 1:
        return fn()
    fn()  # warm-up, discarded
    result, samples = None, []
    for _ in range(repeats):
        result, wall = fn()
        samples.append(wall)
    keys = samples[0].keys()
    return result, {k: statistics.median(s[k] for s in samples) for k in keys}


@click.group()
def main():
    """Temporal-parallel optimal-control solvers."""


@main.command("solve-lqt")
@click.argument("config_path", type=click.Path())
@click.option("--backend", type=click.Choice(["seq", "par", "both"]), default="both")
@click.option("--T", "T_values", type=int, multiple=True, help="Override block count; repeatable for sweeps.")
@click.option("--n", "n_value", type=int, default=None, help="Override steps per block.")
@click.option("--threads", type=int, default=None, help="Worker threads (default: hardware parallelism).")
@click.option("--check", is_flag=True, help="Gate parallel-vs-sequential agreement at 1e-6.")
@click.option("--oracle", is_flag=True, help="Gate against the scalar closed form at 1e-6.")
@click.option("--out", "out_dir", type=click.Path(), default="out")
@click.option("--seed", type=int, default=0, help="Recorded in the report; solvers are deterministic.")
@click.option("--init", type=click.Choice(["backward", "forward"]), default="backward")
@click.option("--repeats", type=int, default=1, help="Timing repeats (median reported, warm-up discarded).")
def solve_lqt(config_path, backend, T_values, n_value, threads, check, oracle, out_dir, seed, init, repeats):
    """Solve an LQT problem config; write trajectory/value CSVs and reports."""
    try:
        cfg = load_config(config_path)
        problem = lqt_problem_from(cfg)
        sweeps = list(T_values) or [None]
        grids = [_time_grid_from(cfg, T=T, n=n_value) for T in sweeps]
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = threads if threads is not None else os.cpu_count()
    run_seq = backend in ("seq", "both") or check or oracle
    run_par = backend in ("par", "both") or check or oracle

    rows, timing_rows, worst_check, worst_oracle = [], [], 0.0, 0.0
    try:
        for grid in grids:
            T = grid.num_blocks
            tag = f"T{T}"
            row = {"T": T, "n": grid.steps_per_block, "backend": backend,
                   "seed": seed, "scan_depth": scan_depth(T)}
            timing = {"T": T}

            seq = par = rec = None
            if run_seq:
                def _run_seq():
                    s = solve_sequential(problem, grid)
                    return s, s.wall_ms
                seq, timing["sequential_ms"] = _median_run(_run_seq, repeats)
                _write_trajectory(out / f"trajectory_seq_{tag}.csv", seq.trajectory)
            if run_par:
                def _run_par():
                    p = solve_backward_parallel(
                        problem, grid, backend="parallel", init=init, workers=workers
                    )
                    r = recover_parallel(
                        problem, grid, p.table, p.edge_values,
                        backend="parallel", workers=workers, init=init,
                    )
                    return (p, r), {**p.wall_ms, "recovery": sum(r.wall_ms.values())}
                (par, rec), timing["parallel_ms"] = _median_run(_run_par, repeats)
                _write_trajectory(out / f"trajectory_par_{tag}.csv", rec.method1)
                _write_value_params(out / f"value_params_par_{tag}.csv", par.edge_values)

            if check or (run_seq and run_par):
                err = max(
                    _rel_max(par.table.S, seq.table.S),
                    _rel_max(par.table.v, seq.table.v),
                    _rel_max(rec.method1.states, seq.trajectory.states),
                    _rel_max(rec.method1.controls, seq.trajectory.controls),
                )
                row["max_rel_err"] = err
                worst_check = max(worst_check, err)
            if oracle:
                if cfg.get("problem") != "scalar-lqr":
                    click.echo("config error: --oracle requires a scalar-lqr config", err=True)
                    sys.exit(EXIT_CONFIG)
                cf = ScalarLqrClosedForm(
                    S_f=float(cfg.get("terminal_weight", 1.0)), t_f=grid.tf
                )
                ref = np.array([cf.S(t) for t in grid.block_edges])
                err = max(
                    _rel_max(np.array([seq.table.at(t)[0][0, 0] for t in grid.block_edges]), ref),
                    _rel_max(np.array([vp.S[0, 0] for vp in par.edge_values]), ref),
                )
                row["oracle_max_rel_err"] = err
                worst_oracle = max(worst_oracle, err)
            rows.append(row)
            timing_rows.append(timing)
    except (SolverError, CombineError, ModelError) as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)

    _write_json(out / "report.json", {"command": "solve-lqt", "rows": rows})
    _write_json(out / "timings.json", {"threads": workers, "repeats": repeats, "rows": timing_rows})
    click.echo(f"wrote {len(rows)} report row(s) to {out}")
    if check and worst_check > 1e-6:
        click.echo(f"check failure: max_rel_err {worst_check:.3g} > 1e-6", err=True)
        sys.exit(EXIT_CHECK)
    if oracle and worst_oracle > 1e-6:
        click.echo(f"check failure: oracle error {worst_oracle:.3g} > 1e-6", err=True)
        sys.exit(EXIT_CHECK)


def _write_trajectory(path: Path, traj) -> None:
    nx = traj.states.shape[1]
    nu = traj.controls.shape[1]
    header = ["t"] + [f"x{i}" for i in range(nx)] + [f"u{i}" for i in range(nu)]
    rows = (
        [traj.times[k], *traj.states[k], *traj.controls[k]]
        for k in range(len(traj.times))
    )
    _write_csv(path, header, rows)


def _write_value_params(path: Path, edge_values) -> None:
    nx = edge_values[0].S.shape[0]
    header = (
        ["t"]
        + [f"S{i}{j}" for i in range(nx) for j in range(nx)]
        + [f"v{i}" for i in range(nx)]
    )
    rows = ([vp.t, *vp.S.ravel(), *vp.v] for vp in edge_values)
    _write_csv(path, header, rows)


@main.command("solve-nonlinear")
@click.argument("config_path", type=click.Path())
@click.option("--method", type=click.Choice(["upwind", "parallel", "both"]), default="both")
@click.option("--grid-size", "grid_sizes", type=int, multiple=True,
              help="Override state-grid size; repeatable for sweeps.")
@click.option("--T", "T_value", type=int, default=None)
@click.option("--n", "n_value", type=int, default=None)
@click.option("--threads", type=int, default=None)
@click.option("--compare", is_flag=True, help="Report the max-abs gap between methods.")
@click.option("--cache-dir", type=click.Path(), default=None, help="Element cache directory.")
@click.option("--out", "out_dir", type=click.Path(), default="out")
@click.option("--seed", type=int, default=0)
def solve_nonlinear(config_path, method, grid_sizes, T_value, n_value, threads,
                    compare, cache_dir, out_dir, seed):
    """Solve a scalar nonlinear config; write per-edge value CSVs and reports."""
    try:
        cfg = load_config(config_path)
        problem = nonlinear_problem_from(cfg)
        time_grid = _time_grid_from(cfg, T=T_value, n=n_value)
        gcfg = cfg.get("grid", {})
        sizes = list(grid_sizes) or [int(gcfg.get("num_points", 40))]
        x_min = float(gcfg.get("x_min", -4.0))
        x_max = float(gcfg.get("x_max", 4.0))
        if compare and method != "both":
            raise ConfigError("--compare requires --method=both")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = threads if threads is not None else os.cpu_count()
    rows, timing_rows = [], []
    try:
        for M in sizes:
            grid = StateGrid(x_min, x_max, M)
            row = {"M": M, "T": time_grid.num_blocks, "n": time_grid.steps_per_block,
                   "method": method, "seed": seed}
            timing = {"M": M}
            up = par = None
            if method in ("upwind", "both"):
                t0 = _time.perf_counter()
                up = upwind_stable_solve(problem, grid, time_grid)
                timing["upwind_ms"] = 1e3 * (_time.perf_counter() - t0)
                _write_grid_values(out / f"values_upwind_M{M}.csv", up)
            if method in ("parallel", "both"):
                sol = nl_parallel_solve(
                    problem, grid, time_grid, backend="parallel",
                    workers=workers, cache_dir=cache_dir,
                )
                par = sol.edge_values
                timing["parallel_ms"] = dict(sol.wall_ms)
                row.update({f"sqp_{k}": v for k, v in sol.element_diagnostics.items()})
                _write_grid_values(out / f"values_parallel_M{M}.csv", par)
            if compare:
                row["max_abs_gap"] = max(
                    float(np.max(np.abs(p.values - u.values))) for p, u in zip(par, up)
                )
            rows.append(row)
            timing_rows.append(timing)
    except NlSolverError as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)

    _write_json(out / "report.json", {"command": "solve-nonlinear", "rows": rows})
    _write_json(out / "timings.json", {"threads": workers, "rows": timing_rows})
    click.echo(f"wrote {len(rows)} report row(s) to {out}")


def _write_grid_values(path: Path, edge_values) -> None:
    rows = (
        [vf.time, x, v]
        for vf in edge_values
        for x, v in zip(vf.grid.points, vf.values)
    )
    _write_csv(path, ["t", "x", "value"], rows)


@main.command("demo")
@click.argument("which", type=click.Choice(["scalar-lqr", "wang"]))
def demo(which):
    """Print an agreement table for one of the closed-form demos."""
    if which == "scalar-lqr":
        _demo_scalar_lqr()
    else:
        _demo_wang()


def _demo_scalar_lqr() -> None:
    problem = scalar_lqr_problem(S_f=1.0)
    grid = make_uniform_grid(0.0, 1.0, num_blocks=10, steps_per_block=100)
    cf = ScalarLqrClosedForm(S_f=1.0, t_f=1.0)
    par = solve_backward_parallel(problem, grid)
    click.echo(f"{'t':>6} {'J(t,tf+)':>20} {'S closed form':>20} {'abs diff':>12}")
    for vp in par.edge_values:
        ref = cf.S(vp.t)
        click.echo(f"{vp.t:6.2f} {vp.S[0, 0]:20.12f} {ref:20.12f} {abs(vp.S[0, 0] - ref):12.3e}")


def _demo_wang() -> None:
    edges = np.linspace(0.0, 1.0, 11)
    blocks = [
        ReachableScalarElement.for_interval(float(edges[j]), float(edges[j + 1]))
        for j in range(10)
    ]
    plan = ScanPlan(length=10, direction="reverse", backend="sequential")
    suffixes = inclusive_scan(blocks, gamma_combine, plan)
    full = suffixes[0]
    click.echo(f"{'y':>6} {'V(y,0) scan':>20} {'closed form':>20} {'abs diff':>12}")
    for y in np.linspace(-2.0, 2.0, 21):
        got = wang_terminal_min(full, float(y))
        ref = wang_value(float(y), 0.0)
        click.echo(f"{y:6.2f} {got:20.12f} {ref:20.12f} {abs(got - ref):12.3e}")


if __name__ == "__main__":
    main()

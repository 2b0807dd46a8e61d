import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import jax.numpy as jnp

from hjbpar.model import ModelError, make_uniform_grid
from hjbpar.nl_hjb import (
    CflError,
    GridCondValueFn,
    GridValueFn,
    NlSolverError,
    StateGrid,
    build_block_element,
    falling_body_problem,
    grid_combine,
    nl_parallel_solve,
    quad_interp_min,
    scalar_lqr_subcase,
    shoot_conditional_value,
    sqp_solve_equality,
    upwind_solve,
    upwind_stable_solve,
)
from hjbpar.oracle import ScalarLqrClosedForm

GRID = StateGrid(-4.0, 4.0, 21)
TIME = make_uniform_grid(0.0, 1.0, num_blocks=10, steps_per_block=10)


class TestStateGrid:
    def test_points(self):
        g = StateGrid(-1.0, 1.0, 5)
        assert g.delta == 0.5
        np.testing.assert_allclose(g.points, [-1.0, -0.5, 0.0, 0.5, 1.0])

    def test_validation(self):
        with pytest.raises(ModelError):
            StateGrid(0.0, 1.0, 2)
        with pytest.raises(ModelError):
            StateGrid(1.0, 0.0, 5)

    def test_value_fn_rejects_nan(self):
        vals = np.zeros(21)
        vals[3] = np.nan
        with pytest.raises(ModelError):
            GridValueFn(grid=GRID, values=vals, time=0.0)


class TestQuadInterpMin:
    def test_worked_examples(self):
        assert quad_interp_min((1.0, 0.0, 1.0), (0.0, 0.0, 0.0), 1.0) == 0.0
        assert quad_interp_min((1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), 1.0) == -0.25
        assert quad_interp_min((1.0, 0.0, 1.0), (2.0, 0.0, 0.0), 1.0) == -0.125

    def test_nonfinite_falls_back_to_uncorrected(self):
        assert quad_interp_min((np.inf, 0.0, 1.0), (0.0, 1.0, 2.0), 1.0) == 1.0

    def test_flat_sum_uncorrected(self):
        assert quad_interp_min((1.0, 1.0, 1.0), (2.0, 2.0, 2.0), 0.5) == 3.0

    @settings(max_examples=300, deadline=None)
    @given(
        ag=st.floats(0.01, 10.0), bg=st.floats(-5.0, 5.0), cg=st.floats(-5.0, 5.0),
        af=st.floats(0.01, 10.0), bf=st.floats(-5.0, 5.0), cf=st.floats(-5.0, 5.0),
        delta=st.floats(0.01, 2.0),
    )
    def test_exact_on_quadratics(self, ag, bg, cg, af, bf, cf, delta):
        g = tuple(ag * d * d + bg * d + cg for d in (-delta, 0.0, delta))
        f = tuple(af * d * d + bf * d + cf for d in (-delta, 0.0, delta))
        a, b, c = ag + af, bg + bf, cg + cf
        true_min = c - b * b / (4.0 * a)
        got = quad_interp_min(g, f, delta)
        assert got == pytest.approx(true_min, abs=1e-12 * max(1.0, abs(true_min)))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-10.0, 10.0), min_size=6, max_size=6),
           st.floats(0.05, 2.0))
    def test_correction_never_positive(self, vals, delta):
        g, f = tuple(vals[:3]), tuple(vals[3:])
        # only meaningful when the middle point is the argmin of the sum
        sums = [g[i] + f[i] for i in range(3)]
        if sums[1] > min(sums):
            return
        assert quad_interp_min(g, f, delta) <= sums[1] + 1e-12


class TestUpwind:
    def test_cfl_violation_reports_stable_step(self):
        prob = falling_body_problem()
        coarse = make_uniform_grid(0.0, 1.0, num_blocks=2, steps_per_block=1)
        with pytest.raises(CflError, match="maximum stable step"):
            upwind_solve(prob, GRID, coarse)

    def test_stable_solve_keeps_block_edges(self):
        prob = falling_body_problem()
        out = upwind_stable_solve(prob, GRID, TIME)
        assert len(out) == TIME.num_blocks + 1
        np.testing.assert_allclose([vf.time for vf in out], TIME.block_edges)
        np.testing.assert_allclose(out[-1].values, 2.0 * GRID.points ** 2)

    def test_lqr_subcase_error_shrinks_with_grid(self):
        prob = scalar_lqr_subcase(1.0)
        cf = ScalarLqrClosedForm(1.0, 1.0)
        errs = []
        for M in (21, 41):
            g = StateGrid(-4.0, 4.0, M)
            out = upwind_stable_solve(prob, g, TIME)
            ref = 0.5 * cf.S(0.0) * g.points ** 2
            errs.append(np.max(np.abs(out[0].values - ref)))
        assert errs[1] < errs[0]


class TestSqp:
    def test_equality_constrained_quadratic(self):
        def objective(q):
            return (q[0] - 1.0) ** 2 + (q[1] - 2.0) ** 2

        def constraints(q):
            return q[0] + q[1] - 1.0

        q, lam, diag = sqp_solve_equality(objective, constraints, np.zeros(2))
        assert diag["converged"]
        np.testing.assert_allclose(q, [0.0, 1.0], atol=1e-9)
        assert lam[0] == pytest.approx(2.0, abs=1e-8)

    def test_nonlinear_constraint(self):
        # closest point to the origin on the circle x^2 + y^2 = 4 through (3, 4)
        def objective(q):
            return (q[0] - 3.0) ** 2 + (q[1] - 4.0) ** 2

        def constraints(q):
            return q[0] ** 2 + q[1] ** 2 - 4.0

        q, _, diag = sqp_solve_equality(objective, constraints, np.array([1.0, 1.0]))
        assert diag["converged"]
        np.testing.assert_allclose(q, [1.2, 1.6], atol=1e-8)


class TestShooting:
    def test_lqr_conditional_value(self):
        prob = scalar_lqr_subcase(1.0)
        cf = ScalarLqrClosedForm(1.0, 1.0)
        A, _, C, _, J = cf.cond_params(0.0, 0.1)
        x, z = 1.0, 1.05
        want = 0.5 * (z - A * x) ** 2 / C + 0.5 * J * x * x
        got, diag = shoot_conditional_value(prob, x, z, 0.1, 10)
        assert diag["converged"]
        assert got == pytest.approx(want, abs=1e-7)

    def test_block_element_diagonal_is_cheapest_nearby(self):
        prob = falling_body_problem()
        grid = StateGrid(-2.0, 2.0, 9)
        e = build_block_element(prob, grid, 0.0, 0.1, 10)
        assert e.diagnostics["converged"] == e.diagnostics["pairs"]
        assert np.isfinite(e.values).all()

    def test_element_cache_roundtrip(self, tmp_path):
        prob = falling_body_problem()
        grid = StateGrid(-2.0, 2.0, 7)
        e1 = build_block_element(prob, grid, 0.0, 0.1, 10, cache_dir=tmp_path)
        e2 = build_block_element(prob, grid, 0.3, 0.4, 10, cache_dir=tmp_path)
        np.testing.assert_array_equal(e1.values, e2.values)
        assert len(list(tmp_path.glob("element-*.npz"))) == 1


class TestGridCombine:
    def test_identity_exact(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=(21, 21))
        e = GridCondValueFn(grid=GRID, values=vals, t_start=0.0, t_end=0.5)
        ident = GridCondValueFn.identity(GRID)
        assert grid_combine(ident, e) is e
        assert grid_combine(e, GridCondValueFn.identity(GRID)) is e

    def test_half_blocks_reproduce_lqr_closed_form(self):
        cf = ScalarLqrClosedForm(1.0, 1.0)
        grid = StateGrid(-4.0, 4.0, 41)
        x = grid.points

        def cond_table(s, tau):
            A, _, C, _, J = cf.cond_params(s, tau)
            X, Z = np.meshgrid(x, x, indexing="ij")
            return GridCondValueFn(
                grid=grid, values=0.5 * (Z - A * X) ** 2 / C + 0.5 * J * X ** 2,
                t_start=s, t_end=tau,
            )

        got = grid_combine(cond_table(0.0, 0.5), cond_table(0.5, 1.0))
        want = cond_table(0.0, 1.0)
        inner = slice(5, 36)  # away from edges where the true minimiser leaves the grid
        np.testing.assert_allclose(
            got.values[inner, inner], want.values[inner, inner], atol=1e-6
        )

    def test_terminal_combination_and_nonpositive_correction(self):
        prob = falling_body_problem()
        grid = StateGrid(-2.0, 2.0, 15)
        e = build_block_element(prob, grid, 0.9, 1.0, 10)
        term = GridValueFn(grid=grid, values=2.0 * grid.points ** 2, time=1.0)
        out = grid_combine(e, term)
        assert isinstance(out, GridValueFn)
        raw = np.min(e.values + term.values[None, :], axis=1)
        assert np.all(out.values <= raw + 1e-12)

    def test_adjacency_enforced(self):
        e1 = GridCondValueFn(grid=GRID, values=np.zeros((21, 21)), t_start=0.0, t_end=0.5)
        e2 = GridCondValueFn(grid=GRID, values=np.zeros((21, 21)), t_start=0.6, t_end=1.0)
        with pytest.raises(NlSolverError):
            grid_combine(e1, e2)

    def test_all_inf_gives_inf(self):
        vals = np.full((21, 21), np.inf)
        np.fill_diagonal(vals, 0.0)
        e1 = GridCondValueFn(grid=GRID, values=np.full((21, 21), np.inf), t_start=0.0, t_end=0.5)
        e2 = GridValueFn(grid=GRID, values=np.zeros(21), time=0.5)
        out = grid_combine(e1, e2)
        assert np.all(np.isinf(out.values))


class TestNlParallelSolve:
    def test_lqr_subcase_matches_oracle(self):
        prob = scalar_lqr_subcase(1.0)
        grid = StateGrid(-4.0, 4.0, 20)
        sol = nl_parallel_solve(prob, grid, TIME)
        cf = ScalarLqrClosedForm(1.0, 1.0)
        for vf in sol.edge_values:
            ref = 0.5 * cf.S(vf.time) * grid.points ** 2
            np.testing.assert_allclose(vf.values, ref, atol=1e-2)

    def test_terminal_edge_is_terminal_cost(self):
        prob = scalar_lqr_subcase(1.0)
        grid = StateGrid(-4.0, 4.0, 20)
        sol = nl_parallel_solve(prob, grid, TIME)
        np.testing.assert_allclose(sol.edge_values[-1].values, 0.5 * grid.points ** 2)

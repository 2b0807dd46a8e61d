import numpy as np
import pytest

from hjbpar.lqt_seq import (
    SolverError,
    control_law,
    gain_matrix,
    riccati_backward_dense,
    solve_sequential,
    terminal_value,
)
from hjbpar.model import ValueParams, make_uniform_grid, scalar_lqr_problem, tracking_problem
from hjbpar.oracle import ScalarLqrClosedForm


@pytest.fixture(scope="module")
def scalar():
    return scalar_lqr_problem(S_f=1.0)


@pytest.fixture(scope="module")
def scalar_grid():
    return make_uniform_grid(0.0, 1.0, num_blocks=10, steps_per_block=10)


class TestRiccatiBackward:
    def test_matches_closed_form(self, scalar, scalar_grid):
        cf = ScalarLqrClosedForm(S_f=1.0, t_f=1.0)
        table = riccati_backward_dense(scalar, scalar_grid, refine=10)
        for t in np.linspace(0.0, 1.0, 101):
            S, v = table.at(float(t))
            assert S[0, 0] == pytest.approx(cf.S(float(t)), rel=1e-9)
            assert abs(v[0]) < 1e-12

    def test_terminal_value(self, scalar):
        S_tf, v_tf = terminal_value(scalar, 1.0)
        assert S_tf[0, 0] == 1.0 and v_tf[0] == 0.0

    def test_table_rejects_off_grid_time(self, scalar, scalar_grid):
        table = riccati_backward_dense(scalar, scalar_grid, refine=1)
        with pytest.raises(KeyError):
            table.at(0.123456)
        with pytest.raises(KeyError):
            table.at(1.5)


class TestControlLaw:
    def test_scalar_formula(self, scalar):
        # u* = U^-1 L^T (v - S x) = v - S x for the scalar problem
        vp = ValueParams(S=np.array([[2.0]]), v=np.array([0.5]), t=0.0)
        u = control_law(scalar, vp, np.array([1.5]))
        assert u[0] == pytest.approx(0.5 - 2.0 * 1.5)

    def test_gain_matrix(self):
        p = tracking_problem()
        Gam = gain_matrix(p, 0.0)
        L = p.L(0.0)
        np.testing.assert_allclose(Gam, L @ np.linalg.inv(p.U(0.0)) @ L.T, atol=1e-14)

    def test_singular_U_raises(self):
        from hjbpar.model import LqtProblem

        p = LqtProblem.constant(
            F=[[0.0]], L=[[1.0]], c=[0.0], H=[[1.0]], X=[[1.0]], U=[[0.0]],
            r=[0.0], Hf=[[1.0]], Xf=[[1.0]], x0=[0.0],
        )
        with pytest.raises(SolverError):
            gain_matrix(p, 0.0)


class TestSolveSequential:
    def test_scalar_end_to_end(self, scalar, scalar_grid):
        sol = solve_sequential(scalar, scalar_grid)
        # optimal closed loop from x0 = 1 decays; cost-to-go shrinks along it
        assert sol.trajectory.states[0, 0] == 1.0
        assert abs(sol.trajectory.states[-1, 0]) < 1.0
        # control satisfies u* = v - S x pointwise
        for k in (0, 50, 100):
            t = float(sol.trajectory.times[k])
            S, v = sol.table.at(t)
            want = v[0] - S[0, 0] * sol.trajectory.states[k, 0]
            assert sol.trajectory.controls[k, 0] == pytest.approx(want, abs=1e-12)

    def test_tracking_value_function_psd(self):
        p = tracking_problem()
        grid = make_uniform_grid(0.0, 50.0, num_blocks=20, steps_per_block=10)
        sol = solve_sequential(p, grid, refine=2)
        for k in range(0, len(sol.table.times), 40):
            S = sol.table.S[k]
            np.testing.assert_allclose(S, S.T, atol=1e-10)
            assert np.linalg.eigvalsh(S).min() > -1e-9

import math

import numpy as np
import pytest

from hjbpar.oracle import (
    ReachableScalarElement,
    ScalarLqrClosedForm,
    gamma_combine,
    scalar_S,
    scalar_cond_params,
    wang_reachable,
    wang_terminal_min,
    wang_value,
)

# Frozen reference values, computed once from the closed forms and
# cross-checked against an independent fine-step RK4 integration.
S_AT_0 = 2.25636690981088
A_0_1 = 1.234743685138238
CJ_0_1 = 1.689498391594383


class TestScalarLqrClosedForm:
    def test_terminal_condition(self):
        cf = ScalarLqrClosedForm(S_f=1.0, t_f=1.0)
        assert cf.S(1.0) == pytest.approx(1.0, abs=1e-14)

    def test_frozen_value_at_zero(self):
        assert scalar_S(0.0) == pytest.approx(S_AT_0, rel=1e-13)

    def test_v_identically_zero(self):
        cf = ScalarLqrClosedForm()
        assert cf.v(0.3) == 0.0

    def test_riccati_ode_satisfied(self):
        # dS/dt = -2S - 1 + S^2 checked by central differences
        cf = ScalarLqrClosedForm()
        h = 1e-6
        for t in (0.1, 0.5, 0.9):
            dS = (cf.S(t + h) - cf.S(t - h)) / (2 * h)
            S = cf.S(t)
            assert dS == pytest.approx(-2 * S - 1 + S * S, abs=1e-6)

    def test_cond_params_frozen_values(self):
        A, b, C, eta, J = scalar_cond_params(0.0, 1.0)
        assert A == pytest.approx(A_0_1, rel=1e-13)
        assert C == pytest.approx(CJ_0_1, rel=1e-13)
        assert J == pytest.approx(CJ_0_1, rel=1e-13)
        assert b == 0.0 and eta == 0.0

    def test_cond_params_zero_length_is_identity(self):
        assert scalar_cond_params(0.4, 0.4) == (1.0, 0.0, 0.0, 0.0, 0.0)

    def test_cond_params_orders_arguments(self):
        with pytest.raises(ValueError):
            scalar_cond_params(0.6, 0.2)

    def test_terminal_weight_range_enforced(self):
        with pytest.raises(ValueError):
            ScalarLqrClosedForm(S_f=1.0 + math.sqrt(2.0))

    def test_value_function_identity(self):
        # min_z [ (z - A x)^2 / (2C) + J x^2 / 2 + S_f z^2 / 2 ] = S(s) x^2 / 2
        cf = ScalarLqrClosedForm(S_f=0.7, t_f=1.0)
        for s in (0.0, 0.35, 0.8):
            A, _, C, _, J = cf.cond_params(s, 1.0)
            x = 1.3
            zs = np.linspace(-5, 5, 200001)
            vals = (zs - A * x) ** 2 / (2 * C) + 0.5 * J * x * x + 0.5 * 0.7 * zs ** 2
            assert vals.min() == pytest.approx(0.5 * cf.S(s) * x * x, abs=1e-7)


class TestWang:
    def test_value_branches(self):
        assert wang_value(2.0, 0.0) == pytest.approx(-2.0 * math.e)
        assert wang_value(-3.0, 0.0) == 3.0
        assert wang_value(0.0, 0.5) == 0.0

    def test_reachable_intervals(self):
        lo, hi = wang_reachable(1.0, 0.0, 1.0)
        assert (lo, hi) == (1.0, pytest.approx(math.e))
        lo, hi = wang_reachable(-1.0, 0.0, 1.0)
        assert (lo, hi) == (pytest.approx(-math.e), -1.0)

    def test_gamma_combine_multiplies_growth(self):
        e1 = ReachableScalarElement.for_interval(0.0, 0.3)
        e2 = ReachableScalarElement.for_interval(0.3, 1.0)
        full = gamma_combine(e1, e2)
        assert full.gamma == pytest.approx(math.e, rel=1e-14)
        assert (full.s, full.t) == (0.0, 1.0)

    def test_gamma_combine_rejects_non_adjacent(self):
        e1 = ReachableScalarElement.for_interval(0.0, 0.3)
        e2 = ReachableScalarElement.for_interval(0.4, 1.0)
        with pytest.raises(ValueError):
            gamma_combine(e1, e2)

    def test_terminal_min_picks_largest_reachable(self):
        e = ReachableScalarElement.for_interval(0.0, 1.0)
        assert wang_terminal_min(e, 2.0) == pytest.approx(-2.0 * math.e)
        assert wang_terminal_min(e, -2.0) == pytest.approx(2.0)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbpar.scan import ScanPlan, ScanStats, inclusive_scan, scan_depth, scan_sweeps


def add(x, y):
    return x + y


def matmul(X, Y):
    return X @ Y


class TestScanDepth:
    @pytest.mark.parametrize("T,depth", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1024, 10), (65536, 16)])
    def test_known_values(self, T, depth):
        assert scan_depth(T) == depth

    def test_sweeps(self):
        assert scan_sweeps(8) == 6

    def test_invalid_length(self):
        with pytest.raises(ValueError):
            scan_depth(0)


class TestForwardScan:
    def test_matches_accumulate(self):
        xs = list(range(1, 14))
        plan = ScanPlan(length=len(xs), direction="forward")
        out = inclusive_scan(xs, add, plan, identity=0)
        assert out == list(itertools.accumulate(xs))

    def test_noncommutative_operator(self):
        rng = np.random.default_rng(7)
        mats = [rng.normal(size=(3, 3)) for _ in range(11)]
        plan = ScanPlan(length=11, direction="forward")
        out = inclusive_scan(mats, matmul, plan, identity=np.eye(3))
        ref = list(itertools.accumulate(mats, matmul))
        for got, want in zip(out, ref):
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_without_identity_falls_back_to_tree(self):
        xs = ["a", "b", "c", "d", "e"]
        plan = ScanPlan(length=5, direction="forward")
        out = inclusive_scan(xs, add, plan)
        assert out == ["a", "ab", "abc", "abcd", "abcde"]


class TestReverseScan:
    def test_matches_suffix_products(self):
        xs = ["a", "b", "c", "d"]
        plan = ScanPlan(length=4, direction="reverse")
        out = inclusive_scan(xs, add, plan, identity="")
        assert out == ["abcd", "bcd", "cd", "d"]

    def test_single_element(self):
        plan = ScanPlan(length=1, direction="reverse")
        assert inclusive_scan([42], add, plan, identity=0) == [42]


class TestBackendEquivalence:
    @pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 33])
    def test_parallel_is_bitwise_identical(self, n):
        rng = np.random.default_rng(n)
        mats = [rng.normal(size=(4, 4)) for _ in range(n)]
        seq = inclusive_scan(mats, matmul, ScanPlan(length=n, backend="sequential"), identity=np.eye(4))
        par = inclusive_scan(mats, matmul, ScanPlan(length=n, backend="parallel", workers=4), identity=np.eye(4))
        for a, b in zip(seq, par):
            assert np.array_equal(a, b)  # bitwise, not approximate


class TestStats:
    @pytest.mark.parametrize("n", [2, 5, 8, 100, 1000])
    def test_measured_depth_matches_formula(self, n):
        stats = ScanStats()
        inclusive_scan(list(range(n)), add, ScanPlan(length=n), identity=0, stats=stats)
        assert stats.upsweep_levels == scan_depth(n)
        assert stats.downsweep_levels == scan_depth(n)

    def test_combines_counted(self):
        stats = ScanStats()
        inclusive_scan([1, 2, 3, 4], add, ScanPlan(length=4), identity=0, stats=stats)
        # up-sweep 3 + down-sweep 3 + inclusive fix-up 4
        assert stats.combines == 10


class TestPlanValidation:
    def test_bad_direction(self):
        with pytest.raises(ValueError):
            ScanPlan(length=2, direction="sideways")

    def test_bad_backend(self):
        with pytest.raises(ValueError):
            ScanPlan(length=2, backend="gpu")

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            inclusive_scan([1, 2], add, ScanPlan(length=3), identity=0)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            inclusive_scan([], add, ScanPlan(length=1), identity=0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(min_value=-1000, max_value=1000), min_size=1, max_size=64))
def test_property_forward_scan_equals_accumulate(xs):
    plan = ScanPlan(length=len(xs), direction="forward")
    assert inclusive_scan(xs, add, plan, identity=0) == list(itertools.accumulate(xs))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(min_value=-1000, max_value=1000), min_size=1, max_size=64))
def test_property_reverse_scan_equals_reversed_accumulate(xs):
    plan = ScanPlan(length=len(xs), direction="reverse")
    want = list(itertools.accumulate(xs[::-1]))[::-1]
    assert inclusive_scan(xs, add, plan, identity=0) == want

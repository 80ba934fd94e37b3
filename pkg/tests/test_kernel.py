import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subcrit_cp.errors import DisconnectedMetricError, InvalidKernelError
from subcrit_cp.groups import FreeProductGroup, ZdGroup
from subcrit_cp.kernel import (K_gamma, build_metric, check_irreducibility, dual_kernel, e_gamma,
                               kernel_from_spec, zero_kernel)

Z = ZdGroup(1)
NN = kernel_from_spec(Z, {1: 1.0, -1: 1.0})
LOG2 = math.log(2.0)


class TestKernelFromSpec:
    def test_total_rate(self):
        assert NN.total_rate == 2.0

    def test_z2_single_offset(self):
        k = kernel_from_spec(ZdGroup(2), {"(1,0)": 0.5})
        assert k.total_rate == 0.5
        assert len(k) == 1

    def test_identity_offset_rejected(self):
        with pytest.raises(InvalidKernelError):
            kernel_from_spec(Z, {0: 1.0})

    def test_negative_rate_rejected(self):
        with pytest.raises(InvalidKernelError):
            kernel_from_spec(Z, {1: -0.1})

    def test_duplicate_offset_rejected(self):
        with pytest.raises(InvalidKernelError):
            kernel_from_spec(Z, [(1, 1.0), ("1", 2.0)])

    def test_zero_rates_dropped(self):
        k = kernel_from_spec(Z, {1: 1.0, 2: 0.0, 0: 0.0})
        assert k.offsets == ((1,),)

    def test_entry_forms_agree(self):
        a = kernel_from_spec(Z, {1: 1.0, -1: 0.5})
        b = kernel_from_spec(Z, [[1, 1.0], [-1, 0.5]])
        c = kernel_from_spec(Z, [{"offset": -1, "rate": 0.5}, {"offset": 1, "rate": 1.0}])
        assert a == b == c


class TestDualKernel:
    def test_reversal_on_z(self):
        k = kernel_from_spec(Z, {1: 1.0, 2: 0.5})
        assert dual_kernel(k) == kernel_from_spec(Z, {-1: 1.0, -2: 0.5})

    def test_symmetric_kernel_is_self_dual(self):
        assert dual_kernel(NN) == NN

    def test_word_inversion(self):
        g = FreeProductGroup((0, 0))
        kd = dual_kernel(kernel_from_spec(g, {"ab": 0.3}))
        assert [g.format(o) for o in kd.offsets] == ["b^-1a^-1"]
        assert kd.rates == (0.3,)

    @given(st.dictionaries(st.integers(-6, 6).filter(lambda x: x != 0), st.floats(0.01, 5.0), max_size=5))
    def test_involution_preserves_total(self, entries):
        k = kernel_from_spec(Z, entries)
        assert dual_kernel(dual_kernel(k)) == k
        assert math.isclose(dual_kernel(k).total_rate, k.total_rate)


class TestIrreducibility:
    def test_symmetric_full_verified(self):
        assert check_irreducibility(NN, "full", 5) == "verified"

    def test_one_sided_full_refuted(self):
        assert check_irreducibility(kernel_from_spec(Z, {1: 1.0}), "full", 5) == "refuted"

    def test_one_sided_condition_irr_verified(self):
        assert check_irreducibility(kernel_from_spec(Z, {1: 1.0}), "condition-irr", 5) == "verified"

    def test_one_sided_weak_verified(self):
        assert check_irreducibility(kernel_from_spec(Z, {1: 1.0}), "weak", 5) == "verified"

    def test_sublattice_kernel_refuted(self):
        assert check_irreducibility(kernel_from_spec(Z, {2: 1.0, -2: 1.0}), "full", 4) == "refuted"

    def test_zero_kernel_refuted(self):
        assert check_irreducibility(zero_kernel(Z), "weak", 3) == "refuted"

    def test_radius_validated(self):
        with pytest.raises(ValueError):
            check_irreducibility(NN, "full", 0)


class TestMetric:
    def test_line_distances(self):
        m = build_metric(NN)
        for i in range(-5, 6):
            assert math.isclose(m.dist0((i,)), abs(i) * LOG2)

    def test_ball_of_log2(self):
        assert sorted(build_metric(NN).ball(LOG2)) == [(-1,), (0,), (1,)]

    def test_zero_distance_only_on_diagonal(self):
        m = build_metric(kernel_from_spec(Z, {1: 1.0, 3: 0.01}))
        assert m.dist0((0,)) == 0.0
        assert all(m.dist0((i,)) > 0 for i in range(1, 10))

    def test_tail_levels(self):
        # rates 1 and 0.01: the small offset enters at a later level with a longer edge
        m = build_metric(kernel_from_spec(Z, {1: 1.0, -1: 1.0, 3: 0.01}))
        assert m.dist0((1,)) == pytest.approx(LOG2)
        assert m.dist0((3,)) > LOG2

    def test_disconnected_support(self):
        with pytest.raises(DisconnectedMetricError):
            build_metric(kernel_from_spec(Z, {2: 1.0}))

    def test_zero_kernel_uses_generators(self):
        m = build_metric(zero_kernel(Z))
        assert m.dist0((3,)) == pytest.approx(3 * LOG2)

    @given(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20))
    def test_invariance_and_triangle(self, i, j, k, m_):
        m = build_metric(kernel_from_spec(Z, {1: 1.0, -1: 1.0, 3: 0.2, -3: 0.2}))
        x, y, g, w = (i,), (j,), (k,), (m_,)
        assert m.dist(x, y) == pytest.approx(m.dist(Z.mul(g, x), Z.mul(g, y)), abs=1e-12)
        assert m.dist(x, y) <= m.dist(x, w) + m.dist(w, y) + 1e-12

    def test_tree_metric_invariance(self, tree):
        k = kernel_from_spec(tree, {g: 1.0 for g in ["a", "b", "c"]})
        m = build_metric(k)
        ball = tree.ball(3)
        rng = np.random.default_rng(0)
        for _ in range(200):
            x, y, g = (ball[q] for q in rng.integers(len(ball), size=3))
            assert math.isclose(m.dist(x, y), m.dist(tree.mul(g, x), tree.mul(g, y)), abs_tol=1e-12)

    def test_balls_are_finite(self):
        m = build_metric(NN)
        sizes = [len(m.ball(M * LOG2)) for M in range(6)]
        assert sizes == [2 * M + 1 for M in range(6)]


class TestWeights:
    def test_e0_is_cardinality(self):
        m = build_metric(NN)
        assert e_gamma(m, 0.0, [(0,), (4,), (-7,)]) == 3

    def test_empty_set(self):
        assert e_gamma(build_metric(NN), 1.0, []) == 0.0

    def test_e1_on_pair(self):
        assert e_gamma(build_metric(NN), 1.0, [(0,), (1,)]) == pytest.approx(3.0)

    def test_K_gamma_values(self):
        m = build_metric(NN)
        assert K_gamma(NN, m, 0.0) == NN.total_rate
        assert K_gamma(NN, m, 1.0) == pytest.approx(4.0)

    @given(st.floats(0, 3), st.floats(0, 3))
    def test_K_gamma_monotone(self, g1, g2):
        k = kernel_from_spec(Z, {1: 1.0, -2: 0.5, 5: 0.1})
        m = build_metric(k)
        lo, hi = sorted((g1, g2))
        assert K_gamma(k, m, lo) <= K_gamma(k, m, hi) * (1 + 1e-12)

    @given(st.sets(st.integers(-15, 15), max_size=6), st.sets(st.integers(-15, 15), max_size=6),
           st.floats(0, 2))
    def test_additive_on_disjoint_sets(self, A, B, gamma):
        m = build_metric(NN)
        B = B - A
        a = [(x,) for x in A]
        b = [(x,) for x in B]
        assert e_gamma(m, gamma, a + b) == pytest.approx(e_gamma(m, gamma, a) + e_gamma(m, gamma, b))

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            e_gamma(build_metric(NN), -0.1, [(0,)])

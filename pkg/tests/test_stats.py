"""Student-t machinery: incomplete beta, CDF closed forms, paired test."""

import math

import numpy as np
import pytest

from prism_forge.rng import make_rng
from prism_forge.stats import paired_t_test, regularized_incomplete_beta, student_t_cdf


def cdf_df1(t):  # arctangent closed form
    return 0.5 + math.atan(t) / math.pi


def cdf_df2(t):  # algebraic closed form
    return 0.5 + t / (2.0 * math.sqrt(2.0 + t * t))


class TestIncompleteBeta:
    def test_boundaries(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0

    def test_uniform_case(self):
        # I_x(1, 1) = x
        for x in (0.1, 0.5, 0.9):
            assert regularized_incomplete_beta(1.0, 1.0, x) == pytest.approx(x, abs=1e-14)

    def test_power_case(self):
        # I_x(a, 1) = x^a
        for a in (0.5, 2.0, 3.5):
            for x in (0.2, 0.7):
                assert regularized_incomplete_beta(a, 1.0, x) == pytest.approx(x**a, rel=1e-12)

    def test_symmetry(self):
        # I_x(a,b) = 1 - I_{1-x}(b,a)
        for a, b, x in [(2.0, 3.0, 0.3), (0.5, 0.5, 0.8), (4.0, 1.5, 0.55)]:
            lhs = regularized_incomplete_beta(a, b, x)
            rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            regularized_incomplete_beta(-1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            regularized_incomplete_beta(1.0, 1.0, 1.5)


class TestStudentCdf:
    def test_zero_is_half(self):
        assert student_t_cdf(0.0, 5) == 0.5

    @pytest.mark.parametrize("t", [-4.0, -1.3, -0.2, 0.4, 1.7, 6.9282])
    def test_matches_df1_closed_form(self, t):
        assert student_t_cdf(t, 1) == pytest.approx(cdf_df1(t), abs=1e-12)

    @pytest.mark.parametrize("t", [-4.0, -1.3, -0.2, 0.4, 1.7, 6.9282])
    def test_matches_df2_closed_form(self, t):
        assert student_t_cdf(t, 2) == pytest.approx(cdf_df2(t), abs=1e-12)

    def test_randomized_df2_agreement(self):
        rng = make_rng(11)
        for t in rng.normal(0, 3, size=200):
            assert student_t_cdf(float(t), 2) == pytest.approx(cdf_df2(float(t)), abs=1e-6)

    def test_large_dof_approaches_normal(self):
        # standard normal at 1.96 ~ 0.975
        assert student_t_cdf(1.96, 100000) == pytest.approx(0.975, abs=1e-3)


class TestPairedTTest:
    def test_reference_fixture(self):
        res = paired_t_test(np.array([0.008, 0.006, 0.010]))
        assert res.dof == 2
        assert res.t == pytest.approx(6.9282, abs=1e-4)
        assert res.p == pytest.approx(0.0202, abs=1e-3)

    def test_reference_fixture_as_two_samples(self):
        selective = np.array([0.992, 0.981, 0.975])
        full = selective - np.array([0.008, 0.006, 0.010])
        res = paired_t_test(selective, full)
        assert res.t == pytest.approx(6.9282, abs=1e-4)
        assert res.p == pytest.approx(0.0202, abs=1e-3)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="variance"):
            paired_t_test(np.array([0.5, 0.5, 0.5]))

    def test_too_few_pairs_rejected(self):
        with pytest.raises(ValueError):
            paired_t_test(np.array([1.0]))

    def test_symmetric_differences_give_p_one(self):
        res = paired_t_test(np.array([-0.2, 0.2, -0.1, 0.1]))
        assert res.t == pytest.approx(0.0, abs=1e-12)
        assert res.p == pytest.approx(1.0, abs=1e-12)

    def test_mismatched_shapes_rejected(self):
        with pytest.raises(ValueError):
            paired_t_test(np.ones(3), np.ones(4))

    def test_randomized_n3_matches_closed_form(self):
        rng = make_rng(13)
        for _ in range(300):
            d = rng.normal(0, 1, size=3)
            if d.std(ddof=1) < 1e-12:
                continue
            res = paired_t_test(d)
            p_closed = 2.0 * (1.0 - cdf_df2(abs(res.t)))
            assert res.p == pytest.approx(p_closed, abs=1e-6)

import math

import numpy as np
import pytest

from qou import (
    DensityPoint,
    DomainError,
    QParams,
    TransitionQuery,
    chapman_kolmogorov_residual,
    conditional_cdf,
    kernel_ratio,
    marginal_cdf,
    marginal_pdf,
    moment,
    transition_pdf,
)
from tests.conftest import semicircle_cdf

# mpmath oracle (800 terms, 60 digits): p^{(0.5)}(0.3).
MARGINAL_HALF_AT_03 = 0.3576518087471163173398814

ALL_Q = (-0.9, -0.5, 0.0, 0.5, 0.9)


class TestMarginal:
    def test_semicircle_center(self, qp0):
        assert marginal_pdf(qp0, 0.0) == pytest.approx(1.0 / math.pi, abs=1e-15)

    def test_vanishes_at_and_beyond_boundary(self):
        for q in ALL_Q:
            qp = QParams(q)
            assert marginal_pdf(qp, qp.L) == 0.0
            assert marginal_pdf(qp, -qp.L) == 0.0
            assert marginal_pdf(qp, qp.L * 1.5) == 0.0
            assert marginal_pdf(qp, 99.0) == 0.0

    def test_extended_precision_oracle(self, qp5):
        assert marginal_pdf(qp5, 0.3) == pytest.approx(MARGINAL_HALF_AT_03, rel=1e-11)

    @pytest.mark.parametrize("q", ALL_Q)
    def test_normalization(self, q):
        assert abs(moment(QParams(q), 0) - 1.0) < 1e-8

    @pytest.mark.parametrize("q", ALL_Q)
    def test_unit_variance(self, q):
        assert abs(moment(QParams(q), 2) - 1.0) < 1e-6

    def test_odd_moment_vanishes(self, qp5):
        assert abs(moment(qp5, 1)) < 1e-10

    def test_nonnegative_everywhere(self, qpm5):
        xs = np.linspace(-2 * qpm5.L, 2 * qpm5.L, 999)
        assert np.all(marginal_pdf(qpm5, xs) >= 0.0)


class TestTransition:
    def test_q_zero_closed_collapse(self, qp0):
        t, x, y = 1.0, 0.5, -0.3
        r = math.exp(-t)
        phi00 = (1 - r * r) ** 2 - r * (1 + r * r) * x * y + r * r * (x * x + y * y)
        expected = (1 - math.exp(-2 * t)) / phi00 * marginal_pdf(qp0, y)
        assert transition_pdf(qp0, TransitionQuery(t, x, y)) == pytest.approx(expected, rel=1e-14)

    def test_reversibility_identity(self, qp5):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x, y = rng.uniform(-qp5.L * 0.999, qp5.L * 0.999, 2)
            t = rng.uniform(0.05, 6.0)
            lhs = marginal_pdf(qp5, x) * transition_pdf(qp5, TransitionQuery(t, x, y))
            rhs = marginal_pdf(qp5, y) * transition_pdf(qp5, TransitionQuery(t, y, x))
            assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("q", (0.0, 0.5))
    @pytest.mark.parametrize("t", (0.25, 4.0))
    def test_normalization_subset(self, q, t):
        from qou.density import _full_support_integral, _transition_pdf_y
        from qou.numerics import DEFAULT_QUAD

        qp = QParams(q)
        for x in (0.0, qp.L / 2):
            total = _full_support_integral(
                lambda z: float(_transition_pdf_y(qp, t, x, z)), qp, DEFAULT_QUAD
            )
            assert abs(total - 1.0) < 1e-6

    def test_strictly_positive_inside(self, qpm5):
        assert transition_pdf(qpm5, TransitionQuery(0.3, -1.0, 1.1)) > 0.0

    def test_query_validation(self, qp5):
        with pytest.raises(DomainError):
            transition_pdf(qp5, TransitionQuery(0.0, 0.0, 0.0))
        with pytest.raises(DomainError):
            transition_pdf(qp5, TransitionQuery(1.0, qp5.L * 1.1, 0.0))


class TestCdfs:
    def test_marginal_cdf_endpoints(self, qp5):
        assert marginal_cdf(qp5, -qp5.L) == 0.0
        assert marginal_cdf(qp5, qp5.L) == 1.0
        assert marginal_cdf(qp5, 0.0) == pytest.approx(0.5, abs=1e-10)

    def test_marginal_cdf_closed_form_semicircle(self, qp0):
        for x in (-1.5, -0.3, 1.0, 1.9):
            assert marginal_cdf(qp0, x) == pytest.approx(float(semicircle_cdf(x)), abs=1e-10)

    def test_conditional_cdf_endpoints_and_monotone(self, qp5):
        t, x = 0.25, 1.0
        assert conditional_cdf(qp5, t, x, -qp5.L) == 0.0
        assert conditional_cdf(qp5, t, x, qp5.L) == pytest.approx(1.0, abs=1e-6)
        ys = np.linspace(-qp5.L, qp5.L, 100)
        vals = [conditional_cdf(qp5, t, x, y) for y in ys]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


class TestChapmanKolmogorov:
    def test_small_times(self, qp0):
        assert chapman_kolmogorov_residual(qp0, 0.5, 0.5, 0.0, 0.5) < 1e-5

    def test_long_times_mix(self, qp5):
        assert chapman_kolmogorov_residual(qp5, 8.0, 8.0, 1.0, -0.5) < 1e-6

    def test_swap_symmetry(self, qp5):
        a = chapman_kolmogorov_residual(qp5, 0.5, 1.5, 0.3, -0.7)
        b = chapman_kolmogorov_residual(qp5, 1.5, 0.5, 0.3, -0.7)
        assert a == pytest.approx(b, abs=2e-6)


class TestMixingToStationarity:
    def test_ratio_deviation_decreasing_in_t(self, qp0):
        xs = np.linspace(-qp0.L, qp0.L, 50)
        devs = []
        for t in (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0):
            r = kernel_ratio(qp0, t, xs[:, None], xs[None, :])
            devs.append(float(np.max(np.abs(r - 1.0))))
        assert all(b < a for a, b in zip(devs, devs[1:]))

    def test_nearly_stationary_at_t16(self, qp0):
        xs = np.linspace(-qp0.L, qp0.L, 50)
        r = kernel_ratio(qp0, 16.0, xs[:, None], xs[None, :])
        assert float(np.max(np.abs(r - 1.0))) < 1e-5


def test_density_point_validation():
    DensityPoint(0.3, 0.1)
    with pytest.raises(ValueError):
        DensityPoint(0.3, -0.1)

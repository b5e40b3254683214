"""TCEV and 3/2 model coefficients, time change and exact TCEV sampling.

Frozen values are direct 30-digit mpmath arithmetic on the model formulas.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from benchpricer.models import (
    Rate32Params,
    SavingsAccount,
    TcevParams,
    delta_phi,
    rate32_diffusion,
    rate32_drift,
    sample_noncentral_chi2,
    tcev_diffusion,
    tcev_dimension,
    tcev_drift,
    tcev_exact_sample,
    tcev_phi,
    tcev_rn_dimension,
)
from benchpricer.specfun import nchi2_cdf

P = TcevParams()
R = Rate32Params()

DRIFT_50 = 0.52965878823502768657
DIFFUSION_50 = 5.1461577328868753135
PHI_15 = 106.42821937329270694


class TestTcevCoefficients:
    def test_paper_values(self):
        assert tcev_drift(P, 50.0, 0.0) == pytest.approx(DRIFT_50, rel=1e-13)
        assert tcev_diffusion(P, 50.0, 0.0) == pytest.approx(DIFFUSION_50, rel=1e-13)

    @given(x=st.floats(0.01, 1e4), t=st.floats(0.0, 30.0))
    def test_mpor_identities(self, x, t):
        theta = P.mpor(x, t)
        assert tcev_drift(P, x, t) == pytest.approx(theta**2 * x, rel=1e-12)
        assert tcev_diffusion(P, x, t) == pytest.approx(theta * x, rel=1e-12)
        assert tcev_drift(P, x, t) == pytest.approx(tcev_diffusion(P, x, t) ** 2 / x, rel=1e-12)

    def test_diffusion_at_alpha(self):
        for t in (0.0, 4.0, 15.0):
            assert tcev_diffusion(P, P.alpha(t), t) == pytest.approx(P.c * P.alpha(t), rel=1e-13)

    def test_half_elasticity_drift_flat(self):
        p = TcevParams(a=0.5)
        d = tcev_drift(p, np.array([1.0, 10.0, 1000.0]), 2.0)
        assert np.allclose(d, d[0], rtol=1e-14)

    def test_coefficients_consistent(self):
        x = np.array([5.0, 50.0, 400.0])
        c = P.coefficients(x, 3.0)
        assert np.allclose(c.a, tcev_drift(P, x, 3.0), rtol=1e-14)
        assert np.allclose(c.b, tcev_diffusion(P, x, 3.0), rtol=1e-14)
        h = 1e-5
        assert np.allclose(c.a_x, (tcev_drift(P, x + h, 3.0) - tcev_drift(P, x - h, 3.0)) / (2 * h), rtol=1e-6)
        assert np.allclose(c.b_x, (tcev_diffusion(P, x + h, 3.0) - tcev_diffusion(P, x - h, 3.0)) / (2 * h), rtol=1e-6)
        assert np.allclose(c.a_t, (tcev_drift(P, x, 3.0 + h) - tcev_drift(P, x, 3.0 - h)) / (2 * h), rtol=1e-6)
        assert np.allclose(c.b_t, (tcev_diffusion(P, x, 3.0 + h) - tcev_diffusion(P, x, 3.0 - h)) / (2 * h), rtol=1e-6)

    def test_validation(self):
        with pytest.raises(ValueError):
            TcevParams(a=1.0)
        with pytest.raises(ValueError):
            TcevParams(c=0.0)
        with pytest.raises(ValueError):
            tcev_drift(P, 0.0, 0.0)


class TestTimeChange:
    def test_values(self):
        assert tcev_phi(P, 0.0) == 0.0
        assert tcev_phi(P, 15.0) == pytest.approx(PHI_15, rel=1e-13)
        assert delta_phi(P, 5.0, 15.0) == pytest.approx(tcev_phi(P, 15.0) - tcev_phi(P, 5.0), rel=1e-15)

    def test_initial_slope(self):
        # differentiating the time change gives (1-a)^2 alpha0^(2(1-a)) c^2,
        # which is also the squared BESQ diffusion scale of X^(2(1-a)) by Ito
        h = 1e-6
        slope = (tcev_phi(P, h) - tcev_phi(P, 0.0)) / h
        expected = (1 - P.a) ** 2 * P.alpha0 ** P.power * P.c**2
        assert slope == pytest.approx(expected, rel=1e-5)
        ito = (P.power * tcev_diffusion(P, 50.0, 0.0) * 50.0 ** (P.power - 1)) ** 2 / (4 * 50.0**P.power)
        assert expected == pytest.approx(ito, rel=1e-12)

    def test_increasing_convex(self):
        t = np.linspace(0, 40, 401)
        phi = tcev_phi(P, t)
        assert np.all(np.diff(phi) > 0)
        assert np.all(np.diff(phi, 2) > 0)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            tcev_phi(P, -1.0)


class TestDimensions:
    def test_zero_elasticity(self):
        p = TcevParams(a=0.0)
        assert tcev_dimension(p) == 3.0
        assert tcev_rn_dimension(p) == 1.0

    def test_paper(self):
        assert tcev_dimension(P) == pytest.approx(3.40213, abs=5e-6)
        assert tcev_dimension(P) > 2 > tcev_rn_dimension(P)

    @given(a=st.floats(-5.0, 0.99))
    def test_rn_dimension_is_reflection(self, a):
        p = TcevParams(a=a)
        assert tcev_rn_dimension(p) == pytest.approx(4.0 - tcev_dimension(p), rel=1e-12, abs=1e-12)


class TestExactSampling:
    def test_degenerate_step(self):
        rng = np.random.default_rng(1)
        x = tcev_exact_sample(P, np.full(1000, 50.0), 3.0, 3.0 + 1e-12, rng)
        assert np.allclose(x, 50.0, rtol=1e-4)

    def test_besq_mean(self):
        rng = np.random.default_rng(7)
        y0 = P.x0**P.power
        dphi = tcev_phi(P, 10.0)
        y = tcev_exact_sample(P, np.full(1_000_000, P.x0), 0.0, 10.0, rng) ** P.power
        se = y.std(ddof=1) / math.sqrt(y.size)
        assert abs(y.mean() - (y0 + tcev_dimension(P) * dphi)) < 3 * se

    def test_inverse_moment(self):
        rng = np.random.default_rng(11)
        x = tcev_exact_sample(P, np.full(1_000_000, P.x0), 0.0, 15.0, rng)
        v = 1.0 / x
        exact = nchi2_cdf(P.x0**P.power / tcev_phi(P, 15.0), tcev_dimension(P) - 2, 0.0) / P.x0
        assert abs(v.mean() - exact) < 3 * v.std(ddof=1) / math.sqrt(v.size)

    def test_two_steps_match_one(self):
        rng = np.random.default_rng(3)
        n = 100_000
        one = tcev_exact_sample(P, np.full(n, P.x0), 0.0, 8.0, rng)
        mid = tcev_exact_sample(P, np.full(n, P.x0), 0.0, 3.0, rng)
        two = tcev_exact_sample(P, mid, 3.0, 8.0, rng)
        assert stats.ks_2samp(one, two).pvalue > 0.01

    def test_noncentral_chi2_sampler(self):
        rng = np.random.default_rng(5)
        q = sample_noncentral_chi2(1.40213, np.full(200_000, 3.7), rng)
        assert stats.kstest(q, stats.ncx2(1.40213, 3.7).cdf).pvalue > 0.01

    def test_requires_forward_time(self):
        with pytest.raises(ValueError):
            tcev_exact_sample(P, 50.0, 2.0, 1.0, np.random.default_rng(0))


class TestRate32:
    def test_drift_root(self):
        assert rate32_drift(R, R.theta) == pytest.approx(0.0, abs=1e-18)

    def test_paper_values(self):
        assert rate32_drift(R, 0.05) == pytest.approx(3.5726 * (0.096 * 0.05 - 0.0025), rel=1e-14)
        assert rate32_diffusion(R, 0.04) == pytest.approx(0.796 * 0.008, rel=1e-14)

    def test_methods_and_coefficients(self):
        r = np.array([0.01, 0.05, 0.3])
        c = R.coefficients(r)
        assert np.allclose(c.a, R.drift(r))
        assert np.allclose(c.b, R.diffusion(r))
        assert np.allclose(c.a_x, R.kappa * (R.theta - 2 * r))
        assert R.x0 == R.r0

    def test_validation(self):
        with pytest.raises(ValueError):
            Rate32Params(sigma=0.0)
        with pytest.raises(ValueError):
            rate32_drift(R, -0.01)


def test_savings_account():
    b = SavingsAccount(0.05)
    assert b.beta(0.0) == 1.0
    assert b.beta(10.0) == pytest.approx(math.exp(0.5), rel=1e-15)

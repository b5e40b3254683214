"""Squared Bessel transition laws: identities and frozen quadrature oracles.

Oracles were computed offline with mpmath (30 digits) from the Bessel-series
form of each density and adaptive quadrature.  The absorbing-CDF value was
also checked against an Euler simulation of the absorbed process
(1e6 paths, 2000 steps: 0.867412 +- 0.00034, within one standard error).
"""

import math

import numpy as np
import pytest
from scipy import integrate

from benchpricer.besq import (
    BesqSpec,
    Boundary,
    CirParams,
    absorption_probability,
    cdf_absorbing,
    cir_time_change,
    density_norm_decreasing,
    density_reflecting,
    power_local_martingale_expectation,
    tail_integral_schroder,
)
from benchpricer.specfun import nchi2_cdf, nchi2_pdf

ND_1_1_1_05 = 0.1367935933408360146
REFL_2_15_1_29 = 0.13386516473559174496
TAIL_07_12_09_03 = 0.3069159541109683615
CDF_ABS_1_1_1_M1 = 0.86770144583642383319
PLME_1_1_3 = 0.68268949213708589717

GRID = np.linspace(0.05, 12.0, 50)


class TestNormDecreasing:
    def test_oracle(self):
        assert density_norm_decreasing(1.0, 1.0, 1.0, 0.5) == pytest.approx(ND_1_1_1_05, rel=1e-12)

    @pytest.mark.parametrize("x0,T,delta", [(1.0, 1.0, 0.5), (2.3, 0.7, -1.0), (0.4, 2.0, 1.5)])
    def test_mass_equals_survival(self, x0, T, delta):
        mass, _ = integrate.quad(lambda v: density_norm_decreasing(v, T, x0, delta), 0, np.inf, epsabs=1e-13, limit=200)
        assert mass == pytest.approx(nchi2_cdf(x0 / T, 2 - delta, 0.0), abs=1e-8)
        assert mass < 1.0

    def test_needs_delta_below_two(self):
        with pytest.raises(ValueError):
            density_norm_decreasing(1.0, 1.0, 1.0, 2.5)

    def test_large_arguments_finite(self):
        v = density_norm_decreasing(4000.0, 1.0, 4100.0, 0.6)
        assert np.isfinite(v) and v > 0


class TestReflecting:
    def test_oracle(self):
        assert density_reflecting(2.0, 1.5, 1.0, 2.9) == pytest.approx(REFL_2_15_1_29, rel=1e-12)

    def test_definition(self):
        xT = np.linspace(0.1, 9.0, 30)
        assert np.allclose(density_reflecting(xT, 1.3, 0.8, 3.4), nchi2_pdf(xT / 1.3, 3.4, 0.8 / 1.3) / 1.3, rtol=1e-14)

    @pytest.mark.parametrize("delta", [0.7, 1.5, 2.5, 3.40213])
    def test_normalized(self, delta):
        mass, _ = integrate.quad(lambda v: density_reflecting(v, 1.2, 1.7, delta), 0, np.inf, epsabs=1e-12, limit=200)
        assert mass == pytest.approx(1.0, abs=1e-8)

    def test_chapman_kolmogorov(self):
        x0, s, t, delta = 1.1, 0.6, 0.9, 3.40213
        for xT in (0.3, 1.5, 4.0):
            comp, _ = integrate.quad(
                lambda y: density_reflecting(y, s, x0, delta) * density_reflecting(xT, t, y, delta),
                0, np.inf, epsabs=1e-12, limit=400,
            )
            assert comp == pytest.approx(density_reflecting(xT, s + t, x0, delta), abs=1e-5)

    @pytest.mark.parametrize("delta", [2.5, 3.0, 3.40213])
    def test_no_atom_at_zero(self, delta):
        # mass of [0, eps] vanishes like eps^(delta/2)
        for eps in (1e-2, 1e-3, 1e-4):
            m = nchi2_cdf(eps, delta, 1.0)
            assert m <= 10.0 * eps ** (delta / 2)


class TestSymmetry:
    @pytest.mark.parametrize("delta", [2.5, 3.0, 3.4])
    def test_power_weighted_symmetry(self, delta):
        T = 0.9
        xT, x0 = np.meshgrid(GRID, GRID)
        lhs = xT ** (1 - delta / 2) * density_reflecting(xT, T, x0, delta)
        rhs = x0 ** (1 - delta / 2) * density_norm_decreasing(xT, T, x0, 4 - delta)
        assert np.allclose(lhs, rhs, rtol=1e-8, atol=0)

    @pytest.mark.parametrize("delta", [2.5, 3.0, 3.4])
    def test_density_transformation(self, delta):
        T = 1.7
        xT, x0 = np.meshgrid(GRID, GRID)
        lhs = density_reflecting(xT, T, x0, delta)
        rhs = density_norm_decreasing(x0, T, xT, 4 - delta)
        assert np.allclose(lhs, rhs, rtol=1e-8, atol=0)


class TestSchroder:
    def test_oracle(self):
        assert tail_integral_schroder(0.7, 1.2, 0.9, 0.3) == pytest.approx(TAIL_07_12_09_03, rel=1e-12)

    @pytest.mark.parametrize("lower,T,x0,delta", [(0.7, 1.2, 0.9, 0.3), (2.5, 0.5, 3.0, -0.8), (0.05, 3.0, 0.6, 1.6)])
    def test_against_quadrature(self, lower, T, x0, delta):
        q, _ = integrate.quad(lambda v: density_norm_decreasing(v, T, x0, delta), lower, np.inf, epsabs=1e-13, limit=200)
        assert tail_integral_schroder(lower, T, x0, delta) == pytest.approx(q, abs=1e-8)

    def test_limits(self):
        assert tail_integral_schroder(0.0, 1.0, 1.0, 0.5) == pytest.approx(nchi2_cdf(1.0, 1.5, 0.0), rel=1e-14)
        assert tail_integral_schroder(np.inf, 1.0, 1.0, 0.5) == 0.0
        assert tail_integral_schroder(500.0, 1.0, 1.0, 0.5) < 1e-90


class TestAbsorbing:
    def test_oracle(self):
        assert cdf_absorbing(1.0, 1.0, 1.0, -1.0) == pytest.approx(CDF_ABS_1_1_1_M1, rel=1e-12)

    def test_atom(self):
        assert cdf_absorbing(0.0, 2.0, 1.5, 0.4) == pytest.approx(1 - nchi2_cdf(0.75, 1.6, 0.0), rel=1e-14)
        assert absorption_probability(2.0, 1.5, 0.4) == pytest.approx(cdf_absorbing(0.0, 2.0, 1.5, 0.4), rel=1e-14)
        assert cdf_absorbing(np.inf, 2.0, 1.5, 0.4) == 1.0

    def test_monotone(self):
        c = cdf_absorbing(np.linspace(0, 20, 200), 1.0, 2.0, 0.5)
        assert np.all(np.diff(c) >= -1e-15)


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            BesqSpec(2.0, 1.0)
        with pytest.raises(ValueError):
            BesqSpec(3.0, 1.0, Boundary.ABSORBING)
        with pytest.raises(ValueError):
            BesqSpec(1.0, 1.0)
        with pytest.raises(ValueError):
            BesqSpec(-0.5, 1.0, Boundary.REFLECTING)
        with pytest.raises(ValueError):
            BesqSpec(3.0, -1.0)

    def test_density_dispatch(self):
        assert BesqSpec(0.5, 1.0, Boundary.ABSORBING).density(1.0, 1.0) == density_norm_decreasing(1.0, 1.0, 1.0, 0.5)
        assert BesqSpec(3.0, 1.0).density(1.0, 1.0) == density_reflecting(1.0, 1.0, 1.0, 3.0)


class TestCir:
    def test_trivial(self):
        p = CirParams(kappa=1.0, theta=0.5, sigma=2.0, s0=0.3)
        assert cir_time_change(p, 0.0) == (0.0, 1.0, 4 * 0.5 / 4.0)
        phi, _, _ = cir_time_change(p, math.log(2))
        assert phi == pytest.approx(1.0, rel=1e-15)

    def test_mean(self):
        p = CirParams(kappa=1.3, theta=0.04, sigma=0.3, s0=0.07)
        t = 2.0
        phi, scale, delta = cir_time_change(p, t)
        # S_t = scale * X_phi with X a BESQ^delta started at s0
        mean, _ = integrate.quad(lambda x: scale * x * density_reflecting(x, phi, p.s0, delta), 0, np.inf, limit=400)
        assert mean == pytest.approx(p.theta + (p.s0 - p.theta) * math.exp(-p.kappa * t), rel=1e-8)

    def test_validation(self):
        with pytest.raises(ValueError):
            CirParams(0.0, 1.0, 1.0, 1.0)


class TestStrictLocalMartingale:
    def test_oracle(self):
        assert power_local_martingale_expectation(1.0, 1.0, 3.0) == pytest.approx(PLME_1_1_3, rel=1e-12)

    @pytest.mark.parametrize("delta", [2.2, 3.0, 3.40213, 5.0])
    def test_strict_inequality(self, delta):
        # the deficit is about exp(-x0 / 2T); beyond x0/T ~ 70 it is below
        # double precision, so the grid keeps x0/T <= 60
        for x0 in (0.01, 0.1, 1.0, 50.0):
            for T in (1e-3, 0.02, 0.5, 10.0, 1e3):
                if x0 / T > 60:
                    continue
                start = x0 ** (1 - delta / 2)
                assert power_local_martingale_expectation(x0, T, delta) < start

    def test_short_horizon_limit(self):
        assert power_local_martingale_expectation(2.0, 1e-4, 3.0) == pytest.approx(2.0**-0.5, rel=1e-12)

    def test_needs_delta_above_two(self):
        with pytest.raises(ValueError):
            power_local_martingale_expectation(1.0, 1.0, 1.5)

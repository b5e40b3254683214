"""Grid pricers: exact identities of the backward recursion, no-arbitrage
shape properties and agreement with the closed forms."""

import numpy as np
import pytest

from benchpricer.analytic import EuropeanSpec, OptionKind, fair_zcb_constant_rate, hybrid_zcb, ir_component_32, real_world_call
from benchpricer.models import Rate32Params, TcevParams
from benchpricer.pricers import (
    BermudanSpec,
    BondOptionSpec,
    bermudan_price_rmq,
    european_price_rmq,
    fair_forward_bond,
    hybrid_zcb_curve_rmq,
    hybrid_zcb_rmq,
    rn_bond_option_comparators,
    zcb_option_price_rmq,
)
from benchpricer.quantize import euler_surrogate, joint_rmq_build, rmq_build

P = TcevParams()
R = Rate32Params()
r = 0.05


@pytest.fixture(scope="module")
def grid():
    return rmq_build(P, euler_surrogate(P), P.x0, 5.0, 12, 50)


def joint(T, rho=0.0, N_r=20, N_x=40, spy=12, p=P, accrual="left"):
    return joint_rmq_build(R, p, (euler_surrogate(R), euler_surrogate(p)), rho, (R.r0, p.x0), T, spy, N_r, N_x, accrual=accrual)


@pytest.fixture(scope="module")
def jgrid():
    return joint(5.0)


class TestEuropean:
    def test_numeraire_payoff(self, grid):
        v = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, 0.0), payoff=lambda s: s)
        assert v == pytest.approx(P.x0, rel=1e-12)

    def test_zero_strike_put(self, grid):
        assert european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, 0.0)) == 0.0

    def test_calls_match_closed_form(self, grid):
        for K in (40.0, 50.0, 60.0):
            c = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, K, OptionKind.CALL))
            assert c == pytest.approx(real_world_call(P, r, EuropeanSpec(0.0, 5.0, K, OptionKind.CALL)), rel=5e-3)

    def test_put_call_parity_on_grid(self, grid):
        # puts weight the lower tail by 1/X; their error is the call error
        # plus K times the error of the grid bond
        bond = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, 0.0), payoff=np.ones_like)
        assert bond == pytest.approx(fair_zcb_constant_rate(P, r, 0.0, 5.0), rel=5e-3)
        for K in (30.0, 50.0, 70.0):
            c = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, K, OptionKind.CALL))
            p = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, K))
            assert c - p == pytest.approx(P.x0 - K * bond, abs=1e-11)

    def test_intermediate_maturity(self, grid):
        c = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 2.0, 50.0, OptionKind.CALL))
        assert c == pytest.approx(real_world_call(P, r, EuropeanSpec(0.0, 2.0, 50.0, OptionKind.CALL)), rel=5e-3)
        with pytest.raises(ValueError):
            european_price_rmq(grid, P, r, EuropeanSpec(0.0, 2.01, 50.0))
        with pytest.raises(ValueError):
            european_price_rmq(grid, P, r, EuropeanSpec(1.0, 2.0, 50.0))


class TestBermudan:
    def test_single_date_is_european(self, grid):
        for K in (0.0, 45.0, 55.0):
            b = bermudan_price_rmq(grid, P, r, BermudanSpec((5.0,), K))
            e = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, K))
            assert b == pytest.approx(e, rel=1e-12, abs=1e-14)

    def test_dominates_european_and_grows_with_dates(self, grid):
        K = 55.0
        e = european_price_rmq(grid, P, r, EuropeanSpec(0.0, 5.0, K))
        prev = e
        for every in (60, 12, 3, 1):
            dates = grid.times[every::every]
            v = bermudan_price_rmq(grid, P, r, BermudanSpec(tuple(dates), K))
            assert v >= prev - 1e-12
            prev = v
        assert prev > e

    def test_exercise_dates_on_grid(self, grid):
        with pytest.raises(ValueError):
            bermudan_price_rmq(grid, P, r, BermudanSpec((1.05,), 50.0))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BermudanSpec((), 50.0)
        with pytest.raises(ValueError):
            BermudanSpec((2.0, 1.0), 50.0)
        with pytest.raises(ValueError):
            BermudanSpec((0.0, 1.0), 50.0)
        with pytest.raises(ValueError):
            BermudanSpec((1.0,), -1.0)
        assert BermudanSpec([1.0, 2.5], 50.0).T == 2.5


class TestHybridBond:
    def test_close_to_closed_form(self, jgrid):
        for T in (1.0, 3.0, 5.0):
            assert hybrid_zcb_rmq(jgrid, R, P, T) == pytest.approx(hybrid_zcb(P, R, 0.0, T), rel=5e-3)

    def test_forward_and_backward_agree(self, jgrid):
        times, prices = hybrid_zcb_curve_rmq(jgrid)
        for k in (11, 35, 59):
            assert prices[k] == pytest.approx(hybrid_zcb_rmq(jgrid, R, P, times[k]), rel=1e-11)

    def test_refinement_reduces_error(self):
        exact = hybrid_zcb(P, R, 0.0, 5.0)
        errs = [abs(hybrid_zcb_rmq(joint(5.0, N_r=n, N_x=2 * n), R, P, 5.0) / exact - 1) for n in (5, 20)]
        assert errs[1] < errs[0]

    def test_curve_needs_state_prices(self):
        with pytest.raises(ValueError):
            hybrid_zcb_curve_rmq(joint(0.5, accrual=None))

    def test_vanishing_volatility_limit(self):
        # as c -> 0 the MPOR factor tends to 1 and the fair bond to G
        p = TcevParams(c=1e-3)
        jg = joint(3.0, p=p)
        assert hybrid_zcb_rmq(jg, R, p, 3.0) == pytest.approx(ir_component_32(R, 0.0, 3.0), rel=5e-3)
        assert hybrid_zcb(p, R, 0.0, 3.0) == pytest.approx(ir_component_32(R, 0.0, 3.0), rel=1e-12)


@pytest.fixture(scope="module")
def strikes():
    return fair_forward_bond(R, P, TestBondOption.T, TestBondOption.S) * np.linspace(0.0, 1.4, 29)


class TestBondOption:
    T, S = 3.0, 5.0

    def test_put_shape_in_strike(self, strikes):
        jg = joint(self.T)
        put = zcb_option_price_rmq(jg, R, P, BondOptionSpec(self.T, self.S, 0.0), strikes=strikes)
        assert put[0] == 0.0
        assert np.all(np.diff(put) >= -1e-15)
        assert np.all(np.diff(put, 2) >= -1e-12)

    def test_scalar_and_vector_agree(self, strikes):
        jg = joint(self.T)
        vec = zcb_option_price_rmq(jg, R, P, BondOptionSpec(self.T, self.S, 0.0), OptionKind.CALL, strikes=strikes[10:13])
        for K, v in zip(strikes[10:13], vec):
            assert zcb_option_price_rmq(jg, R, P, BondOptionSpec(self.T, self.S, K), OptionKind.CALL) == pytest.approx(v, rel=1e-14)

    def test_put_call_parity_on_grid(self, strikes):
        jg = joint(self.T, rho=-0.3)
        spec = BondOptionSpec(self.T, self.S, 0.0)
        put = zcb_option_price_rmq(jg, R, P, spec, OptionKind.PUT, strikes=strikes)
        call = zcb_option_price_rmq(jg, R, P, spec, OptionKind.CALL, strikes=strikes)
        bond_S, bond_T = call[0], hybrid_zcb_rmq(jg, R, P, self.T)
        assert call - put == pytest.approx(bond_S - strikes * bond_T, abs=1e-12)
        assert bond_S == pytest.approx(hybrid_zcb(P, R, 0.0, self.S), rel=5e-3)

    def test_real_world_versus_risk_neutral(self):
        # with a material MPOR deficit (T = 5, S = 10) the fair bond is
        # cheaper than its risk-neutral counterpart: puts gain, calls lose
        T, S = 5.0, 10.0
        jg = joint(T)
        ks = fair_forward_bond(R, P, T, S) * np.linspace(0.8, 1.2, 9)
        rw_put, rn_put, rw_call, rn_call = rn_bond_option_comparators(jg, R, P, BondOptionSpec(T, S, 0.0), strikes=ks)
        assert np.all(rw_put > rn_put)
        assert np.all(rw_call <= rn_call)
        assert np.all(rw_call[rn_call > 1e-12] < rn_call[rn_call > 1e-12])
        one = rn_bond_option_comparators(jg, R, P, BondOptionSpec(T, S, ks[4]))
        assert one == pytest.approx((rw_put[4], rn_put[4], rw_call[4], rn_call[4]), rel=1e-14)

    def test_vanishing_volatility_limit(self, strikes):
        p = TcevParams(c=1e-3)
        jg = joint(self.T, p=p)
        rw_put, rn_put, rw_call, rn_call = rn_bond_option_comparators(jg, R, p, BondOptionSpec(self.T, self.S, 0.0), strikes=strikes[15:20])
        assert rw_put == pytest.approx(rn_put, rel=2e-2)
        assert rw_call == pytest.approx(rn_call, rel=2e-2)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BondOptionSpec(5.0, 5.0, 0.9)
        with pytest.raises(ValueError):
            BondOptionSpec(0.0, 5.0, 0.9)
        with pytest.raises(ValueError):
            BondOptionSpec(1.0, 5.0, -0.1)

    def test_forward_bond(self):
        f = fair_forward_bond(R, P, self.T, self.S)
        assert f == pytest.approx(hybrid_zcb(P, R, 0.0, self.S) / hybrid_zcb(P, R, 0.0, self.T), rel=1e-15)
        assert 0 < f < 1

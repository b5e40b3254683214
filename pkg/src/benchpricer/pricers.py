"""Real-world pricing on quantization grids.

Values are carried in benchmarked form, price divided by the GOP.  With the
GOP written as savings account times discounted GOP, one backward step is a
grid expectation followed by discounting, and the time-0 price is the initial
GOP times the benchmarked value at the root node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytic import EuropeanSpec, OptionKind, ir_component_32, mpor_component
from .models import Rate32Params, TcevParams
from .quantize import JointQuantGrid, QuantGrid, accrual_factors

__all__ = [
    "BermudanSpec",
    "BondOptionSpec",
    "european_price_rmq",
    "bermudan_price_rmq",
    "hybrid_zcb_rmq",
    "hybrid_zcb_curve_rmq",
    "zcb_option_price_rmq",
    "rn_bond_option_comparators",
    "fair_forward_bond",
]

_TIME_TOL = 1e-9


@dataclass(frozen=True)
class BermudanSpec:
    exercise_times: tuple
    K: float
    kind: OptionKind = OptionKind.PUT

    def __post_init__(self):
        times = np.asarray(self.exercise_times, dtype=float)
        object.__setattr__(self, "exercise_times", tuple(float(t) for t in times))
        if times.size == 0:
            raise ValueError("need at least one exercise date")
        if np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise ValueError("exercise dates must be positive and increasing")
        if self.K < 0:
            raise ValueError("strike must be nonnegative")

    @property
    def T(self) -> float:
        return self.exercise_times[-1]


@dataclass(frozen=True)
class BondOptionSpec:
    """Option expiring at ``T`` on the zero-coupon bond maturing at ``S``."""

    T: float
    S: float
    K: float

    def __post_init__(self):
        if not self.S > self.T > 0:
            raise ValueError("need S > T > 0")
        if self.K < 0:
            raise ValueError("strike must be nonnegative")


def _intrinsic(kind: OptionKind, s, K):
    return np.maximum(K - s, 0.0) if kind is OptionKind.PUT else np.maximum(s - K, 0.0)


def european_price_rmq(
    grid: QuantGrid,
    p: TcevParams,
    r: float,
    spec: EuropeanSpec,
    payoff: Callable | None = None,
) -> float:
    """``S_0 sum_j p_j h(S_j) / S_j`` over the codewords at ``spec.T``.

    ``payoff`` overrides the vanilla payoff and maps GOP values to payoffs.
    The grid may extend past ``spec.T``; its start must be ``spec.t = 0``.
    """
    if spec.t != 0.0:
        raise ValueError("grid pricing is from time 0")
    k = grid.index_of(spec.T, _TIME_TOL)
    s = np.exp(r * spec.T) * grid.codewords[k]
    h = _intrinsic(spec.kind, s, spec.K) if payoff is None else np.asarray(payoff(s), dtype=float)
    return float(grid.codewords[0][0] * np.dot(grid.probs[k], h / s))


def bermudan_price_rmq(grid: QuantGrid, p: TcevParams, r: float, spec: BermudanSpec) -> float:
    """Backward induction on benchmarked values with exercise at grid dates."""
    ex_idx = set()
    for t in spec.exercise_times:
        try:
            ex_idx.add(grid.index_of(t, _TIME_TOL))
        except ValueError:
            raise ValueError(f"exercise date {t} is not a grid time") from None
    last = max(ex_idx)
    value = None
    for k in range(last, -1, -1):
        if value is not None:
            value = grid.trans[k] @ value
        if k in ex_idx:
            s = np.exp(r * grid.times[k]) * grid.codewords[k]
            exercise = _intrinsic(spec.kind, s, spec.K) / s
            value = exercise if value is None else np.maximum(exercise, value)
    return float(grid.codewords[0][0] * value[0])


def _joint_backward(jgrid: JointQuantGrid, k_end: int, terminal, accrual: str):
    """Roll benchmarked node values ``U_k = V_k / X_k`` from step ``k_end`` to 0."""
    u = terminal
    for k in range(k_end - 1, -1, -1):
        dt = jgrid.times[k + 1] - jgrid.times[k]
        src, dst = accrual_factors(jgrid.rate.codewords[k], jgrid.rate.codewords[k + 1], dt, accrual)
        u = src[:, None] * jgrid.expect(k, u * dst[:, None])
    return u


def hybrid_zcb_rmq(
    jgrid: JointQuantGrid,
    p_rate: Rate32Params,
    p_tcev: TcevParams,
    T: float,
    accrual: str = "left",
) -> float:
    """Fair zero-coupon bond by backward recursion on the joint grid.

    Discretizes ``E[(X_0 / X_T) exp(-int_0^T r ds)]``; ``accrual`` selects the
    per-step rate rule (``"left"`` endpoint or ``"trapezoid"``).
    """
    k_end = jgrid.rate.index_of(T, _TIME_TOL)
    x = jgrid.gop.codewords[k_end]
    terminal = np.broadcast_to(1.0 / x[None, :], (jgrid.rate.codewords[k_end].size, x.size))
    u = _joint_backward(jgrid, k_end, np.array(terminal), accrual)
    return float(jgrid.gop.codewords[0][0] * u[0, 0])


def hybrid_zcb_curve_rmq(jgrid: JointQuantGrid):
    """Bond prices for every grid maturity from the propagated state prices.

    Returns ``(maturities, prices)``; uses the accrual rule the grid was built with.
    """
    if jgrid.discounted_mass is None:
        raise ValueError("grid was built without discounted state prices")
    x0 = jgrid.gop.codewords[0][0]
    prices = np.array(
        [x0 * float((jgrid.discounted_mass[k] / jgrid.gop.codewords[k][None, :]).sum()) for k in range(1, jgrid.steps + 1)]
    )
    return jgrid.times[1:].copy(), prices


def _bond_at_nodes(jgrid: JointQuantGrid, k: int, p_rate, p_tcev, T: float, S: float, mpor: bool = True):
    g = ir_component_32(p_rate, T, S, jgrid.rate.codewords[k])
    if not mpor:
        return np.broadcast_to(np.asarray(g)[:, None], (jgrid.rate.codewords[k].size, jgrid.gop.codewords[k].size))
    m = mpor_component(p_tcev, T, S, jgrid.gop.codewords[k])
    return np.outer(g, m)


def zcb_option_price_rmq(
    jgrid: JointQuantGrid,
    p_rate: Rate32Params,
    p_tcev: TcevParams,
    spec: BondOptionSpec,
    kind: OptionKind = OptionKind.PUT,
    accrual: str = "left",
    strikes=None,
):
    """Fair option on the fair zero-coupon bond.

    The terminal layer is the intrinsic value against the node bond price
    ``M(x, T, S) G(r, T, S)``.  Passing ``strikes`` prices all of them in one
    backward pass and returns an array; otherwise ``spec.K`` is used.
    """
    k_end = jgrid.rate.index_of(spec.T, _TIME_TOL)
    bond = _bond_at_nodes(jgrid, k_end, p_rate, p_tcev, spec.T, spec.S)
    ks = np.atleast_1d(np.asarray(spec.K if strikes is None else strikes, dtype=float))
    x = jgrid.gop.codewords[k_end]
    payoff = _intrinsic(kind, bond[None, :, :], ks[:, None, None]) / x[None, None, :]
    u = _joint_backward(jgrid, k_end, payoff, accrual)
    out = jgrid.gop.codewords[0][0] * u[:, 0, 0]
    return float(out[0]) if strikes is None else out


def fair_forward_bond(p_rate: Rate32Params, p_tcev: TcevParams, T: float, S: float) -> float:
    """``P(0, S) / P(0, T)`` from the analytic hybrid bond prices."""
    from .analytic import hybrid_zcb

    return float(hybrid_zcb(p_tcev, p_rate, 0.0, S) / hybrid_zcb(p_tcev, p_rate, 0.0, T))


def rn_bond_option_comparators(
    jgrid: JointQuantGrid,
    p_rate: Rate32Params,
    p_tcev: TcevParams,
    spec: BondOptionSpec,
    accrual: str = "left",
    strikes=None,
):
    """``(rw_put, rn_put, rw_call, rn_call)`` for one strike or a strike array.

    The risk-neutral variants drop the MPOR factor from the bond (bond = G)
    and discount with the savings account alone on the short-rate grid.
    """
    rw_put = zcb_option_price_rmq(jgrid, p_rate, p_tcev, spec, OptionKind.PUT, accrual, strikes)
    rw_call = zcb_option_price_rmq(jgrid, p_rate, p_tcev, spec, OptionKind.CALL, accrual, strikes)
    rate = jgrid.rate
    k_end = rate.index_of(spec.T, _TIME_TOL)
    g = np.asarray(ir_component_32(p_rate, spec.T, spec.S, rate.codewords[k_end]))
    ks = np.atleast_1d(np.asarray(spec.K if strikes is None else strikes, dtype=float))
    put = np.maximum(ks[:, None] - g[None, :], 0.0)
    call = np.maximum(g[None, :] - ks[:, None], 0.0)
    v = np.stack([put, call])
    for k in range(k_end - 1, -1, -1):
        dt = rate.times[k + 1] - rate.times[k]
        src, dst = accrual_factors(rate.codewords[k], rate.codewords[k + 1], dt, accrual)
        v = src * ((v * dst) @ rate.trans[k].T)
    rn_put, rn_call = v[0, :, 0], v[1, :, 0]
    if strikes is None:
        return float(rw_put), float(rn_put[0]), float(rw_call), float(rn_call[0])
    return rw_put, rn_put, rw_call, rn_call

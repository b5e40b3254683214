"""Closed-form real-world prices under TCEV and the 3/2 short-rate model.

Prices are computed in discounted-GOP coordinates: with a constant rate ``r``
the GOP is ``S_t = beta(t) X_t`` where ``beta(t) = exp(r t)``.  All
noncentral chi-squared arguments follow from mapping ``X^(2(1-a))`` onto a
BESQ process of dimension ``delta = (3-2a)/(1-a)`` run on the clock ``phi``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .models import Rate32Params, TcevParams, tcev_dimension, tcev_phi, tcev_rn_dimension
from .specfun import kummer_1f1, nchi2_cdf

__all__ = [
    "OptionKind",
    "EuropeanSpec",
    "KummerBondParams",
    "real_world_put",
    "real_world_call",
    "rn_put",
    "rn_call",
    "fair_zcb_constant_rate",
    "mpor_component",
    "ir_component_32",
    "hybrid_zcb",
    "european_price",
]


class OptionKind(enum.Enum):
    PUT = "put"
    CALL = "call"


@dataclass(frozen=True)
class EuropeanSpec:
    t: float
    T: float
    K: float
    kind: OptionKind = OptionKind.PUT

    def __post_init__(self):
        if not self.T > self.t or self.t < 0:
            raise ValueError("need 0 <= t < T")
        if self.K < 0:
            raise ValueError("strike must be nonnegative")


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def _state(p: TcevParams, r: float, t, T, K, x_t):
    """Common arguments: (x = y/dphi, k_tilde = K~/dphi, beta_t, beta_T, x_t)."""
    x_t = p.x0 if x_t is None else x_t
    t, T, K, x_t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, T, K, x_t)))
    if np.any(x_t <= 0):
        raise ValueError("discounted GOP must be positive")
    if np.any(K < 0):
        raise ValueError("strike must be nonnegative")
    if np.any(T <= t):
        raise ValueError("need T > t")
    dphi = tcev_phi(p, T) - tcev_phi(p, t)
    beta_t = np.exp(r * t)
    beta_T = np.exp(r * T)
    x = x_t**p.power / dphi
    k_tilde = (K / beta_T) ** p.power / dphi
    return x, k_tilde, beta_t, beta_T, x_t, K


def _call(p, r, t, T, K, x_t, delta):
    x, kt, beta_t, beta_T, x_t, K = _state(p, r, t, T, K, x_t)
    first = x_t * beta_t * (1.0 - nchi2_cdf(kt, delta, x))
    second = K * beta_t / beta_T * nchi2_cdf(x, delta - 2.0, kt)
    return first - second


def _put(p, r, t, T, K, x_t):
    delta = tcev_dimension(p)
    x, kt, beta_t, beta_T, x_t, K = _state(p, r, t, T, K, x_t)
    first = -x_t * beta_t * nchi2_cdf(kt, delta, x)
    second = K * beta_t / beta_T * (nchi2_cdf(x, delta - 2.0, 0.0) - nchi2_cdf(x, delta - 2.0, kt))
    return first + second


def real_world_put(p: TcevParams, r: float, spec: EuropeanSpec, x_t=None):
    """Fair price of a European put on the GOP with constant short rate ``r``.

    ``x_t`` is the discounted GOP at the valuation time (defaults to ``p.x0``).
    """
    if spec.kind is not OptionKind.PUT:
        raise ValueError("spec is not a put")
    return _out(np.maximum(_put(p, r, spec.t, spec.T, spec.K, x_t), 0.0))


def real_world_call(p: TcevParams, r: float, spec: EuropeanSpec, x_t=None):
    """Fair price of a European call on the GOP with constant short rate ``r``."""
    if spec.kind is not OptionKind.CALL:
        raise ValueError("spec is not a call")
    return _out(np.maximum(_call(p, r, spec.t, spec.T, spec.K, x_t, tcev_dimension(p)), 0.0))


def rn_call(p: TcevParams, r: float, spec: EuropeanSpec, x_t=None):
    """Call price under the hypothetical risk-neutral measure.

    Written in terms of the risk-neutral BESQ dimension ``d = (1-2a)/(1-a)``:
    the exercise probability is the Schroder tail ``chi2'(x; 2-d, K~)`` of the
    absorbed process and the share leg follows from the symmetry relation,
    giving a reflecting density of dimension ``4-d``.
    """
    d = tcev_rn_dimension(p)
    x, kt, beta_t, beta_T, x_t, K = _state(p, r, spec.t, spec.T, spec.K, x_t)
    share = x_t * beta_t * (1.0 - nchi2_cdf(kt, 4.0 - d, x))
    cash = K * beta_t / beta_T * np.where(K > 0, nchi2_cdf(x, 2.0 - d, kt), 0.0)
    return _out(np.maximum(share - cash, 0.0))


def rn_put(p: TcevParams, r: float, spec: EuropeanSpec, x_t=None):
    """Put price from classical put-call parity on :func:`rn_call`."""
    x_t = p.x0 if x_t is None else x_t
    beta_t = np.exp(r * spec.t)
    beta_T = np.exp(r * spec.T)
    call = rn_call(p, r, spec, x_t)
    return _out(call - np.asarray(x_t) * beta_t + spec.K * beta_t / beta_T)


def european_price(p: TcevParams, r: float, spec: EuropeanSpec, x_t=None):
    if spec.kind is OptionKind.PUT:
        return real_world_put(p, r, spec, x_t)
    return real_world_call(p, r, spec, x_t)


def mpor_component(p: TcevParams, t, T, x_t=None):
    """``E[X_t / X_T]``: the chance that the BESQ of dimension ``4 - delta``
    started from ``X_t^(2(1-a))`` has not been absorbed by ``phi(T) - phi(t)``."""
    x_t = p.x0 if x_t is None else x_t
    t, T, x_t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, T, x_t)))
    if np.any(T < t):
        raise ValueError("need T >= t")
    dphi = tcev_phi(p, T) - tcev_phi(p, t)
    same = dphi <= 0
    x = x_t**p.power / np.where(same, 1.0, dphi)
    out = np.where(same, 1.0, nchi2_cdf(np.where(same, 1.0, x), tcev_dimension(p) - 2.0, 0.0))
    return _out(out)


def fair_zcb_constant_rate(p: TcevParams, r: float, t, T, x_t=None):
    """Fair zero-coupon bond with constant rate: discount factor times MPOR component."""
    return _out(np.exp(-r * (np.asarray(T, dtype=float) - t)) * mpor_component(p, t, T, x_t))


@dataclass(frozen=True)
class KummerBondParams:
    """Constants of the 3/2-model bond formula.

    ``phi_k`` here is ``kappa + sigma^2/2`` and has nothing to do with the
    TCEV time change.
    """

    alpha_k: float
    gamma_k: float
    phi_k: float
    two_kappa_theta: float
    sigma2: float
    kappa_theta: float

    @classmethod
    def from_rate(cls, p: Rate32Params) -> "KummerBondParams":
        return _kummer_params(p)

    @property
    def log_gamma_ratio(self) -> float:
        return float(special.gammaln(self.alpha_k - self.gamma_k) - special.gammaln(self.alpha_k))

    def x_of_r(self, r, tau):
        return self.two_kappa_theta / (self.sigma2 * np.expm1(self.kappa_theta * tau) * r)


@lru_cache(maxsize=32)
def _kummer_params(p: Rate32Params) -> KummerBondParams:
    s2 = p.sigma**2
    phi_k = p.kappa + 0.5 * s2
    gamma_k = (np.sqrt(phi_k**2 + 2.0 * s2) - phi_k) / s2
    alpha_k = 2.0 / s2 * (p.kappa + (1.0 + gamma_k) * s2)
    kp = KummerBondParams(
        alpha_k=float(alpha_k),
        gamma_k=float(gamma_k),
        phi_k=float(phi_k),
        two_kappa_theta=2.0 * p.kappa * p.theta,
        sigma2=s2,
        kappa_theta=p.kappa * p.theta,
    )
    if not kp.alpha_k - kp.gamma_k > 0:
        raise ValueError("3/2 bond formula needs alpha - gamma > 0")
    return kp


def ir_component_32(p: Rate32Params, t, T, r_t=None):
    """``E[exp(-int_t^T r ds)]`` under the 3/2 model (Kummer-function formula)."""
    kp = _kummer_params(p)
    r_t = p.r0 if r_t is None else r_t
    t, T, r_t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, T, r_t)))
    if np.any(T < t):
        raise ValueError("need T >= t")
    if np.any(r_t <= 0):
        raise ValueError("short rate must be positive")
    tau = T - t
    out = np.ones(tau.shape)
    live = tau > 0
    if np.any(live):
        x = kp.x_of_r(r_t[live], tau[live])
        f = kummer_1f1(kp.gamma_k, kp.alpha_k, -x)
        out[live] = np.exp(kp.log_gamma_ratio + kp.gamma_k * np.log(x)) * f
    return _out(out)


def hybrid_zcb(p_tcev: TcevParams, p_rate: Rate32Params, t, T, x_t=None, r_t=None):
    """Fair zero-coupon bond in the hybrid model with independent drivers."""
    return _out(mpor_component(p_tcev, t, T, x_t) * ir_component_32(p_rate, t, T, r_t))

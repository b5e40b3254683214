"""Model parameterizations: TCEV discounted GOP and the 3/2 short rate.

Both parameter classes expose ``drift``/``diffusion`` plus the partial
derivatives of those coefficients, which is all the quantization surrogates
need.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "TcevParams",
    "Rate32Params",
    "SavingsAccount",
    "Coefficients",
    "tcev_drift",
    "tcev_diffusion",
    "tcev_phi",
    "delta_phi",
    "tcev_dimension",
    "tcev_rn_dimension",
    "tcev_exact_sample",
    "sample_noncentral_chi2",
    "rate32_drift",
    "rate32_diffusion",
]


class Coefficients(NamedTuple):
    """Drift ``a`` and diffusion ``b`` with their x- and t-derivatives."""

    a: np.ndarray
    a_x: np.ndarray
    a_xx: np.ndarray
    a_t: np.ndarray
    b: np.ndarray
    b_x: np.ndarray
    b_xx: np.ndarray
    b_t: np.ndarray


def _require_positive(x, what="x"):
    if np.any(~(np.asarray(x) > 0)):
        raise ValueError(f"{what} must be strictly positive")


@dataclass(frozen=True)
class TcevParams:
    """TCEV model for the discounted GOP.

    The market price of risk is ``c (X/alpha_t)^(a-1)`` with
    ``alpha_t = alpha0 exp(eta t)``; ``x0`` is the initial discounted GOP.
    """

    alpha0: float = 51.34
    eta: float = 0.1239
    c: float = 0.1010
    a: float = 0.2868
    x0: float = 50.0

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.eta > 0 and self.c > 0 and self.x0 > 0):
            raise ValueError("TCEV requires alpha0, eta, c, x0 > 0")
        if not self.a < 1:
            raise ValueError("TCEV requires a < 1")

    @property
    def power(self) -> float:
        """Exponent ``2(1-a)`` mapping the discounted GOP onto BESQ."""
        return 2.0 * (1.0 - self.a)

    def alpha(self, t):
        return self.alpha0 * np.exp(self.eta * np.asarray(t, dtype=float))

    def mpor(self, x, t):
        return self.c * (np.asarray(x, dtype=float) / self.alpha(t)) ** (self.a - 1.0)

    def drift(self, x, t):
        return tcev_drift(self, x, t)

    def diffusion(self, x, t):
        return tcev_diffusion(self, x, t)

    def coefficients(self, x, t) -> Coefficients:
        x = np.asarray(x, dtype=float)
        a = self.a
        scale_a = self.c**2 * self.alpha(t) ** (2.0 * (1.0 - a))
        scale_b = self.c * self.alpha(t) ** (1.0 - a)
        drift = scale_a * x ** (2 * a - 1)
        diff = scale_b * x**a
        return Coefficients(
            a=drift,
            a_x=(2 * a - 1) * scale_a * x ** (2 * a - 2),
            a_xx=(2 * a - 1) * (2 * a - 2) * scale_a * x ** (2 * a - 3),
            a_t=2 * (1 - a) * self.eta * drift,
            b=diff,
            b_x=a * scale_b * x ** (a - 1),
            b_xx=a * (a - 1) * scale_b * x ** (a - 2),
            b_t=(1 - a) * self.eta * diff,
        )


@dataclass(frozen=True)
class Rate32Params:
    """3/2 short rate ``dr = kappa (theta r - r^2) dt + sigma r^(3/2) dW``."""

    kappa: float = 3.5726
    theta: float = 0.096
    sigma: float = 0.7960
    r0: float = 0.05

    def __post_init__(self):
        if min(self.kappa, self.theta, self.sigma, self.r0) <= 0:
            raise ValueError("3/2 model parameters must be strictly positive")

    @property
    def x0(self) -> float:
        return self.r0

    def drift(self, r, t=0.0):
        return rate32_drift(self, r)

    def diffusion(self, r, t=0.0):
        return rate32_diffusion(self, r)

    def coefficients(self, r, t=0.0) -> Coefficients:
        r = np.asarray(r, dtype=float)
        k, th, s = self.kappa, self.theta, self.sigma
        zero = np.zeros_like(r)
        return Coefficients(
            a=k * (th * r - r * r),
            a_x=k * (th - 2 * r),
            a_xx=np.full_like(r, -2 * k),
            a_t=zero,
            b=s * r**1.5,
            b_x=1.5 * s * np.sqrt(r),
            b_xx=0.75 * s / np.sqrt(r),
            b_t=zero,
        )


@dataclass(frozen=True)
class SavingsAccount:
    """Deterministic savings account ``beta(t) = exp(r t)``."""

    r: float

    def beta(self, t):
        out = np.exp(self.r * np.asarray(t, dtype=float))
        return float(out) if out.ndim == 0 else out


def tcev_drift(p: TcevParams, x, t):
    _require_positive(x)
    x = np.asarray(x, dtype=float)
    out = p.c**2 * p.alpha(t) ** (2.0 * (1.0 - p.a)) * x ** (2.0 * p.a - 1.0)
    return float(out) if np.ndim(out) == 0 else out


def tcev_diffusion(p: TcevParams, x, t):
    _require_positive(x)
    x = np.asarray(x, dtype=float)
    out = p.c * p.alpha(t) ** (1.0 - p.a) * x**p.a
    return float(out) if np.ndim(out) == 0 else out


def tcev_phi(p: TcevParams, t):
    """BESQ time change ``(1-a) alpha0^(2(1-a)) c^2 / (2 eta) (e^(2(1-a) eta t) - 1)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be nonnegative")
    pw = p.power
    out = (1.0 - p.a) * p.alpha0**pw * p.c**2 / (2.0 * p.eta) * np.expm1(pw * p.eta * t)
    return float(out) if out.ndim == 0 else out


def tcev_dimension(p: TcevParams) -> float:
    return (3.0 - 2.0 * p.a) / (1.0 - p.a)


def tcev_rn_dimension(p: TcevParams) -> float:
    """Dimension of the BESQ driving the discounted GOP under the hypothetical
    risk-neutral measure; always ``4 - tcev_dimension(p)``."""
    return (1.0 - 2.0 * p.a) / (1.0 - p.a)


def sample_noncentral_chi2(df, nonc, rng: np.random.Generator):
    """Poisson mixture draw: ``J ~ Poisson(nonc/2)``, then ``chi2(df + 2J)``."""
    nonc = np.asarray(nonc, dtype=float)
    j = rng.poisson(0.5 * nonc)
    return 2.0 * rng.gamma(0.5 * np.asarray(df, dtype=float) + j)


def tcev_exact_sample(p: TcevParams, x_t, t: float, T: float, rng: np.random.Generator):
    """Draw the discounted GOP at ``T`` given its value ``x_t`` at ``t``.

    ``x_t`` may be an array; one draw is made per entry.
    """
    if not T > t:
        raise ValueError("need T > t")
    _require_positive(x_t, "x_t")
    dphi = tcev_phi(p, T) - tcev_phi(p, t)
    y = np.asarray(x_t, dtype=float) ** p.power
    q = sample_noncentral_chi2(tcev_dimension(p), y / dphi, rng)
    return (dphi * q) ** (1.0 / p.power)


def rate32_drift(p: Rate32Params, r):
    _require_positive(r, "r")
    r = np.asarray(r, dtype=float)
    out = p.kappa * (p.theta * r - r * r)
    return float(out) if out.ndim == 0 else out


def rate32_diffusion(p: Rate32Params, r):
    _require_positive(r, "r")
    r = np.asarray(r, dtype=float)
    out = p.sigma * r**1.5
    return float(out) if out.ndim == 0 else out


def delta_phi(p: TcevParams, t, T):
    return tcev_phi(p, T) - tcev_phi(p, t)


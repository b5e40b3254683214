"""Squared Bessel process transition laws.

``BESQ^delta`` solves ``dX = delta dt + 2 sqrt(|X|) dW``.  For ``delta > 2``
zero is unattainable and the transition density is a scaled noncentral
chi-squared density.  For ``delta < 2`` zero is attainable; with an absorbing
boundary the continuous part of the law is the norm-decreasing density and the
missing mass sits in an atom at zero.  ``delta == 2`` is rejected everywhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .specfun import log_bessel_i, nchi2_cdf, nchi2_pdf

__all__ = [
    "Boundary",
    "BesqSpec",
    "CirParams",
    "density_norm_decreasing",
    "density_reflecting",
    "cdf_absorbing",
    "absorption_probability",
    "tail_integral_schroder",
    "cir_time_change",
    "power_local_martingale_expectation",
]


class Boundary(enum.Enum):
    ABSORBING = "absorbing"
    REFLECTING = "reflecting"
    NONE = "none"


@dataclass(frozen=True)
class BesqSpec:
    delta: float
    x0: float
    boundary: Boundary = Boundary.NONE

    def __post_init__(self):
        if self.x0 < 0:
            raise ValueError("BESQ start value must be nonnegative")
        if self.delta == 2.0:
            raise ValueError("dimension 2 is not supported")
        if self.delta > 2 and self.boundary is not Boundary.NONE:
            raise ValueError("zero is unattainable for delta > 2; boundary must be NONE")
        if self.delta < 2 and self.boundary is Boundary.NONE:
            raise ValueError("delta < 2 needs an absorbing or reflecting boundary")
        if self.boundary is Boundary.REFLECTING and not 0 < self.delta < 2:
            raise ValueError("reflecting boundary requires 0 < delta < 2")

    def density(self, xT, T):
        if self.boundary is Boundary.ABSORBING:
            return density_norm_decreasing(xT, T, self.x0, self.delta)
        return density_reflecting(xT, T, self.x0, self.delta)


@dataclass(frozen=True)
class CirParams:
    """``dS = kappa (theta - S) dt + sigma sqrt(S) dW`` with ``S_0 = s0``."""

    kappa: float
    theta: float
    sigma: float
    s0: float

    def __post_init__(self):
        if min(self.kappa, self.theta, self.sigma) <= 0:
            raise ValueError("CIR kappa, theta, sigma must be strictly positive")
        if self.s0 < 0:
            raise ValueError("CIR start value must be nonnegative")


def _positive(name, value):
    if np.any(~(np.asarray(value) > 0)):
        raise ValueError(f"{name} must be strictly positive")


def density_norm_decreasing(xT, T, x0, delta):
    """Continuous part of the absorbed ``BESQ^delta`` law, ``delta < 2``.

    ``(1/2T) (xT/x0)^((delta/2 - 1)/2) exp(-(xT + x0)/2T) I_{1-delta/2}(sqrt(xT x0)/T)``,
    evaluated in log form so large arguments do not overflow.
    """
    if not delta < 2:
        raise ValueError("norm-decreasing density needs delta < 2")
    _positive("xT", xT)
    _positive("T", T)
    _positive("x0", x0)
    xT = np.asarray(xT, dtype=float)
    nu = 1.0 - 0.5 * delta
    z = np.sqrt(xT * x0) / T
    log_p = (
        -math.log(2.0) - np.log(T)
        + 0.5 * (0.5 * delta - 1.0) * np.log(xT / x0)
        - (xT + x0) / (2.0 * T)
        + log_bessel_i(nu, z)
    )
    out = np.exp(log_p)
    return float(out) if np.ndim(out) == 0 else out


def density_reflecting(xT, T, x0, delta):
    """``(1/T) nchi2_pdf(xT/T; delta, x0/T)``.

    The transition density for ``delta > 2``, and for ``0 < delta < 2`` with
    instantaneous reflection at zero.
    """
    if not delta > 0 or delta == 2.0:
        raise ValueError("reflecting density needs delta > 0, delta != 2")
    _positive("xT", xT)
    _positive("T", T)
    _positive("x0", x0)
    out = nchi2_pdf(np.asarray(xT, dtype=float) / T, delta, np.asarray(x0, dtype=float) / T) / T
    return float(out) if np.ndim(out) == 0 else out


def tail_integral_schroder(lower, T, x0, delta):
    """Mass of the norm-decreasing density above ``lower``:
    ``nchi2_cdf(x0/T; 2 - delta, lower/T)``."""
    if not delta < 2:
        raise ValueError("Schroder tail integral needs delta < 2")
    if np.any(np.asarray(lower) < 0):
        raise ValueError("lower bound must be nonnegative")
    _positive("T", T)
    _positive("x0", x0)
    lower = np.asarray(lower, dtype=float)
    out = np.where(np.isinf(lower), 0.0, nchi2_cdf(x0 / T, 2.0 - delta, np.where(np.isinf(lower), 0.0, lower) / T))
    return float(out) if out.ndim == 0 else out


def absorption_probability(T, x0, delta):
    """Probability that the absorbed process sits at zero at time ``T``."""
    return 1.0 - tail_integral_schroder(0.0, T, x0, delta)


def cdf_absorbing(xT, T, x0, delta):
    """``P(X_T <= xT)`` for the absorbed process, atom at zero included."""
    return 1.0 - tail_integral_schroder(xT, T, x0, delta)


def cir_time_change(p: CirParams, t):
    """Map a CIR process onto ``BESQ``: ``S_t = scale * X_phi``.

    Returns ``(phi, scale, delta)`` with ``phi = sigma^2 (e^{kappa t} - 1)/(4 kappa)``,
    ``scale = e^{-kappa t}`` and ``delta = 4 kappa theta / sigma^2``.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("time must be nonnegative")
    t = np.asarray(t, dtype=float)
    phi = p.sigma**2 * np.expm1(p.kappa * t) / (4.0 * p.kappa)
    scale = np.exp(-p.kappa * t)
    delta = 4.0 * p.kappa * p.theta / p.sigma**2
    if phi.ndim == 0:
        return float(phi), float(scale), delta
    return phi, scale, delta


def power_local_martingale_expectation(x0, T, delta):
    """``E[X_T^(1 - delta/2)]`` for ``BESQ^delta`` started at ``x0``, ``delta > 2``.

    Equals ``x0^(1 - delta/2) nchi2_cdf(x0/T; delta - 2, 0)``, strictly below the
    starting value ``x0^(1 - delta/2)``: the power process is a strict local
    martingale.
    """
    if not delta > 2:
        raise ValueError("strict local martingale expectation needs delta > 2")
    _positive("x0", x0)
    _positive("T", T)
    out = np.asarray(x0, dtype=float) ** (1.0 - 0.5 * delta) * nchi2_cdf(np.asarray(x0) / T, delta - 2.0, 0.0)
    return float(out) if out.ndim == 0 else out

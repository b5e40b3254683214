"""Scalar special functions used by the pricing formulas.

Gamma, Bessel and normal functions are thin, domain-checked wrappers over
:mod:`scipy.special`.  The noncentral chi-squared distribution, Kummer's
confluent hypergeometric function and the bivariate normal CDF are
implemented here.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy import special

__all__ = [
    "ln_gamma",
    "reg_lower_gamma",
    "bessel_i",
    "log_bessel_i",
    "kummer_1f1",
    "nchi2_cdf",
    "nchi2_pdf",
    "normal_cdf",
    "normal_pdf",
    "bvn_cdf",
    "ConvergenceError",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ConvergenceError(ArithmeticError):
    """A series or iteration failed to reach its tolerance."""


def _scalar_or_array(out):
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# gamma family
# --------------------------------------------------------------------------


def ln_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("ln_gamma requires x > 0")
    return _scalar_or_array(special.gammaln(x))


def reg_lower_gamma(s, x):
    """Regularized lower incomplete gamma ``P(s, x)``."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(s > 0)):
        raise ValueError("reg_lower_gamma requires s > 0")
    if np.any(~(x >= 0)):
        raise ValueError("reg_lower_gamma requires x >= 0")
    return _scalar_or_array(special.gammainc(s, x))


# --------------------------------------------------------------------------
# modified Bessel function of the first kind
# --------------------------------------------------------------------------


def log_bessel_i(nu, x):
    """``log I_nu(x)`` computed from the exponentially scaled Bessel function.

    Valid wherever ``I_nu(x) > 0``, which holds for ``nu > -1`` and ``x > 0``.
    """
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_i requires x >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(special.ive(nu, x)) + x
    return _scalar_or_array(out)


def bessel_i(nu, x):
    """Modified Bessel function ``I_nu(x)`` of real order, ``x >= 0``.

    Raises :class:`OverflowError` if the value exceeds the double range; use
    :func:`log_bessel_i` in that regime.
    """
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("bessel_i requires x >= 0")
    out = special.iv(nu, x)
    if np.any(np.isinf(out) & np.isfinite(x)):
        raise OverflowError("I_nu(x) overflows; use log_bessel_i")
    return _scalar_or_array(out)


# --------------------------------------------------------------------------
# Kummer's confluent hypergeometric function 1F1
# --------------------------------------------------------------------------

_KUMMER_ASYMPTOTIC = 500.0
_KUMMER_MAXTERMS = 200_000


def _kummer_series(a: float, b: float, z: float, tol: float) -> float:
    # plain ascending series; used for z >= 0 or small |z|
    term = 1.0
    total = 1.0
    n = 0
    while True:
        term *= (a + n) / (b + n) * z / (n + 1)
        total += term
        n += 1
        if term == 0.0:
            return total
        ratio = abs((a + n) / (b + n) * z / (n + 1))
        if ratio < 1.0 and abs(term) * ratio / (1.0 - ratio) <= tol * abs(total):
            return total
        if n > _KUMMER_MAXTERMS:
            raise ConvergenceError(f"1F1({a}, {b}, {z}) series did not converge")


def _kummer_negative_asymptotic(a: float, b: float, z: float, tol: float) -> float:
    # 1F1(a; b; -z) for large z > 0, dropping the O(e^{-z}) branch
    term = 1.0
    total = 1.0
    for n in range(200):
        nxt = term * (a + n) * (a - b + 1 + n) / ((n + 1) * z)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) <= tol * abs(total):
            break
    log_pref = special.gammaln(b) - special.gammaln(b - a) - a * math.log(z)
    sign = special.gammasgn(b) * special.gammasgn(b - a)
    return sign * math.exp(log_pref) * total


def _kummer_scalar(a: float, b: float, x: float, tol: float) -> float:
    if b <= 0 and float(b).is_integer():
        raise ValueError("kummer_1f1 undefined for b a nonpositive integer")
    if x == 0.0 or a == 0.0:
        return 1.0
    if a == b:
        return math.exp(x)
    if x >= 0.0:
        if x > 700.0:
            raise OverflowError("1F1 with large positive argument overflows")
        return _kummer_series(a, b, x, tol)
    z = -x
    if z > _KUMMER_ASYMPTOTIC and not (b - a <= 0 and float(b - a).is_integer()):
        return _kummer_negative_asymptotic(a, b, z, tol)
    if z <= 1.0:
        return _kummer_series(a, b, x, tol)
    # Kummer transform turns the alternating series into one of fixed sign
    return math.exp(x) * _kummer_series(b - a, b, z, tol)


def kummer_1f1(a, b, x, tol: float = 1e-15):
    """Confluent hypergeometric function of the first kind ``1F1(a; b; x)``.

    Negative arguments go through the Kummer transformation
    ``1F1(a; b; x) = e^x 1F1(b - a; b; -x)`` so the summed series has terms of
    one sign; very negative arguments use the large-``|x|`` asymptotic series.
    """
    a_arr, b_arr, x_arr = np.broadcast_arrays(
        np.asarray(a, dtype=float), np.asarray(b, dtype=float), np.asarray(x, dtype=float)
    )
    if a_arr.ndim == 0:
        return _kummer_scalar(float(a_arr), float(b_arr), float(x_arr), tol)
    out = np.empty(a_arr.shape)
    for idx in np.ndindex(a_arr.shape):
        out[idx] = _kummer_scalar(float(a_arr[idx]), float(b_arr[idx]), float(x_arr[idx]), tol)
    return out


# --------------------------------------------------------------------------
# noncentral chi-squared
# --------------------------------------------------------------------------

_POISSON_SPREAD = 10.0
_POISSON_PAD = 40
_CHUNK_CELLS = 4_000_000


def _check_nchi2(x, k, lam):
    if np.any(~(k > 0)):
        raise ValueError("noncentral chi-squared requires k > 0")
    if np.any(~(lam >= 0)):
        raise ValueError("noncentral chi-squared requires lambda >= 0")
    if np.any(~(x >= 0)):
        raise ValueError("noncentral chi-squared requires x >= 0")


def _nchi2_cdf_block(x, k, lam):
    # Poisson(lam/2) mixture of central chi-squared CDFs, over a window centred
    # on the modal Poisson index wide enough that the dropped tails are < 1e-17
    mu = 0.5 * lam
    spread = np.ceil(_POISSON_SPREAD * np.sqrt(mu)).astype(np.int64) + _POISSON_PAD
    mode = np.floor(mu).astype(np.int64)
    lo = np.maximum(mode - spread, 0)
    width = int(np.max(mode + spread - lo)) + 1
    j = lo[:, None] + np.arange(width)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = j * np.log(mu)[:, None] - mu[:, None] - special.gammaln(j + 1.0)
    logw = np.where(mu[:, None] == 0.0, np.where(j == 0, 0.0, -np.inf), logw)
    w = np.exp(logw)
    central = special.gammainc(0.5 * k[:, None] + j, 0.5 * x[:, None])
    return np.sum(w * central, axis=1)


def nchi2_cdf(x, k, lam):
    """CDF of the noncentral chi-squared law with ``k`` degrees of freedom
    and noncentrality ``lam`` (fractional ``k`` and ``lam = 0`` allowed)."""
    x, k, lam = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(k, dtype=float), np.asarray(lam, dtype=float)
    )
    _check_nchi2(x, k, lam)
    shape = x.shape
    xf, kf, lf = (v.ravel() for v in (x, k, lam))
    out = np.empty(xf.shape)
    central = lf == 0.0
    out[central] = special.gammainc(0.5 * kf[central], 0.5 * xf[central])
    idx = np.flatnonzero(~central)
    if idx.size:
        # chunk so the (points x Poisson window) work array stays bounded
        order = idx[np.argsort(lf[idx])]
        widths = 2.0 * (_POISSON_SPREAD * np.sqrt(0.5 * lf[order]) + _POISSON_PAD) + 2.0
        start = 0
        while start < order.size:
            stop = start + 1
            while stop < order.size and (stop + 1 - start) * widths[stop] <= _CHUNK_CELLS:
                stop += 1
            sel = order[start:stop]
            out[sel] = _nchi2_cdf_block(xf[sel], kf[sel], lf[sel])
            start = stop
    out = np.clip(out, 0.0, 1.0)
    return _scalar_or_array(out.reshape(shape))


def nchi2_pdf(x, k, lam):
    """Density of the noncentral chi-squared law.

    Uses the Bessel representation with the exponential scaling folded in,
    ``f = 1/2 exp(-(sqrt(x) - sqrt(lam))^2 / 2) (x/lam)^(k/4 - 1/2) ive(k/2 - 1, sqrt(lam x))``.
    """
    x, k, lam = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(k, dtype=float), np.asarray(lam, dtype=float)
    )
    _check_nchi2(x, k, lam)
    out = np.empty(x.shape)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        half_k = 0.5 * k
        log_central = (half_k - 1.0) * np.log(x) - 0.5 * x - half_k * math.log(2.0) - special.gammaln(half_k)
        central = np.exp(log_central - 0.5 * lam)
        z = np.sqrt(lam * x)
        bessel = (
            0.5
            * np.exp(-0.5 * (np.sqrt(x) - np.sqrt(lam)) ** 2 + (0.5 * half_k - 0.5) * np.log(x / lam))
            * special.ive(half_k - 1.0, z)
        )
    use_central = (lam == 0.0) | (x == 0.0)
    out[use_central] = central[use_central]
    out[~use_central] = bessel[~use_central]
    # at x = 0 only the j = 0 Poisson term survives: 0, 1/2 e^(-lam/2) or +inf
    at_zero = x == 0.0
    out[at_zero] = np.where(k[at_zero] > 2.0, 0.0, np.where(k[at_zero] == 2.0, 0.5 * np.exp(-0.5 * lam[at_zero]), np.inf))
    return _scalar_or_array(out)


# --------------------------------------------------------------------------
# normal distributions
# --------------------------------------------------------------------------


def normal_cdf(x):
    return _scalar_or_array(special.ndtr(np.asarray(x, dtype=float)))


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(np.exp(-0.5 * x * x) / _SQRT_2PI)


# Gauss-Legendre half-rules (6, 12 and 20 points) for the bivariate normal
_GL_W6 = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL_X6 = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL_W12 = np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                    0.2031674267230659, 0.2334925365383547, 0.2491470458134029])
_GL_X12 = np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                    0.5873179542866171, 0.3678314989981802, 0.1252334085114692])
_GL_W20 = np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                    0.1527533871307259])
_GL_X20 = np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                    0.07652652113349733])


@njit(cache=True)
def _phid(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


@njit(cache=True)
def _bvnu(dh, dk, r):
    # Genz's BVNU: P(X > dh, Y > dk) for standard normals with correlation r
    if dh == np.inf or dk == np.inf:
        return 0.0
    if dh == -np.inf:
        if dk == -np.inf:
            return 1.0
        return _phid(-dk)
    if dk == -np.inf:
        return _phid(-dh)
    if r == 0.0:
        return _phid(-dh) * _phid(-dk)
    tp = 2.0 * math.pi
    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if abs(r) < 0.3:
        w = _GL_W6
        x = _GL_X6
    elif abs(r) < 0.75:
        w = _GL_W12
        x = _GL_X12
    else:
        w = _GL_W20
        x = _GL_X20
    n = w.shape[0]
    if abs(r) < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        for i in range(n):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (1.0 + sgn * x[i]))
                bvn += w[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / tp + _phid(-h) * _phid(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if abs(r) < 1.0:
            as_ = 1.0 - r * r
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            asr = -0.5 * (bs / as_ + hk)
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_)
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(tp) * _phid(-b / a)
                bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = 0.5 * a
            acc = 0.0
            for i in range(n):
                for sgn in (-1.0, 1.0):
                    xs = (a * (1.0 + sgn * x[i])) ** 2
                    asr = -0.5 * (bs / xs + hk)
                    if asr > -100.0:
                        sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                        rs = math.sqrt(1.0 - xs)
                        ep = math.exp(-0.5 * hk * xs / (1.0 + rs) ** 2) / rs
                        acc += w[i] * math.exp(asr) * (sp - ep)
            bvn = (a * acc - bvn) / tp
        if r > 0.0:
            bvn += _phid(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0.0:
                L = _phid(k) - _phid(h)
            else:
                L = _phid(-h) - _phid(-k)
            bvn = L - bvn
    return max(0.0, min(1.0, bvn))


@njit(cache=True)
def bvn_lower(h, k, r):
    """``P(X <= h, Y <= k)`` for standard normals with correlation ``r``."""
    return _bvnu(-h, -k, r)


@njit(cache=True)
def _bvn_many(h, k, r, out):
    for i in range(h.shape[0]):
        out[i] = _bvnu(-h[i], -k[i], r)


def bvn_cdf(h, k, rho: float):
    """Bivariate standard normal CDF with correlation ``rho`` (|rho| <= 1)."""
    if not -1.0 <= rho <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    out = np.empty(h.size)
    _bvn_many(np.ascontiguousarray(h.ravel()), np.ascontiguousarray(k.ravel()), float(rho), out)
    return _scalar_or_array(out.reshape(h.shape))

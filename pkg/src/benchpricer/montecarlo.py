"""Monte Carlo reference engines.

The discounted GOP is long-stepped with its exact transition (a scaled
noncentral chi-squared draw raised to a power); the 3/2 short rate uses
Euler-Maruyama with a positivity floor.  Paths are generated in fixed-size
batches, each with its own child seed, and batch statistics are merged in
batch order, so results depend only on the configuration and seed.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .analytic import EuropeanSpec, OptionKind, ir_component_32, mpor_component
from .models import Rate32Params, TcevParams, tcev_dimension, tcev_phi
from .pricers import BermudanSpec, BondOptionSpec

__all__ = [
    "McConfig",
    "McEstimate",
    "RatePaths",
    "mc_european",
    "mc_bermudan_lsmc",
    "mc_rate32_euler_paths",
    "mc_hybrid_zcb",
    "mc_hybrid_zcb_curve",
    "mc_zcb_option",
    "tcev_exact_step",
]

log = logging.getLogger(__name__)

RATE_FLOOR = 1e-8
BATCH = 50_000


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    steps_per_year: int = 6
    seed: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.paths < 2:
            raise ValueError("need at least two paths")
        if self.steps_per_year < 1:
            raise ValueError("need at least one step per year")
        if self.antithetic and self.paths % 2:
            raise ValueError("antithetic sampling needs an even path count")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    paths: int

    def contains(self, value: float, n_se: float = 3.0) -> bool:
        return abs(value - self.mean) <= n_se * self.std_error


class _Welford:
    """Mean and sum of squared deviations, merged batch by batch (Chan et al.)."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, samples):
        samples = np.asarray(samples, dtype=float)
        n_b = samples.shape[0]
        if n_b == 0:
            return
        mean_b = samples.mean(axis=0)
        m2_b = ((samples - mean_b) ** 2).sum(axis=0)
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * n_b / n
        self.m2 = self.m2 + m2_b + delta**2 * self.n * n_b / n
        self.n = n

    def estimates(self, paths_per_sample: int = 1):
        var = self.m2 / max(self.n - 1, 1)
        se = np.sqrt(var / self.n)
        return self.mean, se, self.n * paths_per_sample


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("BENCHPRICER_THREADS", "1")))
    except ValueError:
        return 1


def _batched(cfg: McConfig, fn, shape=()):
    """Run ``fn(n, rng)`` over batches and merge; ``fn`` returns per-sample values.

    With antithetic sampling each sample is already a pair average, so the
    batch sizes count pairs.
    """
    per = 2 if cfg.antithetic else 1
    samples = cfg.paths // per
    sizes = [BATCH] * (samples // BATCH)
    if samples % BATCH:
        sizes.append(samples % BATCH)
    children = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = [(n, np.random.default_rng(ss)) for n, ss in zip(sizes, children)]
    acc = _Welford(shape)
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda job: fn(*job), jobs))
        for res in results:
            acc.add(res)
    else:
        for job in jobs:
            acc.add(fn(*job))
    return acc.estimates(per)


def _to_estimate(mean, se, n):
    if np.ndim(mean) == 0:
        return McEstimate(float(mean), float(se), int(n))
    return [McEstimate(float(m), float(s), int(n)) for m, s in zip(mean, se)]


def _ncx2(df: float, nonc, z, rng):
    # (Z + sqrt(nonc))^2 + chi2(df - 1): exact for df > 1, and antithetic
    # pairs come from flipping Z
    return (z + np.sqrt(nonc)) ** 2 + 2.0 * rng.standard_gamma(0.5 * (df - 1.0), size=np.shape(z))


def tcev_exact_step(p: TcevParams, x_t, t: float, T: float, rng, z=None):
    """Exact draw of the discounted GOP at ``T`` given ``x_t`` (normal ``z`` optional)."""
    dphi = tcev_phi(p, T) - tcev_phi(p, t)
    x_t = np.asarray(x_t, dtype=float)
    z = rng.standard_normal(x_t.shape) if z is None else z
    q = _ncx2(tcev_dimension(p), x_t**p.power / dphi, z, rng)
    return (dphi * q) ** (1.0 / p.power)


def _payoff(kind: OptionKind, s, K):
    return np.maximum(K - s, 0.0) if kind is OptionKind.PUT else np.maximum(s - K, 0.0)


def _ncx2_inverse(df: float, nonc: float, u1, u2):
    # Poisson(nonc/2) mixing index and central chi-squared draw, both by
    # inverse transform: the variate is increasing in each uniform, so
    # antithetic pairs (u, 1 - u) are negatively correlated for monotone payoffs
    j = stats.poisson.ppf(u1, 0.5 * nonc) if nonc > 0 else np.zeros_like(u1)
    return 2.0 * special.gammaincinv(0.5 * df + j, u2)


def _uniforms(rng, n):
    u = rng.random((2, n))
    return np.where(u == 0.0, 0.5**54, u)


def mc_european(p: TcevParams, r: float, spec: EuropeanSpec, cfg: McConfig, payoff=None, x_t=None) -> McEstimate:
    """``S_t E[h(S_T) / S_T]`` with one exact long step to ``spec.T``."""
    x_t = p.x0 if x_t is None else float(x_t)
    beta_t, beta_T = np.exp(r * spec.t), np.exp(r * spec.T)
    dphi = tcev_phi(p, spec.T) - tcev_phi(p, spec.t)
    nonc = x_t**p.power / dphi
    df = tcev_dimension(p)

    def value(u1, u2):
        s = beta_T * (dphi * _ncx2_inverse(df, nonc, u1, u2)) ** (1.0 / p.power)
        h = _payoff(spec.kind, s, spec.K) if payoff is None else payoff(s)
        return beta_t * x_t * h / s

    def batch(n, rng):
        u1, u2 = _uniforms(rng, n)
        if not cfg.antithetic:
            return value(u1, u2)
        return 0.5 * (value(u1, u2) + value(1.0 - u1, 1.0 - u2))

    return _to_estimate(*_batched(cfg, batch))


def _basis(x, degree):
    return np.vander(x, degree + 1, increasing=True)


def mc_bermudan_lsmc(
    p: TcevParams,
    r: float,
    spec: BermudanSpec,
    cfg: McConfig,
    basis_degree: int = 3,
    strikes=None,
):
    """Longstaff-Schwartz on benchmarked values with exact steps between dates.

    All strikes in ``strikes`` share one set of paths (returns a list);
    otherwise ``spec.K`` is priced.  Regression is on in-the-money paths,
    basis monomials in ``X_t / X_0``.
    """
    times = np.asarray(spec.exercise_times)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    n = cfg.paths
    x = np.empty((times.size, n))
    prev, t_prev = np.full(n, p.x0), 0.0
    half = n // 2
    for k, t in enumerate(times):
        if cfg.antithetic:
            z = rng.standard_normal(half)
            z = np.concatenate([z, -z])
        else:
            z = rng.standard_normal(n)
        prev = tcev_exact_step(p, prev, t_prev, t, rng, z)
        x[k] = prev
        t_prev = t
    ks = [spec.K] if strikes is None else list(strikes)
    out = []
    for K in ks:
        out.append(_lsmc_backward(p, r, times, x, float(K), spec.kind, basis_degree, cfg))
    return out[0] if strikes is None else out


def _lsmc_backward(p, r, times, x, K, kind, degree, cfg):
    s_last = np.exp(r * times[-1]) * x[-1]
    value = _payoff(kind, s_last, K) / s_last  # benchmarked cash flow along each path
    for k in range(times.size - 2, -1, -1):
        s = np.exp(r * times[k]) * x[k]
        ex = _payoff(kind, s, K) / s
        itm = ex > 0
        if np.count_nonzero(itm) == 0:
            continue
        xi = x[k, itm] / p.x0
        # fewer in-the-money paths than basis functions is not a defect
        deg = min(degree, np.unique(xi).size - 1)
        while True:
            A = _basis(xi, deg)
            coef, _, rank, _ = np.linalg.lstsq(A, value[itm], rcond=None)
            if rank == deg + 1 or deg == 0:
                break
            warnings.warn(f"LSMC regression rank deficient at t={times[k]:.4g}; degree {deg} -> {deg - 1}", RuntimeWarning)
            deg -= 1
        cont = A @ coef
        stop = ex[itm] > cont
        idx = np.flatnonzero(itm)[stop]
        value[idx] = ex[idx]
    if cfg.antithetic:
        half = value.size // 2
        samples = 0.5 * (value[:half] + value[half:])
    else:
        samples = value
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return McEstimate(float(p.x0 * samples.mean()), float(p.x0 * se), int(value.size))


@dataclass(frozen=True)
class RatePaths:
    """Terminal short rate and accumulated ``int_0^T r ds`` per path."""

    r_T: np.ndarray
    integral: np.ndarray
    T: float

    def discount_estimate(self) -> McEstimate:
        d = np.exp(-self.integral)
        return McEstimate(float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size)), int(d.size))


def _rate_step(p: Rate32Params, r, dt, z):
    nxt = r + p.kappa * (p.theta * r - r * r) * dt + p.sigma * r**1.5 * np.sqrt(dt) * z
    return np.maximum(nxt, RATE_FLOOR)


def _n_steps(T, spy):
    return max(1, int(round(T * spy)))


def mc_rate32_euler_paths(p: Rate32Params, T: float, cfg: McConfig, rng=None) -> RatePaths:
    """Euler paths of the 3/2 rate with trapezoidal accrual of ``int r ds``."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed)) if rng is None else rng
    n = cfg.paths
    steps = _n_steps(T, cfg.steps_per_year)
    dt = T / steps
    r = np.full(n, p.r0)
    integral = np.zeros(n)
    for _ in range(steps):
        if cfg.antithetic:
            z = rng.standard_normal(n // 2)
            z = np.concatenate([z, -z])
        else:
            z = rng.standard_normal(n)
        nxt = _rate_step(p, r, dt, z)
        integral += 0.5 * (r + nxt) * dt
        r = nxt
    return RatePaths(r, integral, T)


def _hybrid_paths(p_rate, p_tcev, rho, maturities, spy, n, rng, exact_gop):
    """Simulate to each maturity; yields ``(k, r, integral, x)`` at reporting times.

    With ``exact_gop`` the discounted GOP is long-stepped between reporting
    times (independent drivers only); otherwise it follows a log-Euler
    scheme driven by ``rho Z_r + sqrt(1 - rho^2) Z_perp``.
    """
    T = maturities[-1]
    steps = _n_steps(T, spy)
    grid = np.linspace(0.0, T, steps + 1)
    report = {int(np.argmin(np.abs(grid - m))): i for i, m in enumerate(maturities)}
    for k, i in report.items():
        if abs(grid[k] - maturities[i]) > 1e-9:
            raise ValueError("maturities must lie on the simulation grid")
    dt = T / steps
    r = np.full(n, p_rate.r0)
    integral = np.zeros(n)
    x = np.full(n, p_tcev.x0)
    logx = np.log(x)
    t_gop = 0.0
    c_perp = np.sqrt(1.0 - rho * rho)
    for k in range(steps):
        z_r = rng.standard_normal(n)
        nxt = _rate_step(p_rate, r, dt, z_r)
        integral += 0.5 * (r + nxt) * dt
        r = nxt
        if not exact_gop:
            z_x = rho * z_r + c_perp * rng.standard_normal(n)
            theta = p_tcev.c * np.exp((p_tcev.a - 1.0) * (logx - np.log(p_tcev.alpha(grid[k]))))
            logx = logx + 0.5 * theta * theta * dt + theta * np.sqrt(dt) * z_x
        if k + 1 in report:
            if exact_gop:
                x = tcev_exact_step(p_tcev, x, t_gop, grid[k + 1], rng)
                t_gop = grid[k + 1]
            else:
                # an exploded path overflows to inf, whose benchmarked weight 0 is the limit
                with np.errstate(over="ignore"):
                    x = np.exp(logx)
            yield report[k + 1], r, integral, x


def mc_hybrid_zcb_curve(p_rate, p_tcev, rho: float, maturities, cfg: McConfig, exact_gop: bool | None = None):
    """``E[(X_0/X_T) exp(-int_0^T r)]`` for each maturity from shared paths."""
    if not -1.0 < rho < 1.0:
        raise ValueError("correlation must lie in (-1, 1)")
    if cfg.antithetic:
        raise ValueError("antithetic sampling is not supported for hybrid paths")
    maturities = np.asarray(maturities, dtype=float)
    exact = (rho == 0.0) if exact_gop is None else exact_gop
    if exact and rho != 0.0:
        raise ValueError("exact GOP steps need independent drivers")

    def batch(n, rng):
        out = np.empty((n, maturities.size))
        for i, r, integral, x in _hybrid_paths(p_rate, p_tcev, rho, maturities, cfg.steps_per_year, n, rng, exact):
            out[:, i] = p_tcev.x0 / x * np.exp(-integral)
        return out

    return _to_estimate(*_batched(cfg, batch, shape=(maturities.size,)))


def mc_hybrid_zcb(p_rate, p_tcev, rho: float, T: float, cfg: McConfig, exact_gop: bool | None = None) -> McEstimate:
    return mc_hybrid_zcb_curve(p_rate, p_tcev, rho, [T], cfg, exact_gop)[0]


def mc_zcb_option(
    p_rate: Rate32Params,
    p_tcev: TcevParams,
    spec: BondOptionSpec,
    cfg: McConfig,
    kind: OptionKind = OptionKind.PUT,
    strikes=None,
    rho: float = 0.0,
):
    """``E[(X_0/X_T) exp(-int_0^T r) (K - M G)^+]`` with the node bond ``M G``.

    ``strikes`` prices several strikes on shared paths and returns a list.
    """
    ks = np.atleast_1d(np.asarray(spec.K if strikes is None else strikes, dtype=float))
    exact = rho == 0.0

    def batch(n, rng):
        for _, r, integral, x in _hybrid_paths(p_rate, p_tcev, rho, np.array([spec.T]), cfg.steps_per_year, n, rng, exact):
            bond = mpor_component(p_tcev, spec.T, spec.S, x) * ir_component_32(p_rate, spec.T, spec.S, r)
            weight = p_tcev.x0 / x * np.exp(-integral)
            pay = _payoff(kind, bond[:, None], ks[None, :])
            return weight[:, None] * pay

    est = _to_estimate(*_batched(cfg, batch, shape=(ks.size,)))
    return est[0] if strikes is None else est

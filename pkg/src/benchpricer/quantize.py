"""Recursive marginal quantization (RMQ) of one-dimensional diffusions and its
two-factor (joint) extension.

Each time step replaces the law of the discretized process by an optimal
``N``-point grid.  Given grid points ``x_i`` with probabilities ``p_i`` at one
step, the next marginal is the Gaussian mixture
``sum_i p_i Normal(mean(x_i), var(x_i))`` defined by a
:class:`GaussianSurrogate`; its quadratic distortion is minimized in the new
codewords by Newton's method, and cell probabilities give the companion
weights and one-step transition matrices.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numba import njit
from scipy import special
from scipy.linalg import solveh_banded

from .specfun import _GL_W6, _GL_W12, _GL_W20, _GL_X6, _GL_X12, _GL_X20, ConvergenceError, _bvnu, _phid

__all__ = [
    "SchemeOrder",
    "GaussianSurrogate",
    "Mixture",
    "QuantGrid",
    "JointQuantGrid",
    "QuantizationError",
    "euler_surrogate",
    "second_order_surrogate",
    "mixture_moments",
    "distortion",
    "distortion_gradient",
    "optimize_codewords",
    "companion_probs",
    "transition_matrix",
    "rmq_build",
    "joint_rmq_build",
    "accrual_factors",
]

log = logging.getLogger(__name__)

POSITIVE_FLOOR = 1e-10
_BAND_SIGMAS = 7.5


class SchemeOrder(enum.Enum):
    EULER = "euler"
    HIGHER_ORDER = "higher_order"


@dataclass(frozen=True)
class GaussianSurrogate:
    """One-step conditional mean and variance of a discretization scheme."""

    mean_fn: Callable
    var_fn: Callable
    order_tag: SchemeOrder = SchemeOrder.EULER
    positive: bool = True


def euler_surrogate(model) -> GaussianSurrogate:
    """``x + a dt`` and ``b^2 dt`` for a model exposing ``drift``/``diffusion``."""

    def mean_fn(x, t, dt):
        return x + model.drift(x, t) * dt

    def var_fn(x, t, dt):
        return model.diffusion(x, t) ** 2 * dt

    return GaussianSurrogate(mean_fn, var_fn, SchemeOrder.EULER)


def second_order_surrogate(model) -> GaussianSurrogate:
    """Gaussian matching the conditional mean and variance to ``O(dt^2)``.

    Uses the Ito-Taylor expansion of the first two moments, which coincide with
    those of the simplified weak order 2.0 scheme; needs ``model.coefficients``.
    """

    def mean_fn(x, t, dt):
        c = model.coefficients(x, t)
        return x + c.a * dt + 0.5 * dt * dt * (c.a_t + c.a * c.a_x + 0.5 * c.b**2 * c.a_xx)

    def var_fn(x, t, dt):
        c = model.coefficients(x, t)
        euler = c.b**2 * dt
        corr = c.b * c.b_t + c.a * c.b * c.b_x + c.b**2 * c.a_x + 0.5 * c.b**2 * c.b_x**2 + 0.5 * c.b**3 * c.b_xx
        var = euler + dt * dt * corr
        return np.where(var > 0, var, euler)

    return GaussianSurrogate(mean_fn, var_fn, SchemeOrder.HIGHER_ORDER)


class Mixture(NamedTuple):
    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    @property
    def std(self) -> float:
        second = np.dot(self.weights, self.stds**2 + self.means**2)
        return float(math.sqrt(max(second - self.mean**2, 0.0)))


def mixture_moments(codewords, probs, surrogate: GaussianSurrogate, t: float, dt: float) -> Mixture:
    """Component parameters of the next-step marginal law."""
    codewords = np.asarray(codewords, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("mixture weights must sum to one")
    means = np.broadcast_to(np.asarray(surrogate.mean_fn(codewords, t, dt), dtype=float), codewords.shape)
    var = np.broadcast_to(np.asarray(surrogate.var_fn(codewords, t, dt), dtype=float), codewords.shape)
    if np.any(~(var > 0)):
        raise ValueError("surrogate variance must be positive")
    return Mixture(np.array(means), np.sqrt(var), probs.copy())


# ---------------------------------------------------------------------------
# cell integrals of Gaussian mixtures
# ---------------------------------------------------------------------------


def _boundaries(codewords):
    mid = 0.5 * (codewords[1:] + codewords[:-1])
    return np.concatenate(([-np.inf], mid, [np.inf]))


def _cell_mass(lo, hi):
    # Phi(hi) - Phi(lo) without cancellation in the upper tail
    upper = lo > 0
    return np.where(upper, special.ndtr(-lo) - special.ndtr(-hi), special.ndtr(hi) - special.ndtr(lo))


def _phi(u):
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


class _CellStats(NamedTuple):
    mass: np.ndarray  # (components, cells) probability of each cell
    first: np.ndarray  # (components, cells) int over cell of z f_i(z) dz
    dens: np.ndarray  # (components, cells + 1) f_i at each boundary
    mean_dev: np.ndarray  # (components, cells) int (z - gamma_j)^2 f_i


def _cell_stats(mix: Mixture, codewords) -> _CellStats:
    v = _boundaries(codewords)
    m = mix.means[:, None]
    s = mix.stds[:, None]
    u = (v[None, :] - m) / s
    lo, hi = u[:, :-1], u[:, 1:]
    mass = _cell_mass(lo, hi)
    phi_u = _phi(u)
    dphi = phi_u[:, 1:] - phi_u[:, :-1]
    with np.errstate(invalid="ignore"):
        uphi = np.where(np.isfinite(u), u * phi_u, 0.0)
    first = m * mass - s * dphi
    d = m - codewords[None, :]
    second = d * d * mass - 2.0 * d * s * dphi + s * s * (mass - (uphi[:, 1:] - uphi[:, :-1]))
    return _CellStats(mass, first, phi_u / s, np.maximum(second, 0.0))


def distortion(mix: Mixture, codewords) -> float:
    """Quadratic distortion of the mixture quantized on ``codewords``."""
    st = _cell_stats(mix, np.asarray(codewords, dtype=float))
    return float(mix.weights @ st.mean_dev.sum(axis=1))


def distortion_gradient(mix: Mixture, codewords) -> np.ndarray:
    codewords = np.asarray(codewords, dtype=float)
    st = _cell_stats(mix, codewords)
    return 2.0 * (codewords * (mix.weights @ st.mass) - mix.weights @ st.first)


def _newton_system(mix: Mixture, codewords, st: _CellStats):
    w = mix.weights
    mass = w @ st.mass
    first = w @ st.first
    grad = 2.0 * (codewords * mass - first)
    dens = w @ st.dens  # mixture density at every boundary
    gaps = np.diff(codewords)
    n = codewords.size
    upper = np.zeros(n)
    lower = np.zeros(n)
    upper[:-1] = gaps * dens[1:-1]
    lower[1:] = gaps * dens[1:-1]
    diag = 2.0 * mass - 0.5 * (upper + lower)
    off = -0.5 * gaps * dens[1:-1]
    return grad, diag, off, mass, first


def _strictly_increasing(x):
    return bool(np.all(np.diff(x) > 0))


@dataclass
class OptimizeInfo:
    iterations: int
    grad_norm: float
    distortions: list = field(default_factory=list)
    lloyd_steps: int = 0


class QuantizationError(ConvergenceError):
    def __init__(self, message, grid=None, grad_norm=None, step=None):
        super().__init__(message)
        self.grid = grid
        self.grad_norm = grad_norm
        self.step = step


def optimize_codewords(
    mix: Mixture,
    N: int,
    init=None,
    *,
    tol: float = 1e-9,
    max_iter: int = 200,
    floor: float | None = None,
    return_info: bool = False,
):
    """Stationary ``N``-point quantizer of a Gaussian mixture.

    Newton iterations on the tridiagonal Hessian of the distortion, damped by
    backtracking until the distortion does not increase and the grid stays
    strictly increasing.  Where the Hessian is indefinite (multimodal laws) a
    Levenberg-Marquardt shift toward the Lloyd metric is added; a plain Lloyd
    (centroid) step is the last resort.  Stops once the gradient sup-norm is below
    ``tol`` times the mixture standard deviation.
    """
    if N < 1:
        raise ValueError("need at least one codeword")
    if N == 1:
        grid = np.array([mix.mean])
        if floor is not None:
            grid = np.maximum(grid, floor)
        info = OptimizeInfo(0, 0.0, [distortion(mix, grid)])
        return (grid, info) if return_info else grid
    scale = max(mix.std, 1e-300)
    if init is None:
        # companding start: optimal point density ~ f^(1/3), i.e. Normal(mean, 3 var) quantiles
        init = mix.mean + math.sqrt(3.0) * scale * special.ndtri((np.arange(N) + 0.5) / N)
    grid = np.array(init, dtype=float)
    if grid.size != N or not _strictly_increasing(grid):
        raise ValueError("initial grid must have N strictly increasing points")
    if floor is not None:
        grid = _apply_floor(grid, floor)

    st = _cell_stats(mix, grid)
    current = float(mix.weights @ st.mean_dev.sum(axis=1))
    info = OptimizeInfo(0, np.inf, [current])
    for it in range(1, max_iter + 1):
        grad, diag, off, mass, first = _newton_system(mix, grid, st)
        gnorm = float(np.max(np.abs(grad)))
        info.grad_norm = gnorm
        if gnorm <= tol * scale:
            info.iterations = it - 1
            break
        candidate = None
        # Levenberg-Marquardt: smallest shift toward the Lloyd metric 2*mass
        # that makes the tridiagonal Hessian positive definite (banded Cholesky)
        for mu in (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0):
            ab = np.zeros((2, N))
            ab[0, 1:] = off
            ab[1] = diag + 2.0 * mu * mass
            try:
                step = -solveh_banded(ab, grad)
            except (np.linalg.LinAlgError, ValueError):
                continue
            if not (np.all(np.isfinite(step)) and float(step @ grad) < 0):
                continue
            lam = 1.0
            for _ in range(40):
                trial = grid + lam * step
                if floor is not None:
                    trial = _apply_floor(trial, floor)
                if _strictly_increasing(trial):
                    st_trial = _cell_stats(mix, trial)
                    d_trial = float(mix.weights @ st_trial.mean_dev.sum(axis=1))
                    if d_trial <= current:
                        candidate = (trial, st_trial, d_trial)
                        break
                lam *= 0.5
            if candidate is not None:
                break
        if candidate is None:
            # Lloyd: move each codeword to the centroid of its cell
            safe = mass > 1e-300
            trial = np.where(safe, first / np.where(safe, mass, 1.0), grid)
            if floor is not None:
                trial = _apply_floor(trial, floor)
            if not _strictly_increasing(trial):
                trial = grid
            st_trial = _cell_stats(mix, trial)
            d_trial = float(mix.weights @ st_trial.mean_dev.sum(axis=1))
            if d_trial > current or np.array_equal(trial, grid):
                info.iterations = it
                break
            info.lloyd_steps += 1
            candidate = (trial, st_trial, d_trial)
        grid, st, current = candidate
        info.distortions.append(current)
        info.iterations = it
    else:
        grad = distortion_gradient(mix, grid)
        info.grad_norm = float(np.max(np.abs(grad)))
    if info.grad_norm > tol * scale:
        # accept a grid whose residual is at round-off level of the distortion
        if not info.grad_norm <= 1e-6 * scale:
            raise QuantizationError(
                f"codeword optimization did not converge (|grad| = {info.grad_norm:.3e})",
                grid=grid,
                grad_norm=info.grad_norm,
            )
        log.debug("optimizer stopped at |grad|=%.2e (tol %.2e)", info.grad_norm, tol * scale)
    return (grid, info) if return_info else grid


def _apply_floor(grid, floor):
    out = np.maximum(grid, floor)
    # keep strict monotonicity for codewords pressed onto the floor
    for j in range(1, out.size):
        if out[j] <= out[j - 1]:
            out[j] = out[j - 1] * (1.0 + 1e-12) + 1e-300
    return out


def companion_probs(mix: Mixture, codewords) -> np.ndarray:
    """Probability of each Voronoi cell under the mixture."""
    codewords = np.asarray(codewords, dtype=float)
    if codewords.size > 1 and not _strictly_increasing(codewords):
        raise ValueError("codewords must be strictly increasing")
    st = _cell_stats(mix, codewords)
    p = mix.weights @ st.mass
    return p / p.sum()


def transition_matrix(prev_codewords, surrogate: GaussianSurrogate, next_codewords, t: float, dt: float) -> np.ndarray:
    """Row-stochastic matrix of one-step cell probabilities."""
    prev_codewords = np.asarray(prev_codewords, dtype=float)
    next_codewords = np.asarray(next_codewords, dtype=float)
    for g in (prev_codewords, next_codewords):
        if g.size > 1 and not _strictly_increasing(g):
            raise ValueError("codewords must be strictly increasing")
    mix = mixture_moments(prev_codewords, np.full(prev_codewords.size, 1.0 / prev_codewords.size), surrogate, t, dt)
    return _transition_from_mixture(mix, next_codewords)


def _transition_from_mixture(mix: Mixture, next_codewords) -> np.ndarray:
    v = _boundaries(next_codewords)
    u = (v[None, :] - mix.means[:, None]) / mix.stds[:, None]
    trans = _cell_mass(u[:, :-1], u[:, 1:])
    return trans / trans.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass
class QuantGrid:
    """RMQ output: per-step codewords, probabilities and transitions.

    ``trans[k]`` maps step ``k`` to step ``k + 1``; ``means[k]``/``stds[k]``
    are the Gaussian surrogate parameters attached to the codewords of step
    ``k`` (they define ``trans[k]``).
    """

    times: np.ndarray
    codewords: list
    probs: list
    trans: list
    means: list
    stds: list
    distortions: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def index_of(self, t: float, atol: float = 1e-9) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > atol:
            raise ValueError(f"time {t} is not a grid time")
        return k

    def expectation(self, k: int, values) -> float:
        return float(np.dot(self.probs[k], values))

    def to_csv(self, directory) -> list:
        """Write one CSV per step: ``codeword, probability, p_to_0 ... p_to_{M-1}``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(self.steps + 1):
            n = self.codewords[k].size
            cols = [self.codewords[k][:, None], self.probs[k][:, None]]
            header = ["codeword", "probability"]
            if k < self.steps:
                cols.append(self.trans[k])
                header += [f"p_to_{j}" for j in range(self.trans[k].shape[1])]
            table = np.hstack(cols) if n else np.empty((0, len(header)))
            path = directory / f"step_{k:04d}.csv"
            with open(path, "w") as fh:
                fh.write(f"# t={float(self.times[k])!r}\n")
                fh.write(",".join(header) + "\n")
                for row in table:
                    fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
            paths.append(path)
        return paths


def _time_grid(T: float, steps_per_year: int):
    if steps_per_year < 1 or not T > 0:
        raise ValueError("need T > 0 and at least one step per year")
    n = max(1, int(round(T * steps_per_year)))
    return np.linspace(0.0, T, n + 1)


def rmq_build(
    model,
    surrogate: GaussianSurrogate,
    x0: float,
    T: float,
    steps_per_year: int,
    N: int | Sequence[int],
    *,
    tol: float = 1e-9,
    max_iter: int = 200,
    times=None,
) -> QuantGrid:
    """Recursive marginal quantization of ``model`` started at ``x0``.

    ``N`` is either the constant codeword count after the Dirac step 0 or a
    per-step sequence of counts for steps ``1..n``.
    """
    times = _time_grid(T, steps_per_year) if times is None else np.asarray(times, dtype=float)
    n = times.size - 1
    sizes = [int(N)] * n if np.isscalar(N) else [int(v) for v in N]
    if len(sizes) != n or min(sizes) < 1:
        raise ValueError("need one positive codeword count per step")
    floor = POSITIVE_FLOOR if surrogate.positive else None
    codewords = [np.array([float(x0)])]
    probs = [np.array([1.0])]
    trans, means, stds, dist = [], [], [], [0.0]
    prev_mix = None
    for k in range(n):
        t, dt = times[k], times[k + 1] - times[k]
        mix = mixture_moments(codewords[k], probs[k], surrogate, t, dt)
        means.append(mix.means)
        stds.append(mix.stds)
        if sizes[k] == 1:
            init = None
        elif prev_mix is not None and codewords[k].size == sizes[k]:
            # warm start: previous grid moved to the new mean and spread
            z = (codewords[k] - prev_mix.mean) / max(prev_mix.std, 1e-300)
            init = mix.mean + mix.std * z
            if not _strictly_increasing(init):
                init = None
        else:
            init = None
        try:
            grid, info = optimize_codewords(mix, sizes[k], init, tol=tol, max_iter=max_iter, floor=floor, return_info=True)
        except QuantizationError as err:
            err.step = k + 1
            raise QuantizationError(f"step {k + 1}: {err}", err.grid, err.grad_norm, k + 1) from err
        tr = _transition_from_mixture(mix, grid)
        p = probs[k] @ tr
        codewords.append(grid)
        probs.append(p / p.sum())
        trans.append(tr)
        dist.append(info.distortions[-1])
        prev_mix = mix
    # surrogate parameters at the terminal codewords are never needed
    means.append(np.empty(0))
    stds.append(np.empty(0))
    return QuantGrid(times, codewords, probs, trans, means, stds, np.array(dist))


# ---------------------------------------------------------------------------
# joint (two-factor) quantization
# ---------------------------------------------------------------------------


def _standardized_bounds(grid: QuantGrid, k: int):
    """Standardized next-step cell boundaries per source codeword and the
    band of target cells holding all but ~1e-13 of each row."""
    v = _boundaries(grid.codewords[k + 1])
    u = (v[None, :] - grid.means[k][:, None]) / grid.stds[k][:, None]
    n_cells = v.size - 1
    lo = np.searchsorted(v, grid.means[k] - _BAND_SIGMAS * grid.stds[k], side="right") - 1
    hi = np.searchsorted(v, grid.means[k] + _BAND_SIGMAS * grid.stds[k], side="left")
    lo = np.clip(lo, 0, n_cells - 1)
    hi = np.clip(hi, lo + 1, n_cells)
    return np.ascontiguousarray(u), lo.astype(np.int64), hi.astype(np.int64)


@njit(cache=True)
def _bvn_nodes(rho):
    # Genz's quadrature in asin(rho) with the sines hoisted out of the
    # per-corner loop; empty for |rho| >= 0.925 (handled by _bvnu directly)
    if abs(rho) >= 0.925 or rho == 0.0:
        return np.empty(0), np.empty(0)
    if abs(rho) < 0.3:
        w, x = _GL_W6, _GL_X6
    elif abs(rho) < 0.75:
        w, x = _GL_W12, _GL_X12
    else:
        w, x = _GL_W20, _GL_X20
    n = w.shape[0]
    asr = 0.5 * math.asin(rho)
    sn = np.empty(2 * n)
    wt = np.empty(2 * n)
    for i in range(n):
        for s_, sgn in enumerate((-1.0, 1.0)):
            sn[2 * i + s_] = math.sin(asr * (1.0 + sgn * x[i]))
            wt[2 * i + s_] = w[i] * asr / (2.0 * math.pi)
    return sn, wt


@njit(cache=True)
def _bvn_upper(dh, dk, rho, sn, wt):
    if sn.shape[0] == 0 or not (math.isfinite(dh) and math.isfinite(dk)):
        return _bvnu(dh, dk, rho)
    hk = dh * dk
    hs = 0.5 * (dh * dh + dk * dk)
    acc = 0.0
    for i in range(sn.shape[0]):
        acc += wt[i] * math.exp((sn[i] * hk - hs) / (1.0 - sn[i] * sn[i]))
    val = acc + _phid(-dh) * _phid(-dk)
    return max(0.0, min(1.0, val))


@njit(cache=True)
def _rect_block(ur, lo_r, hi_r, ux, lo_x, hi_x, rho, sn, wt, corner, out):
    # rectangle probabilities on the band, outer band edges pushed to +-inf
    nr = hi_r - lo_r
    nx = hi_x - lo_x
    for a in range(nr + 1):
        if a == 0:
            h = -np.inf
        elif a == nr:
            h = np.inf
        else:
            h = ur[lo_r + a]
        for b in range(nx + 1):
            if b == 0:
                kk = -np.inf
            elif b == nx:
                kk = np.inf
            else:
                kk = ux[lo_x + b]
            corner[a, b] = _bvn_upper(-h, -kk, rho, sn, wt)
    for a in range(nr):
        for b in range(nx):
            pr = corner[a + 1, b + 1] - corner[a, b + 1] - corner[a + 1, b] + corner[a, b]
            out[a, b] = pr if pr > 0.0 else 0.0
    return nr, nx


@njit(cache=True)
def _joint_forward(ur, lo_r, hi_r, ux, lo_x, hi_x, rho, mass, out):
    nf = mass.shape[0]
    block = np.empty((ur.shape[1], ux.shape[1]))
    corner = np.empty((ur.shape[1] + 1, ux.shape[1] + 1))
    sn, wt = _bvn_nodes(rho)
    for i in range(ur.shape[0]):
        for k in range(ux.shape[0]):
            live = False
            for f in range(nf):
                if mass[f, i, k] != 0.0:
                    live = True
            if not live:
                continue
            nr, nx = _rect_block(ur[i], lo_r[i], hi_r[i], ux[k], lo_x[k], hi_x[k], rho, sn, wt, corner, block)
            tot = 0.0
            for a in range(nr):
                for b in range(nx):
                    tot += block[a, b]
            for f in range(nf):
                m = mass[f, i, k] / tot
                if m == 0.0:
                    continue
                for a in range(nr):
                    for b in range(nx):
                        out[f, lo_r[i] + a, lo_x[k] + b] += m * block[a, b]


@njit(cache=True)
def _joint_backward(ur, lo_r, hi_r, ux, lo_x, hi_x, rho, values, out):
    nf = values.shape[0]
    block = np.empty((ur.shape[1], ux.shape[1]))
    corner = np.empty((ur.shape[1] + 1, ux.shape[1] + 1))
    sn, wt = _bvn_nodes(rho)
    for i in range(ur.shape[0]):
        for k in range(ux.shape[0]):
            nr, nx = _rect_block(ur[i], lo_r[i], hi_r[i], ux[k], lo_x[k], hi_x[k], rho, sn, wt, corner, block)
            tot = 0.0
            for a in range(nr):
                for b in range(nx):
                    tot += block[a, b]
            for f in range(nf):
                acc = 0.0
                for a in range(nr):
                    for b in range(nx):
                        acc += block[a, b] * values[f, lo_r[i] + a, lo_x[k] + b]
                out[f, i, k] = acc / tot


@dataclass
class JointQuantGrid:
    """Product grid of a short-rate RMQ grid and a discounted-GOP RMQ grid.

    Joint one-step transitions are bivariate-normal rectangle probabilities
    of the two surrogate Gaussians with correlation ``rho``.  They are
    evaluated on demand (a dense tensor per step would not fit in memory);
    at ``rho == 0`` they factor into the two marginal transition matrices.

    ``joint_probs[k]`` has shape ``(N_r, N_x)`` at step ``k``.  When built with
    an ``accrual`` rule, ``discounted_mass[k]`` holds the state prices
    ``E[exp(-int_0^t_k r ds) 1{node}]``.
    """

    rate: QuantGrid
    gop: QuantGrid
    rho: float
    joint_probs: list
    discounted_mass: list | None = None
    accrual: str | None = None

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError("correlation must lie in (-1, 1)")
        if self.rate.times.shape != self.gop.times.shape or not np.allclose(self.rate.times, self.gop.times):
            raise ValueError("rate and GOP grids must share time steps")

    @property
    def times(self):
        return self.rate.times

    @property
    def steps(self) -> int:
        return self.rate.steps

    @property
    def horizon(self) -> float:
        return self.rate.horizon

    def _bounds(self, k):
        return _standardized_bounds(self.rate, k), _standardized_bounds(self.gop, k)

    def propagate(self, k: int, mass) -> np.ndarray:
        """Push node masses at step ``k`` to step ``k + 1``; leading axes are batched."""
        mass = np.asarray(mass, dtype=float)
        lead = mass.shape[:-2]
        m3 = mass.reshape((-1,) + mass.shape[-2:])
        if self.rho == 0.0:
            out = self.rate.trans[k].T @ m3 @ self.gop.trans[k]
        else:
            (ur, lr, hr), (ux, lx, hx) = self._bounds(k)
            out = np.zeros((m3.shape[0], self.rate.codewords[k + 1].size, self.gop.codewords[k + 1].size))
            _joint_forward(ur, lr, hr, ux, lx, hx, float(self.rho), np.ascontiguousarray(m3), out)
        return out.reshape(lead + out.shape[-2:])

    def expect(self, k: int, values) -> np.ndarray:
        """Conditional expectation of step-``k + 1`` node values given each step-``k`` node."""
        values = np.asarray(values, dtype=float)
        lead = values.shape[:-2]
        v3 = values.reshape((-1,) + values.shape[-2:])
        if self.rho == 0.0:
            out = self.rate.trans[k] @ v3 @ self.gop.trans[k].T
        else:
            (ur, lr, hr), (ux, lx, hx) = self._bounds(k)
            out = np.empty((v3.shape[0], self.rate.codewords[k].size, self.gop.codewords[k].size))
            _joint_backward(ur, lr, hr, ux, lx, hx, float(self.rho), np.ascontiguousarray(v3), out)
        return out.reshape(lead + out.shape[-2:])

    def transition(self, k: int) -> np.ndarray:
        """Dense joint transition tensor ``P[i, k, j, l]`` (small grids only)."""
        nr0, nx0 = self.rate.codewords[k].size, self.gop.codewords[k].size
        nr1, nx1 = self.rate.codewords[k + 1].size, self.gop.codewords[k + 1].size
        if nr0 * nx0 * nr1 * nx1 > 20_000_000:
            raise MemoryError("dense joint transition too large; use propagate/expect")
        eye = np.eye(nr0 * nx0).reshape(nr0 * nx0, nr0, nx0)
        return self.propagate(k, eye).reshape(nr0, nx0, nr1, nx1)

    def cross_covariance(self, k: int, i: int, l: int) -> float:
        """Covariance of the quantized pair at step ``k+1`` started from node ``(i, l)``."""
        start = np.zeros((self.rate.codewords[k].size, self.gop.codewords[k].size))
        start[i, l] = 1.0
        p = self.propagate(k, start)
        r = self.rate.codewords[k + 1]
        x = self.gop.codewords[k + 1]
        er = p.sum(axis=1) @ r
        ex = p.sum(axis=0) @ x
        return float(r @ p @ x - er * ex)


def accrual_factors(r_codewords_k, r_codewords_k1, dt: float, accrual: str):
    """Per-node discount factors ``(source, target)`` whose product is the
    one-step factor ``exp(-int r ds)``."""
    if accrual == "trapezoid":
        return np.exp(-0.5 * dt * r_codewords_k), np.exp(-0.5 * dt * r_codewords_k1)
    if accrual == "left":
        return np.exp(-dt * r_codewords_k), np.ones_like(r_codewords_k1)
    raise ValueError(f"unknown accrual rule {accrual!r}")


def joint_rmq_build(
    p_rate,
    p_tcev,
    surrogates,
    rho: float,
    x0s,
    T: float,
    steps: int,
    N_r: int,
    N_x: int,
    *,
    accrual: str | None = "left",
    tol: float = 1e-9,
) -> JointQuantGrid:
    """Joint RMQ of (short rate, discounted GOP).

    ``surrogates`` is ``(rate_surrogate, gop_surrogate)``; ``x0s`` is
    ``(r0, X0)``; ``steps`` is the number of steps per year.  Each marginal is
    quantized on its own; ``rho`` enters only through the joint transition
    weights.  With ``accrual`` set, discounted state prices are propagated
    alongside the joint probabilities.
    """
    if not -1.0 < rho < 1.0:
        raise ValueError("correlation must lie in (-1, 1)")
    sr, sx = surrogates
    r0, x0 = x0s
    rate = rmq_build(p_rate, sr, r0, T, steps, N_r, tol=tol)
    gop = rmq_build(p_tcev, sx, x0, T, steps, N_x, tol=tol)
    jg = JointQuantGrid(rate, gop, float(rho), [np.ones((1, 1))], [np.ones((1, 1))] if accrual else None, accrual)
    for k in range(rate.steps):
        if accrual:
            dt = rate.times[k + 1] - rate.times[k]
            src, dst = accrual_factors(rate.codewords[k], rate.codewords[k + 1], dt, accrual)
            stacked = np.stack([jg.joint_probs[k], jg.discounted_mass[k] * src[:, None]])
            nxt = jg.propagate(k, stacked)
            jg.joint_probs.append(nxt[0] / nxt[0].sum())
            jg.discounted_mass.append(nxt[1] * dst[:, None])
        else:
            nxt = jg.propagate(k, jg.joint_probs[k])
            jg.joint_probs.append(nxt / nxt.sum())
    return jg

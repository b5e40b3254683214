"""Experiment registry: configuration schema and one table builder per experiment.

A configuration is a JSON object::

    {
      "experiment": "fig1-eur-put-rn-vs-rw",
      "method": "all",                       # analytic | rmq | mc | all
      "tcev": {"alpha0": 51.34, ...},        # TcevParams overrides
      "rate": {"kappa": 3.5726, ...},        # Rate32Params overrides
      "short_rate": 0.05,                    # constant rate for GOP options
      "numerics": {...},                     # experiment-specific, see DEFAULTS
      "grid": {...},                         # experiment-specific, see DEFAULTS
      "out": "results"                       # output directory, --out wins
    }

Every field except ``experiment`` is optional; the defaults are the
parameter set of the reference study.  Maturities are given in whole months
as ``[first, last, step]`` so that they land exactly on time grids.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import analytic as an
from .models import Rate32Params, TcevParams
from .montecarlo import McConfig, mc_bermudan_lsmc, mc_european, mc_hybrid_zcb_curve, mc_zcb_option
from .pricers import (
    BermudanSpec,
    BondOptionSpec,
    bermudan_price_rmq,
    european_price_rmq,
    fair_forward_bond,
    hybrid_zcb_curve_rmq,
    rn_bond_option_comparators,
    zcb_option_price_rmq,
)
from .quantize import euler_surrogate, joint_rmq_build, rmq_build, second_order_surrogate

__all__ = ["ConfigError", "RunConfig", "Table", "EXPERIMENTS", "DEFAULTS", "load_config", "run_experiment"]

METHODS = ("analytic", "rmq", "mc")


class ConfigError(ValueError):
    """The configuration does not parse or validate."""


@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    experiment: str
    methods: tuple
    tcev: TcevParams
    rate: Rate32Params
    short_rate: float
    numerics: dict
    grid: dict

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "method": list(self.methods),
            "tcev": dataclasses.asdict(self.tcev),
            "rate": dataclasses.asdict(self.rate),
            "short_rate": self.short_rate,
            "numerics": self.numerics,
            "grid": self.grid,
        }


DEFAULTS = {
    "fig1-eur-put-rn-vs-rw": {
        "numerics": {"paths": 100_000, "seed": 0, "antithetic": False},
        "grid": {"maturity_months": [60, 180, 2], "moneyness": [1.0]},
    },
    "fig2-call-surface-rmq-error": {
        "numerics": {"N": 50, "steps_per_year": 24, "scheme": "euler"},
        "grid": {"maturity_months": [120, 180, 1], "moneyness": [0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2]},
    },
    "fig3-bermudan-lsmc-vs-rmq": {
        "numerics": {"N": 100, "steps_per_year": 12, "scheme": "euler", "paths": 500_000, "seed": 0, "basis_degree": 3},
        "grid": {"T_months": 60, "exercise_step_months": 1, "moneyness": [0.8, 0.9, 1.0, 1.1, 1.2]},
    },
    "fig4-zcb-rn-vs-rw": {
        "numerics": {},
        "grid": {"maturity_months": [1, 180, 1]},
    },
    "fig5-hybrid-zcb-mc-vs-rmq": {
        "numerics": {
            "N_r": 50, "N_x": 150, "steps_per_year": 12, "scheme": "euler", "accrual": "left",
            "paths": 100_000, "mc_steps_per_year": 12, "seed": 0,
        },
        "grid": {"maturity_months": [1, 180, 1]},
    },
    "fig6-correlation-sweep": {
        "numerics": {
            "rhos": [-0.9, -0.6, -0.3, 0.0, 0.3, 0.6, 0.9], "N_r": 30, "N_x": 60, "steps_per_year": 6,
            "scheme": "euler", "accrual": "left", "paths": 100_000, "mc_steps_per_year": 6, "seed": 0,
        },
        "grid": {"maturity_months": [2, 180, 2]},
    },
    "fig7-zcb-option-mc-vs-rmq": {
        "numerics": {
            "N_r": 50, "N_x": 300, "steps_per_year": 12, "scheme": "euler", "accrual": "left",
            "paths": 10_000_000, "mc_steps_per_year": 12, "seed": 0,
        },
        "grid": {"T": 10.0, "S": 15.0, "n_strikes": 20, "strike_range": [0.8, 1.2]},
    },
    "fig8-zco-rn-vs-rw": {
        "numerics": {"N_r": 50, "N_x": 150, "steps_per_year": 12, "scheme": "euler", "accrual": "left"},
        "grid": {"T": 5.0, "S": 10.0, "n_strikes": 20, "strike_range": [0.8, 1.2]},
    },
}

_TOP_KEYS = {"experiment", "method", "out", "tcev", "rate", "short_rate", "numerics", "grid"}


def _merge(section: str, defaults: dict, overrides) -> dict:
    if overrides is None:
        return copy.deepcopy(defaults)
    if not isinstance(overrides, dict):
        raise ConfigError(f"'{section}' must be an object")
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(overrides)
    return out


def _params(cls, overrides, section):
    if overrides is None:
        return cls()
    if not isinstance(overrides, dict):
        raise ConfigError(f"'{section}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
    try:
        return cls(**{k: float(v) for k, v in overrides.items()})
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid {section} parameters: {err}") from err


def load_config(raw: dict, seed: int | None = None, method: str | None = None) -> RunConfig:
    """Validate a parsed JSON object; command-line ``seed``/``method`` win."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    name = raw.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    sel = method or raw.get("method", "all")
    if sel == "all":
        methods = METHODS
    elif sel in METHODS:
        methods = (sel,)
    else:
        raise ConfigError(f"method must be one of {METHODS + ('all',)}")
    defaults = DEFAULTS[name]
    numerics = _merge("numerics", defaults["numerics"], raw.get("numerics"))
    grid = _merge("grid", defaults["grid"], raw.get("grid"))
    if seed is not None:
        if "seed" not in numerics:
            raise ConfigError(f"experiment {name} does not use a seed")
        numerics["seed"] = int(seed)
    try:
        r = float(raw.get("short_rate", 0.05))
    except (TypeError, ValueError) as err:
        raise ConfigError("short_rate must be a number") from err
    cfg = RunConfig(
        experiment=name,
        methods=methods,
        tcev=_params(TcevParams, raw.get("tcev"), "tcev"),
        rate=_params(Rate32Params, raw.get("rate"), "rate"),
        short_rate=r,
        numerics=numerics,
        grid=grid,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    g, n = cfg.grid, cfg.numerics
    if "maturity_months" in g:
        mm = g["maturity_months"]
        if not (isinstance(mm, list) and len(mm) == 3 and all(isinstance(v, int) for v in mm)):
            raise ConfigError("maturity_months must be [first, last, step] integers")
        if mm[0] < 1 or mm[1] < mm[0] or mm[2] < 1:
            raise ConfigError("maturity_months needs 1 <= first <= last and step >= 1")
    for key in ("N", "N_r", "N_x", "steps_per_year", "mc_steps_per_year", "paths", "basis_degree"):
        if key in n and (not isinstance(n[key], int) or n[key] < (0 if key == "basis_degree" else 1)):
            raise ConfigError(f"numerics.{key} must be a positive integer")
    if "paths" in n and n["paths"] < 2:
        raise ConfigError("numerics.paths must be at least 2")
    if n.get("scheme", "euler") not in ("euler", "higher_order"):
        raise ConfigError("numerics.scheme must be 'euler' or 'higher_order'")
    if n.get("accrual", "left") not in ("left", "trapezoid"):
        raise ConfigError("numerics.accrual must be 'left' or 'trapezoid'")
    for rho in n.get("rhos", []):
        if not -1.0 < float(rho) < 1.0:
            raise ConfigError("every correlation must lie in (-1, 1)")
    if "moneyness" in g and (not g["moneyness"] or min(g["moneyness"]) < 0):
        raise ConfigError("moneyness must be a nonempty list of nonnegative numbers")
    if "S" in g and not g["S"] > g["T"] > 0:
        raise ConfigError("need S > T > 0")
    if "strike_range" in g:
        lo, hi = g["strike_range"]
        if not 0 <= lo <= hi:
            raise ConfigError("strike_range must be [low, high] with 0 <= low <= high")
    if "n_strikes" in g and (not isinstance(g["n_strikes"], int) or g["n_strikes"] < 1):
        raise ConfigError("n_strikes must be a positive integer")


def _maturities(g) -> np.ndarray:
    first, last, step = g["maturity_months"]
    return np.arange(first, last + 1, step) / 12.0


def _surrogate(n, model):
    return second_order_surrogate(model) if n.get("scheme") == "higher_order" else euler_surrogate(model)


def _mc_cfg(n, spy_key="mc_steps_per_year") -> McConfig:
    return McConfig(
        paths=n["paths"], steps_per_year=n.get(spy_key, 1), seed=n["seed"], antithetic=n.get("antithetic", False)
    )


def _strikes(cfg: RunConfig):
    g = cfg.grid
    fwd = fair_forward_bond(cfg.rate, cfg.tcev, g["T"], g["S"])
    lo, hi = g["strike_range"]
    return fwd, fwd * np.linspace(lo, hi, g["n_strikes"])


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def fig1(cfg: RunConfig) -> Table:
    p, r = cfg.tcev, cfg.short_rate
    cols = ["T", "K"]
    if "analytic" in cfg.methods:
        cols += ["rw_put", "rn_put", "gap_pct"]
    if "mc" in cfg.methods:
        cols += ["mc_put", "mc_put_se"]
    rows = []
    gaps = []
    for T in _maturities(cfg.grid):
        for m in cfg.grid["moneyness"]:
            K = m * p.x0
            spec = an.EuropeanSpec(0.0, T, K, an.OptionKind.PUT)
            row = [T, K]
            if "analytic" in cfg.methods:
                rw = an.real_world_put(p, r, spec)
                rn = an.rn_put(p, r, spec)
                gap = 100.0 * (rn - rw) / rn
                gaps.append(gap)
                row += [rw, rn, gap]
            if "mc" in cfg.methods:
                est = mc_european(p, r, spec, _mc_cfg(cfg.numerics))
                row += [est.mean, est.std_error]
            rows.append(row)
    summary = {"gap_pct_at_last_maturity": gaps[-1]} if gaps else {}
    return Table(cols, rows, summary)


def fig2(cfg: RunConfig) -> Table:
    p, r, n = cfg.tcev, cfg.short_rate, cfg.numerics
    Ts = _maturities(cfg.grid)
    cols = ["T", "moneyness", "K"]
    do_a, do_q = "analytic" in cfg.methods, "rmq" in cfg.methods
    if do_a:
        cols.append("analytic_call")
    if do_q:
        cols.append("rmq_call")
        grid = rmq_build(p, _surrogate(n, p), p.x0, float(Ts[-1]), n["steps_per_year"], n["N"])
    if do_a and do_q:
        cols.append("rmq_rel_error")
    rows, errs = [], []
    for T in Ts:
        for m in cfg.grid["moneyness"]:
            spec = an.EuropeanSpec(0.0, T, m * p.x0, an.OptionKind.CALL)
            row = [T, m, spec.K]
            if do_a:
                a = an.real_world_call(p, r, spec)
                row.append(a)
            if do_q:
                q = european_price_rmq(grid, p, r, spec)
                row.append(q)
            if do_a and do_q:
                errs.append(q / a - 1.0)
                row.append(errs[-1])
            rows.append(row)
    summary = {"max_abs_rel_error": float(np.max(np.abs(errs)))} if errs else {}
    return Table(cols, rows, summary)


def fig3(cfg: RunConfig) -> Table:
    p, r, n, g = cfg.tcev, cfg.short_rate, cfg.numerics, cfg.grid
    T = g["T_months"] / 12.0
    ex = np.arange(g["exercise_step_months"], g["T_months"] + 1, g["exercise_step_months"]) / 12.0
    strikes = [m * p.x0 for m in g["moneyness"]]
    cols = ["K", "moneyness"]
    if "analytic" in cfg.methods:
        cols.append("european_put")
    if "rmq" in cfg.methods:
        cols.append("rmq_bermudan")
        grid = rmq_build(p, _surrogate(n, p), p.x0, T, n["steps_per_year"], n["N"])
    if "mc" in cfg.methods:
        cols += ["lsmc_bermudan", "lsmc_se"]
        lsmc = mc_bermudan_lsmc(
            p, r, BermudanSpec(tuple(ex), strikes[0]), _mc_cfg(n), n["basis_degree"], strikes=strikes
        )
    if "rmq" in cfg.methods and "mc" in cfg.methods:
        cols.append("rel_diff")
    rows, diffs = [], []
    for i, (K, m) in enumerate(zip(strikes, g["moneyness"])):
        row = [K, m]
        if "analytic" in cfg.methods:
            row.append(an.real_world_put(p, r, an.EuropeanSpec(0.0, T, K)))
        if "rmq" in cfg.methods:
            q = bermudan_price_rmq(grid, p, r, BermudanSpec(tuple(ex), K))
            row.append(q)
        if "mc" in cfg.methods:
            row += [lsmc[i].mean, lsmc[i].std_error]
        if "rmq" in cfg.methods and "mc" in cfg.methods:
            diffs.append((q - lsmc[i].mean) / lsmc[i].mean)
            row.append(diffs[-1])
        rows.append(row)
    summary = {"max_abs_rel_diff": float(np.max(np.abs(diffs)))} if diffs else {}
    return Table(cols, rows, summary)


def fig4(cfg: RunConfig) -> Table:
    if "analytic" not in cfg.methods:
        return Table(["T"], [], {})
    Ts = _maturities(cfg.grid)
    M = np.atleast_1d(an.mpor_component(cfg.tcev, 0.0, Ts))
    G = np.atleast_1d(an.ir_component_32(cfg.rate, 0.0, Ts))
    gap = 100.0 * (G - M * G) / G
    rows = [[T, m, gg, m * gg, gg, d] for T, m, gg, d in zip(Ts, M, G, gap)]
    return Table(["T", "mpor_M", "ir_G", "fair_zcb", "rn_zcb", "gap_pct"], rows, {"gap_pct_at_last_maturity": float(gap[-1])})


def _joint(cfg: RunConfig, rho: float, T: float):
    n = cfg.numerics
    sur = (_surrogate(n, cfg.rate), _surrogate(n, cfg.tcev))
    return joint_rmq_build(
        cfg.rate, cfg.tcev, sur, rho, (cfg.rate.r0, cfg.tcev.x0), T, n["steps_per_year"], n["N_r"], n["N_x"],
        accrual=n["accrual"],
    )


def _on_grid(times, Ts):
    idx = np.searchsorted(times, Ts - 1e-9)
    if np.any(idx >= times.size) or np.any(np.abs(times[np.minimum(idx, times.size - 1)] - Ts) > 1e-9):
        raise ConfigError("maturities must lie on the RMQ time grid")
    return idx


def fig5(cfg: RunConfig) -> Table:
    n = cfg.numerics
    Ts = _maturities(cfg.grid)
    cols, data = ["T"], [Ts]
    summary = {}
    exact = np.atleast_1d(an.hybrid_zcb(cfg.tcev, cfg.rate, 0.0, Ts))
    if "analytic" in cfg.methods:
        cols.append("analytic")
        data.append(exact)
    if "rmq" in cfg.methods:
        jg = _joint(cfg, 0.0, float(Ts[-1]))
        times, prices = hybrid_zcb_curve_rmq(jg)
        rmq = prices[_on_grid(times, Ts)]
        cols += ["rmq", "rmq_rel_error"]
        data += [rmq, rmq / exact - 1.0]
        summary["rmq_max_abs_rel_error"] = float(np.max(np.abs(rmq / exact - 1.0)))
    if "mc" in cfg.methods:
        est = mc_hybrid_zcb_curve(cfg.rate, cfg.tcev, 0.0, Ts, _mc_cfg(n))
        mean = np.array([e.mean for e in est])
        se = np.array([e.std_error for e in est])
        cols += ["mc", "mc_se"]
        data += [mean, se]
        if "rmq" in cfg.methods:
            z = np.abs(rmq - mean) / se
            summary["max_rmq_mc_gap_in_se"] = float(z.max())
    g15 = float(an.ir_component_32(cfg.rate, 0.0, Ts[-1]))
    summary["rn_gap_pct_at_last_maturity"] = 100.0 * (g15 - exact[-1]) / g15
    return Table(cols, [list(r) for r in zip(*data)], summary)


def fig6(cfg: RunConfig) -> Table:
    n = cfg.numerics
    Ts = _maturities(cfg.grid)
    rhos = [float(v) for v in n["rhos"]]
    if 0.0 not in rhos:
        rhos = [0.0] + rhos
    rmq, mc = {}, {}
    for rho in rhos:
        if "rmq" in cfg.methods:
            jg = _joint(cfg, rho, float(Ts[-1]))
            times, prices = hybrid_zcb_curve_rmq(jg)
            rmq[rho] = prices[_on_grid(times, Ts)]
        if "mc" in cfg.methods:
            # same seed for every correlation: common random numbers
            est = mc_hybrid_zcb_curve(cfg.rate, cfg.tcev, rho, Ts, _mc_cfg(n), exact_gop=False)
            mc[rho] = (np.array([e.mean for e in est]), np.array([e.std_error for e in est]))
    cols = ["rho", "T"]
    if rmq:
        cols += ["rmq", "rmq_rel_dev"]
    if mc:
        cols += ["mc", "mc_se", "mc_rel_dev"]
    rows = []
    summary = {}
    for rho in rhos:
        for i, T in enumerate(Ts):
            row = [rho, T]
            if rmq:
                row += [rmq[rho][i], rmq[rho][i] / rmq[0.0][i] - 1.0]
            if mc:
                m, s = mc[rho]
                row += [m[i], s[i], m[i] / mc[0.0][0][i] - 1.0]
            rows.append(row)
    if rmq:
        summary["rmq_max_abs_rel_dev"] = float(max(np.max(np.abs(rmq[r] / rmq[0.0] - 1.0)) for r in rhos))
    if mc:
        summary["mc_max_abs_rel_dev"] = float(max(np.max(np.abs(mc[r][0] / mc[0.0][0] - 1.0)) for r in rhos))
    return Table(cols, rows, summary)


def fig7(cfg: RunConfig) -> Table:
    n, g = cfg.numerics, cfg.grid
    fwd, ks = _strikes(cfg)
    spec = BondOptionSpec(g["T"], g["S"], fwd)
    cols, data = ["K", "K_over_forward"], [ks, ks / fwd]
    summary = {"fair_forward_bond": fwd}
    if "rmq" in cfg.methods:
        jg = _joint(cfg, 0.0, g["T"])
        rmq = zcb_option_price_rmq(jg, cfg.rate, cfg.tcev, spec, strikes=ks, accrual=n["accrual"])
        cols.append("rmq_put")
        data.append(rmq)
    if "mc" in cfg.methods:
        est = mc_zcb_option(cfg.rate, cfg.tcev, spec, _mc_cfg(n), strikes=ks)
        mean = np.array([e.mean for e in est])
        se = np.array([e.std_error for e in est])
        cols += ["mc_put", "mc_se"]
        data += [mean, se]
        if "rmq" in cfg.methods:
            gap = rmq / mean - 1.0
            cols += ["rel_gap", "gap_in_se"]
            data += [gap, (rmq - mean) / se]
            summary["mean_abs_rel_gap"] = float(np.mean(np.abs(gap)))
            summary["strikes_outside_3se"] = int(np.sum(np.abs(rmq - mean) > 3.0 * se))
    return Table(cols, [list(r) for r in zip(*data)], summary)


def fig8(cfg: RunConfig) -> Table:
    n, g = cfg.numerics, cfg.grid
    fwd, ks = _strikes(cfg)
    if "rmq" not in cfg.methods:
        return Table(["K"], [], {"fair_forward_bond": fwd})
    spec = BondOptionSpec(g["T"], g["S"], fwd)
    jg = _joint(cfg, 0.0, g["T"])
    rw_put, rn_put, rw_call, rn_call = rn_bond_option_comparators(jg, cfg.rate, cfg.tcev, spec, n["accrual"], strikes=ks)
    rows = [list(r) for r in zip(ks, ks / fwd, rw_put, rn_put, rw_call, rn_call)]
    summary = {
        "fair_forward_bond": fwd,
        "rw_put_ge_rn_put": bool(np.all(rw_put >= rn_put)),
        "rw_call_le_rn_call": bool(np.all(rw_call <= rn_call)),
    }
    return Table(["K", "K_over_forward", "rw_put", "rn_put", "rw_call", "rn_call"], rows, summary)


EXPERIMENTS: dict[str, Callable[[RunConfig], Table]] = {
    "fig1-eur-put-rn-vs-rw": fig1,
    "fig2-call-surface-rmq-error": fig2,
    "fig3-bermudan-lsmc-vs-rmq": fig3,
    "fig4-zcb-rn-vs-rw": fig4,
    "fig5-hybrid-zcb-mc-vs-rmq": fig5,
    "fig6-correlation-sweep": fig6,
    "fig7-zcb-option-mc-vs-rmq": fig7,
    "fig8-zco-rn-vs-rw": fig8,
}


def run_experiment(cfg: RunConfig) -> Table:
    return EXPERIMENTS[cfg.experiment](cfg)

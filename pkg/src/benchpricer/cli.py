"""Command-line entry point: ``benchpricer run <config.json>``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Outputs land in ``--out`` as ``<experiment>.csv`` (12 significant digits)
plus ``<experiment>.manifest.json``; both are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import EXPERIMENTS, ConfigError, load_config, run_experiment
from .specfun import ConvergenceError

log = logging.getLogger("benchpricer")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def version_string() -> str:
    """Package version, with ``git describe`` appended when run from a checkout."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+g{desc}" if desc else __version__


def table_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="benchpricer", description="Real-world pricing experiments under the benchmark approach.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a JSON configuration")
    run.add_argument("config", help="path to the JSON configuration")
    run.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
    run.add_argument("--seed", type=int, default=None, help="override the Monte Carlo seed")
    run.add_argument("--method", choices=("analytic", "rmq", "mc", "all"), default=None)
    sub.add_parser("list", help="list experiment names")
    return ap


def _run(args) -> int:
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        log.error("configuration file not found: %s", args.config)
        return EXIT_CONFIG
    except json.JSONDecodeError as err:
        log.error("configuration is not valid JSON: %s", err)
        return EXIT_CONFIG
    try:
        cfg = load_config(raw, seed=args.seed, method=args.method)
    except (ConfigError, ValueError) as err:
        log.error("invalid configuration: %s", err)
        return EXIT_CONFIG
    log.info("running %s (%s)", cfg.experiment, ",".join(cfg.methods))
    t0 = time.perf_counter()
    try:
        with np.errstate(over="ignore", under="ignore"):
            table = run_experiment(cfg)
    except ConfigError as err:
        log.error("invalid configuration: %s", err)
        return EXIT_CONFIG
    except (ConvergenceError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as err:
        log.error("numerical failure: %s", err)
        return EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    out = Path(args.out or raw.get("out") or "out")
    csv_path = out / f"{cfg.experiment}.csv"
    manifest = {
        "experiment": cfg.experiment,
        "version": version_string(),
        "config": cfg.to_dict(),
        "seed": cfg.numerics.get("seed"),
        "wall_time_s": wall,
        "csv": csv_path.name,
        "columns": table.columns,
        "summary": table.summary,
    }
    _atomic_write(csv_path, table_csv(table.columns, table.rows))
    _atomic_write(out / f"{cfg.experiment}.manifest.json", json.dumps(_jsonable(manifest), indent=2) + "\n")
    for k, v in table.summary.items():
        print(f"{k}: {_fmt(v)}")
    print(f"wrote {csv_path} in {wall:.2f} s")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "list":
        for name in EXPERIMENTS:
            print(name)
        return EXIT_OK
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())

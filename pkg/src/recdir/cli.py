"""Command-line entry point: ``recdir {compose,sweep,taskspace,ettm1}``.

Exit codes: 0 success, 2 configuration or input error, 3 data error,
4 numerical failure beyond the configured thresholds.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import __version__
from .config import ettm1_config, load_config, snapshot, sweep_config, taskspace_config
from .errors import ConfigError, DataError, NumericalFailure, ValidationError
from .mcharness import run_sweep, write_cells_csv
from .mlpx import load_series, run_study, write_curves, write_ratios_csv, write_runs_csv
from .polypred import BILINEAR_BASIS, LINEAR2_BASIS, PolyPredictor, compose
from .taskspace import run_study as run_task_study
from .taskspace import write_ecdf_csv, write_tasks_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("recdir")


@contextmanager
def _mapper(jobs: int):
    """Order-preserving map over a process pool, or the builtin ``map``."""
    if jobs <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        def pmap(fn, items):
            items = list(items)
            return pool.map(fn, items, chunksize=max(1, math.ceil(len(items) / (4 * jobs))))
        yield pmap


def _write_json_atomic(path, obj) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".manifest.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _write_manifest(out, command, cfg_snapshot, seed, outputs, started, failures) -> None:
    _write_json_atomic(os.path.join(out, "manifest.json"), {
        "command": command,
        "config": cfg_snapshot,
        "seed": seed,
        "version": __version__,
        "outputs": sorted(os.path.relpath(p, out) for p in outputs),
        "duration_s": round(time.monotonic() - started, 3),
        "failures": failures,
    })


def _load(path):
    return load_config(path) if path else {}


def cmd_compose(args) -> int:
    text = args.predictor
    if text.startswith("@"):
        try:
            with open(text[1:]) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read predictor file {text[1:]}: {exc.strerror}") from None
    pred = PolyPredictor.from_json(text)
    basis = {"terms": None, "linear": LINEAR2_BASIS, "bilinear": BILINEAR_BASIS}[args.basis]
    if basis is not None and pred.p != 2:
        raise ValidationError(f"basis {args.basis!r} needs a predictor with p=2")
    comp = compose(pred, args.h, basis=basis)
    np.set_printoptions(precision=12, suppress=True)
    print(f"one-step: {pred}")
    print(f"h={comp.h} composed: {comp.composed}")
    print("param map:")
    for mono, expr in comp.describe():
        print(f"  {mono}: {expr}")
    print(f"alpha = {comp.alpha().tolist()}")
    print(f"J = {comp.jacobian_at().tolist()}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = sweep_config(_load(args.config))
    if not cfg.cells():
        raise ConfigError("no stable cells in the (a, gamma) grid")
    os.makedirs(args.out, exist_ok=True)
    started = time.monotonic()
    with _mapper(args.jobs) as m:
        cells, summary = run_sweep(cfg, args.seed, map_fn=m)
    paths = [os.path.join(args.out, "cells.csv"), os.path.join(args.out, "summary.json")]
    write_cells_csv(paths[0], cells)
    with open(paths[1], "w") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    failures = {"failed_cells": summary["n_failed_cells"]}
    _write_manifest(args.out, "sweep", snapshot(cfg), args.seed, paths, started, failures)
    if summary["failed_fraction"] > cfg.max_fail_frac:
        raise NumericalFailure(f"{summary['n_failed_cells']} of {summary['n_cells']} cells failed")
    return EXIT_OK


def cmd_taskspace(args) -> int:
    cfg = taskspace_config(_load(args.config))
    os.makedirs(args.out, exist_ok=True)
    started = time.monotonic()
    with _mapper(args.jobs) as m:
        outcomes, n_skipped = run_task_study(cfg, args.seed, map_fn=m)
    if not outcomes:
        raise NumericalFailure("every task was skipped")
    paths = [os.path.join(args.out, n) for n in ("tasks.csv", "ecdf_alpha.csv", "ecdf_c.csv")]
    write_tasks_csv(paths[0], outcomes)
    write_ecdf_csv(paths[1], [o.d_alpha for o in outcomes])
    write_ecdf_csv(paths[2], [o.d_c for o in outcomes])
    failures = {"skipped_tasks": n_skipped,
                "unconverged_starts": int(sum(o.n_unconverged for o in outcomes))}
    _write_manifest(args.out, "taskspace", snapshot(cfg), args.seed, paths, started, failures)
    return EXIT_OK


def cmd_ettm1(args) -> int:
    cfg = ettm1_config(_load(args.config))
    if not args.data:
        raise ConfigError("--data is required for ettm1")
    series = load_series(args.data, cfg.column)
    os.makedirs(args.out, exist_ok=True)
    started = time.monotonic()
    with _mapper(args.jobs) as m:
        records, report = run_study(series, cfg, args.seed, map_fn=m)
    paths = [os.path.join(args.out, "runs.csv"), os.path.join(args.out, "ratios.csv")]
    write_runs_csv(paths[0], records)
    write_ratios_csv(paths[1], report)
    paths += write_curves(os.path.join(args.out, "curves"), records)
    snap = snapshot(cfg)
    snap["data"] = os.path.basename(args.data)
    _write_manifest(args.out, "ettm1", snap, args.seed, paths, started,
                    {"failed_runs": int(sum(r.failed for r in records))})
    return EXIT_OK


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _finite_or_none(obj)
    return obj


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="recdir", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compose", help="print the h-fold composition of a polynomial predictor")
    c.add_argument("predictor", help="predictor JSON, or @path to a JSON file")
    c.add_argument("--h", type=int, default=2)
    c.add_argument("--basis", choices=("terms", "linear", "bilinear"), default="terms",
                   help="one-step parameter structure (default: the predictor's own terms)")
    c.set_defaults(func=cmd_compose)

    for name, fn, helptext in (("sweep", cmd_sweep, "AR(2) Monte Carlo noise sweep"),
                               ("taskspace", cmd_taskspace, "bilinear task-space study"),
                               ("ettm1", cmd_ettm1, "recursive vs direct MLP study on a CSV series")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="INI or JSON config (defaults when omitted)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        if name == "ettm1":
            p.add_argument("--data", required=True, help="CSV file with the target column")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"recdir: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"recdir: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"recdir: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

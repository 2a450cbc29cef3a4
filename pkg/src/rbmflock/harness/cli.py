"""Command-line entry point: ``rbmflock <subcommand> --seed S [--config FILE] [--set key=value ...]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, DomainError, NumericalFailure, RbmError
from ..metrics import ASSIGNMENT_CAP, tv_error, wasserstein_1d, wasserstein_assignment
from ..gpc import Histogram, PhaseGrid
from . import experiments, io
from .config import SCENARIOS, load_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _add_common(sp, scenario_choices=None, default_scenario=None):
    sp.add_argument("--seed", type=int, required=True, help="RNG seed (required)")
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key; dotted keys reach into tables")
    sp.add_argument("--scenario", choices=scenario_choices or SCENARIOS, default=default_scenario)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out", default=None, help="output root (default: $%s or ./runs)" % io.OUTPUT_ROOT_ENV)
    sp.add_argument("--run-dir", default=None, help="write into this directory instead of a new timestamped one")


def build_parser():
    ap = argparse.ArgumentParser(prog="rbmflock", description="Random Batch Method experiments for Cucker-Smale flocking.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in [("simulate", "full N-particle Cucker-Smale run"), ("rbm", "Random Batch Method run")]:
        _add_common(sub.add_parser(name, help=help_), default_scenario="cs1d")
    _add_common(sub.add_parser("meanfield", help="iterate the mean-field RBM operator on a sample pool"), default_scenario="tau_scan")
    _add_common(sub.add_parser("epsilon", help="Monte Carlo estimate of eps_k over N"), default_scenario="epsilon_scan")
    _add_common(
        sub.add_parser("gpc", help="RBM-gPC experiment (homogeneous, cs1d or cs2d)"),
        scenario_choices=("homogeneous", "cs1d", "cs2d"),
        default_scenario="homogeneous",
    )
    _add_common(
        sub.add_parser("scan", help="n, p, dt, epsilon or tau scan"),
        scenario_choices=tuple(experiments.SCANS),
        default_scenario="n_scan",
    )
    m = sub.add_parser("metrics", help="distances between sample or histogram CSV files")
    m.add_argument("kind", choices=("w2", "w1d", "tv"))
    m.add_argument("a")
    m.add_argument("b")
    m.add_argument("--q", type=float, default=2.0)
    m.add_argument("--cap", type=int, default=ASSIGNMENT_CAP)
    m.add_argument("--subsample", action="store_true")
    m.add_argument("--seed", type=int, default=0)
    return ap


def _config(args):
    return load_config(args.config, overrides=args.set, scenario=args.scenario, seed=args.seed, workers=args.workers)


def _write(bundle, cfg, label, args):
    run_dir = Path(args.run_dir) if args.run_dir else io.make_run_dir(label, args.out or cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    conf = cfg.to_dict()
    for name, (header, rows) in bundle.tables.items():
        io.write_table(run_dir, name, header, rows, conf)
    (run_dir / "summary.json").write_text(json.dumps(bundle.summary, indent=2, sort_keys=True, default=io.format_value) + "\n")
    print(run_dir)
    return run_dir


def _histogram_from_csv(path):
    header, data = io.read_csv(path)
    coords, dens = data[:, :-1], data[:, -1]
    axes = [np.unique(coords[:, i]) for i in range(coords.shape[1])]
    h = [float(a[1] - a[0]) if a.size > 1 else 1.0 for a in axes]
    grid = PhaseGrid(
        tuple(float(a[0] - hh / 2) for a, hh in zip(axes, h)),
        tuple(float(a[-1] + hh / 2) for a, hh in zip(axes, h)),
        tuple(a.size for a in axes),
    )
    return Histogram(grid, dens.reshape(grid.cells))


def _metrics(args):
    if args.kind == "tv":
        val = tv_error(_histogram_from_csv(args.a), _histogram_from_csv(args.b))
    else:
        _, a = io.read_csv(args.a)
        _, b = io.read_csv(args.b)
        if args.kind == "w1d":
            val = wasserstein_1d(a, b, args.q)
        else:
            val = wasserstein_assignment(a, b, args.q, cap=args.cap, subsample=args.subsample, seed=args.seed)
    print(io.format_value(val))


def run(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "metrics":
        _metrics(args)
        return EXIT_OK
    cfg = _config(args)
    if args.command in ("simulate", "rbm"):
        bundle = experiments.run_particles(cfg, "full" if args.command == "simulate" else "rbm")
    elif args.command == "meanfield":
        bundle = experiments.run_meanfield(cfg)
    elif args.command == "epsilon":
        bundle = experiments.run_scans(cfg.replace(scenario="epsilon_scan"))
    elif args.command == "gpc":
        bundle = experiments.run_homogeneous(cfg) if cfg.scenario == "homogeneous" else experiments.run_cs(cfg)
    else:
        bundle = experiments.run_scans(cfg)
    _write(bundle, cfg, f"{args.command}-{cfg.scenario}", args)
    return EXIT_OK


def main(argv=None):
    try:
        return run(argv)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigurationError, DomainError, RbmError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

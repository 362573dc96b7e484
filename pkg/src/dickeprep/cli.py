"""Command line entry point: ``python -m dickeprep <experiment> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import EXPERIMENTS, ConfigError, build_config, read_config_file, run_experiment, worker_count, write_outputs

FLAG_HELP = {
    "n": "number of spins N (even)",
    "gamma": "coupling rate, e.g. 5e6 or 5MHz (rad/s)",
    "rounds": "phase-estimation rounds (default: ceil(log2 N) + 1)",
    "trials": "Monte Carlo trials per sweep point",
    "seed": "master seed",
    "t1": "ancilla T1, e.g. 50e-6, 50us or inf",
    "tphi": "ancilla T_phi, e.g. 2us or inf",
    "sigma": "timing-jitter std list, e.g. 0.5ns,1ns",
    "m": "repetitions per round, list or range, e.g. 1,3,5 or 1..15",
    "gammas": "list of coupling rates",
    "k": "rounds in the analytic bound / rate table",
    "target": "target m_z for post-selected preparation",
    "ties": "tie rule for even M: half or fail",
    "ns": "spin numbers for the oracle check, e.g. 2,4,6",
    "g": "single-spin coupling of the adiabatic scheme (rad/s)",
    "theta": "shaping angle of the 9-qubit code preparation",
    "find": "also run the angle search (true/false)",
}

EXPERIMENT_FLAGS = {
    "prepare": ("n", "gamma", "rounds", "trials", "seed", "t1", "tphi", "sigma", "m"),
    "targeted": ("n", "gamma", "rounds", "trials", "seed", "target"),
    "dephasing-rates": ("tphi", "t1", "gammas", "rounds"),
    "fidelity-bound": ("k", "t1", "tphi", "gamma", "m", "ties"),
    "jitter-sweep": ("n", "gamma", "rounds", "trials", "seed", "sigma", "m", "t1", "tphi"),
    "picode": ("theta", "m", "find", "seed"),
    "adiabatic": ("n", "g", "trials", "seed"),
    "oracle-check": ("ns", "gamma", "trials", "seed"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dickeprep", description="Dicke-state preparation experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--out-dir", default="results", help="directory for <experiment>.csv/.json")
        p.add_argument("--csv", help="explicit CSV path")
        p.add_argument("--json", help="explicit JSON path")
        p.add_argument("--workers", type=int, help="worker processes (default: $DICKEPREP_WORKERS or 1)")
        for flag in EXPERIMENT_FLAGS[name]:
            p.add_argument(f"--{flag}", dest=f"opt_{flag}", metavar="VALUE", help=FLAG_HELP[flag])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return 0 if exc.code == 0 else 2
    try:
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("opt_") and v is not None}
        # --rounds is the table depth for dephasing-rates
        if args.experiment == "dephasing-rates" and "rounds" in overrides:
            overrides["k"] = overrides.pop("rounds")
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(args.experiment, file_values, overrides)
        workers = worker_count(args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    csv_path = Path(args.csv) if args.csv else out_dir / f"{args.experiment}.csv"
    json_path = Path(args.json) if args.json else out_dir / f"{args.experiment}.json"
    try:
        result = run_experiment(cfg, workers)
        write_outputs(result, csv_path, json_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any runtime failure through the exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"{args.experiment}: {len(result.rows)} rows -> {csv_path}, {json_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Run every experiment with its default configuration and print a short summary.

    python3 scripts/run_all.py --out-dir results --workers 1

Outputs go to <out-dir>/<experiment>.csv and .json (see docs/formats.md).
"""

import argparse
import time
from pathlib import Path

from dickeprep.harness import EXPERIMENTS, build_config, run_experiment, worker_count, write_outputs


def headline(kind, result):
    agg = result.aggregates
    if kind == "prepare":
        return f"mean fidelity {agg['reps=1']['fidelity']['mean']:.5f}"
    if kind == "fidelity-bound":
        first = next((r["reps"] for r in result.rows if r["bound"] > 0.99), None)
        return f"bound first exceeds 0.99 at M = {first}"
    if kind == "picode":
        row = next(r for r in result.rows if r["reps"] == 5)
        return f"M=5 fidelity {row['fidelity']:.5f}, P_succ {row['p_succ']:.5f}"
    if kind == "adiabatic":
        return f"accepted {agg['all']['accepted_rate']:.3f}, mean accepted fidelity {agg['accepted']['mean']:.5f}"
    if kind == "targeted":
        return f"accept rate {agg['all']['accepted_rate']:.4f} (predicted {agg['all']['predicted_accept_rate']:.4f})"
    if kind == "jitter-sweep":
        cfg = result.config
        key = f"sigma={format(cfg.sigmas[-1], '.17g')},reps={cfg.repetitions[-1]}"
        return f"sigma={cfg.sigmas[-1] * 1e9:g} ns, M={cfg.repetitions[-1]}: mean fidelity {agg[key]['fidelity']['mean']:.4f}"
    if kind == "oracle-check":
        return f"records identical in all {len(result.rows)} comparisons: {all(r['bits_equal'] for r in result.rows)}"
    return f"{len(result.rows)} rows"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--only", nargs="*", choices=EXPERIMENTS, help="subset of experiments")
    args = parser.parse_args()
    out = Path(args.out_dir)
    workers = worker_count(args.workers)
    for kind in args.only or EXPERIMENTS:
        start = time.perf_counter()
        result = run_experiment(build_config(kind), workers)
        write_outputs(result, out / f"{kind}.csv", out / f"{kind}.json")
        print(f"{kind:16s} {time.perf_counter() - start:7.1f} s  {headline(kind, result)}")


if __name__ == "__main__":
    main()

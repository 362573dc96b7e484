"""Mean fidelity against timing-jitter width for several repetition counts.

Prints the trajectory mean and the lower-variance conditional mean for
every (sigma, M) point of a jitter-sweep run, and writes the usual outputs.

    python3 scripts/jitter_table.py --trials 200 --m 1,3,5
"""

import argparse
from pathlib import Path

from dickeprep.harness import build_config, run_experiment, write_outputs


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", default="200")
    parser.add_argument("--m", default="1,3,5")
    parser.add_argument("--sigma", default="0.5ns,1ns,3ns,6ns,10ns")
    parser.add_argument("--seed", default="0")
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()
    cfg = build_config("jitter-sweep", None, {"trials": args.trials, "m": args.m, "sigma": args.sigma, "seed": args.seed})
    result = run_experiment(cfg)
    out = Path(args.out_dir)
    write_outputs(result, out / "jitter-sweep.csv", out / "jitter-sweep.json")
    print(f"{'sigma (ns)':>10} {'M':>3} {'mean F':>9} {'ci95':>8} {'cond. F':>9} {'ci95':>8}")
    for sigma in cfg.sigmas:
        for reps in cfg.repetitions:
            entry = result.aggregates[f"sigma={format(sigma, '.17g')},reps={reps}"]
            f, c = entry["fidelity"], entry["conditional_fidelity"]
            print(f"{sigma * 1e9:10.2f} {reps:3d} {f['mean']:9.5f} {f['ci95']:8.5f} {c['mean']:9.5f} {c['ci95']:8.5f}")


if __name__ == "__main__":
    main()

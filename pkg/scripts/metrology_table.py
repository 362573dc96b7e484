"""Numerical optimum of the J_z^2 readout against the closed-form minimum.

Writes results/metrology.csv with columns
n, m_z, theta_opt, variance_opt, closed_form, zero_angle_limit, relative_gap.
"""

import argparse
import csv
from pathlib import Path

from dickeprep.harness import format_value
from dickeprep.metrology import optimize_jz2_readout


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", default="10,20,50,100")
    parser.add_argument("--m", default="0,1,2")
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()
    cols = ("n", "m_z", "theta_opt", "variance_opt", "closed_form", "zero_angle_limit", "relative_gap")
    rows = []
    for n in (int(x) for x in args.n.split(",")):
        for m in (int(x) for x in args.m.split(",")):
            rep = optimize_jz2_readout(n, m)
            rows.append((n, m, rep.theta_opt, rep.variance_at_opt, rep.closed_form_min, rep.small_angle_limit, rep.relative_gap))
            print(f"N={n:4d} m={m:2d}  var={rep.variance_at_opt:.6e}  closed form={rep.closed_form_min:.6e}  gap={rep.relative_gap:.3f}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "metrology.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerows([[format_value(v) for v in row] for row in rows])


if __name__ == "__main__":
    main()

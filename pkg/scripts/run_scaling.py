"""Network-size scaling study: MH and uniform CMPC/DMPC on 3, 9, 12 and 18 hubs.

Writes <out>/scale.csv and one ADMM iteration histogram per size
(admm_iterations_<n>.csv). The week-long default takes many hours.

    python scripts/run_scaling.py --out results/scale --t-sim 7d
    python scripts/run_scaling.py --counts 3,9 --t-sim 1d --relax
"""
import argparse
import csv
import sys
from pathlib import Path

from hubmpc.cli import main
from hubmpc.simloop import ITER_SOFT_LIMIT


def parse():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="results/scale")
    p.add_argument("--counts", default="3,9,12,18")
    p.add_argument("--t-sim", default="7d")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--relax", action="store_true")
    return p.parse_args()


def below_limit(out: Path):
    """Fraction of DMPC steps finishing under the soft iteration limit, per size."""
    for path in sorted(out.glob("admm_iterations_*.csv")):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        total = sum(int(r["count"]) for r in rows)
        low = sum(int(r["count"]) for r in rows if int(r["iterations"]) < ITER_SOFT_LIMIT)
        if total:
            print(f"{path.stem}: {low / total:.1%} of steps below {ITER_SOFT_LIMIT} iterations")


if __name__ == "__main__":
    a = parse()
    argv = ["scale", "--out", a.out, "--counts", a.counts, "--t-sim", a.t_sim, "--jobs", str(a.jobs)]
    if a.relax:
        argv.append("--relax")
    code = main(argv)
    if code == 0:
        below_limit(Path(a.out))
    sys.exit(code)

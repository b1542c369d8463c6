"""Cost/solve-time sweep over the resolution x horizon grid on the benchmark.

Writes <out>/sweep.csv (one row per controller and grid cell, plus the
multi-horizon CMPC/DMPC rows). Runtime is hours on one core; use --jobs.

    python scripts/run_sweep.py --out results/sweep --jobs 4
    python scripts/run_sweep.py --quick          # DecMPC/CMPC, 60 min x {12, 24} h, 1 day
"""
import argparse
import sys

from hubmpc.cli import main


def parse():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="results/sweep")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--t-sim", default="3d")
    p.add_argument("--quick", action="store_true", help="small smoke sweep")
    return p.parse_args()


if __name__ == "__main__":
    a = parse()
    argv = ["sweep", "--out", a.out, "--jobs", str(a.jobs), "--t-sim", a.t_sim]
    if a.quick:
        argv += ["--controllers", "dec,cmpc", "--t-res", "60", "--t-pred", "12h,24h", "--t-sim", "1d", "--relax"]
    else:
        argv += ["--mh"]
    sys.exit(main(argv))

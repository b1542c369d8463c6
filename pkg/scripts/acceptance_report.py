"""Run the acceptance suite and keep its per-criterion summary.

    python scripts/acceptance_report.py              # all criteria (about an hour)
    python scripts/acceptance_report.py --fast       # skip closed-loop criteria
"""
import argparse
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--fast", action="store_true")
    p.add_argument("--out", default=str(ROOT / "acceptance_report.txt"))
    a = p.parse_args()
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"]
    if a.fast:
        cmd += ["-m", "not slow"]
    res = subprocess.run(cmd, capture_output=True, text=True)
    lines = res.stdout.splitlines()
    start = next((i for i, l in enumerate(lines) if "acceptance criteria" in l), len(lines))
    report = "\n".join(l for l in lines[start + 1:] if l.startswith("criterion"))
    Path(a.out).write_text(report + "\n")
    print(report or res.stdout[-2000:])
    sys.exit(res.returncode)

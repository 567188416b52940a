"""Bulk pipeline at default settings: bands, Dirac point, coefficients, gap, no-fold and Berry curvature.

Each step goes through the command-line driver, so every output directory
under ``--out`` carries CSV files and a manifest.
"""
import argparse
import sys

from honeycomb_bie.cli import main


def run(out: str, extra: list[str]) -> int:
    steps = [
        ["band"],
        ["dirac"],
        ["coeffs"],
        ["gap"],
        ["nofold", "--set", "nofold.direction=beta1"],
        ["nofold", "--set", "nofold.direction=beta1a"],
        ["berry"],
    ]
    worst = 0
    for step in steps:
        tag = step[0] + ("_" + step[-1].split("=")[1] if step[0] == "nofold" else "")
        print(f"== {tag}", flush=True)
        code = main(step + ["--out", f"{out}/{tag}", "--check"] + extra)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/bulk")
    args, extra = ap.parse_known_args()
    sys.exit(run(args.out, extra))

#!/usr/bin/env python3
"""End-to-end synthetic experiment: generate data, train, evaluate, dump
features for external 2-D projection.

Usage: python3 scripts/run_synthetic_experiment.py [workdir]
"""

import sys
from pathlib import Path

from cmta.cli import main as cli


def run(*argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main():
    work = Path(sys.argv[1] if len(sys.argv) > 1 else "synthetic_experiment")
    train_dir, test_dir = work / "data_train", work / "data_test"
    run_dir = work / "run"

    run("gen-synthetic", "--out", train_dir, "--n-per-class", 2000, "--seed", 7)
    run("gen-synthetic", "--out", test_dir, "--n-per-class", 300, "--seed", 99)
    run("validate-data", "--manifest", train_dir / "manifest.csv")
    run("train",
        "--train-manifest", train_dir / "manifest.csv",
        "--val-split", "0.1",
        "--out", run_dir,
        "--epochs", 50, "--batch-size", 64,
        "--hidden", 64, "--model-dim", 64,
        "--lr", "2e-3", "--seed", 0)
    run("eval",
        "--checkpoint", run_dir / "checkpoint.cmtk",
        "--manifest", test_dir / "manifest.csv",
        "--out", work / "report.csv")
    run("dump-features",
        "--checkpoint", run_dir / "checkpoint.cmtk",
        "--manifest", test_dir / "manifest.csv",
        "--out", work / "features.csv")
    print(f"\nartifacts in {work}/: report.csv, features.csv, run/log.csv")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Drive the full pruning pipeline on the bundled toy CNN via the CLI.

Creates a synthetic 2-class 16x16 dataset, pretrains the 3-conv toy net,
caches activations, trains the per-layer spectral reconstructors, scores
and prunes at both default operating points, fine-tunes the tau=0.5 model,
and prints the reports plus the identity/bound verification sweeps.

Usage: python scripts/run_toy_pipeline.py [workdir]
"""

import os
import sys

from specprune.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))
TOY_SPEC = os.path.join(HERE, "..", "src", "specprune", "nets", "toycnn16.net")


def run(*args):
    print(f"\n$ specprune {' '.join(args)}")
    rc = main(list(args))
    if rc != 0:
        sys.exit(rc)


def pipeline(workdir: str):
    data = os.path.join(workdir, "data")
    out = os.path.join(workdir, "run")
    run("dataset", "--out", data, "--n", "256", "--size", "16", "--classes", "2", "--seed", "7")
    run("pretrain", "--out", out, "--spec", TOY_SPEC, "--dataset", data,
        "--epochs", "30", "--lr", "0.05", "--seed", "1")
    run("capture", "--out", out, "--dataset", data, "--pool-size", "128",
        "--capture-point", "post")
    run("train-ae", "--out", out, "--epochs", "12", "--batch-size", "32", "--seed", "1")
    run("score", "--out", out, "--fusion", "add", "--alpha", "0.5", "--batch-size", "32")
    run("prune", "--out", out, "--dataset", data, "--tau", "0.5", "0.6", "--seed", "1")
    run("finetune", "--out", out, "--dataset", data, "--tau", "0.5",
        "--epochs", "30", "--lr", "0.02", "--seed", "1")
    run("report", "--out", out, "--tau", "0.5", "0.6")
    run("verify", "--seed", "0")


if __name__ == "__main__":
    pipeline(sys.argv[1] if len(sys.argv) > 1 else "toy_run")

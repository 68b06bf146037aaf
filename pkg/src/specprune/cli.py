"""Command-line pipeline: dataset -> pretrain -> capture -> train-ae ->
score -> prune -> finetune, plus verify (identity/bound sweeps) and report.

Stage artifacts live on disk between subcommands so each stage is
independently runnable and testable.  Exit codes: 0 success, 2 bad or
missing inputs, 3 safeguard contract breach.
"""

from __future__ import annotations

import argparse
import os
import sys

from .autoencoder import TrainConfig
from .errors import FormatError, InvalidArgument, SafeguardViolation, SpecError, StageError
from .fileio import load_report, render_report
from .pipeline import (
    stage_capture,
    stage_dataset,
    stage_finetune,
    stage_pretrain,
    stage_prune,
    stage_score,
    stage_train_ae,
)
from .scoring import FusionRule
from .theory import run_all_checks

_CAPTURE = {"post": "post_activation", "pre": "pre_activation"}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specprune")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=False, spec=False):
        sp.add_argument("--out", default=".", help="artifact directory")
        sp.add_argument("--seed", type=int, default=0)
        if dataset:
            sp.add_argument("--dataset", required=True, help="dataset directory")
        if spec:
            sp.add_argument("--spec", required=True, help="network description file")

    sp = sub.add_parser("dataset", help="generate a synthetic dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=256)
    sp.add_argument("--size", type=int, default=16)
    sp.add_argument("--classes", type=int, default=2)

    sp = sub.add_parser("pretrain", help="train the baseline model")
    common(sp, dataset=True, spec=True)
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--weight-decay", type=float, default=5e-4)
    sp.add_argument("--decay-epochs", type=int, nargs="*", default=[])

    sp = sub.add_parser("capture", help="cache per-layer activations")
    common(sp, dataset=True)
    sp.add_argument("--pool-size", type=int, default=512)
    sp.add_argument("--capture-point", choices=["post", "pre"], default="post")

    sp = sub.add_parser("train-ae", help="train per-layer spectral reconstructors")
    common(sp)
    sp.add_argument("--epochs", type=int, default=100)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--weight-decay", type=float, default=1e-5)
    sp.add_argument("--batch-size", type=int, default=128)
    sp.add_argument("--accum-steps", type=int, default=4)
    sp.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    sp.add_argument("--share-branches", action="store_true")

    sp = sub.add_parser("score", help="compute per-channel importance")
    common(sp)
    sp.add_argument("--fusion", choices=["add", "mul", "powmul"], default="add")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--batch-size", type=int, default=128)

    sp = sub.add_parser("prune", help="threshold channels, rewire, report")
    common(sp, dataset=True)
    sp.add_argument("--tau", type=float, nargs="+", default=[0.5, 0.6])
    sp.add_argument("--kmin", type=int, default=None)

    sp = sub.add_parser("finetune", help="fine-tune a pruned checkpoint")
    common(sp, dataset=True)
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--weight-decay", type=float, default=5e-4)
    sp.add_argument("--decay-epochs", type=int, nargs="*", default=[])

    sp = sub.add_parser("verify", help="run the identity/bound sweeps")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--trials", type=int, default=1000)

    sp = sub.add_parser("report", help="print prune reports")
    sp.add_argument("--out", default=".")
    sp.add_argument("--tau", type=float, nargs="+", default=[0.5, 0.6])
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (SpecError, FormatError, InvalidArgument, StageError, FileNotFoundError) as exc:
        print(f"specprune: error: {exc}", file=sys.stderr)
        return 2
    except SafeguardViolation as exc:
        print(f"specprune: safeguard contract breach: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "dataset":
        stage_dataset(args.out, args.n, args.size, args.classes, args.seed)
        print(f"wrote dataset ({args.n} images) to {args.out}")
    elif cmd == "pretrain":
        metrics = stage_pretrain(
            args.out,
            args.spec,
            args.dataset,
            epochs=args.epochs,
            learning_rate=args.lr,
            batch_size=args.batch_size,
            momentum=args.momentum,
            weight_decay=args.weight_decay,
            decay_epochs=tuple(args.decay_epochs),
            seed=args.seed,
        )
        print(
            f"baseline: train_accuracy={metrics['train_accuracy']:.4f} "
            f"flops={metrics['flops']} params={metrics['params']}"
        )
    elif cmd == "capture":
        layers = stage_capture(
            args.out, args.dataset, args.pool_size, _CAPTURE[args.capture_point]
        )
        print(f"captured activations for conv layers {layers}")
    elif cmd == "train-ae":
        cfg = TrainConfig(
            epochs=args.epochs,
            learning_rate=args.lr,
            weight_decay=args.weight_decay,
            batch_size=args.batch_size,
            accum_steps=args.accum_steps,
            seed=args.seed,
            optimizer=args.optimizer,
            share_branches=args.share_branches,
        )
        histories = stage_train_ae(args.out, cfg)
        for idx in sorted(histories):
            hist = histories[idx]
            first = hist[0] if hist else float("nan")
            last = hist[-1] if hist else float("nan")
            print(f"layer {idx}: loss {first:.6f} -> {last:.6f} over {len(hist)} epochs")
    elif cmd == "score":
        rule = FusionRule(args.fusion, args.alpha)
        scored = stage_score(args.out, rule, batch_size=args.batch_size)
        for idx, iv in scored:
            fids = " ".join(f"{v:.4f}" for v in iv.fid)
            print(f"layer {idx} ({iv.layer_id}) fid: {fids}")
    elif cmd == "prune":
        reports = stage_prune(args.out, args.dataset, args.tau, args.kmin, args.seed)
        for rep in reports:
            print(
                f"tau={rep.tau:g}: FR={rep.fr:.2f}% PR={rep.pr:.2f}% "
                f"pruned_accuracy={rep.pruned_accuracy:.4f}"
            )
    elif cmd == "finetune":
        accuracy = stage_finetune(
            args.out,
            args.dataset,
            args.tau,
            epochs=args.epochs,
            learning_rate=args.lr,
            batch_size=args.batch_size,
            momentum=args.momentum,
            weight_decay=args.weight_decay,
            decay_epochs=tuple(args.decay_epochs),
            seed=args.seed,
        )
        print(f"finetuned tau={args.tau:g}: train_accuracy={accuracy:.4f}")
    elif cmd == "verify":
        outcomes = run_all_checks(seed=args.seed, trials=args.trials)
        failed = False
        for oc in outcomes:
            status = "PASSED" if oc.passed else "FAILED"
            print(
                f"{oc.name:24s} trials={oc.trials:5d} "
                f"max_violation={oc.max_violation:.3e} tol={oc.tolerance:.1e} {status}"
            )
            failed = failed or not oc.passed
        return 1 if failed else 0
    elif cmd == "report":
        for tau in args.tau:
            path = os.path.join(args.out, f"report_tau{tau:g}.txt")
            if not os.path.exists(path):
                raise StageError(f"missing {path}; run prune first")
            print(render_report(load_report(path)), end="")
    return 0


def entry() -> None:  # console-script hook
    raise SystemExit(main())

"""Stage functions behind the CLI: every stage reads and writes artifacts.

Keeping the stages as plain functions over an output directory makes each
one independently testable and keeps the CLI a thin argument-parsing shell.
All stages are deterministic given identical inputs and seeds: reruns
produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .autoencoder import TrainConfig, train_layer_autoencoder
from .data import make_blob_dataset
from .errors import InvalidArgument, StageError
from .fileio import (
    load_autoencoder,
    load_dataset,
    load_model,
    load_report,
    load_scores,
    read_tensor,
    save_autoencoder,
    save_dataset,
    save_mask,
    save_model,
    save_report,
    save_scores,
    write_tensor,
)
from .network import load_spec
from .nn import ModelState, TrainSchedule, capture_pool, evaluate, init_model, train
from .prune import (
    LayerPruneRow,
    PruneMask,
    PruneReport,
    compute_fr_pr,
    count_flops_params,
    default_k_min,
    propagate_and_apply,
    select_channels,
)
from .scoring import FusionRule, score_layer
from .tensor import Tensor4


def _path(out_dir, *parts) -> str:
    return os.path.join(out_dir, *parts)


def _require(path, hint: str) -> str:
    if not os.path.exists(path):
        raise StageError(f"missing {path}; {hint}")
    return path


def _write_text(path, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_kv(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and ": " in line:
                key, _, value = line.partition(": ")
                out[key] = value
    return out


def _tau_tag(tau: float) -> str:
    return f"{tau:g}"


def config_hash(fields: dict) -> str:
    text = "".join(f"{k}={fields[k]}\n" for k in sorted(fields))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def stage_dataset(dataset_dir, n: int, size: int, classes: int, seed: int) -> None:
    images, labels = make_blob_dataset(n, size=size, classes=classes, seed=seed)
    save_dataset(dataset_dir, images, labels)


def stage_pretrain(
    out_dir,
    spec_path,
    dataset_dir,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    momentum: float,
    weight_decay: float,
    decay_epochs: tuple[int, ...],
    seed: int,
) -> dict:
    spec = load_spec(_require(spec_path, "pass --spec with a network description"))
    images, labels = load_dataset(
        _require(dataset_dir, "generate one with the `dataset` subcommand")
    )
    model = init_model(spec, seed=seed)
    schedule = TrainSchedule(
        epochs=epochs,
        learning_rate=learning_rate,
        momentum=momentum,
        weight_decay=weight_decay,
        batch_size=batch_size,
        decay_epochs=decay_epochs,
        seed=seed,
    )
    train(model, images, labels, schedule)
    accuracy = evaluate(model, images, labels)
    flops, params = count_flops_params(model.spec)

    os.makedirs(out_dir, exist_ok=True)
    save_model(_path(out_dir, "model.ckpt"), model)
    metrics = {
        "train_accuracy": repr(accuracy),
        "flops": str(flops),
        "params": str(params),
        "epochs": str(epochs),
        "seed": str(seed),
    }
    _write_text(
        _path(out_dir, "pretrain_metrics.txt"),
        "specprune pretrain metrics v1\n"
        + "".join(f"{k}: {v}\n" for k, v in metrics.items()),
    )
    return {"train_accuracy": accuracy, "flops": flops, "params": params}


def stage_capture(out_dir, dataset_dir, pool_size: int, capture_point: str) -> list[int]:
    if pool_size < 1:
        raise InvalidArgument(f"pool size must be >= 1, got {pool_size}")
    model = load_model(_require(_path(out_dir, "model.ckpt"), "run pretrain first"))
    images, _ = load_dataset(_require(dataset_dir, "dataset directory not found"))
    pool_size = min(pool_size, images.shape[0])
    pool = capture_pool(model, images[:pool_size], capture_point)

    pool_dir = _path(out_dir, "pool")
    os.makedirs(pool_dir, exist_ok=True)
    names = model.spec.layer_names()
    lines = [
        "specprune pool v1",
        f"capture_point: {capture_point}",
        f"pool_size: {pool_size}",
    ]
    for idx, (x, y) in sorted(pool.entries.items()):
        write_tensor(_path(pool_dir, f"layer{idx}_x.tensor"), x)
        write_tensor(_path(pool_dir, f"layer{idx}_y.tensor"), y)
        lines.append(f"layer: {idx} {names[idx]}")
    _write_text(_path(pool_dir, "meta.txt"), "\n".join(lines) + "\n")
    return sorted(pool.entries)


@dataclass
class PoolOnDisk:
    capture_point: str
    pool_size: int
    layers: list[tuple[int, str]]  # (spec index, display name)


def _load_pool_meta(out_dir) -> PoolOnDisk:
    meta_path = _require(_path(out_dir, "pool", "meta.txt"), "run capture first")
    capture_point = "post_activation"
    pool_size = 0
    layers = []
    with open(meta_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("capture_point: "):
                capture_point = line.split(": ", 1)[1]
            elif line.startswith("pool_size: "):
                pool_size = int(line.split(": ", 1)[1])
            elif line.startswith("layer: "):
                idx, name = line.split(": ", 1)[1].split()
                layers.append((int(idx), name))
    return PoolOnDisk(capture_point, pool_size, layers)


def _load_pool_layer(out_dir, idx: int) -> tuple[Tensor4, Tensor4]:
    x = read_tensor(_path(out_dir, "pool", f"layer{idx}_x.tensor"))
    y = read_tensor(_path(out_dir, "pool", f"layer{idx}_y.tensor"))
    return x, y


def stage_train_ae(out_dir, cfg: TrainConfig) -> dict[int, list[float]]:
    pool = _load_pool_meta(out_dir)
    ae_dir = _path(out_dir, "ae")
    os.makedirs(ae_dir, exist_ok=True)
    histories = {}
    for idx, name in pool.layers:
        x, y = _load_pool_layer(out_dir, idx)
        layer_cfg = TrainConfig(
            epochs=cfg.epochs,
            learning_rate=cfg.learning_rate,
            weight_decay=cfg.weight_decay,
            batch_size=cfg.batch_size,
            accum_steps=cfg.accum_steps,
            seed=cfg.seed + idx,  # distinct stream per layer, still deterministic
            optimizer=cfg.optimizer,
            share_branches=cfg.share_branches,
            epsilon=cfg.epsilon,
        )
        ae_real, ae_imag, history = train_layer_autoencoder(x, y, layer_cfg, layer_id=name)
        save_autoencoder(_path(ae_dir, f"layer{idx}.ckpt"), name, ae_real, ae_imag)
        histories[idx] = history
    return histories


def stage_score(out_dir, rule: FusionRule, batch_size: int = 128, epsilon: float = 1e-8):
    pool = _load_pool_meta(out_dir)
    model = load_model(_require(_path(out_dir, "model.ckpt"), "run pretrain first"))
    scored = []
    for idx, name in pool.layers:
        x, y = _load_pool_layer(out_dir, idx)
        n = x.shape[2] * x.shape[3]
        ae_real, ae_imag, _ = load_autoencoder(
            _require(_path(out_dir, "ae", f"layer{idx}.ckpt"), "run train-ae first"),
            expected_n=n,
        )
        weights = model.weights[idx]["w"]
        filters = [weights[k].ravel() for k in range(weights.shape[0])]
        iv = score_layer(
            x, y, filters, ae_real, ae_imag, rule,
            layer_id=name, batch_size=batch_size, epsilon=epsilon,
        )
        scored.append((idx, iv))
    save_scores(_path(out_dir, "scores.txt"), scored, rule.kind, rule.alpha)
    return scored


def stage_prune(
    out_dir,
    dataset_dir,
    taus: list[float],
    k_min: int | None,
    seed: int,
) -> list[PruneReport]:
    model = load_model(_require(_path(out_dir, "model.ckpt"), "run pretrain first"))
    scores = load_scores(_require(_path(out_dir, "scores.txt"), "run score first"))
    pool = _load_pool_meta(out_dir)
    images, labels = load_dataset(dataset_dir)
    pre_metrics = {}
    metrics_path = _path(out_dir, "pretrain_metrics.txt")
    if os.path.exists(metrics_path):
        pre_metrics = _read_kv(metrics_path)

    scores_meta = _read_kv(_path(out_dir, "scores.txt"))
    fusion = scores_meta.get("fusion", "add")
    alpha = float(scores_meta.get("alpha", "0.5"))

    baseline = count_flops_params(model.spec)
    names = model.spec.layer_names()
    reports = []
    for tau in taus:
        keep: dict[int, tuple[int, ...]] = {}
        safeguards: dict[int, bool] = {}
        rows = []
        for idx, iv in scores:
            c_out = len(iv.normalized)
            floor = default_k_min(c_out) if k_min is None else min(k_min, c_out)
            kept, flagged = select_channels(iv.normalized, tau, floor)
            keep[idx] = tuple(kept)
            safeguards[idx] = flagged
            rows.append(LayerPruneRow(names[idx], len(kept), c_out, flagged))
        mask = PruneMask(keep)
        pruned_spec, pruned_weights = propagate_and_apply(model.spec, mask, model.weights)
        pruned_model = ModelState(pruned_spec, pruned_weights, momentum={}, seed=seed)
        pruned_counts = count_flops_params(pruned_spec)
        fr, pr = compute_fr_pr(baseline, pruned_counts)
        pruned_acc = evaluate(pruned_model, images, labels)

        tag = _tau_tag(tau)
        k_min_rule = "max(2,ceil(C/16))" if k_min is None else f"fixed:{k_min}"
        chash = config_hash(
            {
                "tau": tag,
                "fusion": fusion,
                "alpha": repr(alpha),
                "k_min": k_min_rule,
                "seed": seed,
                "capture_point": pool.capture_point,
                "pool_size": pool.pool_size,
            }
        )
        report = PruneReport(
            tau=tau,
            fusion=fusion,
            alpha=alpha,
            k_min_rule=k_min_rule,
            seed=seed,
            capture_point=pool.capture_point,
            pool_size=pool.pool_size,
            layers=rows,
            baseline_flops=baseline[0],
            baseline_params=baseline[1],
            pruned_flops=pruned_counts[0],
            pruned_params=pruned_counts[1],
            fr=fr,
            pr=pr,
            tool_version=__version__,
            config_hash=chash,
            baseline_accuracy=(
                float(pre_metrics["train_accuracy"])
                if "train_accuracy" in pre_metrics
                else None
            ),
            pruned_accuracy=pruned_acc,
        )
        save_mask(_path(out_dir, f"mask_tau{tag}.txt"), mask, safeguards)
        save_model(_path(out_dir, f"pruned_tau{tag}.ckpt"), pruned_model)
        save_report(_path(out_dir, f"report_tau{tag}.txt"), report)
        reports.append(report)
    return reports


def stage_finetune(
    out_dir,
    dataset_dir,
    tau: float,
    epochs: int,
    learning_rate: float,
    batch_size: int,
    momentum: float,
    weight_decay: float,
    decay_epochs: tuple[int, ...],
    seed: int,
) -> float:
    tag = _tau_tag(tau)
    model = load_model(
        _require(_path(out_dir, f"pruned_tau{tag}.ckpt"), "run prune first")
    )
    images, labels = load_dataset(dataset_dir)
    schedule = TrainSchedule(
        epochs=epochs,
        learning_rate=learning_rate,
        momentum=momentum,
        weight_decay=weight_decay,
        batch_size=batch_size,
        decay_epochs=decay_epochs,
        seed=seed,
    )
    train(model, images, labels, schedule)
    accuracy = evaluate(model, images, labels)
    save_model(_path(out_dir, f"finetuned_tau{tag}.ckpt"), model)

    report = load_report(_require(_path(out_dir, f"report_tau{tag}.txt"), "run prune first"))
    report.finetuned_accuracy = accuracy
    save_report(_path(out_dir, f"report_tau{tag}.txt"), report)
    return accuracy

"""Threshold selection, mask propagation, rewiring and FLOP/param accounting.

FLOPs are multiply-add operations of conv and linear layers only; bias adds,
batchnorm, pooling and activations cost zero by convention.  Parameter
counts include conv/linear weights and biases plus batchnorm affine pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgument, SafeguardViolation
from .network import (
    AvgPool,
    BatchNormEntry,
    Conv,
    Flatten,
    Linear,
    MaxPool,
    NetworkSpec,
    require_sequential,
    resolve_shapes,
)


def default_k_min(c_out: int) -> int:
    """Per-layer keep floor: max(2, ceil(C_out / 16)), capped at C_out."""
    return min(c_out, max(2, -(-c_out // 16)))


def select_channels(
    normalized: np.ndarray, tau: float, k_min: int
) -> tuple[list[int], bool]:
    """Keep {k : score_k >= tau}; fall back to the top-k_min scorers.

    Ties in the fallback break toward the lower index.  Returns the sorted
    keep list and whether the safeguard fired.
    """
    scores = np.asarray(normalized, dtype=np.float64)
    c_out = scores.size
    if not 0.0 <= tau <= 1.0:
        raise InvalidArgument(f"tau must be in [0, 1], got {tau}")
    if not 1 <= k_min <= c_out:
        raise InvalidArgument(f"k_min must be in [1, {c_out}], got {k_min}")
    keep = [k for k in range(c_out) if scores[k] >= tau]
    if len(keep) >= k_min:
        return keep, False
    order = sorted(range(c_out), key=lambda k: (-scores[k], k))
    return sorted(order[:k_min]), True


@dataclass(frozen=True)
class PruneMask:
    """Keep-set per conv layer, keyed by the layer's index in the spec."""

    keep: dict[int, tuple[int, ...]]

    def validate(self, spec: NetworkSpec) -> None:
        conv_idx = spec.conv_indices()
        if sorted(self.keep) != conv_idx:
            raise InvalidArgument(
                f"mask must cover exactly the conv layers {conv_idx}, got "
                f"{sorted(self.keep)}"
            )
        for idx in conv_idx:
            kept = self.keep[idx]
            layer = spec.layers[idx]
            if len(kept) == 0:
                raise SafeguardViolation(f"layer {idx} has an empty keep-set")
            if list(kept) != sorted(set(kept)):
                raise InvalidArgument(f"layer {idx} keep-set must strictly increase")
            if kept[0] < 0 or kept[-1] >= layer.out_channels:
                raise InvalidArgument(
                    f"layer {idx} keep index out of range 0..{layer.out_channels - 1}"
                )


def propagate_and_apply(
    spec: NetworkSpec, mask: PruneMask, weights: Sequence[Optional[dict]]
) -> tuple[NetworkSpec, list[Optional[dict]]]:
    """Remove pruned filters and the matching input slices downstream.

    Batchnorm parameters travel with their conv's keep-set.  At a
    conv->flatten->linear boundary the linear input features are grouped
    channel-major (each surviving channel contributes a contiguous H*W
    block), so feature blocks of removed channels are dropped.
    """
    require_sequential(spec, "propagate_and_apply")
    resolved, shapes = resolve_shapes(spec)
    mask.validate(resolved)
    if len(weights) != len(resolved.layers):
        raise InvalidArgument("one weight entry per layer required")

    new_layers: list = []
    new_weights: list = []
    prev_keep: Optional[list[int]] = None  # None = all upstream channels kept
    flat_geom: Optional[tuple[Optional[list[int]], int, int]] = None

    for idx, layer in enumerate(resolved.layers):
        wts = weights[idx]
        if isinstance(layer, Conv):
            keep_out = list(mask.keep[idx])
            w = wts["w"]
            if w.shape != (layer.out_channels, layer.in_channels, layer.k_h, layer.k_w):
                raise InvalidArgument(f"layer {idx}: weight shape {w.shape} mismatch")
            w = w[keep_out]
            if prev_keep is not None:
                w = w[:, prev_keep]
            entry = {"w": w.copy()}
            if layer.bias:
                entry["b"] = wts["b"][keep_out].copy()
            if layer.batchnorm:
                for key in ("bn_gamma", "bn_beta", "bn_mean", "bn_var"):
                    entry[key] = wts[key][keep_out].copy()
            new_weights.append(entry)
            new_layers.append(
                replace(
                    layer,
                    out_channels=len(keep_out),
                    in_channels=w.shape[1],
                )
            )
            prev_keep = keep_out
        elif isinstance(layer, (MaxPool, AvgPool)):
            new_layers.append(layer)
            new_weights.append(None)
        elif isinstance(layer, Flatten):
            c, h, w_sp = shapes[idx]
            flat_geom = (prev_keep, h, w_sp)
            prev_keep = None
            new_layers.append(layer)
            new_weights.append(None)
        elif isinstance(layer, Linear):
            w = wts["w"]
            if flat_geom is not None and flat_geom[0] is not None:
                kept_channels, h, w_sp = flat_geom
                block = h * w_sp
                feat = np.concatenate(
                    [np.arange(c * block, (c + 1) * block) for c in kept_channels]
                )
                w = w[:, feat]
            entry = {"w": w.copy()}
            if layer.bias:
                entry["b"] = wts["b"].copy()
            new_weights.append(entry)
            new_layers.append(replace(layer, in_features=w.shape[1]))
            flat_geom = None
        else:  # pragma: no cover - graph entries are rejected above
            raise InvalidArgument(f"layer {idx}: cannot prune {type(layer).__name__}")

    pruned = NetworkSpec(resolved.input_shape, tuple(new_layers), graph=False)
    pruned, _ = resolve_shapes(pruned)  # re-validate chain compatibility
    return pruned, new_weights


def _conv_out(h_in: int, w_in: int, layer: Conv) -> tuple[int, int]:
    h = (h_in + 2 * layer.padding - layer.k_h) // layer.stride + 1
    w = (w_in + 2 * layer.padding - layer.k_w) // layer.stride + 1
    if h < 1 or w < 1:
        raise InvalidArgument("conv output collapses to zero spatial size")
    return h, w


def count_flops_params(spec: NetworkSpec) -> tuple[int, int]:
    """Multiply-adds and parameter count of a network description."""
    flops = 0
    params = 0
    if spec.graph:
        entries = spec.layers
        geoms = [(l.h_in, l.w_in) if isinstance(l, Conv) else None for l in entries]
    else:
        resolved, shapes = resolve_shapes(spec)
        entries = resolved.layers
        geoms = [s[1:] if len(s) == 3 else None for s in shapes]
    for layer, geom in zip(entries, geoms):
        if isinstance(layer, Conv):
            h_out, w_out = _conv_out(geom[0], geom[1], layer)
            kernel = layer.in_channels * layer.k_h * layer.k_w
            flops += layer.out_channels * kernel * h_out * w_out
            params += layer.out_channels * kernel
            if layer.bias:
                params += layer.out_channels
            if layer.batchnorm:
                params += 2 * layer.out_channels
        elif isinstance(layer, Linear):
            flops += layer.in_features * layer.out_features
            params += layer.in_features * layer.out_features
            if layer.bias:
                params += layer.out_features
        elif isinstance(layer, BatchNormEntry):
            params += 2 * layer.channels
    return flops, params


def compute_fr_pr(
    baseline: tuple[int, int], pruned: tuple[int, int]
) -> tuple[float, float]:
    """FLOP and parameter reduction percentages relative to the baseline."""
    base_flops, base_params = baseline
    new_flops, new_params = pruned
    if base_flops <= 0 or base_params <= 0:
        raise InvalidArgument("baseline counts must be positive")
    fr = 100.0 * (1.0 - new_flops / base_flops)
    pr = 100.0 * (1.0 - new_params / base_params)
    return fr, pr


@dataclass
class LayerPruneRow:
    name: str
    kept: int
    total: int
    safeguard: bool


@dataclass
class PruneReport:
    """Everything a pruning run decided and measured, ready to serialize."""

    tau: float
    fusion: str
    alpha: float
    k_min_rule: str
    seed: int
    capture_point: str
    pool_size: int
    layers: list[LayerPruneRow]
    baseline_flops: int
    baseline_params: int
    pruned_flops: int
    pruned_params: int
    fr: float
    pr: float
    tool_version: str
    config_hash: str
    baseline_accuracy: Optional[float] = None
    pruned_accuracy: Optional[float] = None
    finetuned_accuracy: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.fr < 100.0 and 0.0 <= self.pr < 100.0):
            raise InvalidArgument(f"FR/PR must lie in [0, 100), got {self.fr}/{self.pr}")
        if min(
            self.baseline_flops,
            self.baseline_params,
            self.pruned_flops,
            self.pruned_params,
        ) <= 0:
            raise InvalidArgument("FLOP/param counts must be positive")

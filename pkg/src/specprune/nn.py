"""Minimal trainable CNN engine: direct convolution, manual backprop.

Supports exactly what the pruning pipeline needs at desk scale: conv (+bias,
+inference-mode batchnorm, +ReLU), max pooling, flatten, linear, softmax
cross-entropy and momentum SGD with step decay.  Batchnorm runs as a frozen
per-channel affine transform (statistics are never updated); training
adjusts conv/linear weights and biases only.

Convolution is computed directly as a sum over kernel offsets rather than
via im2col; at the sizes this package targets, clarity wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgument
from .network import (
    AvgPool,
    Conv,
    Flatten,
    Linear,
    MaxPool,
    NetworkSpec,
    require_sequential,
    resolve_shapes,
)
from .tensor import Tensor4

BN_EPS = 1e-5


@dataclass
class ActivationPool:
    """Cached per-conv-layer (X, Y) pairs for a fixed set of inputs."""

    capture_point: str  # "post_activation" or "pre_activation"
    entries: dict[int, tuple[Tensor4, Tensor4]]


@dataclass
class ModelState:
    spec: NetworkSpec
    weights: list[Optional[dict]]
    momentum: dict = field(default_factory=dict)
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)


@dataclass
class TrainSchedule:
    epochs: int
    learning_rate: float
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 32
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgument("epochs must be >= 0 and batch_size >= 1")


def init_model(spec: NetworkSpec, seed: int = 0) -> ModelState:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    require_sequential(spec, "init_model")
    resolved, _ = resolve_shapes(spec)
    rng = np.random.default_rng(seed)
    weights: list[Optional[dict]] = []
    for layer in resolved.layers:
        if isinstance(layer, Conv):
            fan_in = layer.in_channels * layer.k_h * layer.k_w
            lim = 1.0 / np.sqrt(fan_in)
            entry = {
                "w": rng.uniform(
                    -lim, lim, size=(layer.out_channels, layer.in_channels, layer.k_h, layer.k_w)
                )
            }
            if layer.bias:
                entry["b"] = np.zeros(layer.out_channels)
            if layer.batchnorm:
                entry["bn_gamma"] = np.ones(layer.out_channels)
                entry["bn_beta"] = np.zeros(layer.out_channels)
                entry["bn_mean"] = np.zeros(layer.out_channels)
                entry["bn_var"] = np.ones(layer.out_channels)
            weights.append(entry)
        elif isinstance(layer, Linear):
            lim = 1.0 / np.sqrt(layer.in_features)
            entry = {"w": rng.uniform(-lim, lim, size=(layer.out_features, layer.in_features))}
            if layer.bias:
                entry["b"] = np.zeros(layer.out_features)
            weights.append(entry)
        else:
            weights.append(None)
    return ModelState(resolved, weights, momentum={}, seed=seed)


def _conv_forward(x, w, bias, stride, padding):
    b, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride]
            out += np.einsum("oc,bchw->bohw", w[:, :, u, v], xs, optimize=True)
    if bias is not None:
        out += bias[None, :, None, None]
    return out, xp


def _conv_backward(dout, xp, w, stride, padding, x_shape):
    _, _, kh, kw = w.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride]
            dw[:, :, u, v] = np.einsum("bohw,bchw->oc", dout, xs, optimize=True)
            dxp[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += (
                np.einsum("bohw,oc->bchw", dout, w[:, :, u, v], optimize=True)
            )
    db = dout.sum(axis=(0, 2, 3))
    if padding:
        dx = dxp[:, :, padding : padding + x_shape[2], padding : padding + x_shape[3]]
    else:
        dx = dxp
    return dw, db, dx


def _pool_forward(x, k, stride):
    b, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    slices = np.stack(
        [
            x[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride]
            for u in range(k)
            for v in range(k)
        ]
    )
    arg = np.argmax(slices, axis=0)  # first maximum wins: deterministic ties
    out = np.take_along_axis(slices, arg[None], axis=0)[0]
    return out, arg


def _pool_backward(dout, arg, x_shape, k, stride):
    dx = np.zeros(x_shape)
    ho, wo = dout.shape[2], dout.shape[3]
    i = 0
    for u in range(k):
        for v in range(k):
            mask = arg == i
            dx[:, :, u : u + stride * ho : stride, v : v + stride * wo : stride] += (
                dout * mask
            )
            i += 1
    return dx


def _bn_affine(entry):
    scale = entry["bn_gamma"] / np.sqrt(entry["bn_var"] + BN_EPS)
    shift = entry["bn_beta"] - entry["bn_mean"] * scale
    return scale, shift


def _run(model: ModelState, x: np.ndarray, capture: Optional[str], keep_caches: bool):
    spec = model.spec
    c_in, h_in, w_in = spec.input_shape
    if x.ndim != 4 or x.shape[1:] != (c_in, h_in, w_in):
        raise InvalidArgument(
            f"batch shape {x.shape[1:]} does not match spec input {spec.input_shape}"
        )
    if capture not in (None, "post_activation", "pre_activation"):
        raise InvalidArgument(f"unknown capture point {capture!r}")

    act = np.asarray(x, dtype=np.float64)
    caches: list = []
    captured: dict[int, tuple[Tensor4, Tensor4]] = {}
    for idx, layer in enumerate(spec.layers):
        entry = model.weights[idx]
        if isinstance(layer, Conv):
            x_in = act
            pre, xp = _conv_forward(
                x_in, entry["w"], entry.get("b"), layer.stride, layer.padding
            )
            if layer.batchnorm:
                scale, shift = _bn_affine(entry)
                pre = pre * scale[None, :, None, None] + shift[None, :, None, None]
            out = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
            if keep_caches:
                caches.append(("conv", xp, x_in.shape, pre))
            if capture is not None:
                y_cap = pre if capture == "pre_activation" else out
                captured[idx] = (Tensor4(x_in.copy()), Tensor4(y_cap.copy()))
            act = out
        elif isinstance(layer, MaxPool):
            out, arg = _pool_forward(act, layer.k, layer.stride)
            if keep_caches:
                caches.append(("maxpool", arg, act.shape))
            act = out
        elif isinstance(layer, AvgPool):
            raise InvalidArgument("avgpool layers are count-only; forward unsupported")
        elif isinstance(layer, Flatten):
            if keep_caches:
                caches.append(("flatten", act.shape))
            act = act.reshape(act.shape[0], -1)
        elif isinstance(layer, Linear):
            x_in = act
            pre = x_in @ entry["w"].T
            if layer.bias:
                pre = pre + entry["b"]
            out = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
            if keep_caches:
                caches.append(("linear", x_in, pre))
            act = out
        else:
            raise InvalidArgument(f"layer {idx}: cannot run {type(layer).__name__}")
    return act, caches, captured


def forward(
    model: ModelState, x: np.ndarray, capture: Optional[str] = None
) -> tuple[np.ndarray, Optional[ActivationPool]]:
    """Evaluate the network; optionally cache (X, Y) for every conv layer."""
    logits, _, captured = _run(model, x, capture, keep_caches=False)
    pool = ActivationPool(capture, captured) if capture is not None else None
    return logits, pool


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient with respect to the logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= k:
        raise InvalidArgument("labels must be valid class indices")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def backward_and_step(
    model: ModelState,
    x: np.ndarray,
    labels: np.ndarray,
    learning_rate: float,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
) -> float:
    """One softmax-CE training step with momentum SGD; returns the loss.

    Batchnorm parameters are frozen; gradients still flow through the affine.
    """
    logits, caches, _ = _run(model, x, None, keep_caches=True)
    loss, grad = softmax_cross_entropy(logits, labels)

    grads: dict[tuple[int, str], np.ndarray] = {}
    cache_iter = list(caches)
    for idx in range(len(model.spec.layers) - 1, -1, -1):
        layer = model.spec.layers[idx]
        entry = model.weights[idx]
        cache = cache_iter.pop()
        if isinstance(layer, Linear):
            _, x_in, pre = cache
            if layer.activation == "relu":
                grad = grad * (pre > 0.0)
            grads[(idx, "w")] = grad.T @ x_in
            if layer.bias:
                grads[(idx, "b")] = grad.sum(axis=0)
            grad = grad @ entry["w"]
        elif isinstance(layer, Flatten):
            _, shape = cache
            grad = grad.reshape(shape)
        elif isinstance(layer, MaxPool):
            _, arg, shape = cache
            grad = _pool_backward(grad, arg, shape, layer.k, layer.stride)
        elif isinstance(layer, Conv):
            _, xp, x_shape, pre = cache
            if layer.activation == "relu":
                grad = grad * (pre > 0.0)
            if layer.batchnorm:
                scale, _ = _bn_affine(entry)
                grad = grad * scale[None, :, None, None]
            dw, db, grad = _conv_backward(
                grad, xp, entry["w"], layer.stride, layer.padding, x_shape
            )
            grads[(idx, "w")] = dw
            if layer.bias:
                grads[(idx, "b")] = db

    for key, g in grads.items():
        idx, name = key
        p = model.weights[idx][name]
        v = model.momentum.get(key)
        if v is None:
            v = np.zeros_like(p)
            model.momentum[key] = v
        v *= momentum
        v += g + weight_decay * p
        p -= learning_rate * v
    return loss


def train(
    model: ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    schedule: TrainSchedule,
) -> ModelState:
    """Epoch loop with seeded shuffling and step learning-rate decay.

    Mutates and returns the model; per-epoch mean losses land in
    `model.loss_history` for inspection.
    """
    n = images.shape[0]
    if n == 0:
        raise InvalidArgument("cannot train on an empty dataset")
    rng = np.random.default_rng(schedule.seed)
    history = []
    lr = schedule.learning_rate
    for epoch in range(schedule.epochs):
        if epoch in schedule.decay_epochs:
            lr /= schedule.decay_factor
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, schedule.batch_size):
            sel = order[lo : lo + schedule.batch_size]
            losses.append(
                backward_and_step(
                    model,
                    images[sel],
                    labels[sel],
                    lr,
                    schedule.momentum,
                    schedule.weight_decay,
                )
            )
        history.append(float(np.mean(losses)))
    model.loss_history = history
    return model


def evaluate(model: ModelState, images: np.ndarray, labels: np.ndarray) -> float:
    """Top-1 accuracy; argmax ties resolve to the lowest class index."""
    if images.shape[0] == 0:
        raise InvalidArgument("cannot evaluate on an empty dataset")
    logits, _ = forward(model, images)
    pred = np.argmax(logits, axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def capture_pool(model: ModelState, images: np.ndarray, capture_point: str) -> ActivationPool:
    """Run the pool images once and cache (X, Y) for every conv layer."""
    if images.shape[0] == 0:
        raise InvalidArgument("capture requires a non-empty pool")
    _, pool = forward(model, images, capture=capture_point)
    return pool

"""Capacity-limited row-wise MLP reconstructor with manual gradients.

One reconstructor maps rows of length N = H*W through
Tanh(W2 @ ReLU(W1 @ u)) with a bottleneck of floor(N/4) (clamped to 1) and
no bias terms.  Two independent instances are trained per layer, one for
the real and one for the imaginary spectral rows; a config switch collapses
them to a single shared instance.

Training walks output channels one at a time and micro-batches within each
channel, accumulating gradients for `accum_steps` micro-batches before each
optimizer update so a small memory footprint still sees a large effective
batch.  Intermediate spectra live only for the duration of one micro-batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .field import build_interaction_field
from .spectral import fft2, standardize_spectrum
from .tensor import Tensor4


@dataclass
class AutoencoderParams:
    """Weights of one reconstructor branch."""

    n: int
    bottleneck: int
    w1: np.ndarray  # (bottleneck, n)
    w2: np.ndarray  # (n, bottleneck)
    branch: str  # "real" or "imaginary"

    def __post_init__(self):
        if self.branch not in ("real", "imaginary"):
            raise InvalidArgument(f"unknown branch {self.branch!r}")
        if self.bottleneck != max(1, self.n // 4):
            raise InvalidArgument("bottleneck must be floor(n/4) clamped to >= 1")
        if self.w1.shape != (self.bottleneck, self.n) or self.w2.shape != (
            self.n,
            self.bottleneck,
        ):
            raise InvalidArgument("weight shapes inconsistent with n/bottleneck")
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2))):
            raise InvalidArgument("weights must be finite")

    def param_count(self) -> int:
        return self.w1.size + self.w2.size


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 128
    accum_steps: int = 4
    seed: int = 0
    optimizer: str = "adam"  # "adam" or "sgd"
    share_branches: bool = False
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgument("epochs must be >= 0")
        if self.batch_size < 1 or self.accum_steps < 1:
            raise InvalidArgument("batch_size and accum_steps must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidArgument("learning_rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidArgument(f"unknown optimizer {self.optimizer!r}")


def init_autoencoder(n: int, branch: str, rng: np.random.Generator) -> AutoencoderParams:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization."""
    if n < 1:
        raise InvalidArgument("row width must be >= 1")
    bottleneck = max(1, n // 4)
    lim1 = 1.0 / np.sqrt(n)
    lim2 = 1.0 / np.sqrt(bottleneck)
    w1 = rng.uniform(-lim1, lim1, size=(bottleneck, n))
    w2 = rng.uniform(-lim2, lim2, size=(n, bottleneck))
    return AutoencoderParams(n, bottleneck, w1, w2, branch)


def ae_forward(params: AutoencoderParams, rows: np.ndarray) -> np.ndarray:
    """Map each row u to Tanh(W2 @ ReLU(W1 @ u)); output entries in (-1, 1)."""
    if rows.ndim != 2 or rows.shape[1] != params.n:
        raise InvalidArgument(
            f"rows must be (R, {params.n}), got {getattr(rows, 'shape', None)}"
        )
    hidden = np.maximum(rows @ params.w1.T, 0.0)
    return np.tanh(hidden @ params.w2.T)


def ae_loss(
    pred_r: np.ndarray,
    target_r: np.ndarray,
    pred_i: np.ndarray,
    target_i: np.ndarray,
) -> float:
    """Average of the two branch MSEs, each a mean over all entries."""
    if pred_r.shape != target_r.shape or pred_i.shape != target_i.shape:
        raise InvalidArgument("prediction/target shape mismatch")
    mse_r = float(np.mean((pred_r - target_r) ** 2))
    mse_i = float(np.mean((pred_i - target_i) ** 2))
    return 0.5 * (mse_r + mse_i)


def ae_backward(
    params: AutoencoderParams, rows: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exact reverse-mode gradients (dW1, dW2) for an upstream grad_out.

    The ReLU subgradient at exactly 0 is taken as 0.
    """
    if rows.ndim != 2 or rows.shape[1] != params.n:
        raise InvalidArgument("rows shape inconsistent with params")
    if grad_out.shape != rows.shape:
        raise InvalidArgument("grad_out must match the forward output shape")
    pre1 = rows @ params.w1.T
    hidden = np.maximum(pre1, 0.0)
    out = np.tanh(hidden @ params.w2.T)
    dpre2 = grad_out * (1.0 - out**2)
    dw2 = dpre2.T @ hidden
    dhidden = dpre2 @ params.w2
    dpre1 = dhidden * (pre1 > 0.0)
    dw1 = dpre1.T @ rows
    return dw1, dw2


class BranchOptimizer:
    """Gradient accumulation plus Adam (decoupled weight decay) or plain SGD.

    `accumulate` is called once per micro-batch; `step_if_due` applies the
    mean of the pending gradients after `accum_steps` accumulations, which
    reproduces a single large-batch update exactly when micro-batches are
    equally sized.  `flush` applies any partial remainder (used at epoch
    boundaries).
    """

    def __init__(self, params: AutoencoderParams, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self._acc1 = np.zeros_like(params.w1)
        self._acc2 = np.zeros_like(params.w2)
        self._count = 0
        self._t = 0
        if cfg.optimizer == "adam":
            self._m1 = np.zeros_like(params.w1)
            self._v1 = np.zeros_like(params.w1)
            self._m2 = np.zeros_like(params.w2)
            self._v2 = np.zeros_like(params.w2)

    def accumulate(self, dw1: np.ndarray, dw2: np.ndarray) -> None:
        self._acc1 += dw1
        self._acc2 += dw2
        self._count += 1

    def step_if_due(self) -> None:
        if self._count >= self.cfg.accum_steps:
            self._apply()

    def flush(self) -> None:
        if self._count > 0:
            self._apply()

    def _apply(self) -> None:
        g1 = self._acc1 / self._count
        g2 = self._acc2 / self._count
        lr = self.cfg.learning_rate
        wd = self.cfg.weight_decay
        p = self.params
        if self.cfg.optimizer == "sgd":
            p.w1 -= lr * (g1 + wd * p.w1)
            p.w2 -= lr * (g2 + wd * p.w2)
        else:
            b1, b2, eps = 0.9, 0.999, 1e-8
            self._t += 1
            t = self._t
            for g, m, v, w in (
                (g1, self._m1, self._v1, p.w1),
                (g2, self._m2, self._v2, p.w2),
            ):
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                m_hat = m / (1 - b1**t)
                v_hat = v / (1 - b2**t)
                w -= lr * m_hat / (np.sqrt(v_hat) + eps)
                w -= lr * wd * w
        self._acc1[:] = 0.0
        self._acc2[:] = 0.0
        self._count = 0


def spectral_rows(
    x: Tensor4, y_channel: Tensor4, epsilon: float, layer_id: str, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Field -> FFT -> standardize -> (real rows, imag rows) of width H*W."""
    fld = build_interaction_field(x, y_channel, layer_id, k)
    spec = fft2(fld.z)
    std, _ = standardize_spectrum(spec, epsilon)
    n = x.shape[2] * x.shape[3]
    rows_r = std.data.real.reshape(-1, n)
    rows_i = std.data.imag.reshape(-1, n)
    return rows_r, rows_i


def train_layer_autoencoder(
    x: Tensor4, y: Tensor4, cfg: TrainConfig, layer_id: str = ""
) -> tuple[AutoencoderParams, AutoencoderParams, list[float]]:
    """Train the per-layer reconstructor(s) on cached (X, Y) activations.

    Returns the real-branch params, the imaginary-branch params (the same
    object when `share_branches` is set) and the per-epoch mean loss.
    """
    pool_size = x.shape[0]
    c_out = y.shape[1]
    if pool_size == 0 or c_out == 0:
        raise InvalidArgument("empty activation pool")
    if y.shape[0] != pool_size:
        raise InvalidArgument("X/Y batch sizes disagree")
    n = x.shape[2] * x.shape[3]

    rng = np.random.default_rng(cfg.seed)
    ae_real = init_autoencoder(n, "real", rng)
    ae_imag = ae_real if cfg.share_branches else init_autoencoder(n, "imaginary", rng)
    opt_real = BranchOptimizer(ae_real, cfg)
    opt_imag = opt_real if cfg.share_branches else BranchOptimizer(ae_imag, cfg)

    history: list[float] = []
    for _epoch in range(cfg.epochs):
        losses = []
        for k in range(c_out):
            for lo in range(0, pool_size, cfg.batch_size):
                hi = min(lo + cfg.batch_size, pool_size)
                xb = Tensor4(x.data[lo:hi])
                yb = Tensor4(y.data[lo:hi, k : k + 1])
                rows_r, rows_i = spectral_rows(xb, yb, cfg.epsilon, layer_id, k)
                pred_r = ae_forward(ae_real, rows_r)
                pred_i = ae_forward(ae_imag, rows_i)
                losses.append(ae_loss(pred_r, rows_r, pred_i, rows_i))
                # d(loss)/d(pred) for loss = (mse_r + mse_i) / 2
                grad_r = (pred_r - rows_r) / rows_r.size
                grad_i = (pred_i - rows_i) / rows_i.size
                if cfg.share_branches:
                    d1r, d2r = ae_backward(ae_real, rows_r, grad_r)
                    d1i, d2i = ae_backward(ae_real, rows_i, grad_i)
                    opt_real.accumulate(d1r + d1i, d2r + d2i)
                    opt_real.step_if_due()
                else:
                    opt_real.accumulate(*ae_backward(ae_real, rows_r, grad_r))
                    opt_imag.accumulate(*ae_backward(ae_imag, rows_i, grad_i))
                    opt_real.step_if_due()
                    opt_imag.step_if_due()
        opt_real.flush()
        if not cfg.share_branches:
            opt_imag.flush()
        history.append(float(np.mean(losses)))
    return ae_real, ae_imag, history

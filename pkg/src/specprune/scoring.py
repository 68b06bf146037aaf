"""Channel scoring: reconstruction fidelity, magnitude fusion, normalization.

A frozen reconstructor turns each channel's interaction field into a
round-trip reconstruction (FFT -> standardize -> reconstruct ->
de-standardize -> inverse FFT); fidelity is the batch-averaged absolute
cosine between the vectorized original and reconstruction.  Importance is
1 - fidelity, optionally fused with a per-layer normalized filter l1 term,
then min-max mapped to [0, 1] inside the layer for thresholding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autoencoder import AutoencoderParams, ae_forward
from .errors import InvalidArgument
from .field import InteractionField, build_interaction_field
from .spectral import destandardize_spectrum, fft2, ifft2, standardize_spectrum
from .tensor import CTensor4, Tensor4, vectorize_complex

FIDELITY_EPS = 1e-8
NORM_EPS = 1e-8


@dataclass(frozen=True)
class FusionRule:
    """How fidelity importance and l1 magnitude combine."""

    kind: str  # "add", "mul" or "powmul"
    alpha: float = 0.5  # Add weight / PowMul exponent on the fidelity term

    def __post_init__(self):
        if self.kind not in ("add", "mul", "powmul"):
            raise InvalidArgument(f"unknown fusion rule {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class ImportanceVector:
    """Per-channel scores of one layer at every pipeline stage."""

    layer_id: str
    fid: np.ndarray
    i_fid: np.ndarray
    i_l1: np.ndarray
    fused: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        n = len(self.fid)
        for name in ("i_fid", "i_l1", "fused", "normalized"):
            if len(getattr(self, name)) != n:
                raise InvalidArgument("all score vectors must share one length")
        if n and (self.fid.min() < 0.0 or self.fid.max() > 1.0):
            raise InvalidArgument("fidelity entries must lie in [0, 1]")
        if n and (self.normalized.min() < 0.0 or self.normalized.max() > 1.0):
            raise InvalidArgument("normalized entries must lie in [0, 1]")


def reconstruct_field_with(
    field: InteractionField,
    map_real: Callable[[np.ndarray], np.ndarray],
    map_imag: Callable[[np.ndarray], np.ndarray],
    epsilon: float = 1e-8,
) -> CTensor4:
    """Round-trip a field through arbitrary row reconstructors.

    The row mappers receive standardized spectral rows of width H*W and must
    return the same shape.  Passing identity functions isolates the
    FFT/standardization round trip.
    """
    z = field.z
    b, c, h, w = z.shape
    n = h * w
    spec = fft2(z)
    std, stats = standardize_spectrum(spec, epsilon)
    rows_r = map_real(std.data.real.reshape(-1, n))
    rows_i = map_imag(std.data.imag.reshape(-1, n))
    if rows_r.shape != (b * c, n) or rows_i.shape != (b * c, n):
        raise InvalidArgument("row reconstructor changed the row shape")
    rec = rows_r.reshape(b, c, h, w) + 1j * rows_i.reshape(b, c, h, w)
    return ifft2(destandardize_spectrum(CTensor4(rec), stats))


def reconstruct_field(
    field: InteractionField,
    ae_real: AutoencoderParams,
    ae_imag: AutoencoderParams,
    epsilon: float = 1e-8,
) -> CTensor4:
    """Reconstruct a field through frozen real/imaginary-branch params."""
    n = field.z.shape[2] * field.z.shape[3]
    if ae_real.n != n or ae_imag.n != n:
        raise InvalidArgument(
            f"reconstructor width {ae_real.n}/{ae_imag.n} does not match field rows {n}"
        )
    return reconstruct_field_with(
        field,
        lambda rows: ae_forward(ae_real, rows),
        lambda rows: ae_forward(ae_imag, rows),
        epsilon,
    )


def fidelity(z: CTensor4, z_hat: CTensor4) -> float:
    """Batch-mean absolute cosine between vectorized original/reconstruction.

    Zero-norm vectors are kept finite by an epsilon product guard; for
    nonzero inputs the score is exactly invariant under positive rescaling
    of either argument.
    """
    if z.shape != z_hat.shape:
        raise InvalidArgument(f"shape mismatch: {z.shape} vs {z_hat.shape}")
    b = z.shape[0]
    if b < 1:
        raise InvalidArgument("fidelity requires a non-empty batch")
    total = 0.0
    for sample in range(b):
        v = vectorize_complex(z, sample)
        v_hat = vectorize_complex(z_hat, sample)
        denom = np.linalg.norm(v) * np.linalg.norm(v_hat) + FIDELITY_EPS**2
        total += abs(float(v @ v_hat)) / denom
    return total / b


def l1_importance(
    filter_weights: Sequence[np.ndarray], epsilon: float = FIDELITY_EPS
) -> np.ndarray:
    """Per-channel l1 norm over the layer max: ||W_k||_1 / (max_j ||W_j||_1 + eps)."""
    if len(filter_weights) < 1:
        raise InvalidArgument("l1_importance requires at least one filter")
    norms = np.array([float(np.sum(np.abs(w))) for w in filter_weights])
    return norms / (norms.max() + epsilon)


def fuse(i_fid: np.ndarray, i_l1: np.ndarray, rule: FusionRule) -> np.ndarray:
    """Combine the two importance terms; PowMul uses the 0^0 := 1 convention."""
    i_fid = np.asarray(i_fid, dtype=np.float64)
    i_l1 = np.asarray(i_l1, dtype=np.float64)
    if i_fid.shape != i_l1.shape:
        raise InvalidArgument("fuse requires equal-length vectors")
    if rule.kind == "add":
        return rule.alpha * i_fid + (1.0 - rule.alpha) * i_l1
    if rule.kind == "mul":
        return i_fid * i_l1
    return i_fid**rule.alpha * i_l1 ** (1.0 - rule.alpha)


def normalize_layer_scores(fused: np.ndarray) -> np.ndarray:
    """Min-max map to [0, 1] within the layer; constant input maps to zeros."""
    fused = np.asarray(fused, dtype=np.float64)
    if fused.size < 1:
        raise InvalidArgument("cannot normalize an empty score vector")
    lo = fused.min()
    hi = fused.max()
    return (fused - lo) / (hi - lo + NORM_EPS)


def score_layer(
    x: Tensor4,
    y: Tensor4,
    filter_weights: Sequence[np.ndarray],
    ae_real: AutoencoderParams,
    ae_imag: AutoencoderParams,
    rule: FusionRule,
    layer_id: str = "",
    batch_size: int = 128,
    epsilon: float = 1e-8,
) -> ImportanceVector:
    """Score every output channel of one layer against frozen reconstructors.

    Channels are processed one at a time and micro-batched like training;
    fidelity is the mean over all pool samples.  Scoring is deterministic:
    it holds only frozen parameters and cached activations.
    """
    pool_size = x.shape[0]
    c_out = y.shape[1]
    if pool_size == 0 or c_out == 0:
        raise InvalidArgument("empty activation pool")
    if len(filter_weights) != c_out:
        raise InvalidArgument("one filter weight block per output channel required")

    fid = np.zeros(c_out)
    for k in range(c_out):
        acc = 0.0
        for lo in range(0, pool_size, batch_size):
            hi = min(lo + batch_size, pool_size)
            xb = Tensor4(x.data[lo:hi])
            yb = Tensor4(y.data[lo:hi, k : k + 1])
            fld = build_interaction_field(xb, yb, layer_id, k)
            z_hat = reconstruct_field(fld, ae_real, ae_imag, epsilon)
            acc += fidelity(fld.z, z_hat) * (hi - lo)
        fid[k] = acc / pool_size

    i_fid = 1.0 - fid
    i_l1 = l1_importance(filter_weights, epsilon=FIDELITY_EPS)
    fused = fuse(i_fid, i_l1, rule)
    normalized = normalize_layer_scores(fused)
    return ImportanceVector(layer_id, fid, i_fid, i_l1, fused, normalized)

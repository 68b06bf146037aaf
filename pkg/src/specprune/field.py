"""Per-channel complex interaction fields and aligned-channel extraction.

A field couples a layer's full input activation (real part) with one output
channel's map, resized to the input's spatial size and replicated across the
input channels (imaginary part).  The channel-mean of the imaginary part
recovers the resized map, which is what makes the extraction operator a
useful stability probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .tensor import CTensor4, Tensor4, bilinear_resize, broadcast_channel


@dataclass(frozen=True)
class InteractionField:
    """One output channel's complex field plus provenance."""

    layer_id: str
    channel_id: int
    z: CTensor4


def build_interaction_field(
    x: Tensor4, y_k: Tensor4, layer_id: str, k: int
) -> InteractionField:
    """z = x + i * broadcast(resize(y_k, (H, W)), C_in).

    `x` is the layer input (B, C_in, H, W); `y_k` is a single output channel
    (B, 1, H1, W1).  The broadcast is materialized so downstream FFT code
    sees an ordinary dense tensor; callers bound memory by building one
    channel's field at a time.
    """
    b, c_in, h, w = x.shape
    by, cy, _, _ = y_k.shape
    if by != b:
        raise InvalidArgument(f"batch mismatch: x has {b}, y_k has {by}")
    if cy != 1:
        raise InvalidArgument(f"y_k must have exactly one channel, got {cy}")
    aligned = bilinear_resize(y_k, (h, w))
    imag = broadcast_channel(aligned, c_in)
    return InteractionField(layer_id, k, CTensor4.from_parts(x, imag))


def extract_aligned_channel(z: CTensor4) -> Tensor4:
    """Channel-mean of the imaginary part, shape (B, 1, H, W).

    On a broadcast-structured field this returns the resized output map
    exactly; it is linear and 1/sqrt(C_in)-Lipschitz in the vectorized field.
    """
    if z.shape[1] < 1:
        raise InvalidArgument("extract_aligned_channel requires C_in >= 1")
    imag = z.data.imag
    # mean computed relative to the first slice: identical (broadcast) slices
    # yield zero residuals, so the recovered map is bit-exact for any C_in.
    first = imag[:, :1]
    mean = first + np.mean(imag - first, axis=1, keepdims=True)
    return Tensor4(mean)

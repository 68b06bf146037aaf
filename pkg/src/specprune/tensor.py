"""Dense rank-4 tensors and the shape operations the pruning pipeline needs.

Everything here is deliberately minimal: a real and a complex (batch,
channel, height, width) container plus bilinear resize, channel broadcast,
flattening and whole-tensor statistics.  Layout is row-major with width
fastest; every operation is a pure function returning a fresh tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


def _check_rank4(data: np.ndarray, name: str) -> None:
    if data.ndim != 4:
        raise InvalidArgument(f"{name} requires a rank-4 array, got rank {data.ndim}")


@dataclass(frozen=True)
class Tensor4:
    """Real (B, C, H, W) tensor. Constructors reject NaN/Inf entries."""

    data: np.ndarray

    def __post_init__(self):
        _check_rank4(self.data, "Tensor4")
        # private copy: the instance is immutable and never aliases caller data
        arr = np.array(self.data, dtype=np.float64, order="C")
        if arr.size and not np.all(np.isfinite(arr)):
            raise InvalidArgument("Tensor4 admits finite values only")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, shape) -> "Tensor4":
        return cls(np.zeros(shape, dtype=np.float64))

    @classmethod
    def full(cls, shape, value: float) -> "Tensor4":
        return cls(np.full(shape, value, dtype=np.float64))


@dataclass(frozen=True)
class CTensor4:
    """Complex (B, C, H, W) tensor; finiteness applies to both components."""

    data: np.ndarray

    def __post_init__(self):
        _check_rank4(self.data, "CTensor4")
        arr = np.array(self.data, dtype=np.complex128, order="C")
        if arr.size and not (
            np.all(np.isfinite(arr.real)) and np.all(np.isfinite(arr.imag))
        ):
            raise InvalidArgument("CTensor4 admits finite values only")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @classmethod
    def from_parts(cls, real: Tensor4, imag: Tensor4) -> "CTensor4":
        if real.shape != imag.shape:
            raise InvalidArgument(
                f"real/imag shape mismatch: {real.shape} vs {imag.shape}"
            )
        return cls(real.data + 1j * imag.data)

    def real_part(self) -> Tensor4:
        return Tensor4(self.data.real.copy())

    def imag_part(self) -> Tensor4:
        return Tensor4(self.data.imag.copy())


def _axis_coords(n_src: int, n_dst: int):
    """Half-pixel-center source coordinates for one axis.

    Destination pixel d samples source coordinate (d + 0.5) * (n_src / n_dst)
    - 0.5, clamped into [0, n_src - 1].  Returns the floor index, the
    neighbour index and the fractional weight of the neighbour.
    """
    scale = n_src / n_dst
    coords = (np.arange(n_dst, dtype=np.float64) + 0.5) * scale - 0.5
    coords = np.clip(coords, 0.0, n_src - 1)
    lo = np.floor(coords).astype(np.intp)
    frac = coords - lo
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, frac


def bilinear_resize(src: Tensor4, target: tuple[int, int]) -> Tensor4:
    """Resize the spatial axes to `target` = (H, W) by bilinear interpolation.

    Uses the half-pixel-center convention; resizing to the source size
    reproduces the input exactly.
    """
    h_t, w_t = target
    b, c, h_s, w_s = src.shape
    if h_s < 1 or w_s < 1:
        raise InvalidArgument("source spatial dims must be >= 1")
    if h_t < 1 or w_t < 1:
        raise InvalidArgument(f"target dims must be >= 1, got {target}")

    h0, h1, th = _axis_coords(h_s, h_t)
    w0, w1, tw = _axis_coords(w_s, w_t)
    th = th[:, None]
    tw = tw[None, :]

    d = src.data
    top = d[:, :, h0[:, None], w0[None, :]] * (1.0 - tw) + d[:, :, h0[:, None], w1[None, :]] * tw
    bot = d[:, :, h1[:, None], w0[None, :]] * (1.0 - tw) + d[:, :, h1[:, None], w1[None, :]] * tw
    out = top * (1.0 - th) + bot * th
    return Tensor4(out)


def broadcast_channel(src: Tensor4, c_target: int) -> Tensor4:
    """Replicate a single-channel tensor across `c_target` channels."""
    b, c, h, w = src.shape
    if c != 1:
        raise InvalidArgument(f"broadcast_channel requires C=1, got C={c}")
    if c_target < 1:
        raise InvalidArgument(f"c_target must be >= 1, got {c_target}")
    out = np.broadcast_to(src.data, (b, c_target, h, w)).copy()
    return Tensor4(out)


def vectorize_complex(z: CTensor4, sample: int) -> np.ndarray:
    """Flatten one sample into [Re(z) row-major, Im(z) row-major].

    The result has length 2*C*H*W; index arithmetic is fixed so the tensor
    can be rebuilt from the vector bit-exactly.
    """
    b = z.shape[0]
    if not 0 <= sample < b:
        raise InvalidArgument(f"sample {sample} out of range for batch {b}")
    s = z.data[sample]
    return np.concatenate([s.real.ravel(), s.imag.ravel()])


def devectorize_complex(v: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of `vectorize_complex` for a single (C, H, W) sample."""
    c, h, w = shape
    n = c * h * w
    if v.size != 2 * n:
        raise InvalidArgument(f"vector length {v.size} does not match shape {shape}")
    return v[:n].reshape(c, h, w) + 1j * v[n:].reshape(c, h, w)


def batch_stats(t: Tensor4) -> tuple[float, float]:
    """Mean and population standard deviation over every element."""
    if t.data.size == 0:
        raise InvalidArgument("batch_stats of an empty tensor")
    mean = float(np.mean(t.data))
    std = float(np.sqrt(np.mean((t.data - mean) ** 2)))
    return mean, std

"""2D DFT over the spatial axes plus batch-wide spectral standardization.

The forward transform is unnormalized; the inverse carries the 1/(H*W)
factor.  Power-of-two axis lengths go through an iterative radix-2
Cooley-Tukey kernel; everything else falls back to a dense O(N^2) DFT
matrix.  The two paths share no code so either can serve as a cross-check
on the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .tensor import CTensor4, Tensor4, batch_stats


@dataclass(frozen=True)
class SpectralStats:
    """Standardization statistics cached so the mapping can be undone."""

    mu_r: float
    sigma_r: float
    mu_i: float
    sigma_i: float
    epsilon: float

    def __post_init__(self):
        if self.sigma_r < 0 or self.sigma_i < 0:
            raise InvalidArgument("sigma values must be non-negative")
        if self.epsilon <= 0:
            raise InvalidArgument("epsilon must be strictly positive")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _fft_pow2(a: np.ndarray, sign: int) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey along the last axis (length 2^k)."""
    n = a.shape[-1]
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for bit in range(levels):
        rev |= ((idx >> bit) & 1) << (levels - 1 - bit)
    out = np.ascontiguousarray(a[..., rev], dtype=np.complex128)

    m = 2
    while m <= n:
        half = m // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        view = out.reshape(*out.shape[:-1], n // m, m)
        lo = view[..., :half]
        hi = view[..., half:] * tw
        s = lo + hi
        d = lo - hi
        view[..., :half] = s
        view[..., half:] = d
        m *= 2
    return out


def _dft_dense(a: np.ndarray, sign: int) -> np.ndarray:
    """Dense DFT-matrix transform along the last axis; O(N^2), any length."""
    n = a.shape[-1]
    k = np.arange(n)
    mat = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    return a @ mat


def _transform_axis(a: np.ndarray, axis: int, sign: int) -> np.ndarray:
    moved = np.moveaxis(a, axis, -1)
    if _is_pow2(moved.shape[-1]):
        res = _fft_pow2(moved, sign)
    else:
        res = _dft_dense(moved, sign)
    return np.moveaxis(res, -1, axis)


def fft2(z: CTensor4) -> CTensor4:
    """Unnormalized forward DFT of each (b, c) spatial slice."""
    _, _, h, w = z.shape
    if h < 1 or w < 1:
        raise InvalidArgument("fft2 requires spatial dims >= 1")
    out = _transform_axis(z.data, -1, -1)
    out = _transform_axis(out, -2, -1)
    return CTensor4(out)


def ifft2(f: CTensor4) -> CTensor4:
    """Inverse DFT with 1/(H*W) normalization; ifft2(fft2(z)) == z."""
    _, _, h, w = f.shape
    if h < 1 or w < 1:
        raise InvalidArgument("ifft2 requires spatial dims >= 1")
    out = _transform_axis(f.data, -1, +1)
    out = _transform_axis(out, -2, +1)
    return CTensor4(out / (h * w))


def standardize_spectrum(
    f: CTensor4, epsilon: float = 1e-8
) -> tuple[CTensor4, SpectralStats]:
    """Zero-mean/unit-std the real and imaginary parts independently.

    Statistics run over the full (b, c, h, w) extent of the tensor and are
    returned so `destandardize_spectrum` can invert the mapping exactly.
    """
    if f.data.size == 0:
        raise InvalidArgument("standardize_spectrum of an empty tensor")
    if epsilon <= 0:
        raise InvalidArgument("epsilon must be strictly positive")
    mu_r, sigma_r = batch_stats(Tensor4(f.data.real.copy()))
    mu_i, sigma_i = batch_stats(Tensor4(f.data.imag.copy()))
    real = (f.data.real - mu_r) / (sigma_r + epsilon)
    imag = (f.data.imag - mu_i) / (sigma_i + epsilon)
    stats = SpectralStats(mu_r, sigma_r, mu_i, sigma_i, epsilon)
    return CTensor4(real + 1j * imag), stats


def destandardize_spectrum(f_std: CTensor4, stats: SpectralStats) -> CTensor4:
    """Invert `standardize_spectrum`: F = (sigma + eps) * F_std + mu per part."""
    real = (stats.sigma_r + stats.epsilon) * f_std.data.real + stats.mu_r
    imag = (stats.sigma_i + stats.epsilon) * f_std.data.imag + stats.mu_i
    return CTensor4(real + 1j * imag)

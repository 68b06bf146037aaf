import numpy as np
import pytest

from specprune.errors import InvalidArgument
from specprune.spectral import (
    SpectralStats,
    destandardize_spectrum,
    fft2,
    ifft2,
    standardize_spectrum,
)
from specprune.tensor import CTensor4


def dft2_oracle(slice2d: np.ndarray) -> np.ndarray:
    """Direct evaluation of the 2D DFT definition, one bin at a time."""
    h, w = slice2d.shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            phase = np.exp(-2j * np.pi * (u * yy / h + v * xx / w))
            out[u, v] = np.sum(slice2d * phase)
    return out


def random_field(rng, shape):
    return CTensor4(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class TestFFT2:
    def test_impulse_gives_flat_spectrum(self):
        data = np.zeros((1, 1, 4, 4), dtype=complex)
        data[0, 0, 0, 0] = 1.0
        out = fft2(CTensor4(data))
        np.testing.assert_allclose(out.data, 1.0, atol=1e-12)

    def test_constant_concentrates_in_dc(self):
        out = fft2(CTensor4(np.ones((1, 1, 2, 2), dtype=complex)))
        expected = np.zeros((2, 2), dtype=complex)
        expected[0, 0] = 4.0
        np.testing.assert_allclose(out.data[0, 0], expected, atol=1e-12)

    def test_matches_naive_dft_oracle_pow2(self):
        rng = np.random.default_rng(0)
        z = random_field(rng, (1, 1, 8, 8))
        out = fft2(z)
        np.testing.assert_allclose(out.data[0, 0], dft2_oracle(z.data[0, 0]), atol=1e-6)

    @pytest.mark.parametrize("shape", [(3, 5), (4, 6), (7, 7), (2, 9), (5, 8)])
    def test_matches_oracle_mixed_sizes(self, shape):
        # odd sizes exercise the dense-DFT fallback, even/odd mixes both paths
        rng = np.random.default_rng(shape[0] * 10 + shape[1])
        z = random_field(rng, (1, 2, *shape))
        out = fft2(z)
        for c in range(2):
            np.testing.assert_allclose(
                out.data[0, c], dft2_oracle(z.data[0, c]), atol=1e-6
            )

    def test_linearity(self):
        rng = np.random.default_rng(1)
        z1 = random_field(rng, (1, 1, 4, 4))
        z2 = random_field(rng, (1, 1, 4, 4))
        a, b = rng.standard_normal(2)
        lhs = fft2(CTensor4(a * z1.data + b * z2.data)).data
        rhs = a * fft2(z1).data + b * fft2(z2).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_parseval(self):
        rng = np.random.default_rng(2)
        z = random_field(rng, (2, 3, 8, 4))
        f = fft2(z)
        for bi in range(2):
            for c in range(3):
                space = np.sum(np.abs(z.data[bi, c]) ** 2)
                freq = np.sum(np.abs(f.data[bi, c]) ** 2) / 32
                assert abs(space - freq) <= 1e-8 * space


class TestIFFT2:
    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        z = random_field(rng, (1, 2, 8, 8))
        back = ifft2(fft2(z))
        assert np.abs(back.data - z.data).max() < 1e-10

    def test_zero_spectrum(self):
        out = ifft2(CTensor4(np.zeros((1, 1, 4, 4), dtype=complex)))
        assert np.all(out.data == 0)

    def test_dc_only_gives_constant_field(self):
        data = np.zeros((1, 1, 4, 4), dtype=complex)
        data[0, 0, 0, 0] = 16.0
        out = ifft2(CTensor4(data))
        np.testing.assert_allclose(out.data, 1.0, atol=1e-12)


class TestStandardize:
    def test_constant_real_guarded(self):
        f = CTensor4(np.full((1, 1, 3, 3), 2.0 + 0.0j))
        std, stats = standardize_spectrum(f)
        assert stats.sigma_r == 0.0
        np.testing.assert_allclose(std.data.real, 0.0, atol=1e-12)
        np.testing.assert_allclose(std.data.imag, 0.0, atol=1e-12)

    def test_near_fixed_point(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((2, 2, 8, 8)) + 1j * rng.standard_normal((2, 2, 8, 8))
        data = data - data.real.mean() - 1j * data.imag.mean()
        data = data.real / data.real.std() + 1j * (data.imag / data.imag.std())
        std, _ = standardize_spectrum(CTensor4(data), epsilon=1e-8)
        assert np.abs(std.data - data).max() < 1e-6

    def test_moments_match_stats_oracle(self):
        rng = np.random.default_rng(5)
        data = 3.0 * rng.standard_normal((2, 3, 4, 4)) + 1.5
        f = CTensor4(data + 1j * (0.5 * rng.standard_normal((2, 3, 4, 4)) - 2.0))
        std, stats = standardize_spectrum(f)
        sigma = f.data.real.std()
        assert abs(std.data.real.mean()) < 1e-9
        assert abs(std.data.real.std() - sigma / (sigma + stats.epsilon)) < 1e-6

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            standardize_spectrum(CTensor4(np.zeros((0, 1, 2, 2), dtype=complex)))

    def test_bad_epsilon_rejected(self):
        f = CTensor4(np.ones((1, 1, 2, 2), dtype=complex))
        with pytest.raises(InvalidArgument):
            standardize_spectrum(f, epsilon=0.0)


class TestDestandardize:
    def test_roundtrip(self):
        rng = np.random.default_rng(6)
        f = CTensor4(
            5 * rng.standard_normal((2, 2, 4, 4)) + 1j * rng.standard_normal((2, 2, 4, 4))
        )
        std, stats = standardize_spectrum(f)
        back = destandardize_spectrum(std, stats)
        scale = np.abs(f.data).max()
        assert np.abs(back.data - f.data).max() < 1e-9 * scale

    def test_reverse_roundtrip(self):
        # destandardize then standardize with the same stats is also identity
        rng = np.random.default_rng(7)
        f = CTensor4(
            rng.standard_normal((1, 2, 4, 4)) + 1j * rng.standard_normal((1, 2, 4, 4))
        )
        _, stats = standardize_spectrum(f)
        widened = destandardize_spectrum(f, stats)
        back = (widened.data.real - stats.mu_r) / (stats.sigma_r + stats.epsilon) + 1j * (
            (widened.data.imag - stats.mu_i) / (stats.sigma_i + stats.epsilon)
        )
        assert np.abs(back - f.data).max() < 1e-9

    def test_zero_tensor_yields_means(self):
        stats = SpectralStats(mu_r=1.5, sigma_r=2.0, mu_i=-0.5, sigma_i=1.0, epsilon=1e-8)
        out = destandardize_spectrum(CTensor4(np.zeros((1, 1, 2, 2), complex)), stats)
        np.testing.assert_allclose(out.data.real, 1.5)
        np.testing.assert_allclose(out.data.imag, -0.5)

    def test_neutral_stats_are_identity(self):
        eps = 1e-8
        stats = SpectralStats(0.0, 1.0 - eps, 0.0, 1.0 - eps, eps)
        rng = np.random.default_rng(8)
        f = CTensor4(rng.standard_normal((1, 1, 3, 3)) + 0j)
        out = destandardize_spectrum(f, stats)
        np.testing.assert_allclose(out.data, f.data, atol=1e-12)

    def test_stats_invariants(self):
        with pytest.raises(InvalidArgument):
            SpectralStats(0.0, -1.0, 0.0, 1.0, 1e-8)
        with pytest.raises(InvalidArgument):
            SpectralStats(0.0, 1.0, 0.0, 1.0, 0.0)

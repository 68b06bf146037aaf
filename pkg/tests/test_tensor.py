import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specprune.errors import InvalidArgument
from specprune.tensor import (
    CTensor4,
    Tensor4,
    batch_stats,
    bilinear_resize,
    broadcast_channel,
    devectorize_complex,
    vectorize_complex,
)


def bilinear_oracle(src2d: np.ndarray, h_t: int, w_t: int) -> np.ndarray:
    """Independent per-pixel evaluation of the half-pixel-center formula."""
    h_s, w_s = src2d.shape
    out = np.zeros((h_t, w_t))
    for i in range(h_t):
        for j in range(w_t):
            sy = min(max((i + 0.5) * h_s / h_t - 0.5, 0.0), h_s - 1)
            sx = min(max((j + 0.5) * w_s / w_t - 0.5, 0.0), w_s - 1)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, h_s - 1), min(x0 + 1, w_s - 1)
            ty, tx = sy - y0, sx - x0
            out[i, j] = (
                src2d[y0, x0] * (1 - ty) * (1 - tx)
                + src2d[y0, x1] * (1 - ty) * tx
                + src2d[y1, x0] * ty * (1 - tx)
                + src2d[y1, x1] * ty * tx
            )
    return out


class TestConstructors:
    def test_rejects_nan(self):
        bad = np.zeros((1, 1, 2, 2))
        bad[0, 0, 0, 0] = np.nan
        with pytest.raises(InvalidArgument):
            Tensor4(bad)

    def test_rejects_inf_in_imag(self):
        bad = np.zeros((1, 1, 2, 2), dtype=complex)
        bad[0, 0, 0, 1] = 1j * np.inf
        with pytest.raises(InvalidArgument):
            CTensor4(bad)

    def test_rejects_wrong_rank(self):
        with pytest.raises(InvalidArgument):
            Tensor4(np.zeros((2, 2)))

    def test_data_is_immutable(self):
        t = Tensor4(np.zeros((1, 1, 2, 2)))
        with pytest.raises(ValueError):
            t.data[0, 0, 0, 0] = 1.0

    def test_empty_batch_allowed(self):
        assert Tensor4(np.zeros((0, 3, 2, 2))).shape == (0, 3, 2, 2)


class TestBilinearResize:
    def test_identity_is_bitwise_copy(self):
        rng = np.random.default_rng(0)
        t = Tensor4(rng.standard_normal((2, 3, 4, 4)))
        out = bilinear_resize(t, (4, 4))
        assert np.array_equal(out.data, t.data)

    def test_constant_preserved(self):
        t = Tensor4.full((1, 1, 2, 2), 3.0)
        out = bilinear_resize(t, (5, 5))
        assert np.array_equal(out.data, np.full((1, 1, 5, 5), 3.0))

    def test_upsample_matches_per_pixel_oracle(self):
        src = np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 1, 2, 2)
        out = bilinear_resize(Tensor4(src), (4, 4))
        expected = bilinear_oracle(src[0, 0], 4, 4)
        np.testing.assert_allclose(out.data[0, 0], expected, atol=1e-12)

    @pytest.mark.parametrize("target", [(3, 7), (7, 3), (1, 1), (6, 6)])
    def test_random_matches_oracle(self, target):
        rng = np.random.default_rng(42)
        src = rng.standard_normal((2, 2, 5, 4))
        out = bilinear_resize(Tensor4(src), target)
        for b in range(2):
            for c in range(2):
                np.testing.assert_allclose(
                    out.data[b, c], bilinear_oracle(src[b, c], *target), atol=1e-12
                )

    def test_zero_sized_target_rejected(self):
        t = Tensor4.zeros((1, 1, 2, 2))
        with pytest.raises(InvalidArgument):
            bilinear_resize(t, (0, 4))

    def test_output_range_within_input_range(self):
        # convexity of the bilinear weights
        rng = np.random.default_rng(3)
        for _ in range(20):
            src = rng.standard_normal((1, 1, 4, 6))
            out = bilinear_resize(Tensor4(src), (9, 2)).data
            assert out.min() >= src.min() - 1e-12
            assert out.max() <= src.max() + 1e-12


class TestBroadcastChannel:
    def test_identity(self):
        rng = np.random.default_rng(1)
        t = Tensor4(rng.standard_normal((2, 1, 3, 3)))
        assert np.array_equal(broadcast_channel(t, 1).data, t.data)

    def test_constant(self):
        t = Tensor4.full((1, 1, 2, 2), 1.0)
        out = broadcast_channel(t, 4)
        assert out.shape == (1, 4, 2, 2)
        assert np.all(out.data == 1.0)

    def test_every_slice_equals_source(self):
        rng = np.random.default_rng(2)
        t = Tensor4(rng.standard_normal((2, 1, 4, 4)))
        out = broadcast_channel(t, 8)
        for c in range(8):
            assert np.array_equal(out.data[:, c], t.data[:, 0])

    def test_multichannel_rejected(self):
        with pytest.raises(InvalidArgument):
            broadcast_channel(Tensor4.zeros((1, 2, 2, 2)), 4)

    @given(c_target=st.integers(min_value=1, max_value=12))
    @settings(max_examples=25, deadline=None)
    def test_sum_scales_with_channels(self, c_target):
        rng = np.random.default_rng(c_target)
        t = Tensor4(rng.standard_normal((2, 1, 3, 2)))
        out = broadcast_channel(t, c_target)
        assert np.isclose(out.data.sum(), c_target * t.data.sum())


class TestVectorizeComplex:
    def test_purely_real(self):
        z = CTensor4(np.full((1, 1, 1, 1), 5.0 + 0.0j))
        np.testing.assert_array_equal(vectorize_complex(z, 0), [5.0, 0.0])

    def test_purely_imaginary(self):
        z = CTensor4(np.full((1, 1, 1, 1), 0.0 + 2.0j))
        np.testing.assert_array_equal(vectorize_complex(z, 0), [0.0, 2.0])

    def test_matches_index_oracle(self):
        rng = np.random.default_rng(4)
        data = rng.standard_normal((1, 2, 2, 2)) + 1j * rng.standard_normal((1, 2, 2, 2))
        v = vectorize_complex(CTensor4(data), 0)
        assert v.size == 16
        n = 8
        for c in range(2):
            for h in range(2):
                for w in range(2):
                    flat = c * 4 + h * 2 + w
                    assert v[flat] == data[0, c, h, w].real
                    assert v[n + flat] == data[0, c, h, w].imag

    def test_bijection_roundtrip_bitwise(self):
        rng = np.random.default_rng(5)
        data = rng.standard_normal((3, 2, 3, 4)) + 1j * rng.standard_normal((3, 2, 3, 4))
        z = CTensor4(data)
        for sample in range(3):
            back = devectorize_complex(vectorize_complex(z, sample), (2, 3, 4))
            assert np.array_equal(back, z.data[sample])

    def test_sample_out_of_range(self):
        z = CTensor4(np.zeros((2, 1, 1, 1), dtype=complex))
        with pytest.raises(InvalidArgument):
            vectorize_complex(z, 2)


class TestBatchStats:
    def test_zeros(self):
        assert batch_stats(Tensor4.zeros((1, 2, 2, 2))) == (0.0, 0.0)

    def test_constant(self):
        mean, std = batch_stats(Tensor4.full((2, 1, 3, 3), 7.0))
        assert mean == 7.0
        assert std == 0.0

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((3, 4, 5, 6)) * 2.5 + 1.0
        mean, std = batch_stats(Tensor4(data))
        total = 0.0
        for v in data.ravel():
            total += v
        oracle_mean = total / data.size
        sq = 0.0
        for v in data.ravel():
            sq += (v - oracle_mean) ** 2
        oracle_std = np.sqrt(sq / data.size)  # population, not sample
        assert abs(mean - oracle_mean) <= 1e-10 * max(1.0, abs(oracle_mean))
        assert abs(std - oracle_std) <= 1e-10 * oracle_std

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            batch_stats(Tensor4(np.zeros((0, 1, 1, 1))))

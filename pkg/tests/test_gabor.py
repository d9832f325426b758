"""Tests for the Gabor bank: closed-form kernel values, DC compensation,
bank layout, sequence representation, and the binary response dump."""

import math

import numpy as np
import numpy.testing as npt
import pytest

from faceseq import gabor
from faceseq.matrixkit import conv2_same


def pointwise_kernels(freq, theta, sigma, size):
    """Scalar-loop oracle for one even/odd kernel pair.

    Same definition as the implementation (envelope-weighted lattice DC),
    evaluated entry by entry with math.* so vectorization and indexing
    errors cannot cancel out.
    """
    half = size // 2
    kx, ky = freq * math.cos(theta), freq * math.sin(theta)
    amp = freq * freq / (sigma * sigma)
    env_sum = 0.0
    env_cos_sum = 0.0
    for yy in range(-half, half + 1):
        for xx in range(-half, half + 1):
            env = math.exp(-(freq * freq) * (xx * xx + yy * yy) / (2 * sigma * sigma))
            env_sum += env
            env_cos_sum += env * math.cos(kx * xx + ky * yy)
    dc = env_cos_sum / env_sum
    even = np.zeros((size, size))
    odd = np.zeros((size, size))
    for yy in range(-half, half + 1):
        for xx in range(-half, half + 1):
            env = math.exp(-(freq * freq) * (xx * xx + yy * yy) / (2 * sigma * sigma))
            phase = kx * xx + ky * yy
            even[yy + half, xx + half] = amp * env * (math.cos(phase) - dc)
            odd[yy + half, xx + half] = amp * env * math.sin(phase)
    return even, odd


class TestKernels:
    def test_matches_pointwise_formula(self):
        cfg = gabor.GaborConfig(scales=(np.pi / 2,), orientations=(0.0,),
                                sigma=np.pi, kernel_size=9)
        bank = gabor.make_bank(cfg)
        even_ref, odd_ref = pointwise_kernels(np.pi / 2, 0.0, np.pi, 9)
        npt.assert_allclose(bank.kernels[0], even_ref, atol=1e-12)
        npt.assert_allclose(bank.kernels[1], odd_ref, atol=1e-12)

    def test_all_channels_match_pointwise(self):
        bank = gabor.default_bank(kernel_size=5)
        idx = 0
        for freq in bank.config.scales:
            for theta in bank.config.orientations:
                even_ref, odd_ref = pointwise_kernels(freq, theta, np.pi, 5)
                npt.assert_allclose(bank.kernels[idx], even_ref, atol=1e-12)
                npt.assert_allclose(bank.kernels[idx + 1], odd_ref, atol=1e-12)
                idx += 2

    def test_default_bank_has_16_kernels(self):
        bank = gabor.default_bank()
        assert bank.count == 16
        assert bank.config.count == 16

    def test_odd_kernel_center_exactly_zero(self):
        for size in (3, 5, 9):
            bank = gabor.default_bank(kernel_size=size)
            c = size // 2
            for k in bank.kernels[1::2]:
                assert k[c, c] == 0.0

    def test_even_kernels_zero_mean(self):
        for size in (3, 5, 9):
            bank = gabor.default_bank(kernel_size=size)
            for k in bank.kernels[0::2]:
                assert abs(float(np.mean(k))) < 1e-6

    def test_dc_term_approaches_analytic_limit(self):
        # on a dense lattice the subtracted DC converges to exp(-sigma^2/2)
        freq, sigma, size = np.pi / 8, np.pi, 129
        cfg = gabor.GaborConfig(scales=(freq,), orientations=(0.0,),
                                sigma=sigma, kernel_size=size)
        even = gabor.make_bank(cfg).kernels[0]
        amp = freq * freq / (sigma * sigma)
        c = size // 2
        dc = 1.0 - even[c, c] / amp  # center: env=1, cos=1
        assert abs(dc - math.exp(-sigma * sigma / 2.0)) < 1e-3

    def test_config_validation(self):
        with pytest.raises(gabor.InvalidConfigError):
            gabor.GaborConfig(scales=())
        with pytest.raises(gabor.InvalidConfigError):
            gabor.GaborConfig(scales=(-1.0,))
        with pytest.raises(gabor.InvalidConfigError):
            gabor.GaborConfig(sigma=0.0)
        with pytest.raises(gabor.InvalidConfigError):
            gabor.GaborConfig(kernel_size=4)
        with pytest.raises(gabor.InvalidConfigError):
            gabor.GaborConfig(kernel_size=1)


class TestApply:
    def test_response_shape(self):
        bank = gabor.default_bank()
        rng = np.random.default_rng(2)
        out = gabor.apply_bank(bank, rng.random((10, 12)))
        assert out.shape == (16, 10, 12)

    def test_responses_are_plain_convolutions(self):
        bank = gabor.default_bank()
        rng = np.random.default_rng(3)
        frame = rng.random((8, 9))
        out = gabor.apply_bank(bank, frame)
        for i, k in enumerate(bank.kernels):
            npt.assert_allclose(out[i], conv2_same(frame, k), atol=0)

    def test_constant_frame_odd_interior_zero(self):
        # odd kernels integrate to zero, so interior responses vanish;
        # zero-padded borders are excluded (truncated windows of an odd
        # kernel need not sum to zero for diagonal orientations)
        bank = gabor.default_bank(kernel_size=5)
        frame = np.full((12, 14), 0.7)
        out = gabor.apply_bank(bank, frame)
        for resp in out[1::2]:
            assert np.max(np.abs(resp[2:-2, 2:-2])) < 1e-8

    def test_small_frame_rejected(self):
        bank = gabor.default_bank(kernel_size=5)
        with pytest.raises(gabor.FrameTooSmallError):
            gabor.apply_bank(bank, np.zeros((5, 20)))


class TestRepresentSequence:
    def test_grid_shape_and_content(self):
        bank = gabor.default_bank()
        rng = np.random.default_rng(4)
        frames = [rng.random((9, 11)) for _ in range(5)]
        grid = gabor.represent_sequence(bank, frames)
        assert grid.shape == (16, 5, 9, 11)
        npt.assert_allclose(grid[3, 2], conv2_same(frames[2], bank.kernels[3]), atol=0)

    def test_heterogeneous_sizes_rejected(self):
        bank = gabor.default_bank()
        with pytest.raises(gabor.HeterogeneousFrameSizesError):
            gabor.represent_sequence(bank, [np.zeros((8, 8)), np.zeros((8, 9))])

    def test_empty_sequence_rejected(self):
        with pytest.raises(gabor.HeterogeneousFrameSizesError):
            gabor.represent_sequence(gabor.default_bank(), [])


class TestResponseDump:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        grid = rng.standard_normal((4, 3, 6, 7))
        path = tmp_path / "resp.gbrd"
        gabor.write_response_dump(path, grid)
        back = gabor.read_response_dump(path)
        assert back.shape == grid.shape
        assert np.array_equal(back, grid)
        assert back.tobytes() == grid.astype("<f8").tobytes()

    def test_header_layout(self, tmp_path):
        grid = np.zeros((2, 3, 4, 5))
        path = tmp_path / "resp.gbrd"
        gabor.write_response_dump(path, grid)
        raw = path.read_bytes()
        assert raw[:4] == b"GBRD"
        assert np.frombuffer(raw[4:20], dtype="<u4").tolist() == [2, 3, 4, 5]
        assert len(raw) == 20 + 8 * 2 * 3 * 4 * 5

    def test_kernel_major_ordering(self, tmp_path):
        # entry (k, r) sits at block index k*f + r
        p, f, h, w = 3, 2, 2, 2
        grid = np.arange(p * f * h * w, dtype=float).reshape(p, f, h, w)
        path = tmp_path / "resp.gbrd"
        gabor.write_response_dump(path, grid)
        raw = path.read_bytes()
        block = np.frombuffer(raw[20:], dtype="<f8").reshape(p * f, h * w)
        npt.assert_array_equal(block[1 * f + 1].reshape(h, w), grid[1, 1])
        npt.assert_array_equal(block[2 * f + 0].reshape(h, w), grid[2, 0])

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            gabor.read_response_dump(path)

"""Even/odd Gabor kernel banks and multi-channel sequence representations.

A bank holds one cosine (even) and one sine (odd) kernel per
(frequency, orientation) pair. Both share a Gaussian envelope whose width
follows the frequency, so every channel sees the same number of carrier
cycles. The even kernel is DC-compensated: the subtracted constant is the
envelope-weighted mean of the carrier on the sampled lattice, whose
continuous limit is the classical exp(-sigma^2/2) term, so the sampled
kernel sums to zero to machine precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .matrixkit import conv2_same


class InvalidConfigError(ValueError):
    pass


class FrameTooSmallError(ValueError):
    pass


class HeterogeneousFrameSizesError(ValueError):
    pass


@dataclass
class GaborConfig:
    """Bank layout: spatial frequencies (radians/pixel), orientations (radians),
    envelope width sigma, and the odd kernel side length."""

    scales: tuple = (np.pi / 2, np.pi / 8)
    orientations: tuple = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)
    sigma: float = np.pi
    kernel_size: int = 3

    def __post_init__(self):
        self.scales = tuple(float(s) for s in self.scales)
        self.orientations = tuple(float(t) for t in self.orientations)
        self.sigma = float(self.sigma)
        self.kernel_size = int(self.kernel_size)
        if not self.scales or any(s <= 0 for s in self.scales):
            raise InvalidConfigError("scales must be non-empty and positive")
        if not self.orientations:
            raise InvalidConfigError("orientations must be non-empty")
        if self.sigma <= 0:
            raise InvalidConfigError("sigma must be positive")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise InvalidConfigError("kernel_size must be odd and >= 3")

    @property
    def count(self) -> int:
        """Number of kernels: an even/odd pair per (scale, orientation)."""
        return 2 * len(self.scales) * len(self.orientations)


def _kernel_pair(freq: float, theta: float, sigma: float, size: int):
    half = size // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1].astype(float)
    kx, ky = freq * np.cos(theta), freq * np.sin(theta)
    envelope = np.exp(-(freq * freq) * (x * x + y * y) / (2.0 * sigma * sigma))
    phase = kx * x + ky * y
    amplitude = (freq * freq) / (sigma * sigma)
    # lattice DC term; -> exp(-sigma^2/2) as the sampling becomes dense
    dc = float(np.sum(envelope * np.cos(phase)) / np.sum(envelope))
    even = amplitude * envelope * (np.cos(phase) - dc)
    odd = amplitude * envelope * np.sin(phase)
    return even, odd


@dataclass
class GaborBank:
    """Kernel list ordered scale-major, then orientation, then (even, odd)."""

    config: GaborConfig
    kernels: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.kernels)


def make_bank(config: GaborConfig) -> GaborBank:
    """Build all 2 * |scales| * |orientations| kernels for a config."""
    kernels = []
    for freq in config.scales:
        for theta in config.orientations:
            even, odd = _kernel_pair(freq, theta, config.sigma, config.kernel_size)
            kernels.append(even)
            kernels.append(odd)
    return GaborBank(config=config, kernels=kernels)


def default_bank(kernel_size: int = 3) -> GaborBank:
    """Default 16-kernel bank: 2 frequencies x 4 orientations x even/odd."""
    return make_bank(GaborConfig(kernel_size=kernel_size))


def apply_bank(bank: GaborBank, frame) -> np.ndarray:
    """Convolve one frame with every kernel; returns (p, rows, cols)."""
    frame = np.asarray(frame, dtype=float)
    if frame.ndim != 2:
        raise FrameTooSmallError(f"frame must be 2D, got ndim={frame.ndim}")
    ks = bank.config.kernel_size
    if frame.shape[0] <= ks or frame.shape[1] <= ks:
        raise FrameTooSmallError(
            f"frame {frame.shape} must exceed kernel size {ks} in both axes"
        )
    return np.stack([conv2_same(frame, k) for k in bank.kernels])


def represent_sequence(bank: GaborBank, frames) -> np.ndarray:
    """Filter every frame of a sequence; returns (p, f, rows, cols).

    Entry (k, r) is the response of frame r under kernel k. All frames
    must share one size.
    """
    frames = [np.asarray(fr, dtype=float) for fr in frames]
    if not frames:
        raise HeterogeneousFrameSizesError("sequence has no frames")
    shape = frames[0].shape
    for i, fr in enumerate(frames):
        if fr.shape != shape:
            raise HeterogeneousFrameSizesError(
                f"frame {i} has shape {fr.shape}, expected {shape}"
            )
    per_frame = [apply_bank(bank, fr) for fr in frames]  # each (p, H, W)
    return np.stack(per_frame, axis=1)


_DUMP_MAGIC = b"GBRD"


def write_response_dump(path, grid) -> None:
    """Serialize a (p, f, rows, cols) response grid.

    Layout: magic "GBRD", then p, f, rows, cols as little-endian u32, then
    all responses as row-major float64, kernel-major then frame.
    """
    grid = np.ascontiguousarray(np.asarray(grid, dtype="<f8"))
    if grid.ndim != 4:
        raise ValueError(f"expected (p, f, rows, cols) grid, got ndim={grid.ndim}")
    p, f, rows, cols = grid.shape
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(struct.pack("<4I", p, f, rows, cols))
        fh.write(grid.tobytes())


def read_response_dump(path) -> np.ndarray:
    """Inverse of write_response_dump; bit-exact round trip."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _DUMP_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_DUMP_MAGIC!r}")
        p, f, rows, cols = struct.unpack("<4I", fh.read(16))
        data = np.frombuffer(fh.read(8 * p * f * rows * cols), dtype="<f8")
    if data.size != p * f * rows * cols:
        raise ValueError("truncated response dump")
    return data.reshape(p, f, rows, cols).copy()

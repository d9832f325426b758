"""Point-grid tracking and displacement features.

A 113-point grid is placed on the first frame of a sequence and followed
through the remaining frames with a pyramidal Lucas-Kanade tracker.  Per
frame, the (dx, dy) of every point relative to frame 1 goes into one
column of a displacement matrix, which is then reduced with the same
bidirectional two-sided discriminant machinery used for appearance
features.

Coordinates are (x, y) pixels with x along columns and y along rows;
frame arrays are indexed [row, col].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from . import matrixkit as mk
from . import subspace


class GeometricError(ValueError):
    """Base class for tracking and grid failures."""


class GridFormatError(GeometricError):
    """Grid has the wrong point count, bad text, or points off the frame."""


class TooFewFramesError(GeometricError):
    """Tracking and displacement need at least two frames."""


class FrameSizeMismatchError(GeometricError):
    """All frames of a sequence must share one size."""


class GridOutOfBoundsError(GeometricError):
    """A grid point sits too close to the border for the tracker window."""


class AllPointsLostError(GeometricError):
    """A frame has no surviving points to recover the lost ones from."""


GRID_POINT_COUNT = 113


@dataclass(frozen=True)
class GridModel:
    """The 113 (x, y) point positions on the first frame of a sequence.

    points: (113, 2) float array; frame_size: (rows, cols) of the frames
    the grid was placed on.  Points must lie inside the frame; the margin
    a tracker window needs is checked by the tracker itself, since it
    depends on the window width.
    """

    points: np.ndarray
    frame_size: tuple[int, int]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (GRID_POINT_COUNT, 2):
            raise GridFormatError(
                f"expected {GRID_POINT_COUNT} (x, y) points, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise GridFormatError("grid contains non-finite coordinates")
        rows, cols = self.frame_size
        if rows < 2 or cols < 2:
            raise GridFormatError(f"frame size {self.frame_size} too small")
        x, y = pts[:, 0], pts[:, 1]
        if x.min() < 0 or y.min() < 0 or x.max() > cols - 1 or y.max() > rows - 1:
            raise GridFormatError("grid points fall outside the frame")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame_size", (int(rows), int(cols)))

    def require_margin(self, half_width: int) -> None:
        rows, cols = self.frame_size
        x, y = self.points[:, 0], self.points[:, 1]
        if (x.min() < half_width or y.min() < half_width
                or x.max() > cols - 1 - half_width
                or y.max() > rows - 1 - half_width):
            raise GridOutOfBoundsError(
                f"grid needs a {half_width}-pixel border margin for this window"
            )


def oval_grid(frame_size: tuple[int, int], margin: float = 8.0) -> GridModel:
    """Deterministic face-shaped 113-point layout for a given frame size.

    Concentric ellipse rings plus a center point, scaled so every point
    keeps `margin` pixels of border.  Used by the synthetic data
    generator and tests; real data carries its grid in a sidecar file.
    """
    rows, cols = frame_size
    cx, cy = (cols - 1) / 2.0, (rows - 1) / 2.0
    ax, ay = cx - margin, cy - margin
    if ax <= 0 or ay <= 0:
        raise GridFormatError(f"frame {frame_size} too small for margin {margin}")
    ring_counts = (36, 28, 20, 14, 9, 5)
    ring_scales = (1.0, 0.83, 0.66, 0.49, 0.32, 0.16)
    pts = [(cx, cy)]
    for i, (count, scale) in enumerate(zip(ring_counts, ring_scales)):
        angles = 2.0 * np.pi * np.arange(count) / count + 0.35 * i
        for a in angles:
            pts.append((cx + scale * ax * np.cos(a), cy + scale * ay * np.sin(a)))
    return GridModel(np.array(pts), (rows, cols))


def read_grid(path, frame_size: tuple[int, int]) -> GridModel:
    """Read a sidecar grid file: 113 lines of `x y` decimal coordinates."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if len(lines) != GRID_POINT_COUNT:
        raise GridFormatError(
            f"{path}: expected {GRID_POINT_COUNT} lines, got {len(lines)}"
        )
    pts = np.empty((GRID_POINT_COUNT, 2))
    for i, ln in enumerate(lines):
        parts = ln.split()
        if len(parts) != 2:
            raise GridFormatError(f"{path}: line {i + 1} is not `x y`")
        try:
            pts[i] = float(parts[0]), float(parts[1])
        except ValueError as e:
            raise GridFormatError(f"{path}: line {i + 1}: {e}") from None
    return GridModel(pts, frame_size)


def write_grid(path, grid: GridModel) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for x, y in grid.points:
            fh.write(f"{x:.10g} {y:.10g}\n")


@dataclass(frozen=True)
class Trajectory:
    """Tracked positions: (f, 113, 2) float, plus a per-frame lost mask.

    positions[0] is the grid verbatim.  A point marked lost keeps its
    last valid position in every later frame; the mask stays set so the
    recovery step and reporting can see it.
    """

    positions: np.ndarray
    lost_mask: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        mask = np.asarray(self.lost_mask)
        if pos.ndim != 3 or pos.shape[1:] != (GRID_POINT_COUNT, 2):
            raise GeometricError(f"positions shape {pos.shape} is not (f, 113, 2)")
        if mask.shape != pos.shape[:2] or mask.dtype != np.bool_:
            raise GeometricError("lost_mask must be boolean with shape (f, 113)")
        if not np.all(np.isfinite(pos)):
            raise GeometricError("trajectory contains non-finite positions")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "lost_mask", mask)

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class TrackerOptions:
    levels: int = 3
    window: int = 15
    max_iters: int = 20
    eps: float = 0.01

    def __post_init__(self):
        if self.levels < 1:
            raise GeometricError(f"levels={self.levels} must be >= 1")
        if self.window < 3 or self.window % 2 == 0:
            raise GeometricError(f"window={self.window} must be odd and >= 3")
        if self.max_iters < 1:
            raise GeometricError(f"max_iters={self.max_iters} must be >= 1")
        if not self.eps > 0:
            raise GeometricError(f"eps={self.eps} must be positive")


_BINOMIAL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _downsample(img: np.ndarray) -> np.ndarray:
    # 5-tap binomial smoothing (replicated borders), then drop every
    # other sample; pixel (i, j) of the result sits at (2i, 2j) above
    sm = convolve1d(img, _BINOMIAL, axis=0, mode="nearest")
    sm = convolve1d(sm, _BINOMIAL, axis=1, mode="nearest")
    return np.ascontiguousarray(sm[::2, ::2])


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(1, levels):
        pyr.append(_downsample(pyr[-1]))
    return pyr


def _clamped_levels(rows: int, cols: int, opts: TrackerOptions) -> int:
    # the coarsest image must still hold the window plus a border pixel
    levels = opts.levels
    while levels > 1 and min(rows, cols) // 2 ** (levels - 1) < opts.window + 2:
        levels -= 1
    return levels


def _bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Sample img at float (y, x) arrays; caller keeps coords in bounds."""
    rows, cols = img.shape
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, rows - 2)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, cols - 2)
    fy = ys - y0
    fx = xs - x0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x0 + 1] * fx
    bot = img[y0 + 1, x0] * (1.0 - fx) + img[y0 + 1, x0 + 1] * fx
    return top * (1.0 - fy) + bot * fy


def _min_eig_2x2(a, b, c):
    mid = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return mid - rad


def track_pyramidal_lk(frames, grid: GridModel,
                       opts: TrackerOptions | None = None) -> Trajectory:
    """Follow the grid points frame to frame with pyramidal Lucas-Kanade.

    Consecutive frame pairs are processed in order; within a pair every
    point is refined coarse to fine, each level running Newton iterations
    on the window mismatch until the update drops below eps.  The level
    count is clamped so the window still fits the coarsest image.

    A point is marked lost at the finest level when its spatial-gradient
    matrix G has minimum eigenvalue below 1e-4 times the window area
    (aperture degenerate) or its window leaves the frame; lost points
    freeze at their last valid position.  At coarser levels an
    out-of-bounds or degenerate window only skips that level's
    refinement.
    """
    if opts is None:
        opts = TrackerOptions()
    frames = [mk.as_matrix(fr, f"frame {i}") for i, fr in enumerate(frames)]
    if len(frames) < 2:
        raise TooFewFramesError(f"need at least 2 frames, got {len(frames)}")
    rows, cols = frames[0].shape
    for i, fr in enumerate(frames[1:], start=1):
        if fr.shape != (rows, cols):
            raise FrameSizeMismatchError(
                f"frame {i} is {fr.shape}, frame 0 is {(rows, cols)}"
            )
    if grid.frame_size != (rows, cols):
        raise GridOutOfBoundsError(
            f"grid was placed on {grid.frame_size}, frames are {(rows, cols)}"
        )
    hw = opts.window // 2
    grid.require_margin(hw)

    levels = _clamped_levels(rows, cols, opts)
    npts = GRID_POINT_COUNT
    off = np.arange(-hw, hw + 1, dtype=float)
    oy, ox = np.meshgrid(off, off, indexing="ij")
    window_area = float(opts.window * opts.window)
    eig_floor = 1e-4 * window_area

    f = len(frames)
    positions = np.empty((f, npts, 2))
    positions[0] = grid.points
    lost = np.zeros((f, npts), dtype=bool)

    pyr_prev = _pyramid(frames[0], levels)
    for t in range(1, f):
        pyr_next = _pyramid(frames[t], levels)
        cur = positions[t - 1]
        frozen = lost[t - 1].copy()
        newly_lost = np.zeros(npts, dtype=bool)
        g = np.zeros((npts, 2))
        for lev in reversed(range(levels)):
            img_i = pyr_prev[lev]
            img_j = pyr_next[lev]
            lr, lc = img_i.shape
            gy, gx = np.gradient(img_i)
            p = cur / 2.0 ** lev
            in_i = ((p[:, 0] >= hw) & (p[:, 0] <= lc - 1 - hw)
                    & (p[:, 1] >= hw) & (p[:, 1] <= lr - 1 - hw))
            skip = frozen | ~in_i
            if lev == 0:
                newly_lost |= ~in_i & ~frozen

            xs = p[:, 0, None, None] + ox
            ys = p[:, 1, None, None] + oy
            iw = _bilinear(img_i, ys, xs)
            gxw = _bilinear(gx, ys, xs)
            gyw = _bilinear(gy, ys, xs)
            ga = np.einsum("pij,pij->p", gxw, gxw)
            gb = np.einsum("pij,pij->p", gxw, gyw)
            gc = np.einsum("pij,pij->p", gyw, gyw)
            degenerate = _min_eig_2x2(ga, gb, gc) < eig_floor
            if lev == 0:
                newly_lost |= degenerate & ~skip
            skip = skip | degenerate
            det = np.where(skip, 1.0, ga * gc - gb * gb)
            det = np.where(det == 0.0, 1.0, det)

            v = np.zeros((npts, 2))
            done = skip.copy()
            for _ in range(opts.max_iters):
                if done.all():
                    break
                qx = p[:, 0] + g[:, 0] + v[:, 0]
                qy = p[:, 1] + g[:, 1] + v[:, 1]
                out_j = ((qx < hw) | (qx > lc - 1 - hw)
                         | (qy < hw) | (qy > lr - 1 - hw))
                drift = out_j & ~done
                if drift.any():
                    if lev == 0:
                        newly_lost |= drift & ~frozen
                    done |= drift
                    if done.all():
                        break
                jw = _bilinear(img_j, qy[:, None, None] + oy,
                               qx[:, None, None] + ox)
                di = iw - jw
                bx = np.einsum("pij,pij->p", di, gxw)
                by = np.einsum("pij,pij->p", di, gyw)
                dvx = (gc * bx - gb * by) / det
                dvy = (ga * by - gb * bx) / det
                act = ~done
                v[act, 0] += dvx[act]
                v[act, 1] += dvy[act]
                small = np.hypot(dvx, dvy) < opts.eps
                done |= small
            g = g + v
            if lev > 0:
                g *= 2.0

        lost[t] = lost[t - 1] | newly_lost
        moved = ~lost[t]
        positions[t] = positions[t - 1]
        positions[t, moved] = cur[moved] + g[moved]
        pyr_prev = pyr_next

    return Trajectory(positions, lost)


def recover_lost_points(traj: Trajectory, grid: GridModel) -> Trajectory:
    """Re-estimate lost positions from their surviving grid neighbors.

    Frames are processed in order; a lost point at frame t moves from
    its (possibly recovered) frame t-1 position by the mean frame-to-
    frame displacement of its 4 nearest non-lost grid neighbors, nearest
    measured on the first-frame layout.  Non-lost entries are returned
    untouched and the lost mask is preserved for reporting.
    """
    pos = traj.positions.copy()
    mask = traj.lost_mask
    base = grid.points
    for t in range(1, traj.frame_count):
        lost_here = np.flatnonzero(mask[t])
        if lost_here.size == 0:
            continue
        ok = np.flatnonzero(~mask[t])
        if ok.size == 0:
            raise AllPointsLostError(f"frame {t} has no tracked points left")
        step = pos[t, ok] - pos[t - 1, ok]
        for i in lost_here:
            d2 = np.sum((base[ok] - base[i]) ** 2, axis=1)
            nbrs = np.argsort(d2, kind="stable")[:4]
            pos[t, i] = pos[t - 1, i] + step[nbrs].mean(axis=0)
    return Trajectory(pos, mask.copy())


def displacement_features(traj: Trajectory) -> np.ndarray:
    """Displacement matrix: 226 x (f - 1), all relative to frame 1.

    Row 2i is point i's dx, row 2i+1 its dy; column r holds frame r+2's
    offsets from frame 1.  Frame 1 itself is the zero reference and gets
    no column.
    """
    if traj.frame_count < 2:
        raise TooFewFramesError("displacements need at least 2 frames")
    d = traj.positions[1:] - traj.positions[0]
    return d.transpose(1, 2, 0).reshape(2 * GRID_POINT_COUNT, -1)


def reduce_geometric(displacements, labels, d_r: int, d_c: int,
                     opts: subspace.HldaOptions | None = None,
                     method: str = "2dhlda") -> subspace.BidirectionalReducer:
    """Fit the two-sided reduction on a labeled set of displacement
    matrices; a thin wrapper treating them as a single-channel grid."""
    arr = np.asarray(displacements, dtype=float)
    if arr.ndim != 3:
        raise GeometricError(
            f"expected (N, rows, cols) displacement stack, got shape {arr.shape}"
        )
    return subspace.fit_bidirectional(arr[:, None, None], labels, d_r, d_c,
                                      opts=opts, method=method)


def geometric_features(displacements, reducer: subspace.BidirectionalReducer):
    """Project displacement matrices and flatten row-major: (N, d_r * d_c)."""
    arr = np.asarray(displacements, dtype=float)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    feats = subspace.concat_features(arr[:, None, None], reducer)
    return feats[0] if single else feats

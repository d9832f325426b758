"""Experiment harness: dataset files, synthesis, cross-validation, reports.

Everything downstream of raw pixels lives in the other modules; this one
owns the plumbing around them. A dataset on disk is a directory of class
folders (``1_surprise`` through ``6_disgust``), each holding one folder
per sequence with binary 8-bit PGM frames, an optional ``meta.txt`` and
an optional landmark-grid sidecar. The same layout is what the synthetic
generator writes, so generated and ingested data flow through identical
code paths.
"""

from __future__ import annotations

import os
import re
import warnings
import zlib
from dataclasses import dataclass, field
from dataclasses import replace as dc_replace

import numpy as np

from . import classifiers as cl
from . import gabor
from . import geometric as geo
from . import subspace as sub


class PipelineError(ValueError):
    """Base for harness failures."""


class MissingFramesError(PipelineError):
    """A sequence directory has a gap in its frame numbering."""


class UnreadableImageError(PipelineError):
    """A frame file is not a valid binary 8-bit PGM."""


class BadClassNameError(PipelineError):
    """A class directory is not one of the six expected names."""


class MetadataError(PipelineError):
    """A meta.txt sidecar could not be parsed."""


class InsufficientSamplesPerClassError(PipelineError):
    """A class has fewer sequences than the fold count."""


class ConfigError(PipelineError):
    """A run configuration file or value is invalid."""


CLASS_NAMES = ("surprise", "gloomy", "fear", "happy", "angry", "disgust")
CLASS_LETTERS = ("S", "G", "F", "H", "A", "D")
N_CLASSES = len(CLASS_NAMES)
METHODS = ("2dlda-lda", "2dhlda", "proposed", "proposed-geo", "proposed-fusion")

_CLASS_DIRS = tuple(f"{i + 1}_{name}" for i, name in enumerate(CLASS_NAMES))
_FRAME_RE = re.compile(r"^frame_(\d+)\.pgm$")


# --------------------------------------------------------------------------
# domain types


@dataclass
class SequenceRecord:
    """One expression sequence: frames in [0, 1], a class label in 1..6,
    the fraction of full expression intensity the sequence reaches, and
    an optional landmark grid on the first frame."""

    id: str
    frames: list
    label: int
    intensity_fraction: float = 1.0
    grid: geo.GridModel | None = None

    def __post_init__(self):
        if not self.frames:
            raise PipelineError(f"sequence {self.id!r} has no frames")
        self.frames = [np.asarray(fr, dtype=float) for fr in self.frames]
        shape = self.frames[0].shape
        for i, fr in enumerate(self.frames):
            if fr.ndim != 2 or fr.shape != shape:
                raise PipelineError(
                    f"sequence {self.id!r}: frame {i} has shape {fr.shape}, "
                    f"expected {shape}"
                )
        self.label = int(self.label)
        if not 1 <= self.label <= N_CLASSES:
            raise PipelineError(f"label {self.label} outside 1..{N_CLASSES}")
        self.intensity_fraction = float(self.intensity_fraction)
        if not 0.0 < self.intensity_fraction <= 1.0:
            raise PipelineError(
                f"intensity_fraction {self.intensity_fraction} outside (0, 1]"
            )

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.frames[0].shape


@dataclass
class ConfusionMatrix:
    """Row = true class, column = predicted; entries may be fractional
    (the recognition-rate convention divides by the entry sum)."""

    counts: np.ndarray
    total: float

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (N_CLASSES, N_CLASSES):
            raise PipelineError(
                f"confusion counts must be {N_CLASSES}x{N_CLASSES}, "
                f"got {self.counts.shape}"
            )
        if np.any(self.counts < 0):
            raise PipelineError("confusion counts must be non-negative")
        self.total = float(self.total)
        if abs(self.counts.sum() - self.total) > 1e-9:
            raise PipelineError(
                f"entry sum {self.counts.sum()} does not match total {self.total}"
            )

    @classmethod
    def from_counts(cls, counts) -> "ConfusionMatrix":
        counts = np.asarray(counts, dtype=float)
        return cls(counts=counts, total=float(counts.sum()))

    @classmethod
    def from_predictions(cls, true_labels, predicted) -> "ConfusionMatrix":
        true_labels = np.asarray(true_labels, dtype=int)
        predicted = np.asarray(predicted, dtype=int)
        counts = np.zeros((N_CLASSES, N_CLASSES))
        for t, p in zip(true_labels, predicted):
            counts[t - 1, p - 1] += 1.0
        return cls(counts=counts, total=float(true_labels.size))

    def add(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(counts=self.counts + other.counts,
                               total=self.total + other.total)

    def rate(self) -> float:
        """Average recognition rate: 100 * trace / entry sum."""
        return 100.0 * float(np.trace(self.counts)) / float(self.counts.sum())


@dataclass
class RunConfig:
    """Everything a run needs, desk-scale by default: small frames and a
    3x3 kernel bank keep the full cross-validation suite in minutes."""

    frame_rows: int = 48
    frame_cols: int = 36
    frames_per_sequence: int = 5
    seqs_per_class: int = 20
    folds: int = 4
    seed: int = 0
    gabor: gabor.GaborConfig = field(default_factory=gabor.GaborConfig)
    d_r: int = 12
    d_c: int = 9
    lda_out: int = 20
    geo_d_r: int = 12
    geo_d_c: int = 4
    # ridge for the geometric reduction; sequences are normalized to unit
    # displacement norm before this fit, so the scale-relative auto rule
    # lands sensibly
    geo_ridge: object = "auto"
    # desk-scale ascent: single start and a modest cap; with 160 channel
    # fits per fold the multistart search buys nothing classification cares
    # about, and neither do objective crumbs past a few dozen iterations
    hlda: sub.HldaOptions = field(
        default_factory=lambda: sub.HldaOptions(max_iters=30, multistart=False))
    tracker: geo.TrackerOptions = field(
        default_factory=lambda: geo.TrackerOptions(window=9))
    tree: cl.TreeOptions = field(default_factory=cl.TreeOptions)
    svm_c: float = 10.0
    svm_gamma: float | None = None  # None: 1 / feature dimension
    svm_tol: float = 1e-3

    def __post_init__(self):
        if self.frame_rows < 4 or self.frame_cols < 4:
            raise ConfigError("frame size must be at least 4x4")
        if self.frames_per_sequence < 2:
            raise ConfigError("frames_per_sequence must be >= 2")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.seqs_per_class < 1:
            raise ConfigError("seqs_per_class must be >= 1")

    @property
    def frame_size(self) -> tuple[int, int]:
        return (self.frame_rows, self.frame_cols)


# --------------------------------------------------------------------------
# configuration files

# dotted key -> (section object getter, attribute, parser)
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_ridge(text: str):
    return "auto" if text.strip() == "auto" else float(text)


def _parse_gamma(text: str):
    return None if text.strip() == "auto" else float(text)


def _parse_float_tuple(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


_CONFIG_KEYS = {
    "data.frame_rows": ("", "frame_rows", int),
    "data.frame_cols": ("", "frame_cols", int),
    "data.frames_per_sequence": ("", "frames_per_sequence", int),
    "data.seqs_per_class": ("", "seqs_per_class", int),
    "data.folds": ("", "folds", int),
    "data.seed": ("", "seed", int),
    "gabor.scales": ("gabor", "scales", _parse_float_tuple),
    "gabor.orientations": ("gabor", "orientations", _parse_float_tuple),
    "gabor.sigma": ("gabor", "sigma", float),
    "gabor.kernel_size": ("gabor", "kernel_size", int),
    "dims.d_r": ("", "d_r", int),
    "dims.d_c": ("", "d_c", int),
    "dims.lda_out": ("", "lda_out", int),
    "geo.d_r": ("", "geo_d_r", int),
    "geo.d_c": ("", "geo_d_c", int),
    "geo.ridge": ("", "geo_ridge", _parse_ridge),
    "hlda.max_iters": ("hlda", "max_iters", int),
    "hlda.step": ("hlda", "step", float),
    "hlda.tol": ("hlda", "tol", float),
    "hlda.ridge": ("hlda", "ridge", _parse_ridge),
    "hlda.multistart": ("hlda", "multistart", _parse_bool),
    "tracker.levels": ("tracker", "levels", int),
    "tracker.window": ("tracker", "window", int),
    "tracker.max_iters": ("tracker", "max_iters", int),
    "tracker.eps": ("tracker", "eps", float),
    "tree.depth": ("tree", "depth", int),
    "tree.epochs": ("tree", "epochs", int),
    "tree.lr": ("tree", "lr", float),
    "svm.c": ("", "svm_c", float),
    "svm.gamma": ("", "svm_gamma", _parse_gamma),
    "svm.tol": ("", "svm_tol", float),
}


def parse_config(text: str) -> RunConfig:
    """Parse flat ``section.key = value`` lines into a RunConfig.

    Blank lines and ``#`` comments are ignored; unknown keys are errors so
    typos fail loudly instead of silently running the defaults.
    """
    top: dict = {}
    sections: dict = {"gabor": {}, "hlda": {}, "tracker": {}, "tree": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, attr, parser = _CONFIG_KEYS[key]
        try:
            parsed = parser(value.strip())
        except ValueError as e:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {e}") from e
        if section:
            sections[section][attr] = parsed
        else:
            top[attr] = parsed
    try:
        if sections["gabor"]:
            top["gabor"] = gabor.GaborConfig(**sections["gabor"])
        if sections["hlda"]:
            top["hlda"] = sub.HldaOptions(**sections["hlda"])
        if sections["tracker"]:
            tracker_kwargs = {"window": 9}
            tracker_kwargs.update(sections["tracker"])
            top["tracker"] = geo.TrackerOptions(**tracker_kwargs)
        if sections["tree"]:
            top["tree"] = cl.TreeOptions(**sections["tree"])
        return RunConfig(**top)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def format_config(config: RunConfig) -> str:
    """Serialize a RunConfig as config-file text; floats round-trip."""

    def f(v: float) -> str:
        return f"{float(v):.17g}"

    lines = [
        f"data.frame_rows = {config.frame_rows}",
        f"data.frame_cols = {config.frame_cols}",
        f"data.frames_per_sequence = {config.frames_per_sequence}",
        f"data.seqs_per_class = {config.seqs_per_class}",
        f"data.folds = {config.folds}",
        f"data.seed = {config.seed}",
        "gabor.scales = " + ",".join(f(s) for s in config.gabor.scales),
        "gabor.orientations = " + ",".join(f(t) for t in config.gabor.orientations),
        f"gabor.sigma = {f(config.gabor.sigma)}",
        f"gabor.kernel_size = {config.gabor.kernel_size}",
        f"dims.d_r = {config.d_r}",
        f"dims.d_c = {config.d_c}",
        f"dims.lda_out = {config.lda_out}",
        f"geo.d_r = {config.geo_d_r}",
        f"geo.d_c = {config.geo_d_c}",
        "geo.ridge = " + ("auto" if isinstance(config.geo_ridge, str)
                          else f(config.geo_ridge)),
        f"hlda.max_iters = {config.hlda.max_iters}",
        f"hlda.step = {f(config.hlda.step)}",
        f"hlda.tol = {f(config.hlda.tol)}",
        "hlda.ridge = " + ("auto" if isinstance(config.hlda.ridge, str)
                           else f(config.hlda.ridge)),
        f"hlda.multistart = {'true' if config.hlda.multistart else 'false'}",
        f"tracker.levels = {config.tracker.levels}",
        f"tracker.window = {config.tracker.window}",
        f"tracker.max_iters = {config.tracker.max_iters}",
        f"tracker.eps = {f(config.tracker.eps)}",
        f"tree.depth = {config.tree.depth}",
        f"tree.epochs = {config.tree.epochs}",
        f"tree.lr = {f(config.tree.lr)}",
        f"svm.c = {f(config.svm_c)}",
        "svm.gamma = " + ("auto" if config.svm_gamma is None
                          else f(config.svm_gamma)),
        f"svm.tol = {f(config.svm_tol)}",
    ]
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# --------------------------------------------------------------------------
# PGM files


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM (P5) into a float array scaled to [0, 1]."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise UnreadableImageError(f"{path}: {e}") from e
    return _decode_pgm(data, str(path))


def _decode_pgm(data: bytes, name: str) -> np.ndarray:
    pos = 0

    def token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos:pos + 1]
            if ch == b"#":  # comment runs to end of line
                while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnreadableImageError(f"{name}: truncated header")
        return data[start:pos]

    magic = token()
    if magic != b"P5":
        raise UnreadableImageError(f"{name}: not a binary PGM (magic {magic!r})")
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except (ValueError, UnreadableImageError) as e:
        raise UnreadableImageError(f"{name}: bad header: {e}") from e
    if width <= 0 or height <= 0:
        raise UnreadableImageError(f"{name}: bad dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise UnreadableImageError(
            f"{name}: maxval {maxval} is not 8-bit grayscale")
    pos += 1  # single whitespace byte separates header from raster
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise UnreadableImageError(
            f"{name}: raster has {len(raster)} bytes, expected {width * height}")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return img.astype(float) / float(maxval)


def write_pgm(path, img: np.ndarray) -> None:
    """Write an array in [0, 1] as a binary 8-bit PGM."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise PipelineError(f"image must be 2-D, got shape {img.shape}")
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def bilinear_resize(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Resize with corner-aligned bilinear sampling; identity when the
    size already matches."""
    img = np.asarray(img, dtype=float)
    rows, cols = img.shape
    out_rows, out_cols = int(size[0]), int(size[1])
    if (rows, cols) == (out_rows, out_cols):
        return img.copy()

    def axis_coords(n_out, n_in):
        if n_out == 1:
            return np.zeros(1)
        return np.arange(n_out) * ((n_in - 1) / (n_out - 1))

    r = axis_coords(out_rows, rows)
    c = axis_coords(out_cols, cols)
    r0 = np.minimum(np.floor(r).astype(int), rows - 2) if rows > 1 else np.zeros(out_rows, int)
    c0 = np.minimum(np.floor(c).astype(int), cols - 2) if cols > 1 else np.zeros(out_cols, int)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    r1 = np.minimum(r0 + 1, rows - 1)
    c1 = np.minimum(c0 + 1, cols - 1)
    top = img[np.ix_(r0, c0)] * (1 - fc) + img[np.ix_(r0, c1)] * fc
    bot = img[np.ix_(r1, c0)] * (1 - fc) + img[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def _scale_grid(grid: geo.GridModel, size: tuple[int, int]) -> geo.GridModel:
    """Map a grid onto a resized frame with the same corner-aligned rule."""
    old_r, old_c = grid.frame_size
    new_r, new_c = int(size[0]), int(size[1])
    if (old_r, old_c) == (new_r, new_c):
        return grid
    sx = (new_c - 1) / (old_c - 1) if old_c > 1 else 0.0
    sy = (new_r - 1) / (old_r - 1) if old_r > 1 else 0.0
    pts = grid.points * np.array([sx, sy])
    return geo.GridModel(points=pts, frame_size=(new_r, new_c))


# --------------------------------------------------------------------------
# dataset ingestion and writing


def _read_meta(path) -> dict:
    meta: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MetadataError(f"{path} line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def _load_sequence(seq_dir: str, seq_id: str) -> list:
    """Read and order the frames of one sequence directory."""
    indices = {}
    for entry in os.listdir(seq_dir):
        m = _FRAME_RE.match(entry)
        if m:
            indices[int(m.group(1))] = entry
    if not indices:
        raise MissingFramesError(f"sequence {seq_id!r}: no frame_*.pgm files")
    order = sorted(indices)
    for prev, cur in zip(order, order[1:]):
        if cur != prev + 1:
            raise MissingFramesError(
                f"sequence {seq_id!r}: frame indices jump from {prev} to {cur}"
            )
    return [read_pgm(os.path.join(seq_dir, indices[i])) for i in order]


def ingest_dataset(root_dir, config: RunConfig | None = None) -> list:
    """Load every sequence under a dataset root, sorted by class then id.

    Class directories must be named ``1_surprise`` .. ``6_disgust``; any
    other directory name in the root is an error. When a config is given,
    frames are resized to its frame size and landmark grids are scaled to
    match. An empty root yields an empty list with a warning.
    """
    try:
        entries = sorted(os.listdir(root_dir))
    except OSError as e:
        raise PipelineError(f"cannot read dataset root {root_dir}: {e}") from e

    class_dirs = []
    for entry in entries:
        full = os.path.join(root_dir, entry)
        if not os.path.isdir(full):
            continue
        if entry not in _CLASS_DIRS:
            raise BadClassNameError(
                f"unexpected class directory {entry!r}; expected one of "
                + ", ".join(_CLASS_DIRS)
            )
        class_dirs.append((entry, full))
    if not class_dirs:
        warnings.warn(f"dataset root {root_dir} contains no class directories",
                      stacklevel=2)
        return []

    records = []
    for entry, full in class_dirs:
        label = int(entry.split("_", 1)[0])
        for seq_id in sorted(os.listdir(full)):
            seq_dir = os.path.join(full, seq_id)
            if not os.path.isdir(seq_dir):
                continue
            frames = _load_sequence(seq_dir, seq_id)
            native = frames[0].shape
            for i, fr in enumerate(frames):
                if fr.shape != native:
                    raise UnreadableImageError(
                        f"sequence {seq_id!r}: frame {i} is {fr.shape}, "
                        f"others are {native}"
                    )

            fraction = 1.0
            meta_path = os.path.join(seq_dir, "meta.txt")
            if os.path.exists(meta_path):
                meta = _read_meta(meta_path)
                if "intensity_fraction" in meta:
                    try:
                        fraction = float(meta["intensity_fraction"])
                    except ValueError as e:
                        raise MetadataError(
                            f"{meta_path}: bad intensity_fraction "
                            f"{meta['intensity_fraction']!r}") from e

            grid = None
            grid_path = os.path.join(full, seq_id + ".grid")
            if os.path.exists(grid_path):
                grid = geo.read_grid(grid_path, native)

            if config is not None and native != config.frame_size:
                frames = [bilinear_resize(fr, config.frame_size) for fr in frames]
                if grid is not None:
                    grid = _scale_grid(grid, config.frame_size)

            records.append(SequenceRecord(id=seq_id, frames=frames, label=label,
                                          intensity_fraction=fraction, grid=grid))
    records.sort(key=lambda r: (r.label, r.id))
    return records


def write_dataset(records, root_dir) -> None:
    """Write records in the ingestion layout (PGM frames, meta, grids)."""
    os.makedirs(root_dir, exist_ok=True)
    for rec in records:
        class_dir = os.path.join(root_dir, _CLASS_DIRS[rec.label - 1])
        seq_dir = os.path.join(class_dir, rec.id)
        os.makedirs(seq_dir, exist_ok=True)
        for i, frame in enumerate(rec.frames):
            write_pgm(os.path.join(seq_dir, f"frame_{i:03d}.pgm"), frame)
        with open(os.path.join(seq_dir, "meta.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"intensity_fraction={rec.intensity_fraction:.17g}\n")
        if rec.grid is not None:
            geo.write_grid(os.path.join(class_dir, rec.id + ".grid"), rec.grid)


# --------------------------------------------------------------------------
# synthetic data

_INTENSITY_CHOICES = (0.25, 0.5, 0.75, 1.0)


def _smooth_texture(rng: np.random.Generator, rows: int, cols: int,
                    n_waves: int = 14) -> np.ndarray:
    """Band-limited random texture with enough gradient for the tracker.

    The band reaches about six cycles across the frame so every tracking
    window sees structure in both axes; the lost-point eigenvalue floor
    eats anything much smoother.
    """
    y, x = np.mgrid[0:rows, 0:cols].astype(float)
    img = np.zeros((rows, cols))
    for _ in range(n_waves):
        fy = rng.uniform(1.0, 6.0) / rows
        fx = rng.uniform(1.0, 6.0) / cols
        if rng.random() < 0.5:
            fy = -fy
        phase = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        img += amp * np.sin(2 * np.pi * (fy * y + fx * x) + phase)
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return 0.15 + 0.7 * img


def _class_motion_basis() -> np.ndarray:
    """Six affine motion fields, one per class, pairwise well separated.

    Row c holds (a, b, tx, c2, d, ty): the displacement at normalized
    coordinates (u, v) in [-1, 1]^2 is (a u + b v + tx, c2 u + d v + ty)
    pixels at full expression intensity.
    """
    return np.array([
        [1.8, 0.0, 0.0, 0.0, 1.8, 0.0],      # radial expansion
        [-1.8, 0.0, 0.0, 0.0, -1.8, 0.0],    # radial contraction
        [0.0, 1.6, 0.0, 1.6, 0.0, 0.0],      # pure shear
        [0.0, 0.0, 1.9, 0.0, 0.0, -1.1],     # rigid up-right drift
        [1.6, 0.0, 0.0, 0.0, -1.6, 0.0],     # horizontal stretch, vertical squeeze
        [0.0, -1.5, 0.0, 1.5, 0.0, 0.0],     # rotation-like swirl
    ])


def _appearance_patterns(rows: int, cols: int, count: int = 12) -> np.ndarray:
    """Unit-norm grating patterns with distinct orientations and bands."""
    y, x = np.mgrid[0:rows, 0:cols].astype(float)
    u = x / max(cols - 1, 1)
    v = y / max(rows - 1, 1)
    patterns = []
    for c in range(count):
        theta = np.pi * c / count
        freq = 2.0 + 0.35 * c
        g = np.sin(2 * np.pi * freq * (u * np.cos(theta) + v * np.sin(theta)))
        patterns.append(g / np.linalg.norm(g))
    return np.array(patterns)


def _warp_field(field_params: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Evaluate an affine displacement field on the pixel lattice; returns
    (2, rows, cols) as (dx, dy)."""
    y, x = np.mgrid[0:rows, 0:cols].astype(float)
    u = 2.0 * x / max(cols - 1, 1) - 1.0
    v = 2.0 * y / max(rows - 1, 1) - 1.0
    a, b, tx, c2, d, ty = field_params
    return np.stack([a * u + b * v + tx, c2 * u + d * v + ty])


def _sample_bilinear(img: np.ndarray, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    rows, cols = img.shape
    yy = np.clip(yy, 0.0, rows - 1.0)
    xx = np.clip(xx, 0.0, cols - 1.0)
    y0 = np.minimum(yy.astype(int), rows - 2) if rows > 1 else np.zeros_like(yy, int)
    x0 = np.minimum(xx.astype(int), cols - 2) if cols > 1 else np.zeros_like(xx, int)
    fy = yy - y0
    fx = xx - x0
    y1 = np.minimum(y0 + 1, rows - 1)
    x1 = np.minimum(x0 + 1, cols - 1)
    return (img[y0, x0] * (1 - fy) * (1 - fx) + img[y0, x1] * (1 - fy) * fx
            + img[y1, x0] * fy * (1 - fx) + img[y1, x1] * fy * fx)


def gen_synthetic(config: RunConfig, seed: int) -> list:
    """Generate a six-class synthetic expression dataset.

    Each class pairs a distinct affine motion field (what the tracker
    sees) with a distinct appearance direction whose coefficient variance
    differs per class (so class covariances are unequal by construction).
    Half of the sources are emitted twice, once at full intensity and once
    at a reduced ``intensity_fraction``; a variant record's id shares the
    source id before the ``#`` so fold assignment keeps them together.
    Output is deterministic per (config, seed).
    """
    rng = np.random.default_rng(seed)
    rows, cols = config.frame_size
    f = config.frames_per_sequence
    motion = _class_motion_basis()
    patterns = _appearance_patterns(rows, cols)
    base_grid = geo.oval_grid((rows, cols), margin=max(8.0, config.tracker.window))

    # one shared face for the whole dataset; subjects perturb it mildly,
    # so within-class appearance variance stays small enough for the
    # class-specific component to be learnable
    base_face = _smooth_texture(rng, rows, cols)

    # per-class appearance statistics over the grating dictionary: class c
    # has a moderate mean along pattern c and a large coefficient variance
    # along two other patterns of its own choosing, tight noise elsewhere;
    # the per-class covariances are therefore strongly anisotropic in
    # different directions, exactly the regime where a pooled within-class
    # scatter misleads the projection fit
    n_pat = patterns.shape[0]
    own_gain = np.array([0.9, 0.75, 1.0, 0.7, 0.85, 0.8])
    wide_dirs = np.array([[6, 7], [8, 9], [10, 11], [6, 9], [7, 10], [8, 11]])
    wide_sigma = np.array([2.2, 1.6, 1.9, 1.3, 1.75, 2.0])
    tight_sigma = 0.12

    records = []
    n_sources = (config.seqs_per_class + 1) // 2
    for label in range(1, N_CLASSES + 1):
        c = label - 1
        emitted = 0
        for src in range(n_sources):
            subject = _smooth_texture(rng, rows, cols)
            texture = np.clip(base_face + 0.22 * (subject - subject.mean()),
                              0.02, 0.98)
            field = _warp_field(motion[c], rows, cols)
            field = field * (1.0 + 0.07 * rng.standard_normal())
            field += 0.10 * rng.standard_normal((2, 1, 1))
            coef = tight_sigma * rng.standard_normal(n_pat)
            coef[c] += own_gain[c] * (1.0 + 0.25 * rng.standard_normal())
            coef[wide_dirs[c]] += wide_sigma[c] * rng.standard_normal(2)
            appearance = coef @ patterns.reshape(n_pat, -1)
            appearance = appearance.reshape(rows, cols)

            variants = [1.0]
            if emitted + 2 <= config.seqs_per_class:
                variants.append(float(rng.choice(_INTENSITY_CHOICES[:-1])))
            noise = rng.standard_normal((len(variants), f, rows, cols))

            y, x = np.mgrid[0:rows, 0:cols].astype(float)
            for vi, fraction in enumerate(variants):
                frames = []
                for t in range(f):
                    prog = fraction * t / (f - 1)
                    img = _sample_bilinear(texture,
                                           y - prog * field[1],
                                           x - prog * field[0])
                    img = img + prog * appearance + 0.01 * noise[vi, t]
                    frames.append(np.clip(img, 0.0, 1.0))
                seq_id = f"c{label}s{src:02d}#f{int(round(fraction * 100)):03d}"
                records.append(SequenceRecord(
                    id=seq_id, frames=frames, label=label,
                    intensity_fraction=fraction, grid=base_grid))
                emitted += 1
                if emitted >= config.seqs_per_class:
                    break
            if emitted >= config.seqs_per_class:
                break
    records.sort(key=lambda r: (r.label, r.id))
    return records


# --------------------------------------------------------------------------
# folds


def assign_folds(records, folds: int) -> np.ndarray:
    """Deterministic stratified fold labels, one per record.

    Within each class the distinct source ids (the id up to any ``#``)
    are ordered by their CRC-32 and dealt round-robin, so folds are
    balanced per class and intensity variants of one source always land
    in the same fold. No RNG: the same data always splits the same way.
    """
    folds = int(folds)
    if folds < 2:
        raise ConfigError(f"folds={folds} must be >= 2")
    out = np.zeros(len(records), dtype=int)
    by_class: dict = {}
    for idx, rec in enumerate(records):
        by_class.setdefault(rec.label, []).append(idx)
    for label, indices in sorted(by_class.items()):
        if len(indices) < folds:
            raise InsufficientSamplesPerClassError(
                f"class {label} has {len(indices)} sequences, needs >= {folds}"
            )
        bases = sorted({records[i].id.split("#", 1)[0] for i in indices})
        order = sorted(bases, key=lambda b: (zlib.crc32(b.encode("utf-8")), b))
        fold_of = {base: k % folds for k, base in enumerate(order)}
        for i in indices:
            out[i] = fold_of[records[i].id.split("#", 1)[0]]
    return out


# --------------------------------------------------------------------------
# shared representations

# appearance kernel responses and tracked displacements depend only on the
# data and config, not on the fold split or the method, so they are
# computed once per dataset and shared


@dataclass
class Representations:
    app_grids: np.ndarray    # (N, p, f, rows, cols) kernel responses
    disp: np.ndarray         # (N, 2 * grid points, f - 1) tracked displacements
    labels: np.ndarray       # (N,) class labels 1..6
    fractions: np.ndarray    # (N,) intensity fractions


def compute_representations(records, config: RunConfig) -> Representations:
    if not records:
        raise PipelineError("no records to represent")
    bank = gabor.make_bank(config.gabor)
    app = []
    disp = []
    default_grid = None
    for rec in records:
        if rec.frame_size != config.frame_size:
            raise PipelineError(
                f"sequence {rec.id!r} is {rec.frame_size}, config wants "
                f"{config.frame_size}; ingest with the config to resize"
            )
        app.append(gabor.represent_sequence(bank, rec.frames))
        grid = rec.grid
        if grid is None:
            if default_grid is None:
                default_grid = geo.oval_grid(config.frame_size,
                                             margin=max(8.0, config.tracker.window))
            grid = default_grid
        traj = geo.track_pyramidal_lk(rec.frames, grid, config.tracker)
        traj = geo.recover_lost_points(traj, grid)
        disp.append(geo.displacement_features(traj))
    return Representations(
        app_grids=np.array(app),
        disp=np.array(disp),
        labels=np.array([r.label for r in records], dtype=int),
        fractions=np.array([r.intensity_fraction for r in records]),
    )


# --------------------------------------------------------------------------
# method fitting


@dataclass
class FittedMethod:
    """Everything needed to classify new sequences under one method."""

    method: str
    app_reducer: sub.BidirectionalReducer | None = None
    geo_reducer: sub.BidirectionalReducer | None = None
    svm: cl.SvmModel | None = None
    fusion: cl.FusionModel | None = None
    feat_scale: tuple | None = None  # (mean, std) in front of the RBF machine
    geo_scale: tuple | None = None   # (mean, std) for fusion tree inputs
    app_scale: tuple | None = None


def _fit_stacked_reducer(grids: np.ndarray, labels: np.ndarray,
                         config: RunConfig) -> sub.BidirectionalReducer:
    """Single-direction fit on all channels stacked vertically: one shared
    column projection, no row side (identity sentinel)."""
    n, p, f, m, cols = grids.shape
    tall = grids.reshape(n, p * f * m, cols)
    scat = sub.compute_scatters(sub.LabeledMatrixSet(tall, labels))
    w = sub.fit_2dhlda(scat, config.d_c, config.hlda)
    return sub.BidirectionalReducer(
        p=1, f=1, m=p * f * m, n=cols, d_r=0, d_c=config.d_c,
        v_grid=np.zeros((1, 1, p * f * m, 0)), w_grid=w[None, None], lda=None)


def _stacked_features(grids: np.ndarray,
                      reducer: sub.BidirectionalReducer) -> np.ndarray:
    n = grids.shape[0]
    tall = grids.reshape(n, reducer.m, reducer.n)
    return sub.concat_features(tall[:, None, None], reducer)


def _app_features(grids: np.ndarray, reducer: sub.BidirectionalReducer) -> np.ndarray:
    feats = sub.concat_features(grids, reducer)
    if reducer.lda is not None:
        feats = sub.lda_transform(reducer.lda, feats)
    return feats


def _fit_app_reducer(grids, labels, config: RunConfig,
                     method: str) -> sub.BidirectionalReducer:
    reducer = sub.fit_bidirectional(grids, labels, config.d_r, config.d_c,
                                    config.hlda, method=method)
    feats = sub.concat_features(grids, reducer)
    classes = len(np.unique(labels))
    out_dim = min(config.lda_out, classes - 1)
    # concatenated features far outnumber training samples, so the LDA
    # stage must not see the within-class null space
    pca_dim = max(out_dim, labels.size - classes)
    reducer.lda = sub.fit_lda_1d(feats, labels, out_dim, ridge=config.hlda.ridge,
                                 pca_dim=pca_dim)
    return reducer


def _normalize_disp(disp: np.ndarray) -> np.ndarray:
    """Scale each sequence's displacement matrix to unit Frobenius norm.

    Displacement direction encodes the expression class; magnitude mostly
    encodes how far the sequence got (its intensity), which would otherwise
    scatter one class across radii in the reduced space.
    """
    norms = np.sqrt((disp ** 2).sum(axis=(1, 2), keepdims=True))
    return disp / np.maximum(norms, 1e-12)


def _geo_features(disp: np.ndarray, reducer: sub.BidirectionalReducer) -> np.ndarray:
    return geo.geometric_features(_normalize_disp(disp), reducer)


def _standardize(feats: np.ndarray, scale: tuple) -> np.ndarray:
    mean, std = scale
    return (feats - mean) / std


def _fit_scale(feats: np.ndarray) -> tuple:
    """Per-dimension z-scoring parameters (for tree inputs)."""
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std = np.where(std > 1e-8, std, 1.0)
    return mean, std


def _fit_global_scale(feats: np.ndarray) -> tuple:
    """Center per dimension, scale by one scalar (root mean variance).

    Projection outputs concentrate their class signal in a few
    high-variance dimensions; per-dimension standardization would blow
    the noise dimensions up to the same size and drown the kernel, so
    the relative variances must survive scaling.
    """
    mean = feats.mean(axis=0)
    rms = float(np.sqrt(np.maximum(feats.var(axis=0).mean(), 1e-16)))
    return mean, np.full(feats.shape[1], rms)


def fit_method(method: str, rep: Representations, train_idx: np.ndarray,
               config: RunConfig, cache: dict | None = None) -> FittedMethod:
    """Train one pipeline variant on the given training rows.

    The variants built on per-channel projections share the identical
    reducer-fitting work; pass one dict as ``cache`` across calls with
    the same training rows to fit each flavor only once.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of "
                          + ", ".join(METHODS))
    if cache is None:
        cache = {}
    grids = rep.app_grids[train_idx]
    labels = rep.labels[train_idx]
    fitted = FittedMethod(method=method)

    def fit_svm_on(feats: np.ndarray) -> None:
        # discriminant features are few and all informative, so giving
        # each dimension unit variance makes gamma = 1/dim meaningful
        fitted.feat_scale = _fit_scale(feats)
        fitted.svm = cl.train_svm_rbf(
            _standardize(feats, fitted.feat_scale), labels,
            c=config.svm_c, gamma=config.svm_gamma, tol=config.svm_tol)

    if method == "2dhlda":
        fitted.app_reducer = _fit_stacked_reducer(grids, labels, config)
        fit_svm_on(_stacked_features(grids, fitted.app_reducer))
        return fitted

    per_channel = "2dlda" if method == "2dlda-lda" else "2dhlda"
    if per_channel not in cache:
        cache[per_channel] = _fit_app_reducer(grids, labels, config, per_channel)
    fitted.app_reducer = cache[per_channel]
    app_feats = _app_features(grids, fitted.app_reducer)

    if method in ("2dlda-lda", "proposed"):
        fit_svm_on(app_feats)
        return fitted

    disp = rep.disp[train_idx]
    if "geo" not in cache:
        geo_opts = dc_replace(config.hlda, ridge=config.geo_ridge)
        cache["geo"] = geo.reduce_geometric(_normalize_disp(disp), labels,
                                            config.geo_d_r, config.geo_d_c,
                                            geo_opts)
    fitted.geo_reducer = cache["geo"]
    geo_feats = _geo_features(disp, fitted.geo_reducer)

    if method == "proposed-geo":
        # per-dimension scaling for the discriminant block, one scalar
        # for the geometric block: its class signal sits in a few
        # high-variance directions that per-dimension scaling would
        # flatten into the noise floor
        app_block = _fit_scale(app_feats)
        geo_block = _fit_global_scale(geo_feats)
        fitted.feat_scale = (np.concatenate([app_block[0], geo_block[0]]),
                             np.concatenate([app_block[1], geo_block[1]]))
        combined = _standardize(np.hstack([app_feats, geo_feats]),
                                fitted.feat_scale)
        fitted.svm = cl.train_svm_rbf(combined, labels, c=config.svm_c,
                                      gamma=config.svm_gamma,
                                      tol=config.svm_tol)
        return fitted

    # proposed-fusion: intensity-regression trees on each stream, then an
    # RBF machine over the concatenated intensity vectors
    fitted.geo_scale = _fit_scale(geo_feats)
    fitted.app_scale = _fit_scale(app_feats)
    fitted.fusion = cl.train_fusion(
        _standardize(geo_feats, fitted.geo_scale),
        _standardize(app_feats, fitted.app_scale),
        labels, rep.fractions[train_idx], tree_opts=config.tree,
        c=config.svm_c, gamma=config.svm_gamma, tol=config.svm_tol)
    return fitted


def predict_method(fitted: FittedMethod, rep: Representations,
                   idx: np.ndarray) -> np.ndarray:
    """Classify the given rows with a fitted method."""
    grids = rep.app_grids[idx]
    if fitted.method == "2dhlda":
        feats = _stacked_features(grids, fitted.app_reducer)
        return svm_labels(fitted.svm, _standardize(feats, fitted.feat_scale))

    app_feats = _app_features(grids, fitted.app_reducer)
    if fitted.method in ("2dlda-lda", "proposed"):
        return svm_labels(fitted.svm, _standardize(app_feats, fitted.feat_scale))

    geo_feats = _geo_features(rep.disp[idx], fitted.geo_reducer)
    if fitted.method == "proposed-geo":
        combined = np.hstack([app_feats, geo_feats])
        return svm_labels(fitted.svm, _standardize(combined, fitted.feat_scale))

    labels, _ = cl.predict_fusion(fitted.fusion,
                                  _standardize(geo_feats, fitted.geo_scale),
                                  _standardize(app_feats, fitted.app_scale))
    return np.asarray(labels, dtype=int)


def svm_labels(model: cl.SvmModel, feats: np.ndarray) -> np.ndarray:
    return np.asarray(cl.svm_predict(model, feats), dtype=int)


# --------------------------------------------------------------------------
# cross-validation


@dataclass
class MethodResult:
    method: str
    per_fold: list
    pooled: ConfusionMatrix


@dataclass
class CvResult:
    folds: int
    n_records: int
    methods: dict  # method name -> MethodResult


def cross_validate(records, config: RunConfig,
                   methods=None) -> CvResult:
    """Stratified k-fold evaluation of the requested pipeline variants.

    Kernel responses and tracked displacements are computed once for the
    dataset and shared across folds and methods; each fold trains every
    variant on the remaining folds and scores the held-out one. Pooled
    matrices sum the fold matrices, so the pooled total is the record
    count.
    """
    if methods is None:
        methods = METHODS
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    fold_labels = assign_folds(records, config.folds)
    rep = compute_representations(records, config)
    return cross_validate_representations(rep, fold_labels, config, methods)


def cross_validate_representations(rep: Representations, fold_labels: np.ndarray,
                                   config: RunConfig, methods) -> CvResult:
    """Fold loop over precomputed representations (testable seam)."""
    n = rep.labels.size
    per_method: dict = {m: [] for m in methods}
    for k in range(config.folds):
        test_idx = np.flatnonzero(fold_labels == k)
        train_idx = np.flatnonzero(fold_labels != k)
        if test_idx.size == 0:
            raise InsufficientSamplesPerClassError(f"fold {k} is empty")
        if train_idx.size == 0:
            raise InsufficientSamplesPerClassError(
                f"fold {k} holds every record; nothing to train on")
        cache: dict = {}
        for method in methods:
            fitted = fit_method(method, rep, train_idx, config, cache=cache)
            predicted = predict_method(fitted, rep, test_idx)
            per_method[method].append(
                ConfusionMatrix.from_predictions(rep.labels[test_idx], predicted))
    results = {}
    for method in methods:
        pooled = per_method[method][0]
        for cm in per_method[method][1:]:
            pooled = pooled.add(cm)
        results[method] = MethodResult(method=method,
                                       per_fold=per_method[method],
                                       pooled=pooled)
    return CvResult(folds=config.folds, n_records=n, methods=results)


# --------------------------------------------------------------------------
# reporting


def format_confusion(cm: ConfusionMatrix, title: str | None = None) -> str:
    """Human-readable 6x6 table with class letters and the average rate."""

    def cell(v: float) -> str:
        return f"{v:8.4g}"

    lines = []
    if title:
        lines.append(title)
    lines.append("     " + "".join(f"{letter:>8}" for letter in CLASS_LETTERS))
    for i, letter in enumerate(CLASS_LETTERS):
        lines.append(f"{letter:<5}" + "".join(cell(v) for v in cm.counts[i]))
    lines.append(f"Average Recognition Rate = {cm.rate():.2f}%")
    return "\n".join(lines)


def format_report(result: CvResult) -> str:
    """Full human-readable report: pooled table per method."""
    parts = [f"{result.folds}-fold cross-validation over "
             f"{result.n_records} sequences"]
    for method in result.methods:
        mr = result.methods[method]
        parts.append("")
        parts.append(format_confusion(mr.pooled, title=f"[{method}] pooled"))
    return "\n".join(parts) + "\n"


def summary_lines(result: CvResult) -> list:
    """Machine-readable key=value lines; deterministic, no timestamps."""
    lines = [f"folds={result.folds}", f"records={result.n_records}"]
    for method in result.methods:
        mr = result.methods[method]
        lines.append(f"method.{method}.pooled.rate={mr.pooled.rate():.2f}")
        lines.append("method.{}.pooled.counts={}".format(
            method, ";".join(f"{v:.10g}" for v in mr.pooled.counts.ravel())))
        for k, cm in enumerate(mr.per_fold):
            lines.append(f"method.{method}.fold{k}.rate={cm.rate():.2f}")
            lines.append(f"method.{method}.fold{k}.total={cm.total:.10g}")
    return lines


def write_report(out_dir, result: CvResult) -> str:
    """Write ``report.txt`` (key=value summary) and return the report text."""
    os.makedirs(out_dir, exist_ok=True)
    text = format_report(result)
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary_lines(result)) + "\n")
    return text


# --------------------------------------------------------------------------
# train / eval round trip

_META_NAME = "model.meta"
_APP_NAME = "appearance.bdr"
_GEO_NAME = "geometric.bdr"
_SVM_NAME = "model.svm"
_FUSION_NAME = "model.fuse"


def train_models(records, config: RunConfig, method: str) -> FittedMethod:
    """Fit one method on an entire record list (no fold split)."""
    rep = compute_representations(records, config)
    all_idx = np.arange(rep.labels.size)
    return fit_method(method, rep, all_idx, config)


def evaluate_models(fitted: FittedMethod, records,
                    config: RunConfig) -> ConfusionMatrix:
    rep = compute_representations(records, config)
    predicted = predict_method(fitted, rep, np.arange(rep.labels.size))
    return ConfusionMatrix.from_predictions(rep.labels, predicted)


def _format_vector(v: np.ndarray) -> str:
    return ",".join(f"{x:.17g}" for x in np.asarray(v, dtype=float).ravel())


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(p) for p in text.split(",")]) if text else np.array([])


def save_models(out_dir, fitted: FittedMethod, config: RunConfig) -> None:
    """Write a model directory: meta text plus binary model files."""
    os.makedirs(out_dir, exist_ok=True)
    meta = [f"method={fitted.method}"]
    if fitted.app_reducer is not None:
        sub.write_reducer(os.path.join(out_dir, _APP_NAME), fitted.app_reducer)
        meta.append(f"appearance={_APP_NAME}")
    if fitted.geo_reducer is not None:
        sub.write_reducer(os.path.join(out_dir, _GEO_NAME), fitted.geo_reducer)
        meta.append(f"geometric={_GEO_NAME}")
    if fitted.svm is not None:
        cl.write_svm(os.path.join(out_dir, _SVM_NAME), fitted.svm)
        meta.append(f"svm={_SVM_NAME}")
    if fitted.fusion is not None:
        cl.write_fusion(os.path.join(out_dir, _FUSION_NAME), fitted.fusion)
        meta.append(f"fusion={_FUSION_NAME}")
    for name, scale in (("feat_scale", fitted.feat_scale),
                        ("geo_scale", fitted.geo_scale),
                        ("app_scale", fitted.app_scale)):
        if scale is not None:
            meta.append(f"{name}.mean={_format_vector(scale[0])}")
            meta.append(f"{name}.std={_format_vector(scale[1])}")
    meta.append("config.begin")
    meta.extend(format_config(config).strip().splitlines())
    meta.append("config.end")
    with open(os.path.join(out_dir, _META_NAME), "w", encoding="utf-8") as fh:
        fh.write("\n".join(meta) + "\n")


def load_models(model_dir) -> tuple[FittedMethod, RunConfig]:
    """Read a model directory back; inverse of save_models."""
    meta_path = os.path.join(model_dir, _META_NAME)
    try:
        with open(meta_path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise PipelineError(f"cannot read {meta_path}: {e}") from e

    entries: dict = {}
    config_lines: list = []
    in_config = False
    for line in lines:
        if line == "config.begin":
            in_config = True
        elif line == "config.end":
            in_config = False
        elif in_config:
            config_lines.append(line)
        elif line.strip():
            key, _, value = line.partition("=")
            entries[key] = value
    if "method" not in entries:
        raise PipelineError(f"{meta_path}: missing method")
    config = parse_config("\n".join(config_lines))
    fitted = FittedMethod(method=entries["method"])
    if "appearance" in entries:
        fitted.app_reducer = sub.read_reducer(
            os.path.join(model_dir, entries["appearance"]))
    if "geometric" in entries:
        fitted.geo_reducer = sub.read_reducer(
            os.path.join(model_dir, entries["geometric"]))
    if "svm" in entries:
        fitted.svm = cl.read_svm(os.path.join(model_dir, entries["svm"]))
    if "fusion" in entries:
        fitted.fusion = cl.read_fusion(os.path.join(model_dir, entries["fusion"]))
    if "feat_scale.mean" in entries:
        fitted.feat_scale = (_parse_vector(entries["feat_scale.mean"]),
                             _parse_vector(entries["feat_scale.std"]))
    if "geo_scale.mean" in entries:
        fitted.geo_scale = (_parse_vector(entries["geo_scale.mean"]),
                            _parse_vector(entries["geo_scale.std"]))
    if "app_scale.mean" in entries:
        fitted.app_scale = (_parse_vector(entries["app_scale.mean"]),
                            _parse_vector(entries["app_scale.std"]))
    return fitted, config

"""Two-dimensional discriminant subspaces for labeled matrix samples.

The centerpiece is a log-determinant discriminant criterion that keeps one
scatter matrix per class instead of pooling them, so classes with unequal
covariance structure are separated where a pooled-scatter criterion cannot.
It is maximized by gradient ascent over matrices with orthonormal columns,
initialized at the pooled-scatter (2DLDA) solution, with a backtracking
line search and QR retraction; accepted steps never decrease the objective.

A bidirectional reduction applies the criterion per channel on the column
side, then again on the row side of the projected (transposed) matrices,
and a conventional vector LDA compresses the concatenated features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import matrixkit as mk
from .matrixkit import (
    DimensionMismatchError,
    GramNotPositiveDefiniteError,
    RankDeficientError,
)


class SubspaceError(ValueError):
    pass


class EmptyClassError(SubspaceError):
    pass


class DegenerateScatterError(SubspaceError):
    pass


class RankExceededError(SubspaceError):
    pass


class OutDimTooLargeError(SubspaceError):
    pass


class ReducerNotFittedError(SubspaceError):
    pass


class NonFiniteObjectiveError(SubspaceError):
    pass


class InitializationFailedError(SubspaceError):
    pass


@dataclass
class LabeledMatrixSet:
    """N labeled matrix samples of one shape; labels run 1..c, none empty."""

    samples: np.ndarray  # (N, m, n)
    labels: np.ndarray  # (N,) ints in 1..c

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.samples.ndim != 3:
            raise SubspaceError(f"samples must be (N, m, n), got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise SubspaceError("labels must be one int per sample")
        if self.samples.shape[0] == 0:
            raise EmptyClassError("no samples")
        if not np.all(np.isfinite(self.samples)):
            raise SubspaceError("samples contain non-finite entries")
        if self.labels.min() < 1:
            raise SubspaceError("labels must be >= 1")
        c = int(self.labels.max())
        present = np.bincount(self.labels, minlength=c + 1)[1:]
        if np.any(present == 0):
            missing = int(np.argmin(present)) + 1
            raise EmptyClassError(f"class {missing} has no samples")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max())

    @property
    def shape(self):
        return self.samples.shape[1], self.samples.shape[2]


@dataclass
class ScatterSet:
    """Between-class, pooled within-class, and per-class scatter matrices.

    All are n x n where n is the sample column count; sw is the
    count-weighted average of the per-class matrices.
    """

    sb: np.ndarray
    sw: np.ndarray
    si: np.ndarray  # (c, n, n)
    class_counts: np.ndarray  # (c,)
    class_means: np.ndarray  # (c, m, n)
    global_mean: np.ndarray  # (m, n)

    @property
    def n_classes(self) -> int:
        return len(self.class_counts)

    @property
    def total(self) -> int:
        return int(self.class_counts.sum())


def compute_scatters(data: LabeledMatrixSet) -> ScatterSet:
    """Image scatter matrices on the column side.

    sb weighs squared deviations of class means from the global mean by
    class size over total; each si averages within-class deviations over
    that class alone, so sw = sum_i (M_i / M) si holds by construction.
    """
    samples, labels = data.samples, data.labels
    n_total, m, n = samples.shape
    c = data.n_classes
    global_mean = samples.mean(axis=0)
    sb = np.zeros((n, n))
    sw_acc = np.zeros((n, n))
    si = np.zeros((c, n, n))
    counts = np.zeros(c, dtype=int)
    class_means = np.zeros((c, m, n))
    for i in range(1, c + 1):
        idx = np.flatnonzero(labels == i)
        counts[i - 1] = idx.size
        cm = samples[idx].mean(axis=0)
        class_means[i - 1] = cm
        db = cm - global_mean
        sb += idx.size * (db.T @ db)
        devs = samples[idx] - cm
        acc = np.einsum("ami,amj->ij", devs, devs)
        si[i - 1] = acc / idx.size
        sw_acc += acc
    sb /= n_total
    sw = sw_acc / n_total
    sb = (sb + sb.T) / 2.0
    sw = (sw + sw.T) / 2.0
    si = (si + np.transpose(si, (0, 2, 1))) / 2.0
    return ScatterSet(sb=sb, sw=sw, si=si, class_counts=counts,
                      class_means=class_means, global_mean=global_mean)


def fit_2dlda(scatters: ScatterSet, d: int, ridge="auto") -> np.ndarray:
    """Pooled-scatter solution: top d generalized eigenvectors of
    (sb, sw + ridge*I), orthonormalized before return."""
    n = scatters.sb.shape[0]
    if not 1 <= d <= n:
        raise RankExceededError(f"d={d} outside 1..{n}")
    if float(np.abs(scatters.sb).max(initial=0.0)) == 0.0:
        raise DegenerateScatterError("between-class scatter is zero")
    lam = mk.resolve_ridge(scatters.sw, ridge)
    try:
        res = mk.gen_sym_eig(scatters.sb, scatters.sw + lam * np.eye(n))
    except mk.NotPositiveDefiniteError as e:
        raise DegenerateScatterError(f"within-class scatter degenerate: {e}") from e
    return mk.orthonormalize(res.vectors[:, :d])


def _resolved_ridges(scatters: ScatterSet, ridge):
    lam_b = mk.resolve_ridge(scatters.sb, ridge)
    lam_i = [mk.resolve_ridge(s, ridge) for s in scatters.si]
    return lam_b, lam_i


def hlda_objective(w: np.ndarray, scatters: ScatterSet, ridge="auto") -> float:
    """M log|W^T sb W| - sum_i M_i log|W^T si W|, each Gram ridged."""
    counts = scatters.class_counts
    total = scatters.total
    lam_b, lam_i = _resolved_ridges(scatters, ridge)
    value = total * mk.log_det_gram(w, scatters.sb, lam_b)
    for mi, s, lam in zip(counts, scatters.si, lam_i):
        value -= int(mi) * mk.log_det_gram(w, s, lam)
    if not np.isfinite(value):
        raise NonFiniteObjectiveError(f"objective is {value}")
    return float(value)


def hlda_gradient(w: np.ndarray, scatters: ScatterSet, ridge="auto") -> np.ndarray:
    """Analytic gradient: 2M sb W G_b^-1 - 2 sum_i M_i si W G_i^-1 with
    G = W^T S W + ridge*I, matching finite differences of the objective."""
    w = np.asarray(w, dtype=float)
    d = w.shape[1]
    counts = scatters.class_counts
    total = scatters.total
    lam_b, lam_i = _resolved_ridges(scatters, ridge)

    def term(s, lam):
        sw_ = s @ w
        gram = w.T @ sw_ + lam * np.eye(d)
        gram = (gram + gram.T) / 2.0
        try:
            return sw_ @ np.linalg.inv(gram)
        except np.linalg.LinAlgError as e:
            raise GramNotPositiveDefiniteError(str(e)) from e

    grad = 2.0 * total * term(scatters.sb, lam_b)
    for mi, s, lam in zip(counts, scatters.si, lam_i):
        grad -= 2.0 * int(mi) * term(s, lam)
    return grad


@dataclass
class HldaOptions:
    """Ascent controls: iteration cap, initial step for the backtracking
    search (halved on rejection, factor 0.5, sufficient-increase 1e-4),
    relative objective-change tolerance, and the Gram ridge."""

    max_iters: int = 200
    step: float = 1.0
    tol: float = 1e-8
    ridge: object = "auto"
    multistart: bool = True  # False ascends from the pooled init only


def _ascend(w0: np.ndarray, scatters: ScatterSet, opts: HldaOptions):
    """Monotone gradient ascent with backtracking and QR retraction.

    Returns (w, objective trace, converged). Every accepted step passes an
    Armijo sufficient-increase test, so the trace is non-decreasing; when no
    improving step exists the start is returned unchanged.
    """
    w = w0
    value = hlda_objective(w, scatters, opts.ridge)
    objectives = [value]
    converged = False
    step = float(opts.step)
    # the criterion is scale-free, so gradients are O(total) at any
    # non-stationary point; below this floor only float noise is left and
    # normalizing it into a search direction would walk away from the start
    grad_floor = 1e-10 * max(1.0, float(scatters.total))
    for _ in range(int(opts.max_iters)):
        grad = hlda_gradient(w, scatters, opts.ridge)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_floor:
            converged = True
            break
        direction = grad / gnorm
        accepted = False
        s = step
        cand, cand_value = None, None
        for _ in range(60):
            try:
                cand = mk.orthonormalize(w + s * direction)
                cand_value = hlda_objective(cand, scatters, opts.ridge)
            except (RankDeficientError, GramNotPositiveDefiniteError,
                    NonFiniteObjectiveError):
                s *= 0.5
                continue
            if cand_value >= value + 1e-4 * s * gnorm:
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # no improving step along the gradient: stationary for our purposes
            converged = True
            break
        improvement = cand_value - value
        w, value = cand, cand_value
        objectives.append(value)
        step = 2.0 * s  # warm-start the next search just above the accepted step
        if improvement <= opts.tol * max(1.0, abs(value)):
            converged = True
            break
    return w, objectives, converged


def fit_2dhlda(scatters: ScatterSet, d: int, opts: HldaOptions | None = None,
               full_output: bool = False):
    """Maximize the per-class log-determinant criterion over n x d matrices
    with orthonormal columns.

    Gradient ascent from the pooled-scatter (2DLDA) solution; because the
    criterion is non-concave on the orthonormal manifold, a few extra
    deterministic starts (the leading subspace of sb whitened by each
    class scatter) are ascended as well and the best final objective wins.
    The 2DLDA start is tried first and is only displaced by an objective
    that beats it by more than float noise, so with homoscedastic
    scatters (zero gradient everywhere) the 2DLDA initializer is
    returned unchanged, and the result never scores below it.
    """
    if opts is None:
        opts = HldaOptions()
    n = scatters.sb.shape[0]
    if not 1 <= d <= n:
        raise RankExceededError(f"d={d} outside 1..{n}")
    try:
        w0 = fit_2dlda(scatters, d, opts.ridge)
    except SubspaceError as e:
        raise InitializationFailedError(str(e)) from e

    starts = [w0]
    if opts.multistart:
        for s in scatters.si:
            lam = mk.resolve_ridge(s, opts.ridge)
            try:
                res = mk.gen_sym_eig(scatters.sb, s + lam * np.eye(n))
                starts.append(mk.orthonormalize(res.vectors[:, :d]))
            except (mk.MatrixError, SubspaceError):
                continue  # a degenerate class scatter just loses its start

    best_w, best_objectives, best_converged = None, None, False
    for w_init in starts:
        w, objectives, converged = _ascend(w_init, scatters, opts)
        if best_objectives is None:
            best_w, best_objectives, best_converged = w, objectives, converged
            continue
        # an equivalent stationary start can land a few ulp higher; only a
        # genuinely better basin may displace the incumbent
        margin = 1e-12 * max(1.0, abs(best_objectives[-1]))
        if objectives[-1] > best_objectives[-1] + margin:
            best_w, best_objectives, best_converged = w, objectives, converged
    if full_output:
        info = {"objectives": best_objectives,
                "iterations": len(best_objectives) - 1,
                "converged": best_converged}
        return best_w, info
    return best_w


@dataclass
class Lda1D:
    """Affine projection for vector features: center, then project."""

    projection: np.ndarray  # (D, out_dim)
    mean: np.ndarray  # (D,)


def lda_transform(lda: Lda1D, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x - lda.mean) @ lda.projection


# above this feature count the LDA solve runs in the span of the centered
# data (rank <= N), which is exact for the top out_dim <= c-1 directions
_LDA_DENSE_LIMIT = 512


def fit_lda_1d(x: np.ndarray, labels: np.ndarray, out_dim: int, ridge="auto",
               pca_dim: int | None = None) -> Lda1D:
    """Fisher LDA on vectors: top generalized eigenvectors of the
    (between, within + ridge*I) scatter pair, centered at the global mean.

    out_dim must not exceed c - 1; beyond that the between-class scatter
    has no rank to offer. pca_dim, when given, first truncates to that
    many leading principal directions; with fewer samples than feature
    dimensions the within-class scatter is singular and the discriminant
    memorizes the training set, so callers in that regime should cap at
    n - c.
    """
    x = np.asarray(x, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if x.ndim != 2:
        raise SubspaceError(f"features must be (N, D), got {x.shape}")
    if labels.shape != (x.shape[0],):
        raise SubspaceError("labels must be one int per sample")
    if labels.min() < 1:
        raise SubspaceError("labels must be >= 1")
    c = int(labels.max())
    counts = np.bincount(labels, minlength=c + 1)[1:]
    if np.any(counts == 0):
        raise EmptyClassError("a class in 1..c has no samples")
    if not 1 <= out_dim <= c - 1:
        raise OutDimTooLargeError(f"out_dim={out_dim} outside 1..{c - 1}")
    if pca_dim is not None and pca_dim < out_dim:
        raise OutDimTooLargeError(f"pca_dim={pca_dim} below out_dim={out_dim}")
    n_total, dim = x.shape
    mean = x.mean(axis=0)

    if dim <= _LDA_DENSE_LIMIT and pca_dim is None:
        basis = None
        coords = x - mean
    else:
        centered = x - mean
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
        keep = svals > 1e-10 * max(svals[0], 1e-300)
        basis = vt[keep].T  # (D, r), leading directions first
        if pca_dim is not None and basis.shape[1] > pca_dim:
            basis = basis[:, :pca_dim]
        coords = centered @ basis

    r = coords.shape[1]
    sb = np.zeros((r, r))
    sw = np.zeros((r, r))
    for i in range(1, c + 1):
        idx = np.flatnonzero(labels == i)
        cm = coords[idx].mean(axis=0)
        sb += idx.size * np.outer(cm, cm)  # coords are globally centered
        devs = coords[idx] - cm
        sw += devs.T @ devs
    sb /= n_total
    sw /= n_total
    if float(np.abs(sb).max(initial=0.0)) == 0.0:
        raise DegenerateScatterError("between-class scatter is zero")
    if isinstance(ridge, str):
        if ridge != "auto":
            raise SubspaceError(f"unknown ridge spec {ridge!r}")
        lam = 1e-8 * float(np.trace(sw)) / dim  # full-dimension scale in both paths
    else:
        lam = float(ridge)
    try:
        res = mk.gen_sym_eig(sb, sw + lam * np.eye(r))
    except mk.NotPositiveDefiniteError as e:
        raise DegenerateScatterError(f"within-class scatter degenerate: {e}") from e
    proj = res.vectors[:, :out_dim]
    if basis is not None:
        proj = basis @ proj
    return Lda1D(projection=proj, mean=mean)


@dataclass
class BidirectionalReducer:
    """Per-channel row/column projections plus the final vector LDA.

    v_grid[k, r] is m x d_r (row side), w_grid[k, r] is n x d_c (column
    side); a channel's reduced matrix is V^T A W. d_r == 0 is an identity
    sentinel: no row projection, the reduced matrix is A W. The LDA stage
    is None until fitted.
    """

    p: int
    f: int
    m: int
    n: int
    d_r: int
    d_c: int
    v_grid: np.ndarray  # (p, f, m, d_r)
    w_grid: np.ndarray  # (p, f, n, d_c)
    lda: Lda1D | None = None

    @property
    def feature_dim(self) -> int:
        rows = self.d_r if self.d_r > 0 else self.m
        return self.p * self.f * rows * self.d_c


def reduce(a: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Two-sided projection V^T A W of one matrix sample."""
    a = np.asarray(a, dtype=float)
    if v.shape[0] != a.shape[0] or w.shape[0] != a.shape[1]:
        raise DimensionMismatchError(
            f"cannot reduce {a.shape} with V {v.shape}, W {w.shape}"
        )
    return v.T @ a @ w


def fit_bidirectional(grids: np.ndarray, labels: np.ndarray, d_r: int, d_c: int,
                      opts: HldaOptions | None = None,
                      method: str = "2dhlda") -> BidirectionalReducer:
    """Fit per-channel projection pairs on a (N, p, f, m, n) response grid.

    For each channel: the column-side W comes from the discriminant fit on
    the raw matrices; the row-side V from the same fit on the transposed
    projected matrices (A W)^T. method selects the per-channel criterion:
    "2dhlda" (heteroscedastic, default) or "2dlda" (pooled scatter).
    Channel failures re-raise with the (k, r) index in the message.
    """
    grids = np.asarray(grids, dtype=float)
    if grids.ndim != 5:
        raise SubspaceError(f"grids must be (N, p, f, m, n), got {grids.shape}")
    n_samples, p, f, m, n = grids.shape
    if method not in ("2dhlda", "2dlda"):
        raise SubspaceError(f"unknown method {method!r}")
    if not 1 <= d_c <= n:
        raise RankExceededError(f"d_c={d_c} outside 1..{n}")
    if not 1 <= d_r <= m:
        raise RankExceededError(f"d_r={d_r} outside 1..{m}")
    if opts is None:
        opts = HldaOptions()

    def fit_one(scatters, d):
        if method == "2dlda":
            return fit_2dlda(scatters, d, opts.ridge)
        return fit_2dhlda(scatters, d, opts)

    v_grid = np.zeros((p, f, m, d_r))
    w_grid = np.zeros((p, f, n, d_c))
    for k in range(p):
        for r in range(f):
            try:
                data = LabeledMatrixSet(grids[:, k, r], labels)
                w = fit_one(compute_scatters(data), d_c)
                projected = grids[:, k, r] @ w  # (N, m, d_c)
                transposed = np.transpose(projected, (0, 2, 1))
                v = fit_one(compute_scatters(LabeledMatrixSet(transposed, labels)), d_r)
            except (SubspaceError, mk.MatrixError) as e:
                raise type(e)(f"channel (k={k}, r={r}): {e}") from e
            w_grid[k, r] = w
            v_grid[k, r] = v
    return BidirectionalReducer(p=p, f=f, m=m, n=n, d_r=d_r, d_c=d_c,
                                v_grid=v_grid, w_grid=w_grid, lda=None)


def concat_features(grids: np.ndarray, reducer: BidirectionalReducer) -> np.ndarray:
    """Reduce every channel and concatenate, channel-major then frame,
    each reduced matrix flattened row-major. Returns (N, feature_dim)."""
    grids = np.asarray(grids, dtype=float)
    single = grids.ndim == 4
    if single:
        grids = grids[None]
    if grids.shape[1:] != (reducer.p, reducer.f, reducer.m, reducer.n):
        raise DimensionMismatchError(
            f"grid shape {grids.shape[1:]} does not match reducer "
            f"({reducer.p}, {reducer.f}, {reducer.m}, {reducer.n})"
        )
    parts = []
    for k in range(reducer.p):
        for r in range(reducer.f):
            b = grids[:, k, r] @ reducer.w_grid[k, r]  # (N, m, d_c)
            if reducer.d_r > 0:
                b = np.einsum("mi,amj->aij", reducer.v_grid[k, r], b)
            parts.append(b.reshape(b.shape[0], -1))
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out


def transform_sequence(grid: np.ndarray, reducer: BidirectionalReducer) -> np.ndarray:
    """Full reduction of one (p, f, m, n) grid to the final LDA vector."""
    if reducer.lda is None:
        raise ReducerNotFittedError("reducer has no fitted LDA stage")
    feats = concat_features(grid, reducer)
    return lda_transform(reducer.lda, feats)


_REDUCER_MAGIC = b"BDR1"


def write_reducer(path, reducer: BidirectionalReducer) -> None:
    """Serialize a reducer.

    Layout: magic "BDR1"; p, f, m, n, d_r, d_c, lda_out as little-endian
    u32; per channel (kernel-major, then frame) V then W as row-major
    float64; if lda_out > 0, the LDA mean then projection. Round trip is
    bit-exact.
    """
    lda_out = 0 if reducer.lda is None else reducer.lda.projection.shape[1]
    with open(path, "wb") as fh:
        fh.write(_REDUCER_MAGIC)
        fh.write(struct.pack("<7I", reducer.p, reducer.f, reducer.m, reducer.n,
                             reducer.d_r, reducer.d_c, lda_out))
        for k in range(reducer.p):
            for r in range(reducer.f):
                fh.write(np.ascontiguousarray(reducer.v_grid[k, r], dtype="<f8").tobytes())
                fh.write(np.ascontiguousarray(reducer.w_grid[k, r], dtype="<f8").tobytes())
        if lda_out > 0:
            fh.write(np.ascontiguousarray(reducer.lda.mean, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(reducer.lda.projection, dtype="<f8").tobytes())


def read_reducer(path) -> BidirectionalReducer:
    """Inverse of write_reducer."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _REDUCER_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_REDUCER_MAGIC!r}")
        p, f, m, n, d_r, d_c, lda_out = struct.unpack("<7I", fh.read(28))

        def block(count):
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            if data.size != count:
                raise ValueError("truncated reducer file")
            return data

        v_grid = np.zeros((p, f, m, d_r))
        w_grid = np.zeros((p, f, n, d_c))
        for k in range(p):
            for r in range(f):
                v_grid[k, r] = block(m * d_r).reshape(m, d_r)
                w_grid[k, r] = block(n * d_c).reshape(n, d_c)
        lda = None
        if lda_out > 0:
            rows = d_r if d_r > 0 else m
            dim = p * f * rows * d_c
            mean = block(dim)
            proj = block(dim * lda_out).reshape(dim, lda_out)
            lda = Lda1D(projection=proj, mean=mean)
    return BidirectionalReducer(p=p, f=f, m=m, n=n, d_r=d_r, d_c=d_c,
                                v_grid=v_grid, w_grid=w_grid, lda=lda)

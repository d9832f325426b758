"""Dense linear-algebra substrate shared by the rest of the package.

All routines operate on plain float64 numpy arrays and are deterministic:
identical inputs give identical outputs, including eigenvector ordering
and sign conventions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.signal import convolve2d


class MatrixError(ValueError):
    """Base class for contract violations on matrix arguments."""


class NonSquareError(MatrixError):
    pass


class NotSymmetricError(MatrixError):
    pass


class DidNotConvergeError(MatrixError):
    pass


class NotPositiveDefiniteError(MatrixError):
    pass


class DimensionMismatchError(MatrixError):
    pass


class GramNotPositiveDefiniteError(MatrixError):
    pass


class RankDeficientError(MatrixError):
    pass


class KernelLargerThanImageError(MatrixError):
    pass


class EvenKernelSizeError(MatrixError):
    pass


# Eigenvalues closer than this are treated as ties and ordered by the
# lexicographic content of their (sign-fixed) eigenvectors.
TIE_TOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite float64 2D array; reject anything else."""
    out = np.asarray(a, dtype=float)
    if out.ndim != 2:
        raise MatrixError(f"{name} must be 2D, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise MatrixError(f"{name} contains non-finite entries")
    return out


def _require_square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise NonSquareError(f"{name} must be square, got {a.shape}")


def _require_symmetric(a: np.ndarray, name: str, rtol: float = 1e-10) -> None:
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > rtol * max(scale, 1.0):
        raise NotSymmetricError(f"{name} is not symmetric within {rtol}")


def _canonical_sign(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    v = vectors.copy()
    for j in range(v.shape[1]):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0:
            v[:, j] = -v[:, j]
    return v


def _order_descending(values: np.ndarray, vectors: np.ndarray):
    """Sort eigenpairs by descending value; break ties lexicographically.

    Ties (values within TIE_TOL of each other) are ordered by comparing the
    sign-fixed eigenvector entries, so repeated eigenvalues still yield a
    reproducible column order.
    """
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = _canonical_sign(vectors[:, order])
    j = 0
    while j < len(values):
        k = j + 1
        while k < len(values) and values[j] - values[k] <= TIE_TOL:
            k += 1
        if k - j > 1:
            cols = sorted(range(j, k), key=lambda c: tuple(vectors[:, c]))
            values[j:k] = values[cols]
            vectors[:, j:k] = vectors[:, cols]
        j = k
    return values, vectors


@dataclass
class EigResult:
    """Eigenvalues in descending order and matching eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def sym_eig(a) -> EigResult:
    """Full eigendecomposition of a symmetric matrix.

    Returns eigenvalues in descending order with orthonormal eigenvector
    columns in matching order.
    """
    a = as_matrix(a, "a")
    _require_square(a, "a")
    _require_symmetric(a, "a")
    try:
        values, vectors = np.linalg.eigh((a + a.T) / 2.0)
    except np.linalg.LinAlgError as e:  # pragma: no cover - LAPACK failure
        raise DidNotConvergeError(str(e)) from e
    values, vectors = _order_descending(values, vectors)
    return EigResult(values=values, vectors=vectors)


def gen_sym_eig(a, b) -> EigResult:
    """Solve the generalized problem A v = lambda B v with B positive definite.

    B is Cholesky-factored (B = L L^T), the problem is whitened to an ordinary
    symmetric one on L^-1 A L^-T, and eigenvectors are mapped back, so the
    returned columns are B-orthonormal: V^T B V = I.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    _require_square(a, "a")
    _require_square(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    _require_symmetric(a, "a")
    _require_symmetric(b, "b")
    try:
        ell = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError("b is not positive definite") from e
    # whiten: C = L^-1 A L^-T, kept explicitly symmetric against roundoff
    half = solve_triangular(ell, a, lower=True)
    c = solve_triangular(ell, half.T, lower=True)
    c = (c + c.T) / 2.0
    try:
        values, u = np.linalg.eigh(c)
    except np.linalg.LinAlgError as e:  # pragma: no cover - LAPACK failure
        raise DidNotConvergeError(str(e)) from e
    vectors = solve_triangular(ell.T, u, lower=False)
    values, vectors = _order_descending(values, vectors)
    return EigResult(values=values, vectors=vectors)


def resolve_ridge(s: np.ndarray, ridge) -> float:
    """Turn a ridge spec into a number; "auto" scales with mean diagonal mass."""
    if isinstance(ridge, str):
        if ridge != "auto":
            raise MatrixError(f"unknown ridge spec {ridge!r}")
        return 1e-8 * float(np.trace(s)) / s.shape[0]
    value = float(ridge)
    if value < 0:
        raise MatrixError("ridge must be non-negative")
    return value


def log_det_gram(w, s, ridge=0.0) -> float:
    """log det(W^T S W + ridge*I) via Cholesky of the d x d Gram matrix.

    The determinant is never formed; the result is twice the sum of the
    log-diagonals of the Cholesky factor, which stays finite and accurate
    for small determinants.
    """
    w = as_matrix(w, "w")
    s = as_matrix(s, "s")
    _require_square(s, "s")
    if w.shape[0] != s.shape[0]:
        raise DimensionMismatchError(
            f"w has {w.shape[0]} rows but s is {s.shape[0]}x{s.shape[1]}"
        )
    lam = resolve_ridge(s, ridge)
    gram = w.T @ s @ w
    gram = (gram + gram.T) / 2.0 + lam * np.eye(w.shape[1])
    try:
        ell = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as e:
        raise GramNotPositiveDefiniteError(
            "W^T S W + ridge*I is not positive definite"
        ) from e
    return 2.0 * float(np.sum(np.log(np.diag(ell))))


def orthonormalize(w) -> np.ndarray:
    """Orthonormalize the columns of W by QR, preserving the column span.

    Signs are fixed so the R factor has a positive diagonal, making the
    result unique. Raises RankDeficientError when the columns do not have
    full rank.
    """
    w = as_matrix(w, "w")
    if w.shape[1] > w.shape[0]:
        raise RankDeficientError(
            f"cannot orthonormalize {w.shape[1]} columns in {w.shape[0]} dims"
        )
    q, r = np.linalg.qr(w)
    diag = np.diag(r)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(w))) * w.shape[0])
    if np.any(np.abs(diag) < tol):
        raise RankDeficientError("columns are numerically rank deficient")
    signs = np.sign(diag)
    return q * signs


def conv2_same(image, kernel) -> np.ndarray:
    """True 2D convolution (kernel flipped), zero padding, same-size output.

    Kernel must be odd in both dimensions and no larger than the image, so
    the output aligns with the input grid without a half-pixel shift.
    """
    image = as_matrix(image, "image")
    kernel = as_matrix(kernel, "kernel")
    kr, kc = kernel.shape
    if kr % 2 == 0 or kc % 2 == 0:
        raise EvenKernelSizeError(f"kernel must be odd in both axes, got {kernel.shape}")
    if kr > image.shape[0] or kc > image.shape[1]:
        raise KernelLargerThanImageError(
            f"kernel {kernel.shape} larger than image {image.shape}"
        )
    return convolve2d(image, kernel, mode="same", boundary="fill", fillvalue=0.0)

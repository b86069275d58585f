"""Dense symmetric-matrix primitives.

Everything here works on plain ``numpy`` arrays. Symmetry is enforced at the
boundary (``as_symmetric``) and positive definiteness is certified through a
Cholesky factorization whose pivots are compared against a tolerance that is
relative to the largest diagonal entry, so the checks are invariant under the
diagonal rescalings used in the heteroskedastic experiments.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import cho_solve, lapack

PD_RTOL = 1e-12
SYM_RTOL = 1e-9


class NotPDError(np.linalg.LinAlgError):
    """Raised when a matrix fails the positive-definiteness certificate.

    Attributes
    ----------
    pivot : int
        Zero-based index of the first pivot that was not strictly positive.
    """

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = int(pivot)
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


def as_symmetric(M: ArrayLike, *, rtol: float = SYM_RTOL) -> NDArray[np.float64]:
    """Validate a square finite matrix and return its exact symmetrization."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > rtol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def cholesky(M: ArrayLike, *, rtol: float = PD_RTOL) -> NDArray[np.float64]:
    """Lower Cholesky factor ``L`` with ``L @ L.T == M``.

    Raises
    ------
    NotPDError
        If a pivot is ``<= rtol * max(diag(M))``. The error carries the
        zero-based pivot index.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    L, info = lapack.dpotrf(M, lower=1, clean=1, overwrite_a=0)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    if info > 0:
        raise NotPDError(info - 1)
    tol = rtol * max(float(np.max(np.diag(M))), 0.0)
    pivots = np.diag(L) ** 2
    bad = np.flatnonzero(pivots <= tol)
    if bad.size:
        raise NotPDError(int(bad[0]))
    return L


def is_pd(M: ArrayLike) -> bool:
    try:
        cholesky(M)
    except NotPDError:
        return False
    return True


def logdet_pd(M: ArrayLike, L: NDArray | None = None) -> float:
    """``log det M`` for positive definite ``M`` (``2 * sum(log diag(L))``)."""
    if L is None:
        L = cholesky(M)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def inverse_pd(M: ArrayLike, L: NDArray | None = None) -> NDArray[np.float64]:
    if L is None:
        L = cholesky(M)
    inv = cho_solve((L, True), np.eye(L.shape[0]))
    return 0.5 * (inv + inv.T)


def symeig(M: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Column ``k`` of the returned vector matrix pairs with value ``k``.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    values, vectors = np.linalg.eigh(0.5 * (M + M.T))
    return values, vectors


def sym_from_eig(values: ArrayLike, vectors: NDArray) -> NDArray[np.float64]:
    """Reassemble ``V diag(values) V^T`` exactly symmetric."""
    M = (vectors * np.asarray(values)) @ vectors.T
    return 0.5 * (M + M.T)


def max_norm(M: ArrayLike) -> float:
    return float(np.max(np.abs(M)))


def inf_norm(M: ArrayLike) -> float:
    """Induced l-infinity norm: maximum absolute row sum."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


# -- text format ------------------------------------------------------------


def format_matrix(M: ArrayLike) -> str:
    M = np.asarray(M, dtype=float)
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in M)


def parse_matrix(text: str) -> NDArray[np.float64]:
    """Parse the comma-separated full-storage symmetric matrix format.

    One row per line, no header. Rows of unequal length or asymmetry above
    ``1e-9`` relative are rejected.
    """
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ValueError("empty matrix")
    d = len(rows)
    for lineno, row in enumerate(rows, start=1):
        if len(row) != d:
            raise ValueError(f"row {lineno} has {len(row)} entries, expected {d}")
    return as_symmetric(np.array(rows))


def write_matrix(path: str | os.PathLike, M: ArrayLike) -> None:
    Path(path).write_text(format_matrix(M))


def read_matrix(path: str | os.PathLike) -> NDArray[np.float64]:
    return parse_matrix(Path(path).read_text())

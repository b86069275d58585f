"""Ground-truth precision models, heteroskedastic rescaling and Gaussian sampling."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .matkernel import cholesky, inverse_pd, symeig

STAR_EDGE = 0.2
STAR_HUB_DIAGONAL = 1.2


class ModelKind(str, enum.Enum):
    AR2 = "ar2"
    AR3 = "ar3"
    AR4 = "ar4"
    STAR = "star"
    CIRCLE = "circle"

    @classmethod
    def parse(cls, name: "str | ModelKind") -> "ModelKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("(", "").replace(")", "")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown model {name!r}; expected one of {[k.value for k in cls]}")


# band coefficients by lag
_BANDS = {
    ModelKind.AR2: (0.5, 0.25),
    ModelKind.AR3: (0.4, 0.2, 0.2),
    ModelKind.AR4: (0.4, 0.2, 0.2, 0.1),
}


@dataclass(frozen=True)
class GroundTruth:
    precision: NDArray[np.float64]
    covariance: NDArray[np.float64]
    support: frozenset
    pd_adjusted: bool = False
    kind: ModelKind | None = None

    @property
    def d(self) -> int:
        return self.precision.shape[0]


def support_pairs(M: ArrayLike, tol: float = 0.0) -> frozenset:
    """Upper-triangle index pairs ``(i, j)``, ``i < j``, with ``|M_ij| > tol``."""
    M = np.asarray(M)
    i, j = np.nonzero(np.abs(np.triu(M, k=1)) > tol)
    return frozenset(zip(i.tolist(), j.tolist()))


def _raw_precision(kind: ModelKind, d: int) -> NDArray[np.float64]:
    C = np.eye(d)
    if kind in _BANDS:
        lags = _BANDS[kind]
        if d <= len(lags):
            raise ValueError(f"{kind.value} needs d > {len(lags)}, got d={d}")
        for lag, c in enumerate(lags, start=1):
            C += np.diag(np.full(d - lag, c), lag) + np.diag(np.full(d - lag, c), -lag)
    elif kind is ModelKind.STAR:
        if d < 2:
            raise ValueError("star model needs d >= 2")
        C[0, 1:] = C[1:, 0] = STAR_EDGE
    elif kind is ModelKind.CIRCLE:
        if d < 3:
            raise ValueError("circle model needs d >= 3")
        C += np.diag(np.full(d - 1, 0.5), 1) + np.diag(np.full(d - 1, 0.5), -1)
        C[0, d - 1] = C[d - 1, 0] = 0.4
    return C


def make_model(kind: "str | ModelKind", d: int) -> GroundTruth:
    """Precision matrix of one of the five benchmark graphs.

    The star model with unit diagonal has eigenvalues ``1 +- 0.2 sqrt(d-1)``
    on the hub subspace and is indefinite for ``d >= 27``. In that case the hub
    diagonal is raised to ``max(1.2, 0.04 d)`` (which keeps the support and
    restores definiteness) and ``pd_adjusted`` is set. Any other model whose
    minimum eigenvalue falls below ``1e-8`` receives a diagonal shift, also
    flagged.
    """
    kind = ModelKind.parse(kind)
    C = _raw_precision(kind, d)
    adjusted = False
    if symeig(C)[0][0] <= 1e-8:
        adjusted = True
        if kind is ModelKind.STAR:
            C[0, 0] = max(STAR_HUB_DIAGONAL, round(STAR_EDGE**2 * d, 12))
        else:
            C += (0.1 - symeig(C)[0][0]) * np.eye(d)
    Sigma = inverse_pd(C)
    return GroundTruth(C, Sigma, support_pairs(C), adjusted, kind)


def default_scales(d: int, big: float = 10.0, count: int = 5) -> NDArray[np.float64]:
    """Scale ``big`` for the first ``count`` variables and 1 for the rest."""
    s = np.ones(d)
    s[: min(count, d)] = big
    return s


def heteroskedastic_scale(gt: GroundTruth, scales: ArrayLike) -> GroundTruth:
    """Covariance ``S Sigma S`` and precision ``S^-1 Sigma^-1 S^-1``."""
    s = np.asarray(scales, dtype=float)
    if s.shape != (gt.d,):
        raise ValueError(f"expected {gt.d} scales, got shape {s.shape}")
    if np.any(s <= 0):
        raise ValueError("scales must be positive")
    cov = gt.covariance * np.outer(s, s)
    prec = gt.precision / np.outer(s, s)
    return replace(gt, precision=prec, covariance=cov, support=support_pairs(prec))


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


def sample_gaussian(cov: ArrayLike, n: int, seed: int | np.random.Generator, *keys: int) -> NDArray[np.float64]:
    """``n`` zero-mean Gaussian rows with covariance ``cov`` (``Z L^T``)."""
    cov = np.asarray(cov, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    L = cholesky(cov)
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(seed, *keys)
    Z = rng.standard_normal((n, cov.shape[0]))
    return Z @ L.T

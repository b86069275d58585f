"""Worst-case perturbation oracles for the quadratic loss ``(x + D)^T C (x + D)``.

Three routes are provided for a single sample ``x`` and a positive definite
``C``:

* :func:`worst_case_l2` solves the l2-ball maximization exactly through its
  one-dimensional dual (a trust-region secular equation), including the hard
  case in which ``C x`` has no component along the top eigenspace.
* :func:`worst_case_linf_exact` enumerates the ``2**d`` vertices of the box,
  which is exact because a convex quadratic attains its maximum over a box at
  a vertex.
* :func:`surrogate_linf` is the convex upper bound obtained by splitting the
  cross and quadratic terms.

:func:`expansion_terms` returns the zeroth, first and second order terms of the
small-radius expansion of the worst-case loss for a general l_p ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .matkernel import logdet_pd, symeig

LINF_MAX_DIM = 20


class ZeroComponentError(ValueError):
    """``C x`` has a zero coordinate where the l_p dual pairing needs a sign."""


class SecularConvergenceError(RuntimeError):
    pass


def _as_p(p) -> float:
    if isinstance(p, str):
        if p.lower() in {"inf", "infinity", "linf"}:
            return math.inf
        p = float(p)
    p = float(p)
    if not p > 1.0:
        raise ValueError(f"norm exponent must satisfy p > 1, got {p}")
    return p


@dataclass(frozen=True)
class PerturbationSpec:
    """Perturbation geometry: an l_p ball of radius ``delta``."""

    p: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "p", _as_p(self.p))
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    @property
    def q(self) -> float:
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)


@dataclass
class WorstCaseResult:
    """``value`` is the worst-case loss; ``gain = value - x^T C x`` is computed
    without forming ``x^T C x`` so it keeps full relative accuracy for small
    ``delta``."""

    value: float
    maximizer: NDArray[np.float64] | None = None
    dual_lambda: float | None = None
    hard_case: bool = False
    gain: float = 0.0


@dataclass
class ExpansionTerms:
    zeroth: float
    first: float
    second: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.zeroth + self.first + self.second


def _quad(x: NDArray, C: NDArray) -> float:
    return float(x @ C @ x)


# -- l2 ---------------------------------------------------------------------


def _solve_secular(g2: NDArray, c: NDArray, delta: float, c_top: float,
                   maxiter: int = 200) -> float:
    """Root ``lam > c_top`` of ``sum(g2 / (lam - c)**2) == delta**2``.

    Newton on ``1/sqrt(psi) - 1/delta``, which is concave and increasing in
    ``lam``, safeguarded by a bisection bracket.
    """
    gnorm = math.sqrt(float(np.sum(g2)))
    lo, hi = c_top, c_top + gnorm / delta
    lam = hi
    target = 1.0 / delta
    for _ in range(maxiter):
        r = lam - c
        psi = float(np.sum(g2 / r**2))
        phi = 1.0 / math.sqrt(psi) - target
        if phi > 0:
            hi = min(hi, lam)
        else:
            lo = max(lo, lam)
        if abs(phi) <= 1e-14 * target or hi - lo <= 1e-15 * max(1.0, abs(hi)):
            return lam
        dpsi = -2.0 * float(np.sum(g2 / r**3))
        dphi = -0.5 * psi ** -1.5 * dpsi
        step = lam - phi / dphi if dphi > 0 else 0.5 * (lo + hi)
        lam = step if lo < step < hi else 0.5 * (lo + hi)
    raise SecularConvergenceError("secular equation did not converge in %d steps" % maxiter)


def worst_case_l2(x: ArrayLike, C: ArrayLike, delta: float) -> WorstCaseResult:
    """Exact ``max_{||D||_2 <= delta} (x + D)^T C (x + D)``.

    The optimal value is ``x^T C x + lam*delta**2 + x^T C (lam I - C)^{-1} C x``
    where ``lam > lambda_max(C)`` solves the secular equation
    ``||(lam I - C)^{-1} C x||_2 = delta``. When ``C x`` is orthogonal to the
    top eigenspace and the secular function stays below ``delta**2`` at
    ``lambda_max``, the multiplier sits at ``lambda_max`` and the maximizer is
    completed with a top-eigenvector component so that it lies on the sphere.
    """
    x = np.asarray(x, dtype=float)
    C = np.asarray(C, dtype=float)
    base = _quad(x, C)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if delta == 0:
        return WorstCaseResult(base, np.zeros_like(x), None)

    c, V = symeig(C)
    y = V.T @ x
    g = c * y
    c_top = float(c[-1])
    top = c >= c_top - 1e-12 * max(1.0, abs(c_top))
    gtol = 1e-13 * max(abs(c_top), 1.0) * max(float(np.linalg.norm(x)), 1.0)
    g_top_zero = bool(np.all(np.abs(g[top]) <= gtol))

    if g_top_zero:
        rest = ~top
        gap = c_top - c[rest]
        psi_top = float(np.sum(g[rest] ** 2 / gap**2)) if rest.any() else 0.0
        if psi_top <= delta**2:
            step = np.zeros_like(c)
            step[rest] = g[rest] / gap
            t = math.sqrt(max(delta**2 - psi_top, 0.0))
            k = int(np.flatnonzero(top)[-1])
            step[k] = t
            D = V @ step
            gain = 2.0 * float(D @ C @ x) + _quad(D, C)
            return WorstCaseResult(_quad(x + D, C), D, c_top, hard_case=True, gain=gain)
        g = np.where(top, 0.0, g)

    lam = _solve_secular(g**2, c, delta, c_top)
    r = lam - c
    step = g / r
    D = V @ step
    gain = lam * delta**2 + float(np.sum(g**2 / r))
    return WorstCaseResult(base + gain, D, lam, gain=gain)


# -- l-infinity ---------------------------------------------------------------


def _sign_vertices(d: int, start: int, stop: int) -> NDArray[np.float64]:
    """Rows ``start..stop-1`` of the lexicographic list of sign vectors.

    Bit ``d-1-j`` of the row index encodes coordinate ``j``; a zero bit maps
    to -1, so row order is lexicographic with ``-1 < +1``.
    """
    idx = np.arange(start, stop, dtype=np.int64)[:, None]
    shifts = np.arange(d - 1, -1, -1, dtype=np.int64)[None, :]
    bits = (idx >> shifts) & 1
    return 2.0 * bits - 1.0


def worst_case_linf_exact(x: ArrayLike, C: ArrayLike, delta: float) -> WorstCaseResult:
    """Exact box maximization by vertex enumeration (``d <= 20``).

    Ties are broken toward the lexicographically smallest sign vector.
    """
    x = np.asarray(x, dtype=float)
    C = np.asarray(C, dtype=float)
    d = x.shape[0]
    if d > LINF_MAX_DIM:
        raise ValueError(
            f"exact l-infinity oracle enumerates 2**d vertices; refusing d={d} > {LINF_MAX_DIM}"
        )
    if delta < 0:
        raise ValueError("delta must be >= 0")
    base = _quad(x, C)
    if delta == 0:
        return WorstCaseResult(base, np.zeros_like(x))
    Cx = C @ x
    best_val, best_row = -math.inf, 0
    total = 1 << d
    chunk = 1 << 14
    for start in range(0, total, chunk):
        S = _sign_vertices(d, start, min(total, start + chunk))
        vals = 2.0 * delta * (S @ Cx) + delta**2 * np.einsum("ij,jk,ik->i", S, C, S)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_row = float(vals[k]), start + k
    s = _sign_vertices(d, best_row, best_row + 1)[0]
    D = delta * s
    gain = 2.0 * delta * float(np.sum(s * Cx)) + delta**2 * _quad(s, C)
    return WorstCaseResult(_quad(x + D, C), D, gain=gain)


def surrogate_linf(x: ArrayLike, C: ArrayLike, delta: float) -> float:
    """Upper bound ``x^T C x + 2 delta ||C x||_1 + delta**2 ||C||_{1,1}``."""
    x = np.asarray(x, dtype=float)
    C = np.asarray(C, dtype=float)
    return _quad(x, C) + 2.0 * delta * float(np.sum(np.abs(C @ x))) + delta**2 * float(np.sum(np.abs(C)))


# -- expansion ----------------------------------------------------------------


def dual_pairing_vector(u: ArrayLike, q: float) -> NDArray[np.float64]:
    """Unit l_p vector attaining ``<v, u> = ||u||_q``.

    ``v = sign(u) * |u|**(q-1) / ||u||_q**(q-1)``; for ``q = 1`` this is
    ``sign(u)`` and every coordinate of ``u`` must be nonzero.
    """
    u = np.asarray(u, dtype=float)
    if q == 1.0:
        if np.any(u == 0):
            raise ZeroComponentError(
                "C x has a zero coordinate; the l-infinity pairing sign(C x) is not defined"
            )
        return np.sign(u)
    nq = float(np.sum(np.abs(u) ** q)) ** (1.0 / q)
    if nq == 0:
        raise ZeroComponentError("C x = 0; the pairing direction is undefined")
    return np.sign(u) * np.abs(u) ** (q - 1.0) / nq ** (q - 1.0)


def expansion_terms(x: ArrayLike, C: ArrayLike, spec: PerturbationSpec) -> ExpansionTerms:
    """Zeroth, first and second order terms of the worst-case loss in ``delta``."""
    x = np.asarray(x, dtype=float)
    C = np.asarray(C, dtype=float)
    q = spec.q
    Cx = C @ x
    v = dual_pairing_vector(Cx, q)
    if q == 1.0:
        norm_q = float(np.sum(v * Cx))
    else:
        norm_q = float(np.sum(np.abs(Cx) ** q)) ** (1.0 / q)
    return ExpansionTerms(
        zeroth=_quad(x, C),
        first=2.0 * spec.delta * norm_q,
        second=spec.delta**2 * _quad(v, C),
    )


# -- dataset-level losses -----------------------------------------------------


def worst_case(x: ArrayLike, C: ArrayLike, spec: PerturbationSpec) -> WorstCaseResult:
    """Dispatch to the exact oracle for ``p = 2`` or ``p = inf``."""
    if spec.p == 2.0:
        return worst_case_l2(x, C, spec.delta)
    if math.isinf(spec.p):
        return worst_case_linf_exact(x, C, spec.delta)
    raise NotImplementedError("exact worst-case oracles exist only for p = 2 and p = inf")


def adversarial_loss(X: ArrayLike, C: ArrayLike, spec: PerturbationSpec) -> float:
    """``-log det C + mean_i max_{||D|| <= delta} (x_i + D)^T C (x_i + D)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.asarray(C, dtype=float)
    inner = np.mean([worst_case(x, C, spec).value for x in X])
    return -logdet_pd(C) + float(inner)


def surrogate_loss(X: ArrayLike, C: ArrayLike, delta: float) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.asarray(C, dtype=float)
    inner = np.mean([surrogate_linf(x, C, delta) for x in X])
    return -logdet_pd(C) + float(inner)

"""The l2-perturbed estimator (equivalently, Wasserstein shrinkage).

Dualizing the inner l2 maximization gives the joint problem over ``(C, lam)``

    -log det C + tr(A C) + lam * delta**2 + tr(C (lam I - C)^{-1} C A),
    subject to C > 0, lam I - C > 0.

The objective is invariant under ``C -> Q C Q^T, A -> Q A Q^T``, so the
minimizer shares eigenvectors with ``A``. Writing ``A = V diag(a) V^T`` and
``C = V diag(c) V^T`` the problem separates into scalar problems

    min_{0 < c < lam}  -log c + a c + a c**2 / (lam - c),

whose stationarity condition ``a lam**2 c = (lam - c)**2`` has the closed-form
root ``c = lam * phi(a lam)`` with ``phi(t) = 2 / (2 + t + sqrt(t (4 + t)))``.
By the envelope theorem the outer condition in ``lam`` reduces to
``delta**2 lam = sum_i phi(a_i lam)``, whose left side increases and right
side decreases, so the root is unique and bracketed by ``(0, d / delta**2]``.

:func:`reference_solver_l2` minimizes the same objective over full symmetric
``C`` without using the eigenbasis; it exists to cross-check the above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq

from .adversary import worst_case_l2
from .estimator_linf import second_moment
from .matkernel import NotPDError, as_symmetric, cholesky, inverse_pd, logdet_pd, symeig, sym_from_eig

BOUNDARY_SHRINK = 1e-8
ZERO_EIG_RTOL = 1e-12


@dataclass
class L2FitResult:
    estimate: NDArray[np.float64]
    lambda_star: float
    objective: float
    sample_eigenvalues: NDArray[np.float64]
    precision_eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    boundary: bool = False
    iterations: int = 0

    @property
    def eigen_path(self) -> list[tuple[float, float]]:
        return list(zip(self.sample_eigenvalues.tolist(), self.precision_eigenvalues.tolist()))


def _resolvent(C: NDArray, lam: float) -> NDArray:
    """``(lam I - C)^{-1}``; raises ``NotPDError`` if ``lam I - C`` is not PD."""
    M = lam * np.eye(C.shape[0]) - C
    return inverse_pd(M, cholesky(M))


def objective_l2(C: ArrayLike, lam: float, A_bar: ArrayLike, delta: float) -> float:
    """Dual-reformulated l2 objective at ``(C, lam)``."""
    C = as_symmetric(C)
    A = as_symmetric(A_bar)
    R = _resolvent(C, lam)
    return (
        -logdet_pd(C)
        + float(np.sum(A * C))
        + lam * delta**2
        + float(np.trace(C @ R @ C @ A))
    )


def objective_l2_eigen(c: ArrayLike, a: ArrayLike, lam: float, delta: float) -> float:
    """Eigen-decoupled objective for commuting ``C`` and ``A``."""
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(c <= 0) or np.any(c >= lam):
        raise ValueError("need 0 < c_i < lam for every eigenvalue")
    return float(np.sum(-np.log(c) + a * c + a * c**2 / (lam - c))) + lam * delta**2


def _phi(t: NDArray) -> NDArray:
    return 2.0 / (2.0 + t + np.sqrt(t * (4.0 + t)))


def eigenvalue_map(a: ArrayLike, lam: float) -> NDArray[np.float64]:
    """Minimizer ``c(a)`` of ``-log c + a c + a c**2 / (lam - c)`` over ``(0, lam)``."""
    a = np.maximum(np.asarray(a, dtype=float), 0.0)
    return lam * _phi(a * lam)


def fit_l2(X: ArrayLike, delta: float, center: bool = False, xtol: float = 1e-15) -> L2FitResult:
    """Fit the l2-perturbed estimator to samples ``X`` (rows are observations)."""
    if not delta > 0:
        raise ValueError("delta must be > 0 (delta = 0 is the unpenalized MLE)")
    return fit_l2_from_moment(second_moment(X, center=center), delta, xtol=xtol)


def fit_l2_from_moment(A_bar: ArrayLike, delta: float, xtol: float = 1e-15) -> L2FitResult:
    A = as_symmetric(A_bar)
    d = A.shape[0]
    a, V = symeig(A)
    a = np.where(a <= ZERO_EIG_RTOL * max(float(a[-1]), 0.0), 0.0, a)
    if np.any(a < 0):
        raise ValueError("second-moment matrix must be positive semidefinite")
    d2 = delta**2

    def h(lam):
        return d2 * lam - float(np.sum(_phi(a * lam)))

    hi = d / d2
    lo = hi
    while h(lo) >= 0:
        lo *= 0.5
    lam, info = brentq(h, lo, hi, xtol=xtol * hi, rtol=4 * np.finfo(float).eps, full_output=True)
    c = eigenvalue_map(a, lam)
    boundary = bool(np.any(a == 0))
    c = np.where(a == 0, lam * (1.0 - BOUNDARY_SHRINK), c)
    C = sym_from_eig(c, V)
    obj = float(np.sum(-np.log(c) + a * c + a * c**2 / (lam - c))) + lam * d2
    return L2FitResult(C, float(lam), obj, a, c, V, boundary, info.iterations)


# -- reference solver ---------------------------------------------------------


def _objective_and_grad(C: NDArray, lam: float, A: NDArray, delta: float):
    L = cholesky(C)
    R = _resolvent(C, lam)
    Cinv = inverse_pd(C, L)
    RC = R @ C
    RCA = RC @ A
    f = -logdet_pd(C, L) + float(np.sum(A * C)) + lam * delta**2 + float(np.trace(RCA @ C))
    G = -Cinv + A + RCA + RCA.T + RCA @ RC.T
    G = 0.5 * (G + G.T)
    g_lam = delta**2 - float(np.trace(RC.T @ RC @ A))
    return f, G, g_lam


def _pack(C: NDArray, lam: float, iu) -> NDArray:
    return np.append(C[iu], lam)


def _unpack(z: NDArray, d: int, iu):
    C = np.zeros((d, d))
    C[iu] = z[:-1]
    C = C + C.T - np.diag(np.diag(C))
    return C, float(z[-1])


def _packed_grad(G: NDArray, gl: float, iu) -> NDArray:
    # gradient w.r.t. the free upper-triangle entries (off-diagonals count twice)
    Gs = 2.0 * G - np.diag(np.diag(G))
    return np.append(Gs[iu], gl)


def reference_solver_l2(
    X: ArrayLike,
    delta: float,
    center: bool = False,
    max_iter: int = 500,
    gtol: float = 1e-11,
    fd_step: float = 1e-6,
) -> L2FitResult:
    """Damped Newton on the full ``(C, lam)`` problem (small ``d`` only).

    Works on the packed upper triangle of ``C`` plus ``lam`` without using the
    eigenbasis of ``A``. The Hessian is a central difference of the analytic
    gradient, shifted until positive definite; steps are backtracked until
    ``C`` and ``lam I - C`` pass a Cholesky test and the Armijo condition holds.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    A = second_moment(X, center=center)
    d = A.shape[0]
    if d > 8:
        raise ValueError(f"reference solver is limited to d <= 8, got d={d}")
    if symeig(A)[0][0] <= ZERO_EIG_RTOL * max(float(np.max(np.diag(A))), 1e-300):
        raise ValueError("singular second moment: the minimum sits on the boundary and is not attained")
    iu = np.triu_indices(d)
    C = np.eye(d) / max(float(np.mean(np.diag(A))), 1e-8)
    lam = 2.0 * float(np.max(np.diag(C))) + 1.0 / delta

    def fg(z):
        Cz, lz = _unpack(z, d, iu)
        f, G, gl = _objective_and_grad(Cz, lz, A, delta)
        return f, _packed_grad(G, gl, iu)

    z = _pack(C, lam, iu)
    f, g = fg(z)
    m = z.size
    for it in range(1, max_iter + 1):
        if float(np.max(np.abs(g))) <= gtol:
            break
        H = np.empty((m, m))
        for k in range(m):
            h = fd_step * max(1.0, abs(z[k]))
            e = np.zeros(m)
            e[k] = h
            H[:, k] = (fg(z + e)[1] - fg(z - e)[1]) / (2 * h)
        H = 0.5 * (H + H.T)
        shift = 0.0
        while True:
            try:
                L = np.linalg.cholesky(H + shift * np.eye(m))
                break
            except np.linalg.LinAlgError:
                shift = max(2 * shift, 1e-8 * max(1.0, float(np.max(np.abs(np.diag(H))))))
        step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        while True:
            try:
                fn, gn = fg(z + t * step)
                if fn <= f + 1e-4 * t * float(g @ step):
                    break
                # near the optimum f is flat to rounding; accept on gradient decrease
                if abs(fn - f) <= 1e-13 * max(1.0, abs(f)) and np.max(np.abs(gn)) < np.max(np.abs(g)):
                    break
            except NotPDError:
                pass
            t *= 0.5
            if t < 1e-20:
                raise RuntimeError("reference solver line search collapsed")
        z, f, g = z + t * step, fn, gn
    else:
        raise RuntimeError(f"reference solver hit the iteration cap ({max_iter})")
    C, lam = _unpack(z, d, iu)
    c, V = symeig(C)
    a = np.diag(V.T @ A @ V)
    return L2FitResult(C, lam, f, a, c, V, iterations=it)


# -- identities and equivalences ------------------------------------------------


def trace_identity_check(C: ArrayLike, lam: float, A_bar: ArrayLike) -> float:
    """``|tr(C R C A) - (lam**2 tr(R A) - tr((lam I + C) A))|`` with ``R = (lam I - C)^{-1}``."""
    C = as_symmetric(C)
    A = as_symmetric(A_bar)
    R = _resolvent(C, lam)
    lhs = float(np.trace(C @ R @ C @ A))
    rhs = lam**2 * float(np.trace(R @ A)) - float(np.trace((lam * np.eye(C.shape[0]) + C) @ A))
    return abs(lhs - rhs)


def wasserstein_objective(C: ArrayLike, lam: float, X: ArrayLike, rho: float) -> float:
    """Wasserstein shrinkage objective written in terms of the samples.

    ``-log det C + lam (rho**2 - mean ||x||**2) + lam**2 mean x^T (lam I - C)^{-1} x``.
    """
    C = as_symmetric(C)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = _resolvent(C, lam)
    sq = float(np.mean(np.sum(X * X, axis=1)))
    quad = float(np.mean(np.einsum("ij,jk,ik->i", X, R, X)))
    return -logdet_pd(C) + lam * (rho**2 - sq) + lam**2 * quad


def samplewise_dual_objective(C: ArrayLike, X: ArrayLike, delta: float) -> float:
    """``-log det C + mean_i max_{||D||_2 <= delta} (x_i + D)^T C (x_i + D)``.

    Each sample gets its own dual multiplier, so this never exceeds the
    shared-multiplier objective at the same ``C``.
    """
    C = as_symmetric(C)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    inner = np.mean([worst_case_l2(x, C, delta).value for x in X])
    return -logdet_pd(C) + float(inner)


def eigen_order_reversed(result: L2FitResult, rtol: float = 1e-12) -> bool:
    """``a_i <= a_j`` implies ``c_i >= c_j`` (up to ``rtol``)."""
    order = np.argsort(result.sample_eigenvalues, kind="stable")
    c = result.precision_eigenvalues[order]
    return bool(np.all(np.diff(c) <= rtol * np.max(np.abs(c))))


def commutator_norm(C: ArrayLike, A: ArrayLike) -> float:
    C = np.asarray(C)
    A = np.asarray(A)
    return float(np.max(np.abs(A @ C - C @ A)))

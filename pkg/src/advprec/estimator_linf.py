"""Scale-adaptive weighted graphical lasso (the l-infinity surrogate estimator).

The surrogate objective of the l-infinity perturbed problem is

    -log det C + tr(A C) + sum_{k,j} lam_kj |C_kj|,
    lam_kj = delta * (omega_k + omega_j) + delta**2,

with ``A`` the (uncentered) second-moment matrix and ``omega_k`` the empirical
mean of ``|x_k|``. It is solved by a proximal Newton method in the style of
QUIC: each outer iteration minimizes the l1-penalized second-order model over
a free set of coordinates by cyclic coordinate descent, and the step is
accepted by Armijo backtracking restricted to positive definite iterates.
Entries outside the support are exact zeros produced by soft-thresholding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.typing import ArrayLike, NDArray

from .matkernel import NotPDError, as_symmetric, cholesky, inverse_pd, logdet_pd

logger = logging.getLogger(__name__)

CD_FORCING = 1e-2


class SolverError(RuntimeError):
    """Base class for weighted graphical lasso failures."""


class LineSearchError(SolverError):
    """No positive definite step satisfied the sufficient-decrease condition."""


class IterationLimitError(SolverError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DivergenceError(SolverError):
    """Iterates grow without bound; the minimizer most likely does not exist."""


@dataclass(frozen=True)
class SolverConfig:
    tol_kkt: float = 1e-6
    max_newton_iters: int = 100
    max_cd_sweeps: int = 1000
    armijo_sigma: float = 0.25
    armijo_beta: float = 0.5
    max_line_search: int = 50
    center: bool = False

    def __post_init__(self):
        if self.tol_kkt <= 0 or self.max_newton_iters < 1 or self.max_cd_sweeps < 1:
            raise ValueError("tolerances and iteration caps must be positive")
        if not 0 < self.armijo_sigma < 0.5:
            raise ValueError("armijo_sigma must lie in (0, 0.5)")
        if not 0 < self.armijo_beta < 1:
            raise ValueError("armijo_beta must lie in (0, 1)")


@dataclass
class EstimateResult:
    estimate: NDArray[np.float64]
    objective: float
    iterations: int
    kkt_residual: float
    support: set[tuple[int, int]]
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def support_size(self) -> int:
        return len(self.support)


# -- data summaries -----------------------------------------------------------


def second_moment(X: ArrayLike, center: bool = False) -> NDArray[np.float64]:
    """``(1/n) sum_i x_i x_i^T``; the mean is removed only if ``center``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("empty dataset")
    if center:
        X = X - X.mean(axis=0)
    A = X.T @ X / X.shape[0]
    return 0.5 * (A + A.T)


def empirical_abs_means(X: ArrayLike) -> NDArray[np.float64]:
    """Column means of ``|X|``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("empty dataset")
    return np.mean(np.abs(X), axis=0)


def build_penalty(omega: ArrayLike, delta: float, penalize_diagonal: bool = False) -> NDArray[np.float64]:
    """Entrywise penalty ``delta * (omega_k + omega_j) + delta**2``.

    The diagonal is zero unless ``penalize_diagonal``.
    """
    omega = np.asarray(omega, dtype=float)
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if np.any(omega < 0):
        raise ValueError("omega must be nonnegative")
    P = delta * (omega[:, None] + omega[None, :]) + delta**2
    if not penalize_diagonal:
        np.fill_diagonal(P, 0.0)
    return P


def uniform_penalty(d: int, lam: float, penalize_diagonal: bool = False) -> NDArray[np.float64]:
    P = np.full((d, d), float(lam))
    if not penalize_diagonal:
        np.fill_diagonal(P, 0.0)
    return P


# -- objective and optimality ---------------------------------------------------


def penalized_objective(A_bar: NDArray, penalty: NDArray, C: NDArray, L: NDArray | None = None) -> float:
    return -logdet_pd(C, L) + float(np.sum(A_bar * C)) + float(np.sum(penalty * np.abs(C)))


def _kkt_matrix(G: NDArray, penalty: NDArray, C: NDArray) -> NDArray:
    nz = C != 0
    return np.where(nz, np.abs(G + penalty * np.sign(C)), np.maximum(np.abs(G) - penalty, 0.0))


def kkt_residual(A_bar: ArrayLike, penalty: ArrayLike, C: ArrayLike) -> float:
    """Largest distance of ``A - C^{-1}`` from ``-penalty * d|C|`` over entries."""
    A_bar = np.asarray(A_bar, dtype=float)
    penalty = np.asarray(penalty, dtype=float)
    C = np.asarray(C, dtype=float)
    W = inverse_pd(C)
    return float(np.max(_kkt_matrix(A_bar - W, penalty, C)))


def support_of(C: NDArray) -> set[tuple[int, int]]:
    i, j = np.nonzero(np.triu(C, k=1))
    return set(zip(i.tolist(), j.tolist()))


# -- Newton direction (coordinate descent on the l1-penalized quadratic model) --


@njit(cache=True)
def _newton_direction(S, W, C, Lam, free_i, free_j, max_sweeps, tol):
    d = S.shape[0]
    D = np.zeros((d, d))
    U = np.zeros((d, d))
    nfree = free_i.shape[0]
    for _ in range(max_sweeps):
        max_mu = 0.0
        for k in range(nfree):
            i = free_i[k]
            j = free_j[k]
            if i == j:
                a = W[i, i] * W[i, i]
            else:
                a = W[i, j] * W[i, j] + W[i, i] * W[j, j]
            wu = 0.0
            for m in range(d):
                wu += W[i, m] * U[m, j]
            b = S[i, j] - W[i, j] + wu
            c = C[i, j] + D[i, j]
            z = c - b / a
            thr = Lam[i, j] / a
            if z > thr:
                mu = z - thr - c
            elif z < -thr:
                mu = z + thr - c
            else:
                mu = -c
            if mu != 0.0:
                D[i, j] += mu
                if i != j:
                    D[j, i] += mu
                    for m in range(d):
                        U[i, m] += mu * W[j, m]
                        U[j, m] += mu * W[i, m]
                else:
                    for m in range(d):
                        U[i, m] += mu * W[i, m]
                if abs(mu) > max_mu:
                    max_mu = abs(mu)
        if max_mu <= tol:
            break
    return D


def _free_set(G: NDArray, penalty: NDArray, C: NDArray):
    upper = np.triu(np.ones_like(C, dtype=bool))
    free = upper & ((C != 0) | (np.abs(G) > penalty))
    np.fill_diagonal(free, True)
    i, j = np.nonzero(free)
    return i.astype(np.int64), j.astype(np.int64)


def _quic(S, P, C, config, tol):
    """Proximal Newton iterations; returns ``(C, f, iterations, kkt, history)``."""
    L = cholesky(C)
    W = inverse_pd(C, L)
    f = penalized_objective(S, P, C, L)
    history = [f]
    diag0 = float(np.max(np.diag(C)))
    kkt = np.inf
    for it in range(config.max_newton_iters + 1):
        G = S - W
        kkt = float(np.max(_kkt_matrix(G, P, C)))
        if kkt <= tol:
            return C, f, it, kkt, history
        if it == config.max_newton_iters:
            break
        fi, fj = _free_set(G, P, C)
        D = _newton_direction(S, W, C, P, fi, fj, config.max_cd_sweeps, CD_FORCING * min(kkt, 1.0) * kkt)
        pen_now = float(np.sum(P * np.abs(C)))
        decrease = float(np.sum(G * D)) + float(np.sum(P * np.abs(C + D))) - pen_now
        if not np.isfinite(decrease) or np.max(np.abs(D)) == 0.0:
            raise LineSearchError(f"degenerate Newton direction at iteration {it} (kkt={kkt:.3e})")
        alpha = 1.0
        for _ in range(config.max_line_search):
            Cn = C + alpha * D
            try:
                Ln = cholesky(Cn)
            except NotPDError:
                alpha *= config.armijo_beta
                continue
            fn = penalized_objective(S, P, Cn, Ln)
            if fn <= f + config.armijo_sigma * alpha * decrease:
                break
            alpha *= config.armijo_beta
        else:
            raise LineSearchError(f"line search failed at iteration {it} (kkt={kkt:.3e})")
        C, L, f = Cn, Ln, fn
        W = inverse_pd(C, L)
        history.append(f)
        if float(np.max(np.diag(C))) > 1e12 * max(diag0, 1.0) or f < -1e12:
            raise DivergenceError(
                "diagonal of the iterate diverges; the penalized problem is likely unbounded below"
            )
    raise IterationLimitError(
        f"no convergence after {config.max_newton_iters} Newton iterations (kkt={kkt:.3e})",
        (C, f, config.max_newton_iters, kkt, history),
    )


def weighted_glasso(
    A_bar: ArrayLike,
    penalty: ArrayLike,
    config: SolverConfig | None = None,
    init: ArrayLike | None = None,
) -> EstimateResult:
    """Minimize ``-log det C + tr(A C) + sum(penalty * |C|)`` over ``C > 0``.

    Parameters
    ----------
    A_bar : (d, d) array
        Symmetric matrix with strictly positive diagonal.
    penalty : (d, d) array
        Symmetric nonnegative weights; entries of ``1e12`` or more act as hard
        zero constraints.
    config : SolverConfig, optional
    init : (d, d) array, optional
        Positive definite warm start. Defaults to ``diag(1 / diag(A_bar))``.

    Returns
    -------
    EstimateResult
        ``objective`` and ``history`` refer to the problem as posed (unscaled).

    Raises
    ------
    LineSearchError, IterationLimitError, DivergenceError

    Notes
    -----
    The iterations run on the unit-diagonal problem ``D^-1 A D^-1`` with
    penalty ``P_ij / (D_i D_j)``, ``D = sqrt(diag(A))``; the two problems have
    the same solution up to the congruence ``C = D^-1 C' D^-1`` and the
    rescaled one is much better conditioned for coordinate descent when the
    variables live on different scales. The tolerance is tightened so the KKT
    residual of the original problem meets ``config.tol_kkt``.
    """
    config = config or SolverConfig()
    S = as_symmetric(A_bar)
    P = as_symmetric(penalty)
    if S.shape != P.shape:
        raise ValueError("A_bar and penalty shapes differ")
    if np.any(np.diag(S) <= 0):
        raise ValueError("A_bar must have a strictly positive diagonal")
    if np.any(P < 0):
        raise ValueError("penalty must be nonnegative")

    dsc = np.sqrt(np.diag(S))
    outer = np.outer(dsc, dsc)
    S1 = S / outer
    np.fill_diagonal(S1, 1.0)
    P1 = P / outer
    C1 = np.eye(S.shape[0]) if init is None else as_symmetric(init) * outer
    tol = config.tol_kkt / max(1.0, float(np.max(outer)))

    try:
        C1, _, it, _, hist1 = _quic(S1, P1, C1, config, tol)
    except IterationLimitError as exc:
        C1, _, it, _, hist1 = exc.result
        C = C1 / outer
        kkt = kkt_residual(S, P, C)
        result = EstimateResult(C, penalized_objective(S, P, C), it, kkt, support_of(C))
        raise IterationLimitError(str(exc), result) from None

    C = C1 / outer
    C = 0.5 * (C + C.T)
    shift = 2.0 * float(np.sum(np.log(dsc)))
    history = [h + shift for h in hist1]
    kkt = kkt_residual(S, P, C)
    if kkt > config.tol_kkt:
        C, f, extra, kkt, more = _quic(S, P, C, config, config.tol_kkt)
        it += extra
        history += more[1:]
    return EstimateResult(C, penalized_objective(S, P, C), it, kkt, support_of(C), history)


def fit_linf(
    X: ArrayLike,
    delta: float,
    config: SolverConfig | None = None,
    penalize_diagonal: bool = False,
    init: ArrayLike | None = None,
) -> EstimateResult:
    """Fit the scale-adaptive l-infinity surrogate estimator to samples ``X``."""
    config = config or SolverConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2 or d < 2:
        raise ValueError(f"need n >= 2 and d >= 2, got n={n}, d={d}")
    if config.center:
        X = X - X.mean(axis=0)
    A = second_moment(X)
    P = build_penalty(empirical_abs_means(X), delta, penalize_diagonal)
    return weighted_glasso(A, P, config, init=init)

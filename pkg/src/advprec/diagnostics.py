"""Incoherence constants, consistency constants and a primal-dual witness check.

Pairs are vectorized the way ``Gamma = Sigma kron Sigma`` is indexed: the
ordered pair ``(i, j)`` (zero-based) maps to row ``i * d + j``, and the
support ``S`` contains both orientations of each edge plus the diagonal. Only
the blocks of ``Gamma`` that are needed are formed, entrywise from
``Gamma[(i, j), (k, l)] = Sigma[i, k] * Sigma[j, l]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .estimator_linf import (
    SolverConfig,
    build_penalty,
    empirical_abs_means,
    fit_linf,
    second_moment,
    support_of,
    weighted_glasso,
)
from .matkernel import as_symmetric, inf_norm, inverse_pd, max_norm

KRON_GUARD = 4_000_000
RESTRICTED_PENALTY = 1e12
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class CertificateInconsistency(AssertionError):
    """A strictly feasible witness disagreed with the unrestricted fit."""


class BoundViolation(AssertionError):
    """A scale-transfer inequality failed although its hypothesis held."""


@dataclass(frozen=True)
class SupportIndex:
    d: int
    E: frozenset  # unordered (i, j), i < j
    s: int

    @property
    def S(self) -> list[tuple[int, int]]:
        """Ordered pairs of the support, diagonal included, in row-major order."""
        out = [(i, i) for i in range(self.d)]
        out += [(i, j) for i, j in self.E] + [(j, i) for i, j in self.E]
        return sorted(out)

    @property
    def Sc(self) -> list[tuple[int, int]]:
        S = set(self.S)
        return [(i, j) for i in range(self.d) for j in range(self.d) if (i, j) not in S]


def support_sets(precision: ArrayLike, tol: float = 0.0) -> SupportIndex:
    M = as_symmetric(precision)
    d = M.shape[0]
    mask = np.abs(M) > tol
    np.fill_diagonal(mask, True)
    iu, ju = np.nonzero(np.triu(mask, k=1))
    E = frozenset(zip(iu.tolist(), ju.tolist()))
    s = int(mask.sum(axis=1).max()) if d else 0
    return SupportIndex(d, E, max(s, 1))


def _as_index(support) -> SupportIndex:
    if isinstance(support, SupportIndex):
        return support
    raise TypeError("expected a SupportIndex (see support_sets)")


def _gamma_block(Sigma: NDArray, rows: list, cols: list) -> NDArray:
    r = np.asarray(rows, dtype=np.intp).reshape(-1, 2)
    c = np.asarray(cols, dtype=np.intp).reshape(-1, 2)
    return Sigma[np.ix_(r[:, 0], c[:, 0])] * Sigma[np.ix_(r[:, 1], c[:, 1])]


def _incoherence_matrix(Sigma: NDArray, idx: SupportIndex):
    """``A = Gamma_{S^c S} (Gamma_SS)^-1`` and ``(Gamma_SS)^-1``."""
    # Gamma has d**2 x d**2 entries; the guard keeps it below KRON_GUARD (d <= 44)
    if idx.d**4 > KRON_GUARD:
        raise ValueError(f"Gamma would have {idx.d**4} entries, above the dense Kronecker guard {KRON_GUARD}")
    S, Sc = idx.S, idx.Sc
    G_SS = _gamma_block(Sigma, S, S)
    try:
        fac = cho_factor(G_SS, lower=True)
    except LinAlgError as exc:
        raise np.linalg.LinAlgError("Gamma_SS is singular") from exc
    G_SS_inv = cho_solve(fac, np.eye(len(S)))
    if not Sc:
        return np.zeros((0, len(S))), G_SS_inv
    A = cho_solve(fac, _gamma_block(Sigma, S, Sc)).T
    return A, G_SS_inv


def oracle_weights(cov: ArrayLike) -> NDArray[np.float64]:
    """``omega*_i = E|x_i| = sqrt(2 / pi * Sigma_ii)`` for centred Gaussians."""
    return np.sqrt(2.0 / math.pi * np.diag(as_symmetric(cov)))


def _pair_penalty(omega: NDArray, delta: float, pairs) -> NDArray:
    p = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
    lam = delta * (omega[p[:, 0]] + omega[p[:, 1]]) + delta**2
    return np.where(p[:, 0] == p[:, 1], 0.0, lam)


@dataclass(frozen=True)
class Incoherence:
    mu_star: float
    psi_star: float
    kappa_gamma: float
    kappa_sigma: float
    kappa_a: float


def incoherence(cov: ArrayLike, support: SupportIndex, delta: float) -> Incoherence:
    """Classic and scale-adaptive incoherence plus the three norms.

    Diagonal members of ``S`` carry ``lambda*_ss = 0`` and so drop out of the
    scale-adaptive sum.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    Sigma = as_symmetric(cov)
    idx = _as_index(support)
    A, G_SS_inv = _incoherence_matrix(Sigma, idx)
    absA = np.abs(A)
    mu = float(absA.sum(axis=1).max()) if A.size else 0.0
    omega = oracle_weights(Sigma)
    lam_S = _pair_penalty(omega, delta, idx.S)
    lam_Sc = _pair_penalty(omega, delta, idx.Sc)
    psi = float((absA @ lam_S / lam_Sc).max()) if A.size else 0.0
    return Incoherence(
        mu_star=mu,
        psi_star=psi,
        kappa_gamma=inf_norm(G_SS_inv),
        kappa_sigma=inf_norm(Sigma),
        kappa_a=float(absA.sum(axis=1).max()) if A.size else 0.0,
    )


@dataclass(frozen=True)
class Theorem5Constants:
    c_delta: float
    B: float
    n_min: float
    error_bound_coeff: float


def _sigma_range(Sigma: NDArray) -> tuple[float, float]:
    sd = np.sqrt(np.diag(Sigma))
    return float(sd.max()), float(sd.min())


def theorem5_constants(
    cov: ArrayLike,
    support: SupportIndex,
    tau: float,
    alpha: float,
    C1: float = 0.5,
    C2: float = 0.5,
    inc: Incoherence | None = None,
) -> Theorem5Constants:
    """Penalty scale, error constant and sample-size threshold, literally.

    ``C1`` and ``C2`` are the unspecified concentration constants; the
    defaults are a calibration, not derived values. ``n_min`` already includes
    the ``log d`` factor.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not tau > 2.0:
        raise ValueError(f"tau must exceed 2, got {tau}")
    Sigma = as_symmetric(cov)
    idx = _as_index(support)
    if inc is None:
        inc = incoherence(Sigma, idx, 1.0)  # the norms do not depend on delta
    smax, smin = _sigma_range(Sigma)
    kG, kS, kA = inc.kappa_gamma, inc.kappa_sigma, inc.kappa_a
    c_delta = math.sqrt(tau) / alpha * max(
        16.0 * C2 * smax,
        2.0 * math.sqrt(2.0 * math.pi) * (1.0 + kA) * C1 * smax**2 / smin,
    )
    B = C1 * smax**2 * math.sqrt(tau) + 3.0 * SQRT_2_OVER_PI * smax * c_delta + c_delta**2
    s = idx.s
    n_min = max(
        2.0 * math.pi * C2**2 * (smax / smin) ** 2 * tau,
        36.0 * kG**4 * kS**6 * B**2 * s**2,
        (12.0 * math.sqrt(2.0 * math.pi) * (1.0 + kA) * kS**3 * kG**2 * B**2 / (alpha * smin * c_delta)) ** 2
        * s**2,
    ) * math.log(idx.d)
    return Theorem5Constants(c_delta, B, n_min, 2.0 * kG * B)


@dataclass
class DiagnosticsReport:
    kappa_gamma: float
    kappa_sigma: float
    kappa_a: float
    mu_star: float
    psi_star: float
    omega_star: list[float]
    sigma_max: float
    sigma_min: float
    c_delta: float
    B: float
    n_min: float
    tau: float
    alpha: float
    delta: float = float("nan")
    error_bound_coeff: float = float("nan")
    C1: float = 0.5
    C2: float = 0.5

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


def diagnostics_report(
    cov: ArrayLike,
    support: SupportIndex,
    delta: float,
    tau: float = 3.0,
    alpha: float = 0.5,
    C1: float = 0.5,
    C2: float = 0.5,
) -> DiagnosticsReport:
    Sigma = as_symmetric(cov)
    inc = incoherence(Sigma, support, delta)
    t5 = theorem5_constants(Sigma, support, tau, alpha, C1, C2, inc=inc)
    smax, smin = _sigma_range(Sigma)
    return DiagnosticsReport(
        kappa_gamma=inc.kappa_gamma,
        kappa_sigma=inc.kappa_sigma,
        kappa_a=inc.kappa_a,
        mu_star=inc.mu_star,
        psi_star=inc.psi_star,
        omega_star=oracle_weights(Sigma).tolist(),
        sigma_max=smax,
        sigma_min=smin,
        c_delta=t5.c_delta,
        B=t5.B,
        n_min=t5.n_min,
        tau=tau,
        alpha=alpha,
        delta=delta,
        error_bound_coeff=t5.error_bound_coeff,
        C1=C1,
        C2=C2,
    )


# -- primal-dual witness ------------------------------------------------------


@dataclass
class PDWCertificate:
    restricted_estimate: NDArray[np.float64]
    dual_offsupport_max: float
    strictly_feasible: bool
    W_max: float
    r: float
    remainder_max: float
    unrestricted_support: frozenset = field(default_factory=frozenset)
    support_recovered: bool = False
    t_omega: float = float("nan")
    eps_n: float = float("nan")

    def summary(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("restricted_estimate", "unrestricted_support")}
        out["unrestricted_support_size"] = len(self.unrestricted_support)
        return out


def pdw_certificate(
    X: ArrayLike,
    cov_truth: ArrayLike,
    support: SupportIndex,
    delta: float,
    config: SolverConfig | None = None,
    tau: float | None = None,
    C2: float = 0.5,
    check_margin: float = 1e-6,
) -> PDWCertificate:
    """Support-restricted fit, off-support dual variable and error radii.

    The restricted problem is the scale-adaptive weighted lasso with a
    prohibitive penalty off the support, so those entries are exactly zero.
    When the off-support dual satisfies ``max |Z| < 1 - check_margin`` the
    unrestricted fit must coincide with the restricted one; a support outside
    ``S`` then raises :class:`CertificateInconsistency`.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    config = config or SolverConfig()
    X = np.asarray(X, dtype=float)
    Sigma = as_symmetric(cov_truth)
    idx = _as_index(support)
    d = idx.d
    A_bar = second_moment(X, center=config.center)
    P = build_penalty(empirical_abs_means(X), delta, penalize_diagonal=False)

    on_S = np.eye(d, dtype=bool)
    for i, j in idx.E:
        on_S[i, j] = on_S[j, i] = True
    P_restricted = np.where(on_S, P, RESTRICTED_PENALTY)
    res = weighted_glasso(A_bar, P_restricted, config)
    C_dot = res.estimate.copy()
    C_dot[~on_S] = 0.0
    C_inv = inverse_pd(C_dot)

    off = ~on_S
    Z_off = (-A_bar + C_inv)[off] / P[off] if off.any() else np.zeros(0)
    z_max = float(np.max(np.abs(Z_off))) if Z_off.size else 0.0
    feasible = z_max < 1.0

    kG = incoherence(Sigma, idx, delta).kappa_gamma
    W_max = max_norm(A_bar - Sigma)
    lam_S = float(P[on_S].max())
    r = 2.0 * kG * (W_max + lam_S)
    Delta = C_dot - inverse_pd(Sigma)
    remainder = C_inv - Sigma + Sigma @ Delta @ Sigma

    unrestricted = fit_linf(X, delta, config=config)
    sup = support_of(unrestricted.estimate)
    if z_max < 1.0 - check_margin and not sup <= idx.E:
        raise CertificateInconsistency(
            f"max off-support dual {z_max:.6g} < 1 but the unrestricted fit has "
            f"{len(sup - idx.E)} edges outside the support"
        )

    t_omega = eps_n = float("nan")
    if tau is not None:
        n = X.shape[0]
        t_omega = C2 * _sigma_range(Sigma)[0] * math.sqrt(tau * math.log(d) / n)
        eps_n = 2.0 * t_omega / delta
    return PDWCertificate(
        restricted_estimate=C_dot,
        dual_offsupport_max=z_max,
        strictly_feasible=feasible,
        W_max=W_max,
        r=r,
        remainder_max=max_norm(remainder),
        unrestricted_support=frozenset(sup),
        support_recovered=frozenset(sup) == idx.E,
        t_omega=t_omega,
        eps_n=eps_n,
    )


# -- scale transfer -----------------------------------------------------------


@dataclass(frozen=True)
class ScaleBoundCheck:
    lhs_mu: float
    rhs_mu: float
    lhs_psi: float
    rhs_psi: float
    hypothesis_ok: bool


def scale_adaptive_bound_check(
    cov: ArrayLike, support: SupportIndex, delta: float, rtol: float = 1e-12
) -> ScaleBoundCheck:
    """Compare both incoherence quantities with their correlation-scale bounds.

    With ``Sigma = D R D`` the bounds use ``A_dagger`` built from ``R``. When
    ``10 delta < sqrt(2 / pi) sigma_min`` both inequalities are asserted.
    """
    Sigma = as_symmetric(cov)
    idx = _as_index(support)
    sd = np.sqrt(np.diag(Sigma))
    R = Sigma / np.outer(sd, sd)
    A_dag, _ = _incoherence_matrix(R, idx)
    A_dag_norm = float(np.abs(A_dag).sum(axis=1).max()) if A_dag.size else 0.0
    inc = incoherence(Sigma, idx, delta)
    ratio = float(sd.max() / sd.min())
    out = ScaleBoundCheck(
        lhs_mu=inc.mu_star,
        rhs_mu=ratio**2 * A_dag_norm,
        lhs_psi=inc.psi_star,
        rhs_psi=21.0 / 20.0 * ratio * A_dag_norm,
        hypothesis_ok=bool(10.0 * delta < SQRT_2_OVER_PI * float(sd.min())),
    )
    if out.hypothesis_ok:
        for name, lhs, rhs in (("mu", out.lhs_mu, out.rhs_mu), ("psi", out.lhs_psi, out.rhs_psi)):
            if lhs > rhs * (1.0 + rtol) + rtol:
                raise BoundViolation(f"{name}: {lhs!r} > {rhs!r}")
    return out

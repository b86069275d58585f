import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.stats import ortho_group

from advprec.estimator_l2 import (
    commutator_norm,
    eigen_order_reversed,
    eigenvalue_map,
    fit_l2,
    fit_l2_from_moment,
    objective_l2,
    objective_l2_eigen,
    reference_solver_l2,
    samplewise_dual_objective,
    trace_identity_check,
    wasserstein_objective,
)
from advprec.estimator_linf import second_moment
from advprec.matkernel import NotPDError
from advprec.synth import make_model, sample_gaussian
from conftest import random_pd


def scalar_objective(z, a, delta):
    c, lam = z
    if not 0 < c < lam:
        return np.inf
    return -np.log(c) + a * c + lam * delta**2 + a * c**2 / (lam - c)


def grid_oracle_1d(a, delta):
    cs = np.linspace(1e-3, 5.0 / a, 1500)
    lams = np.linspace(1e-3, 4.0 / delta**2 + 10.0 / a, 1500)
    Cg, Lg = np.meshgrid(cs, lams, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        F = np.where(Cg < Lg, -np.log(Cg) + a * Cg + Lg * delta**2 + a * Cg**2 / (Lg - Cg), np.inf)
    k = np.unravel_index(np.argmin(F), F.shape)
    res = minimize(scalar_objective, [Cg[k], Lg[k]], args=(a, delta), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
    return res.x


def test_objective_examples(rng):
    assert objective_l2(np.eye(2), 2.0, np.eye(2), 1.0) == pytest.approx(6.0)
    C, A = random_pd(rng, 3), random_pd(rng, 3)
    base = -np.linalg.slogdet(C)[1] + np.sum(A * C)
    assert objective_l2(C, 1e9, A, 0.0) == pytest.approx(base, rel=1e-6)
    Q = ortho_group.rvs(4, random_state=3)
    a, c = rng.uniform(0.2, 3.0, 4), rng.uniform(0.2, 2.0, 4)
    A, C = Q @ np.diag(a) @ Q.T, Q @ np.diag(c) @ Q.T
    assert objective_l2(C, 3.0, A, 0.4) == pytest.approx(objective_l2_eigen(c, a, 3.0, 0.4), abs=1e-10)
    with pytest.raises(NotPDError):
        objective_l2(np.eye(2), 0.5, np.eye(2), 1.0)


def test_scalar_map_is_stationary():
    for a in (0.01, 0.5, 3.0, 70.0):
        for lam in (0.3, 2.0, 50.0):
            c = eigenvalue_map(a, lam)
            assert 0 < c < lam
            assert a * lam**2 * c == pytest.approx((lam - c) ** 2, rel=1e-10)


@pytest.mark.parametrize("a,delta", [(1.0, 0.5), (0.3, 0.2), (4.0, 1.0)])
def test_d1_against_grid(a, delta):
    c_ref, lam_ref = grid_oracle_1d(a, delta)
    res = fit_l2_from_moment([[a]], delta)
    assert res.estimate[0, 0] == pytest.approx(c_ref, abs=1e-5)
    assert res.lambda_star == pytest.approx(lam_ref, rel=1e-5)
    X = np.array([[np.sqrt(a)], [-np.sqrt(a)]])
    ref = reference_solver_l2(X, delta)
    assert ref.estimate[0, 0] == pytest.approx(c_ref, abs=1e-5)


def test_small_delta_recovers_inverse():
    X = sample_gaussian(make_model("ar2", 4).covariance, 50, 2)
    np.testing.assert_allclose(fit_l2(X, 1e-4).estimate, np.linalg.inv(second_moment(X)), atol=1e-3)
    np.testing.assert_allclose(reference_solver_l2(X, 1e-6).estimate, np.linalg.inv(second_moment(X)), atol=1e-3)


@pytest.mark.parametrize("d,n,delta", [(2, 10, 0.3), (3, 7, 0.8), (5, 20, 0.2), (8, 30, 0.5)])
def test_agrees_with_reference(d, n, delta):
    cov = random_pd(np.random.default_rng(d), d)
    X = sample_gaussian(cov, n, d, n)
    fast, ref = fit_l2(X, delta), reference_solver_l2(X, delta)
    assert np.max(np.abs(fast.estimate - ref.estimate)) <= 1e-4
    assert fast.objective == pytest.approx(ref.objective, rel=1e-6)
    assert fast.lambda_star == pytest.approx(ref.lambda_star, rel=1e-4)


def test_rank_deficient_boundary_limit():
    d, n, delta = 5, 3, 0.5
    X = sample_gaussian(np.eye(d), n, 4)
    res = fit_l2(X, delta)
    assert res.boundary
    assert np.all(np.linalg.eigvalsh(res.estimate) > 0)
    assert np.all(res.precision_eigenvalues < res.lambda_star)
    with pytest.raises(ValueError, match="singular"):
        reference_solver_l2(X, delta)
    # ridging by eps I through extra rows gives an attained minimum; the reference
    # solver confirms it and the ridged fits approach the boundary value like sqrt(eps)
    m = n + d
    gaps = []
    for eps in (1e-4, 1e-5, 1e-6):
        Xr = np.vstack([np.sqrt(m / n) * X, np.sqrt(m * eps) * np.eye(d)])
        np.testing.assert_allclose(second_moment(Xr), second_moment(X) + eps * np.eye(d), atol=1e-14)
        fast = fit_l2(Xr, delta)
        assert np.max(np.abs(reference_solver_l2(Xr, delta).estimate - fast.estimate)) <= 1e-4
        gaps.append(np.max(np.abs(fast.estimate - res.estimate)))
    for a, b in zip(gaps, gaps[1:]):
        assert b / a == pytest.approx(10**-0.5, rel=0.1)


def test_invariants_on_fits(rng):
    for trial in range(20):
        d = int(rng.integers(1, 9))
        n = int(rng.integers(2, 40))
        X = rng.standard_normal((n, d)) @ np.linalg.cholesky(random_pd(rng, d)).T
        res = fit_l2(X, float(rng.uniform(0.05, 1.5)))
        A = second_moment(X)
        assert np.all(res.precision_eigenvalues < res.lambda_star * (1 - 1e-10))
        assert commutator_norm(res.estimate, A) <= 1e-8 * np.max(np.abs(A)) * np.max(np.abs(res.estimate))
        assert eigen_order_reversed(res)


def test_rotation_equivariance(rng):
    X = rng.standard_normal((30, 6)) @ np.linalg.cholesky(random_pd(rng, 6)).T
    Q = ortho_group.rvs(6, random_state=5)
    a, b = fit_l2(X, 0.4).estimate, fit_l2(X @ Q.T, 0.4).estimate
    np.testing.assert_allclose(b, Q @ a @ Q.T, atol=1e-6)


def test_trace_identity(rng):
    assert trace_identity_check(np.eye(3), 2.0, np.eye(3)) == 0.0
    for _ in range(100):
        d = int(rng.integers(1, 8))
        C, A = random_pd(rng, d), random_pd(rng, d)
        lam = float(rng.uniform(1.05, 4.0)) * np.linalg.eigvalsh(C)[-1]
        scale = abs(np.trace(C @ np.linalg.inv(lam * np.eye(d) - C) @ C @ A))
        assert trace_identity_check(C, lam, A) <= 1e-9 * (1 + scale)
    c, a = rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 4)
    assert trace_identity_check(np.diag(c), 5.0, np.diag(a)) <= 1e-12


def test_wasserstein_equivalence(rng):
    assert wasserstein_objective(np.eye(2), 2.0, np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]) * np.sqrt(2), 1.0) \
        == pytest.approx(6.0)
    for _ in range(50):
        d = int(rng.integers(1, 7))
        X = rng.standard_normal((int(rng.integers(2, 20)), d))
        C = random_pd(rng, d)
        lam = 1.5 * np.linalg.eigvalsh(C)[-1]
        delta = float(rng.uniform(0.0, 1.0))
        w = wasserstein_objective(C, lam, X, delta)
        assert w == pytest.approx(objective_l2(C, lam, second_moment(X), delta), rel=1e-9)


def test_shared_multiplier_dominates_samplewise(rng):
    for _ in range(10):
        d = int(rng.integers(2, 6))
        X = rng.standard_normal((15, d))
        res = fit_l2(X, 0.3)
        assert samplewise_dual_objective(res.estimate, X, 0.3) <= res.objective + 1e-9


def test_identity_moment_first_order_limit():
    # with A = I the fit is c I, c = lam / (lam + 2) to leading order and lam ~ sqrt(d) / delta
    for d in (1, 3, 10):
        slopes = [(fit_l2_from_moment(np.eye(d), dl).estimate[0, 0] - 1.0) / dl for dl in (1e-3, 1e-4, 1e-5)]
        assert slopes[-1] == pytest.approx(-2.0 / np.sqrt(d), rel=1e-3)
        assert abs(slopes[-1] + 2 / np.sqrt(d)) < abs(slopes[0] + 2 / np.sqrt(d))


def test_rejects_zero_delta():
    with pytest.raises(ValueError):
        fit_l2(np.ones((3, 2)), 0.0)

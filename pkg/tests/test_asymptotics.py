import math

import numpy as np
import pytest

from advprec.asymptotics import (
    AsymptoticsConfig,
    FailureBudgetExceeded,
    bias_matrix,
    rescaled_errors,
    rescaled_errors_at,
    zero_mass_frequency,
)
from advprec.synth import GroundTruth, make_model


def identity_truth(d):
    return GroundTruth(np.eye(d), np.eye(d), frozenset())


def test_config_validation():
    cfg = AsymptoticsConfig(gamma=0.25, eta=2.0, n_values=(100, 400), reps=5)
    assert cfg.delta(400) == pytest.approx(2.0 * 400**-0.25)
    assert cfg.rate() == 0.25
    assert AsymptoticsConfig(0.7, 1.0, (10,), 2).rate() == 0.5
    for kw in (dict(gamma=0.0), dict(eta=-1.0), dict(reps=1), dict(n_values=(400, 100)),
               dict(n_values=()), dict(p="inf"), dict(estimator="surrogate"), dict(estimator="mle")):
        args = dict(gamma=0.5, eta=1.0, n_values=(100,), reps=3) | kw
        with pytest.raises(ValueError):
            AsymptoticsConfig(**args)
    assert math.isinf(AsymptoticsConfig(0.5, 1.0, (10,), 2, p="inf", estimator="surrogate").p)


def test_bias_identity_is_isotropic():
    b = bias_matrix(np.eye(3), 2, 1.0, mc_samples=200_000, seed=0)
    # E[x x^T / ||x||] = E||x|| / 3 I and E||x|| = 2 sqrt(2 / pi) for three dimensions
    expected = -2.0 / 3.0 * 2.0 * math.sqrt(2.0 / math.pi)
    off = ~np.eye(3, dtype=bool)
    assert np.all(np.abs(b.mean[off]) <= 3 * b.stderr[off] + 1e-12)
    assert np.all(np.abs(np.diag(b.mean) - expected) <= 3 * np.diag(b.stderr))


def test_bias_one_dimension():
    b = bias_matrix([[1.0]], 2, 1.0, mc_samples=1_000_000, seed=1)
    assert b.mean[0, 0] == pytest.approx(-2 * math.sqrt(2 / math.pi), abs=3 * b.stderr[0, 0])
    assert bias_matrix([[1.0]], 2, 3.0, mc_samples=10_000, seed=1).mean[0, 0] == pytest.approx(
        3 * bias_matrix([[1.0]], 2, 1.0, mc_samples=10_000, seed=1).mean[0, 0])


def test_bias_linf_against_independent_simulation():
    cov = np.diag([4.0, 1.0])
    b = bias_matrix(cov, "inf", 1.0, mc_samples=200_000, seed=5)
    rng = np.random.default_rng(987654)
    x = rng.standard_normal((1_000_000, 2)) * np.array([2.0, 1.0])
    K = np.diag([0.25, 1.0])
    v = np.sign(x @ K)
    outer = v[:, :, None] * x[:, None, :]
    M = outer.mean(axis=0)
    ref = -2.0 * K @ (0.5 * (M + M.T)) @ K
    se_ref = np.sqrt(np.var(-1.0 * np.einsum("ij,njk,kl->nil", K, outer + outer.transpose(0, 2, 1), K), axis=0) / len(x))
    assert np.all(np.abs(b.mean - ref) <= 3 * np.hypot(b.stderr, se_ref) + 1e-12)


def test_bias_requires_enough_samples():
    with pytest.raises(ValueError):
        bias_matrix(np.eye(2), 2, 1.0, mc_samples=100)


@pytest.mark.parametrize("estimator,p", [("exact", 2), ("surrogate", "inf")])
@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.6])
def test_consistency_medians_decrease(estimator, p, gamma):
    cfg = AsymptoticsConfig(gamma, 1.0, (500, 2000, 8000), 30, p=p, estimator=estimator, seed=4)
    truth = make_model("ar2", 5) if estimator == "surrogate" else identity_truth(3)
    medians = [float(np.median(s.max_errors(truth.precision))) for s in rescaled_errors(truth, cfg)]
    assert medians[0] > medians[1] > medians[2]


def test_sample_shapes_and_rows():
    cfg = AsymptoticsConfig(0.6, 1.0, (200,), 4, seed=1)
    s = rescaled_errors_at(identity_truth(3), cfg, 200)
    assert s.values.shape == (4, 3, 3) and s.reps == 4 and s.failures == 0
    rows = list(s.rows())
    assert len(rows) == 4 * 6
    r, i, j, v = rows[7]
    assert v == s.values[r, i, j]
    np.testing.assert_allclose(s.values, math.sqrt(200) * (s.estimates - np.eye(3)))
    summ = s.summary()
    assert summ["reps"] == 4 and len(summ["mean"]) == 3


def test_regime_separation():
    truth = identity_truth(3)
    n, reps = 2000, 400
    fast = rescaled_errors_at(truth, AsymptoticsConfig(1.0, 1.0, (n,), reps, seed=8), n)
    edge = rescaled_errors_at(truth, AsymptoticsConfig(0.5, 1.0, (n,), reps, seed=8), n)
    d_fast, d_edge = np.diag(fast.mean), np.diag(edge.mean)
    assert np.all(np.abs(d_fast) <= 3 * np.diag(fast.stderr))
    assert np.all(d_edge < -3 * np.diag(edge.stderr))


def test_zero_mass_smoke():
    truth = make_model("ar2", 5)
    cfg = AsymptoticsConfig(0.5, 5.0, (500,), 40, p="inf", estimator="surrogate", seed=2)
    s = rescaled_errors_at(truth, cfg, 500)
    zm = zero_mass_frequency(s, truth)
    assert zm.null_mask.sum() == 2 * 3  # (0,3), (0,4), (1,4) and transposes
    assert 0.0 <= zm.min_null <= 1.0 and 0.0 <= zm.max_edge <= 1.0
    assert np.all(np.diag(zm.frequency) == 0.0)
    assert zm.frequency[zm.null_mask].max() > 0.0


def test_failure_budget(monkeypatch):
    import advprec.asymptotics as asy
    from advprec.estimator_linf import SolverError

    def broken(*a, **k):
        raise SolverError("boom")

    monkeypatch.setattr(asy, "_fit", broken)
    with pytest.raises(FailureBudgetExceeded):
        rescaled_errors_at(identity_truth(2), AsymptoticsConfig(0.5, 1.0, (50,), 10), 50)

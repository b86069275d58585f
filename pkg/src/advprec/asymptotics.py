"""Monte Carlo checks of the small-perturbation limit laws.

With ``delta_n = eta * n**(-gamma)`` the rescaled error ``n**r (C_hat - Sigma^-1)``
is recorded per replicate, where ``r = gamma`` for ``gamma < 1/2`` and
``r = 1/2`` otherwise. For ``p = 2`` the estimator is :func:`fit_l2`; for
``p = inf`` it is the surrogate fit, whose penalty covers the diagonal as
well because the surrogate sums over every entry of ``C``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .adversary import PerturbationSpec
from .estimator_l2 import fit_l2
from .estimator_linf import SolverConfig, SolverError, fit_linf
from .matkernel import NotPDError, as_symmetric, inverse_pd
from .synth import GroundTruth, rng_stream, sample_gaussian

ESTIMATORS = ("exact", "surrogate")
FAILURE_BUDGET = 0.01
MIN_MC_SAMPLES = 10_000


class FailureBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class AsymptoticsConfig:
    gamma: float
    eta: float
    n_values: tuple[int, ...]
    reps: int
    p: float = 2.0
    estimator: str = "exact"
    seed: int = 0
    penalize_diagonal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "p", PerturbationSpec(self.p, 0.0).p)
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if not (self.gamma > 0 and self.eta > 0):
            raise ValueError("gamma and eta must be positive")
        if self.reps < 2:
            raise ValueError("reps must be >= 2")
        if not self.n_values or list(self.n_values) != sorted(self.n_values):
            raise ValueError("n_values must be nonempty and ascending")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.estimator == "exact" and self.p != 2.0:
            raise ValueError("the exact estimator is available only for p = 2")
        if self.estimator == "surrogate" and not math.isinf(self.p):
            raise ValueError("the surrogate estimator is defined for p = inf")

    def delta(self, n: int) -> float:
        return self.eta * n ** (-self.gamma)

    def rate(self) -> float:
        return self.gamma if self.gamma < 0.5 else 0.5


@dataclass
class BiasEstimate:
    mean: NDArray[np.float64]
    stderr: NDArray[np.float64]
    samples: int


def bias_matrix(cov: ArrayLike, p, eta: float, mc_samples: int = 200_000, seed: int = 0) -> BiasEstimate:
    """Monte Carlo estimate of the first-order bias of the rescaled error.

    ``-2 eta Sigma^-1 sym(E[v x^T]) Sigma^-1`` with
    ``v = sign(u) |u|**(q-1) / ||u||_q**(q-1)`` and ``u = Sigma^-1 x``.
    """
    if mc_samples < MIN_MC_SAMPLES:
        raise ValueError(f"mc_samples must be >= {MIN_MC_SAMPLES}")
    Sigma = as_symmetric(cov)
    q = PerturbationSpec(p, 0.0).q
    K = inverse_pd(Sigma)
    d = Sigma.shape[0]
    rng = rng_stream(seed, 0xB1A5)
    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    chunk = 50_000
    done = 0
    while done < mc_samples:
        m = min(chunk, mc_samples - done)
        X = sample_gaussian(Sigma, m, rng)
        U = X @ K
        if q == 1.0:
            V = np.sign(U)
        else:
            nq = np.sum(np.abs(U) ** q, axis=1) ** (1.0 / q)
            V = np.sign(U) * np.abs(U) ** (q - 1.0) / nq[:, None] ** (q - 1.0)
        # per-sample sandwich K sym(v x^T) K, reduced to running sums
        KV = V @ K
        KX = X @ K
        Y = -eta * (KV[:, :, None] * KX[:, None, :] + KX[:, :, None] * KV[:, None, :])
        total += Y.sum(axis=0)
        total_sq += (Y**2).sum(axis=0)
        done += m
    mean = total / done
    var = np.maximum(total_sq / done - mean**2, 0.0) * done / (done - 1)
    return BiasEstimate(mean, np.sqrt(var / done), done)


@dataclass
class RescaledErrorSample:
    values: NDArray[np.float64]  # (reps, d, d)
    estimates: NDArray[np.float64]
    n: int
    gamma: float
    eta: float
    rate: float
    failures: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def reps(self) -> int:
        return self.values.shape[0]

    @property
    def mean(self) -> NDArray[np.float64]:
        return self.values.mean(axis=0)

    @property
    def variance(self) -> NDArray[np.float64]:
        return self.values.var(axis=0, ddof=1)

    @property
    def stderr(self) -> NDArray[np.float64]:
        return np.sqrt(self.variance / self.reps)

    @property
    def skewness(self) -> NDArray[np.float64]:
        return stats.skew(self.values, axis=0, bias=False)

    def max_errors(self, target: NDArray) -> NDArray[np.float64]:
        return np.abs(self.estimates - target).max(axis=(1, 2))

    def rows(self):
        """``(replicate, i, j, value)`` tuples over the upper triangle."""
        d = self.values.shape[1]
        iu, ju = np.triu_indices(d)
        for r in range(self.reps):
            for i, j in zip(iu.tolist(), ju.tolist()):
                yield r, i, j, float(self.values[r, i, j])

    def summary(self) -> dict:
        return {
            "n": self.n,
            "gamma": self.gamma,
            "eta": self.eta,
            "rate": self.rate,
            "reps": self.reps,
            "failures": self.failures,
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "stderr": self.stderr.tolist(),
        }


def _fit(X: NDArray, delta: float, cfg: AsymptoticsConfig, solver: SolverConfig) -> NDArray:
    if cfg.estimator == "exact":
        return fit_l2(X, delta).estimate
    return fit_linf(X, delta, config=solver, penalize_diagonal=cfg.penalize_diagonal).estimate


def rescaled_errors_at(
    truth: GroundTruth, cfg: AsymptoticsConfig, n: int, solver: SolverConfig | None = None
) -> RescaledErrorSample:
    solver = solver or SolverConfig()
    d = truth.d
    delta = cfg.delta(n)
    rate = cfg.rate()
    vals, ests = [], []
    failures = 0
    for r in range(cfg.reps):
        X = sample_gaussian(truth.covariance, n, cfg.seed, n, r)
        try:
            C = _fit(X, delta, cfg, solver)
        except (SolverError, NotPDError):
            failures += 1
            if failures > FAILURE_BUDGET * cfg.reps:
                raise FailureBudgetExceeded(f"{failures} of {cfg.reps} fits failed at n={n}")
            continue
        ests.append(C)
        vals.append(n**rate * (C - truth.precision))
    return RescaledErrorSample(
        values=np.asarray(vals).reshape(-1, d, d),
        estimates=np.asarray(ests).reshape(-1, d, d),
        n=n,
        gamma=cfg.gamma,
        eta=cfg.eta,
        rate=rate,
        failures=failures,
    )


def rescaled_errors(
    truth: GroundTruth, cfg: AsymptoticsConfig, solver: SolverConfig | None = None
) -> list[RescaledErrorSample]:
    """One sample of rescaled errors per entry of ``cfg.n_values``."""
    return [rescaled_errors_at(truth, cfg, n, solver) for n in cfg.n_values]


@dataclass
class ZeroMass:
    frequency: NDArray[np.float64]  # per-entry fraction of exact zeros
    null_mask: NDArray[np.bool_]
    min_null: float
    max_edge: float


def zero_mass_frequency(sample: RescaledErrorSample, truth: GroundTruth) -> ZeroMass:
    """Fraction of replicates with an exact zero, per off-diagonal entry."""
    d = truth.d
    freq = np.mean(sample.estimates == 0.0, axis=0)
    off = ~np.eye(d, dtype=bool)
    null = off & (truth.precision == 0.0)
    edge = off & (truth.precision != 0.0)
    return ZeroMass(
        frequency=freq,
        null_mask=null,
        min_null=float(freq[null].min()) if null.any() else float("nan"),
        max_edge=float(freq[edge].max()) if edge.any() else float("nan"),
    )

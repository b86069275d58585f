"""Edge-recovery metrics, BIC and grid selection of the tuning parameter."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .estimator_linf import (
    EstimateResult,
    SolverConfig,
    SolverError,
    build_penalty,
    empirical_abs_means,
    second_moment,
    uniform_penalty,
    weighted_glasso,
)
from .matkernel import logdet_pd

METHODS = ("perturbed", "l1", "l1_std")


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    mcc: float
    tnr: float
    tpr: float
    confusion: Confusion

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("confusion")
        return out


def _normalize_pairs(pairs: Iterable, d: int) -> set[tuple[int, int]]:
    out = set()
    for i, j in pairs:
        i, j = int(i), int(j)
        if i == j or not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"pair ({i}, {j}) is not an off-diagonal index pair for d={d}")
        out.add((min(i, j), max(i, j)))
    return out


def confusion(est_support: Iterable, true_support: Iterable, d: int) -> Confusion:
    """Confusion counts over the ``d (d - 1) / 2`` unordered off-diagonal pairs."""
    est = _normalize_pairs(est_support, d)
    true = _normalize_pairs(true_support, d)
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    tn = d * (d - 1) // 2 - tp - fp - fn
    return Confusion(tp, tn, fp, fn)


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def classification_metrics(c: Confusion) -> MetricsReport:
    """ACC, MCC, TNR and TPR; MCC is 0 when any denominator factor vanishes."""
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    mcc = (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom) if denom else 0.0
    return MetricsReport(
        acc=_ratio(c.tp + c.tn, c.total),
        mcc=mcc,
        tnr=_ratio(c.tn, c.tn + c.fp),
        tpr=_ratio(c.tp, c.tp + c.fn),
        confusion=c,
    )


def bic(A_bar: ArrayLike, C: ArrayLike, n: int, support_size: int | None = None) -> float:
    """``n (-log det C + tr(A C)) + log(n) k`` with ``k`` the upper off-diagonal nonzeros."""
    A_bar = np.asarray(A_bar, dtype=float)
    C = np.asarray(C, dtype=float)
    if support_size is None:
        support_size = int(np.count_nonzero(np.triu(C, k=1)))
    return n * (-logdet_pd(C) + float(np.sum(A_bar * C))) + math.log(n) * support_size


@dataclass(frozen=True)
class GridRow:
    parameter: float
    bic: float
    support_size: int
    objective: float


@dataclass
class Selection:
    best: float
    table: list[GridRow]
    fit: EstimateResult | None
    failures: int = 0


def standardize(X: ArrayLike) -> NDArray[np.float64]:
    """Divide each column by its sample standard deviation (ddof=1)."""
    X = np.asarray(X, dtype=float)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise ValueError("constant column cannot be standardized")
    return X / sd


def _penalty_for(method: str, X: NDArray, value: float) -> NDArray:
    if method == "perturbed":
        return build_penalty(empirical_abs_means(X), value, penalize_diagonal=False)
    return uniform_penalty(X.shape[1], value)


def select_parameter(
    X: ArrayLike,
    grid: Iterable[float],
    method: str = "perturbed",
    config: SolverConfig | None = None,
) -> Selection:
    """Fit every grid value and return the BIC minimizer.

    ``perturbed`` fits the scale-adaptive penalty with ``delta`` on the grid;
    ``l1`` a constant off-diagonal penalty; ``l1_std`` the constant penalty on
    column-standardized data. The path is traversed from the largest value
    down with warm starts; ties go to the smaller parameter.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("empty grid")
    config = config or SolverConfig()
    X = np.asarray(X, dtype=float)
    if config.center:
        X = X - X.mean(axis=0)
    if method == "l1_std":
        X = standardize(X)
    n = X.shape[0]
    A = second_moment(X)

    rows: dict[float, GridRow] = {}
    fits: dict[float, EstimateResult] = {}
    failures = 0
    warm = None
    for value in reversed(grid):
        try:
            res = weighted_glasso(A, _penalty_for(method, X, value), config, init=warm)
        except SolverError:
            failures += 1
            warm = None
            continue
        warm = res.estimate
        fits[value] = res
        rows[value] = GridRow(value, bic(A, res.estimate, n, res.support_size), res.support_size, res.objective)
    if not rows:
        raise SolverError(f"all {len(grid)} fits failed for method {method}")
    table = [rows[v] for v in grid if v in rows]
    best = min(table, key=lambda r: (r.bic, r.parameter))
    return Selection(best.parameter, table, fits[best.parameter], failures)


def paper_grid(points: int = 25, lo: float = 0.01, hi: float = 1.0) -> NDArray[np.float64]:
    return np.linspace(lo, hi, points)

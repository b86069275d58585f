"""Synthetic recovery benchmark, LDA classification pipeline and result output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .estimator_linf import (
    SolverConfig,
    SolverError,
    build_penalty,
    empirical_abs_means,
    support_of,
    uniform_penalty,
    weighted_glasso,
)
from .matkernel import NotPDError
from .metrics import METHODS, Confusion, classification_metrics, confusion, paper_grid, select_parameter
from .synth import ModelKind, default_scales, heteroskedastic_scale, make_model, rng_stream, sample_gaussian

log = logging.getLogger(__name__)

METRICS = ("acc", "mcc", "tnr", "tpr")
SYNTHETIC_FAILURE_BUDGET = 0.02
LABELS = ("ALL", "AML")
POSITIVE = "AML"


# -- output ----------------------------------------------------------------


def emit(results, path: str | os.PathLike | None, fmt: str = "csv", columns: Sequence[str] | None = None) -> str:
    """Serialize ``results`` as CSV or JSON; write atomically when ``path`` is given.

    For CSV, ``results`` is a sequence of mappings (one per row) and
    ``columns`` fixes the header; an empty table yields the header alone.
    For JSON any JSON-compatible object is accepted. Returns the text.
    """
    if fmt == "csv":
        rows = list(results)
        if columns is None:
            if not rows:
                raise ValueError("columns are required for an empty CSV table")
            columns = list(rows[0].keys())
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _csv_cell(row[k]) for k in columns})
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(results, indent=2, sort_keys=False) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}; expected csv or json")
    if path is not None and str(path) != "-":
        _atomic_write(Path(path), text)
    return text


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _atomic_write(path: Path, text: str) -> None:
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"could not write {path}: {exc}") from exc


def read_csv_rows(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_key_value_config(path: str | os.PathLike) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ValueError(f"{path}:{lineno}: empty key")
            out[key.replace("-", "_")] = value
    return out


# -- synthetic benchmark -----------------------------------------------------


@dataclass
class ExperimentConfig:
    model: ModelKind
    d: int
    n: int
    reps: int
    scales: NDArray[np.float64] | None = None
    grid: NDArray[np.float64] = field(default_factory=paper_grid)
    methods: tuple[str, ...] = ("perturbed", "l1")
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; expected a subset of {METHODS}")
        if self.scales is None:
            self.scales = default_scales(self.d)
        self.scales = np.asarray(self.scales, dtype=float)


@dataclass
class SyntheticResult:
    rows: list[dict]
    per_replicate: dict[str, list[dict]]
    failures: int
    pd_adjusted: bool

    def summary(self, method: str) -> dict[str, tuple[float, float]]:
        return {r["metric"]: (r["mean"], r["stderr"]) for r in self.rows if r["method"] == method}


def _mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def run_synthetic(cfg: ExperimentConfig) -> SyntheticResult:
    """Replicate the edge-recovery benchmark for one ``(model, d, n)`` cell.

    Each replicate draws one data set shared by all methods, selects the
    tuning parameter by BIC and scores the selected support against the true
    one. Replicates in which any method fails are dropped, up to 2%.
    """
    truth = heteroskedastic_scale(make_model(cfg.model, cfg.d), cfg.scales)
    per: dict[str, list[dict]] = {m: [] for m in cfg.methods}
    failures = 0
    for r in range(cfg.reps):
        X = sample_gaussian(truth.covariance, cfg.n, cfg.seed, r)
        try:
            reports = {}
            for m in cfg.methods:
                sel = select_parameter(X, cfg.grid, m, cfg.solver)
                est = support_of(sel.fit.estimate)
                reports[m] = classification_metrics(confusion(est, truth.support, cfg.d))
        except (SolverError, NotPDError) as exc:
            failures += 1
            log.warning("replicate %d dropped: %s", r, exc)
            if failures > SYNTHETIC_FAILURE_BUDGET * cfg.reps:
                raise SolverError(f"{failures} of {cfg.reps} replicates failed") from exc
            continue
        for m, rep in reports.items():
            per[m].append(rep.as_dict())
    rows = []
    for m in cfg.methods:
        for metric in METRICS:
            mean, se = _mean_stderr([rec[metric] for rec in per[m]])
            rows.append({"method": m, "n": cfg.n, "metric": metric, "mean": mean, "stderr": se})
    return SyntheticResult(rows, per, failures, truth.pd_adjusted)


SIMULATE_COLUMNS = ("method", "n", "metric", "mean", "stderr")


# -- labelled expression data ---------------------------------------------------


@dataclass
class LabeledDataset:
    X: NDArray[np.float64]
    labels: NDArray[np.str_]
    gene_ids: list[str]

    def __post_init__(self):
        if self.X.shape != (len(self.labels), len(self.gene_ids)):
            raise ValueError("row or column count mismatch")
        if set(self.labels.tolist()) - set(LABELS):
            raise ValueError(f"labels must come from {LABELS}")

    def counts(self) -> dict[str, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in LABELS}


def load_expression_csv(path: str | os.PathLike) -> LabeledDataset:
    """Read ``label,gene_1,...`` rows; labels must be ALL or AML."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "label":
            raise ValueError(f"{path}:1: first header column must be 'label'")
        genes = [h.strip() for h in header[1:]]
        if not genes:
            raise ValueError(f"{path}:1: no gene columns")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            lab = row[0].strip()
            if lab not in LABELS:
                raise ValueError(f"{path}:{lineno}: unknown label {lab!r} (expected ALL or AML)")
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            labels.append(lab)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return LabeledDataset(np.asarray(rows), np.asarray(labels), genes)


def bundled_sanity_fixture() -> Path:
    return Path(str(resources.files("advprec") / "data" / "lda_sanity.csv"))


def make_sanity_dataset(
    n_all: int = 47, n_aml: int = 25, d: int = 10, distance: float = 6.0, seed: int = 2024
) -> LabeledDataset:
    """Two Gaussian classes with a common AR(1)-type covariance at a set Mahalanobis distance."""
    rng = rng_stream(seed, 0x1DA)
    idx = np.arange(d)
    cov = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    direction = rng.standard_normal(d)
    prec = np.linalg.inv(cov)
    direction *= distance / math.sqrt(direction @ prec @ direction)
    X = np.vstack([
        sample_gaussian(cov, n_all, rng),
        sample_gaussian(cov, n_aml, rng) + direction,
    ])
    labels = np.array(["ALL"] * n_all + ["AML"] * n_aml)
    return LabeledDataset(X, labels, [f"g{i + 1}" for i in range(d)])


def write_expression_csv(data: LabeledDataset, path: str | os.PathLike) -> None:
    rows = [
        {"label": lab, **{g: repr(float(v)) for g, v in zip(data.gene_ids, x)}}
        for lab, x in zip(data.labels.tolist(), data.X)
    ]
    emit(rows, path, "csv", columns=["label", *data.gene_ids])


# -- LDA pipeline -----------------------------------------------------------------


@dataclass
class LDAConfig:
    method: str = "perturbed"
    reps: int = 100
    grid: NDArray[np.float64] = field(default_factory=paper_grid)
    outer_folds: int = 10
    inner_folds: int = 5
    screen_per_fold: bool = False
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.method not in ("perturbed", "l1"):
            raise ValueError("LDA method must be 'perturbed' or 'l1'")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass
class LDAResult:
    summary: dict[str, tuple[float, float]]
    per_replicate: list[dict]
    chosen: list[float]

    def rows(self, d_genes: int, method: str) -> list[dict]:
        return [
            {"method": method, "genes": d_genes, "metric": m, "mean": mu, "stderr": se}
            for m, (mu, se) in self.summary.items()
        ]


def stratified_folds(labels: NDArray, k: int, rng: np.random.Generator) -> list[NDArray[np.intp]]:
    """Shuffle each class and deal its members round-robin into ``k`` folds.

    Per-class fold counts then differ by at most one.
    """
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for lab in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == lab)
        rng.shuffle(members)
        for t, i in enumerate(members):
            folds[(offset + t) % k].append(int(i))
        offset += len(members)
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def top_variance_genes(X: NDArray, d_genes: int) -> NDArray[np.intp]:
    if d_genes > X.shape[1]:
        raise ValueError(f"requested {d_genes} genes but only {X.shape[1]} are available")
    var = X.var(axis=0, ddof=1)
    return np.sort(np.argsort(-var, kind="stable")[:d_genes])


@dataclass
class LDAModel:
    precision: NDArray[np.float64]
    means: NDArray[np.float64]  # (2, d), rows ordered as LABELS
    log_priors: NDArray[np.float64]

    def scores(self, X: NDArray) -> NDArray[np.float64]:
        CM = self.means @ self.precision
        return X @ CM.T - 0.5 * np.sum(CM * self.means, axis=1) + self.log_priors

    def predict(self, X: NDArray) -> NDArray[np.str_]:
        return np.asarray(LABELS)[np.argmax(self.scores(X), axis=1)]


def _standardizer(X: NDArray):
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return lambda Z: (Z - mu) / sd


def _class_stats(X: NDArray, y: NDArray):
    means = np.vstack([X[y == lab].mean(axis=0) for lab in LABELS])
    pooled = X - means[np.searchsorted(np.asarray(LABELS), y)]
    priors = np.array([np.mean(y == lab) for lab in LABELS])
    return means, pooled, np.log(priors)


def _precision_path(pooled: NDArray, grid: NDArray, method: str, solver: SolverConfig) -> dict[float, NDArray]:
    A = pooled.T @ pooled / pooled.shape[0]
    omega = empirical_abs_means(pooled)
    out = {}
    warm = None
    for g in sorted(grid, reverse=True):
        P = build_penalty(omega, g) if method == "perturbed" else uniform_penalty(A.shape[0], g)
        warm = weighted_glasso(A, P, solver, init=warm).estimate
        out[float(g)] = warm
    return out


def _lda_path(Xtr: NDArray, ytr: NDArray, grid, method, solver) -> dict[float, LDAModel]:
    means, pooled, logp = _class_stats(Xtr, ytr)
    return {g: LDAModel(C, means, logp) for g, C in _precision_path(pooled, grid, method, solver).items()}


def _confusion_from_predictions(y_true: NDArray, y_pred: NDArray) -> Confusion:
    pos_t, pos_p = y_true == POSITIVE, y_pred == POSITIVE
    return Confusion(
        tp=int(np.sum(pos_t & pos_p)),
        tn=int(np.sum(~pos_t & ~pos_p)),
        fp=int(np.sum(~pos_t & pos_p)),
        fn=int(np.sum(pos_t & ~pos_p)),
    )


def _tune(X: NDArray, y: NDArray, cfg: LDAConfig, rng: np.random.Generator) -> float:
    grid = sorted(float(g) for g in cfg.grid)
    preds = {g: np.empty(len(y), dtype=object) for g in grid}
    for fold in stratified_folds(y, cfg.inner_folds, rng):
        train = np.setdiff1d(np.arange(len(y)), fold)
        scale = _standardizer(X[train])
        models = _lda_path(scale(X[train]), y[train], grid, cfg.method, cfg.solver)
        Xte = scale(X[fold])
        for g in grid:
            preds[g][fold] = models[g].predict(Xte)
    mcc = {g: classification_metrics(_confusion_from_predictions(y, preds[g].astype(str))).mcc for g in grid}
    best = max(mcc.values())
    return min(g for g in grid if mcc[g] == best)


def _folds_ok(y: NDArray, folds, inner: int) -> bool:
    for fold in folds:
        train = np.setdiff1d(np.arange(len(y)), fold)
        counts = [np.sum(y[train] == lab) for lab in LABELS]
        if min(counts) < inner:
            return False
    return True


def lda_pipeline(data: LabeledDataset, d_genes: int, cfg: LDAConfig | None = None) -> LDAResult:
    """Nested cross-validated LDA with a sparse precision estimate.

    Per replication the outer loop uses stratified folds; inside each outer
    training set a stratified inner split picks the tuning parameter with
    the best MCC (ties to the smaller value), then the model is refit on the
    whole outer training set. Predictions are pooled over the outer folds
    before the metrics are computed, with AML as the positive class.
    """
    cfg = cfg or LDAConfig()
    X, y = data.X, data.labels
    if len(set(y.tolist())) != 2:
        raise ValueError("both classes must be present")
    genes_full = None if cfg.screen_per_fold else top_variance_genes(X, d_genes)
    per, chosen = [], []
    for r in range(cfg.reps):
        rng = rng_stream(cfg.seed, r)
        for _attempt in range(10):
            folds = stratified_folds(y, cfg.outer_folds, rng)
            if _folds_ok(y, folds, cfg.inner_folds):
                break
        else:
            raise ValueError("could not draw outer folds with both classes in every training set")
        pred = np.empty(len(y), dtype=object)
        for fold in folds:
            train = np.setdiff1d(np.arange(len(y)), fold)
            genes = top_variance_genes(X[train], d_genes) if cfg.screen_per_fold else genes_full
            Xtr, Xte = X[np.ix_(train, genes)], X[np.ix_(fold, genes)]
            g = _tune(Xtr, y[train], cfg, rng)
            chosen.append(g)
            scale = _standardizer(Xtr)
            model = _lda_path(scale(Xtr), y[train], [g], cfg.method, cfg.solver)[g]
            pred[fold] = model.predict(scale(Xte))
        rep = classification_metrics(_confusion_from_predictions(y, pred.astype(str)))
        per.append(rep.as_dict())
    summary = {m: _mean_stderr([p[m] for p in per]) for m in METRICS}
    return LDAResult(summary, per, chosen)


LDA_COLUMNS = ("method", "genes", "metric", "mean", "stderr")


def as_jsonable(obj):
    """Dataclasses and numpy values to plain JSON types."""
    if hasattr(obj, "__dataclass_fields__"):
        return as_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): as_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [as_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def parse_float_list(text: str | Iterable) -> list[float]:
    if isinstance(text, str):
        return [float(t) for t in text.split(",") if t.strip()]
    return [float(t) for t in text]

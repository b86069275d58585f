import json
import os
from pathlib import Path

import numpy as np
import pytest

from advprec.experiments import (
    SIMULATE_COLUMNS,
    ExperimentConfig,
    LabeledDataset,
    LDAConfig,
    as_jsonable,
    bundled_sanity_fixture,
    emit,
    lda_pipeline,
    load_expression_csv,
    make_sanity_dataset,
    read_csv_rows,
    read_key_value_config,
    run_synthetic,
    stratified_folds,
    top_variance_genes,
    write_expression_csv,
)
from advprec.metrics import paper_grid
from advprec.synth import rng_stream

DATA = Path(__file__).parent / "data"


def small_cfg(**kw):
    base = dict(model="ar2", d=10, n=40, reps=1, grid=paper_grid(5), methods=("perturbed", "l1"), seed=7)
    return ExperimentConfig(**(base | kw))


def test_emit_round_trip(tmp_path):
    rows = [{"a": 0.1 + 0.2, "b": "x"}, {"a": -1e-300, "b": "y"}]
    path = tmp_path / "out.csv"
    text = emit(rows, path, "csv", ["a", "b"])
    assert path.read_text() == text
    back = read_csv_rows(path)
    assert [float(r["a"]) for r in back] == [0.1 + 0.2, -1e-300]
    assert [r["b"] for r in back] == ["x", "y"]
    assert not [p for p in os.listdir(tmp_path) if p.endswith(".tmp")]


def test_emit_empty_table_and_json(tmp_path):
    assert emit([], None, "csv", SIMULATE_COLUMNS) == "method,n,metric,mean,stderr\n"
    with pytest.raises(ValueError):
        emit([], None, "csv")
    data = {"mean": 1.5, "values": [1, 2]}
    assert json.loads(emit(data, tmp_path / "s.json", "json")) == data
    with pytest.raises(ValueError):
        emit(data, None, "xml")
    with pytest.raises(OSError, match="could not write"):
        emit(data, tmp_path / "missing" / "s.json", "json")


def test_jsonable():
    out = as_jsonable({"a": np.float64(np.nan), "b": np.arange(2), "c": (np.int64(3), float("inf"))})
    assert out == {"a": None, "b": [0, 1], "c": [3, None]}


def test_key_value_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\nreps = 5\n\ngrid-points=3  # trailing\n")
    assert read_key_value_config(p) == {"reps": "5", "grid_points": "3"}
    p.write_text("reps 5\n")
    with pytest.raises(ValueError, match=":1:"):
        read_key_value_config(p)


def test_loader(tmp_path):
    p = tmp_path / "toy.csv"
    p.write_text("label,g1,g2\nALL,1,2\nALL,3,4\nAML,5,6\n")
    data = load_expression_csv(p)
    assert data.counts() == {"ALL": 2, "AML": 1} and data.gene_ids == ["g1", "g2"]
    p.write_text("label,g1\nALL,1\nCLL,2\n")
    with pytest.raises(ValueError, match=r":3: unknown label 'CLL'"):
        load_expression_csv(p)
    p.write_text("label,g1,g2\nALL,1\n")
    with pytest.raises(ValueError, match=r":2: expected 3 fields"):
        load_expression_csv(p)
    p.write_text("label,g1\nAML,abc\n")
    with pytest.raises(ValueError, match=r":2: non-numeric"):
        load_expression_csv(p)
    p.write_text("gene,g1\nAML,1\n")
    with pytest.raises(ValueError, match=r":1:"):
        load_expression_csv(p)


def test_bundled_fixture_matches_generator(tmp_path):
    data = load_expression_csv(bundled_sanity_fixture())
    assert data.counts() == {"ALL": 47, "AML": 25} and data.X.shape == (72, 10)
    fresh = make_sanity_dataset()
    np.testing.assert_allclose(data.X, fresh.X, rtol=0, atol=0)
    write_expression_csv(fresh, tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_bytes() == bundled_sanity_fixture().read_bytes()


def test_stratification_within_one():
    y = np.array(["ALL"] * 47 + ["AML"] * 25)
    for seed in range(20):
        folds = stratified_folds(y, 10, rng_stream(seed))
        assert sorted(np.concatenate(folds).tolist()) == list(range(72))
        for f in folds:
            aml = int(np.sum(y[f] == "AML"))
            assert abs(aml - len(f) * 25 / 72) <= 1.0


def test_top_variance_genes():
    X = np.column_stack([np.zeros(5), np.arange(5.0), 10 * np.arange(5.0)])
    np.testing.assert_array_equal(top_variance_genes(X, 2), [1, 2])
    with pytest.raises(ValueError):
        top_variance_genes(X, 4)


def test_identical_means_is_near_chance():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((72, 6))
    y = np.array(["ALL"] * 47 + ["AML"] * 25)
    res = lda_pipeline(LabeledDataset(X, y, [f"g{i}" for i in range(6)]), 6,
                       LDAConfig(reps=3, grid=paper_grid(4), seed=1))
    acc = res.summary["acc"][0]
    assert acc <= 47 / 72 + 0.08
    assert abs(res.summary["mcc"][0]) < 0.3


def test_sanity_fixture_separable():
    data = load_expression_csv(bundled_sanity_fixture())
    res = lda_pipeline(data, 10, LDAConfig(reps=2, grid=paper_grid(5), seed=3))
    assert res.summary["acc"][0] >= 0.99
    assert len(res.chosen) == 2 * 10


def test_lda_config_validation():
    with pytest.raises(ValueError):
        LDAConfig(method="l1_std")
    with pytest.raises(ValueError):
        LDAConfig(reps=0)


def test_synthetic_config_validation():
    with pytest.raises(ValueError):
        small_cfg(reps=0)
    with pytest.raises(ValueError):
        small_cfg(methods=())
    with pytest.raises(ValueError):
        small_cfg(methods=("ridge",))
    np.testing.assert_array_equal(small_cfg().scales, [10] * 5 + [1] * 5)


def test_synthetic_deterministic_and_golden():
    a = emit(run_synthetic(small_cfg()).rows, None, "csv", SIMULATE_COLUMNS)
    b = emit(run_synthetic(small_cfg()).rows, None, "csv", SIMULATE_COLUMNS)
    assert a == b
    assert a == (DATA / "simulate_ar2_d10_n40_seed7.csv").read_text()


def test_synthetic_star_flag():
    res = run_synthetic(small_cfg(model="star", d=30, grid=paper_grid(2), methods=("perturbed",)))
    assert res.pd_adjusted
    assert {r["metric"] for r in res.rows} == {"acc", "mcc", "tnr", "tpr"}

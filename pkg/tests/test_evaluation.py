"""Tests for evaluation reports and the component/aggregation grids."""

import csv
import json

import numpy as np
import pytest

from conftest import fast_config, small_dataset
from costream.config import TrainConfig
from costream.errors import ContractError
from costream.evaluation import (GRID_FIELDS, GRID_VARIANTS, ablation_grid,
                                 aggregation_comparison, evaluate,
                                 report_from_scores, scores_for_instances)
from costream.model import build_model
from costream.synthdata import generate


def one_hot_scores(labels, n_classes, confidence=1.0):
    p = np.full((labels.size, n_classes), (1.0 - confidence) / max(n_classes - 1, 1))
    p[np.arange(labels.size), labels] = confidence
    return p


def test_report_from_scores_hand_case():
    labels = np.array([0, 0, 1, 1])
    p_f = np.array([[0.9, 0.1], [0.2, 0.8], [0.3, 0.7], [0.6, 0.4]])
    p_o = np.array([[0.8, 0.2], [0.7, 0.3], [0.1, 0.9], [0.2, 0.8]])
    report = report_from_scores(p_f, p_o, labels, n_classes=2)
    assert report.acc_f == 0.5  # rows 0 and 2 are right
    assert report.acc_o == 1.0
    # fused rows: [.85,.15],[.45,.55],[.2,.8],[.4,.6] -> predictions 0,1,1,1
    assert report.acc_fused == 0.75
    assert report.confusion == [[1, 1], [0, 2]]
    assert report.per_class_acc == [0.5, 1.0]
    assert report.n_instances == 4


def test_confusion_rows_sum_to_the_class_counts():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 3, size=60)
    raw_f = rng.uniform(0.1, 1.0, size=(60, 3))
    raw_o = rng.uniform(0.1, 1.0, size=(60, 3))
    p_f = raw_f / raw_f.sum(axis=1, keepdims=True)
    p_o = raw_o / raw_o.sum(axis=1, keepdims=True)
    report = report_from_scores(p_f, p_o, labels, n_classes=3)
    confusion = np.array(report.confusion)
    np.testing.assert_array_equal(confusion.sum(axis=1),
                                  np.bincount(labels, minlength=3))
    assert report.acc_fused == pytest.approx(np.trace(confusion) / 60.0, abs=1e-12)


def test_perfect_scores_give_a_diagonal_confusion():
    labels = np.repeat(np.arange(4), 5)
    p = one_hot_scores(labels, 4)
    report = report_from_scores(p, p, labels, n_classes=4)
    assert report.acc_f == report.acc_o == report.acc_fused == 1.0
    confusion = np.array(report.confusion)
    assert (confusion == np.diag([5, 5, 5, 5])).all()
    assert report.per_class_acc == [1.0] * 4


def test_tied_scores_resolve_to_the_lowest_index():
    labels = np.repeat(np.arange(4), 5)
    uniform = np.full((20, 4), 0.25)
    report = report_from_scores(uniform, uniform, labels, n_classes=4)
    assert report.acc_fused == 0.25  # everything lands on class 0
    assert np.array(report.confusion)[:, 0].sum() == 20


def test_fusion_weight_extremes_recover_the_single_streams():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 3, size=30)
    p_f = one_hot_scores(labels, 3, confidence=0.8)
    shuffled = labels.copy()
    rng.shuffle(shuffled)
    p_o = one_hot_scores(shuffled, 3, confidence=0.9)
    all_f = report_from_scores(p_f, p_o, labels, 3, fusion_weight=1.0)
    all_o = report_from_scores(p_f, p_o, labels, 3, fusion_weight=0.0)
    assert all_f.acc_fused == all_f.acc_f
    assert all_o.acc_fused == all_o.acc_o


def test_untrained_model_sits_near_chance():
    ds = generate(4, 100, 8, 8, seed=0)
    model = build_model(fast_config(), ds.n, ds.D_in)
    report = evaluate(model, ds.instances)
    assert report.n_instances == 400
    assert abs(report.acc_fused - 0.25) <= 0.05


def test_evaluate_recomputes_from_the_same_scores():
    ds = small_dataset()
    model = build_model(fast_config(), ds.n, ds.D_in)
    report = evaluate(model, ds.instances, fusion_weight=0.4)
    p_f, p_o, labels = scores_for_instances(model, ds.instances)
    again = report_from_scores(p_f, p_o, labels, ds.n, fusion_weight=0.4)
    assert report == again


def test_evaluate_needs_instances():
    ds = small_dataset()
    model = build_model(fast_config(), ds.n, ds.D_in)
    with pytest.raises(ContractError):
        evaluate(model, [])


def test_report_json_round_trip(tmp_path):
    ds = small_dataset()
    model = build_model(fast_config(), ds.n, ds.D_in)
    report = evaluate(model, ds.instances)
    path = tmp_path / "report.json"
    report.save(path)
    data = json.loads(path.read_text())
    assert data["acc_fused"] == report.acc_fused
    assert data["n_instances"] == report.n_instances
    assert len(data["confusion"]) == ds.n


def test_ablation_grid_runs_every_variant_per_seed(tmp_path):
    ds = small_dataset()
    grid = ablation_grid(ds, fast_config(max_epochs=2), seeds=(0, 1))
    assert len(grid.rows) == 8
    variants = [v for v, _, _ in GRID_VARIANTS]
    assert [r.variant for r in grid.rows] == [v for v in variants for _ in range(2)]
    assert {r.seed for r in grid.rows} == {0, 1}
    for row in grid.rows:
        for metric in (row.acc_f, row.acc_o, row.acc_fused):
            assert 0.0 <= metric <= 1.0

    path = tmp_path / "ablation.csv"
    grid.write_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(GRID_FIELDS)
    assert len(rows) == 8
    assert float(rows[0]["acc_fused"]) == grid.rows[0].acc_fused


def test_grid_summary_averages_across_seeds():
    ds = small_dataset()
    grid = ablation_grid(ds, fast_config(max_epochs=2), seeds=(0, 1))
    summary = grid.summary()
    assert set(summary) == {v for v, _, _ in GRID_VARIANTS}
    full_rows = [r for r in grid.rows if r.variant == "full"]
    mean, std = summary["full"]["acc_fused"]
    assert mean == pytest.approx(np.mean([r.acc_fused for r in full_rows]), abs=1e-12)
    assert std == pytest.approx(np.std([r.acc_fused for r in full_rows]), abs=1e-12)
    lines = grid.summary_lines()
    assert len(lines) == 4
    assert any("baseline" in line for line in lines)


def test_aggregation_comparison_covers_all_kinds():
    ds = small_dataset(length=6)  # concat needs L == k_segments * snippet
    # product aggregation compounds embedding magnitudes across frames, so the
    # shared comparison recipe needs a conservative step size to stay finite
    grid = aggregation_comparison(ds, fast_config(max_epochs=2, lr0=1e-4))
    assert [r.variant for r in grid.rows] == ["avg", "max", "mul", "concat"]
    for row in grid.rows:
        assert 0.0 <= row.acc_fused <= 1.0


def test_grid_single_seed_summary_equals_the_row():
    ds = small_dataset()
    grid = ablation_grid(ds, fast_config(max_epochs=2), seeds=(0,))
    summary = grid.summary()
    for row in grid.rows:
        mean, std = summary[row.variant]["acc_fused"]
        assert mean == row.acc_fused
        assert std == 0.0

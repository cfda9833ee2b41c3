import sys
import os
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from pydantic import ValidationError

from src.dsp.core import Waveform
from src.metrics.evaluation import SegMetric, depth_metrics, envelope_error, merge_s3r_reports, miou, s3r_metrics
from src.metrics.reports import (
    DepthReport,
    S3RReport,
    SemanticReport,
    depth_table,
    render_table,
    reports_to_json,
    s3r_table,
    semantic_table,
)
from src.utils.errors import NonpositiveGroundTruth, ShapeMismatch

SR = 16000


def test_half_overlap_car():
    gt = np.array([[1, 1], [0, 0]])
    pred = np.array([[1, 0], [0, 0]])
    report = miou([pred], [gt])
    assert report.per_class_iou == {"car": 0.5}
    assert report.mean_iou == 0.5


def test_perfect_prediction():
    gt = np.array([[1, 2, 3, 0], [0, 0, 2, 2]])
    report = miou([gt], [gt])
    assert report.per_class_iou == {"car": 1.0, "motorcycle": 1.0, "train": 1.0}
    assert report.mean_iou == 1.0


def test_background_only_scores_perfect():
    zeros = np.zeros((3, 3), dtype=int)
    assert miou([zeros], [zeros]).mean_iou == 1.0


def test_false_positive_class_counts():
    gt = np.zeros((2, 2), dtype=int)
    pred = np.array([[3, 0], [0, 0]])
    report = miou([pred], [gt])
    assert report.per_class_iou == {"train": 0.0}
    assert report.mean_iou == 0.0


@given(arrays(np.int64, (3, 4, 5), elements=st.integers(0, 3)), arrays(np.int64, (3, 4, 5), elements=st.integers(0, 3)))
@settings(max_examples=40, deadline=None)
def test_accumulation_does_not_depend_on_batching(pred, gt):
    whole = SegMetric()
    whole.add_batch(pred, gt)
    pieces = SegMetric()
    for p, g in zip(pred, gt):
        pieces.add_batch(p, g)
    np.testing.assert_array_equal(whole.confusion_matrix, pieces.confusion_matrix)
    report = whole.report()
    assert 0.0 <= report.mean_iou <= 1.0


@given(arrays(np.int64, (2, 4, 5), elements=st.integers(0, 3)), arrays(np.int64, (2, 4, 5), elements=st.integers(0, 3)),
       st.permutations([1, 2, 3]))
@settings(max_examples=60, deadline=None)
def test_miou_ignores_how_target_ids_are_numbered(pred, gt, order):
    relabel = np.array([0] + list(order))
    base = miou(list(pred), list(gt))
    permuted = miou(list(relabel[pred]), list(relabel[gt]))
    assert permuted.mean_iou == pytest.approx(base.mean_iou)
    assert sorted(permuted.per_class_iou.values()) == pytest.approx(sorted(base.per_class_iou.values()))


def test_background_cells_only_hurt_the_class_they_are_mistaken_for():
    gt = np.array([[1, 1, 0, 0, 2]])
    pred = np.array([[1, 1, 1, 0, 2]])
    report = miou([pred], [gt])
    assert report.per_class_iou == {"car": pytest.approx(2 / 3), "motorcycle": 1.0}
    missed = miou([np.array([[0, 0, 0, 0, 2]])], [gt])
    assert missed.per_class_iou == {"car": 0.0, "motorcycle": 1.0}
    assert "background" not in report.per_class_iou


def test_seg_metric_reset_and_shape_check():
    metric = SegMetric()
    metric.add_batch(np.ones((2, 2), dtype=int), np.ones((2, 2), dtype=int))
    metric.reset()
    assert not metric.confusion_matrix.any()
    with pytest.raises(ShapeMismatch):
        metric.add_batch(np.ones((2, 2)), np.ones((2, 3)))


def test_depth_single_cell():
    report = depth_metrics([np.array([[6.0]])], [np.array([[4.0]])], far_depth=50.0)
    assert report.abs_rel == pytest.approx(0.5)
    assert report.sq_rel == pytest.approx(1.0)
    assert report.rmse == pytest.approx(2.0)
    assert report.mse == pytest.approx((2.0 / 50.0) ** 2)


def test_depth_perfect_and_invalid():
    g = np.random.default_rng(0).uniform(2, 50, (4, 8))
    assert depth_metrics([g], [g]) == DepthReport(abs_rel=0.0, sq_rel=0.0, rmse=0.0, mse=0.0)
    with pytest.raises(NonpositiveGroundTruth):
        depth_metrics([g], [np.zeros_like(g)])
    with pytest.raises(ShapeMismatch):
        depth_metrics([g], [g[:2]])


def _sine(amplitude=1.0, freq=440.0):
    t = np.arange(SR) / SR
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t), SR)


def test_s3r_perfect_prediction():
    waves = [_sine(), _sine(0.3, 200.0)]
    report = s3r_metrics(waves, waves, channels=["90L", "90R"])
    assert report.s3r_mse == [0.0, 0.0] and report.s3r_env == [0.0, 0.0]
    assert report.channels == ["90L", "90R"]


def test_envelope_error_of_silence_is_amplitude():
    assert envelope_error(Waveform(np.zeros(SR), SR), _sine()) == pytest.approx(1.0, abs=0.02)


def test_s3r_shape_checks():
    with pytest.raises(ShapeMismatch):
        s3r_metrics([_sine()], [])
    with pytest.raises(ShapeMismatch):
        s3r_metrics([_sine()], [Waveform(np.zeros(100), SR)])


def test_merge_averages_per_channel():
    a = S3RReport(channels=["90L"], s3r_mse=[1.0], s3r_env=[0.2])
    b = S3RReport(channels=["90L"], s3r_mse=[3.0], s3r_env=[0.4])
    merged = merge_s3r_reports([a, b])
    assert merged.mse_per_channel == [2.0]
    assert merged.env_per_channel == pytest.approx([0.3])
    assert merge_s3r_reports([]).channels == []


def test_report_validation():
    with pytest.raises(ValidationError):
        SemanticReport(per_class_iou={"car": 1.5}, mean_iou=0.5)
    with pytest.raises(ValidationError):
        DepthReport(abs_rel=-1.0, sq_rel=0.0, rmse=0.0, mse=0.0)
    with pytest.raises(ValidationError):
        DepthReport(abs_rel=math.inf, sq_rel=0.0, rmse=0.0, mse=0.0)
    with pytest.raises(ValidationError):
        S3RReport(channels=["a", "b"], s3r_mse=[0.0], s3r_env=[0.0])


def test_tables():
    semantic = semantic_table({"BG": SemanticReport(per_class_iou={"car": 0.25}, mean_iou=0.25)})
    assert list(semantic.columns) == ["Car", "MC", "Train", "All"]
    assert semantic.loc["BG", "Car"] == 25.0 and math.isnan(semantic.loc["BG", "MC"])
    text = render_table(semantic, 2)
    assert "25.00" in text and "-" in text

    depth = depth_table({"model": DepthReport(abs_rel=0.5, sq_rel=1.0, rmse=2.0, mse=0.0016)})
    assert list(depth.columns) == ["Abs Rel", "Sq Rel", "RMSE", "MSE"]

    s3r = s3r_table({"model": S3RReport(channels=["90L", "90R"], s3r_mse=[0.1, 0.2], s3r_env=[0.3, 0.4])})
    assert list(s3r.columns) == ["MSE-90L", "MSE-90R", "ENV-90L", "ENV-90R"]
    assert render_table(s3r.iloc[0:0]) == "(no rows)"


def test_reports_json_is_stable():
    reports = {"semantic": SemanticReport(per_class_iou={"car": 0.5}, mean_iou=0.5), "depth": None}
    text = reports_to_json(reports)
    assert json.loads(text) == {"semantic": {"mean_iou": 0.5, "per_class_iou": {"car": 0.5}}}
    assert text == reports_to_json(dict(reversed(list(reports.items()))))

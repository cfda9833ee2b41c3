"""Semantic, depth and S3R metrics.

mIoU is accumulated over the whole evaluation set through one confusion
matrix. Depth errors are per-cell means; MSE is taken on depths divided by
the far-plane depth. S3R errors are per output channel.
"""
from typing import Iterable, Optional, Sequence

import numpy as np

from config.settings import settings
from src.dsp.core import Waveform, envelope, stft
from src.metrics.reports import DepthReport, S3RReport, SemanticReport
from src.simulator.sources import CLASS_IDS
from src.utils.errors import NonpositiveGroundTruth, ShapeMismatch

TARGET_CLASSES = (1, 2, 3)
CLASS_NAMES = {class_id: name for name, class_id in CLASS_IDS.items()}


def _cells(grid) -> np.ndarray:
    return np.asarray(getattr(grid, "cells", grid))


class SegMetric:
    """Running confusion matrix over ``n_class`` ids (rows = ground truth)."""

    def __init__(self, n_class: int = len(CLASS_IDS)):
        self.n_class = n_class
        self.confusion_matrix = np.zeros((n_class, n_class), dtype=np.int64)

    def add_batch(self, preds: np.ndarray, labels: np.ndarray) -> None:
        preds, labels = np.asarray(preds), np.asarray(labels)
        if preds.shape != labels.shape:
            raise ShapeMismatch(f"prediction {preds.shape} and ground truth {labels.shape} differ")
        index = (labels >= 0) & (labels < self.n_class)
        codes = self.n_class * labels[index].astype(np.int64) + preds[index].astype(np.int64)
        self.confusion_matrix += np.bincount(codes, minlength=self.n_class ** 2).reshape(self.n_class, self.n_class)

    def reset(self) -> None:
        self.confusion_matrix[...] = 0

    def iou(self) -> np.ndarray:
        """Per-class IoU; NaN for classes absent from both prediction and ground truth."""
        intersection = np.diag(self.confusion_matrix).astype(np.float64)
        union = self.confusion_matrix.sum(axis=1) + self.confusion_matrix.sum(axis=0) - intersection
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(union > 0, intersection / np.maximum(union, 1), np.nan)

    def report(self, target_classes: Sequence[int] = TARGET_CLASSES) -> SemanticReport:
        per_class = self.iou()
        present = {CLASS_NAMES.get(c, str(c)): float(per_class[c]) for c in target_classes if not np.isnan(per_class[c])}
        # nothing to find and nothing predicted counts as a perfect score
        mean_iou = float(np.mean(list(present.values()))) if present else 1.0
        return SemanticReport(per_class_iou=present, mean_iou=mean_iou)


def miou(pred: Iterable, gt: Iterable, target_classes: Sequence[int] = TARGET_CLASSES) -> SemanticReport:
    metric = SegMetric(max(len(CLASS_IDS), max(target_classes) + 1))
    for p, g in zip(pred, gt):
        metric.add_batch(_cells(p), _cells(g))
    return metric.report(target_classes)


def depth_metrics(pred: Iterable, gt: Iterable, far_depth: float = settings.FAR_DEPTH) -> DepthReport:
    pred_cells = [np.asarray(_cells(p), dtype=np.float64) for p in pred]
    gt_cells = [np.asarray(_cells(g), dtype=np.float64) for g in gt]
    if len(pred_cells) != len(gt_cells):
        raise ShapeMismatch(f"{len(pred_cells)} predictions for {len(gt_cells)} ground-truth grids")
    if not gt_cells:
        return DepthReport(abs_rel=0.0, sq_rel=0.0, rmse=0.0, mse=0.0)
    for p, g in zip(pred_cells, gt_cells):
        if p.shape != g.shape:
            raise ShapeMismatch(f"depth prediction {p.shape} vs ground truth {g.shape}")
    p = np.concatenate([c.ravel() for c in pred_cells])
    g = np.concatenate([c.ravel() for c in gt_cells])
    if g.size and g.min() <= 0:
        raise NonpositiveGroundTruth("ground-truth depth must be positive everywhere")
    diff = p - g
    return DepthReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        mse=float(np.mean((diff / far_depth) ** 2)),
    )


def spectrogram_mse(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean squared magnitude of the complex difference over TF cells."""
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"spectrograms {pred.shape} and {gt.shape} differ")
    return float(np.mean(np.abs(pred - gt) ** 2))


def envelope_error(pred: Waveform, gt: Waveform) -> float:
    return float(np.mean(np.abs(envelope(pred) - envelope(gt))))


def s3r_metrics(pred_waves: Sequence[Waveform], gt_waves: Sequence[Waveform],
                window: int = settings.STFT_WINDOW, hop: int = settings.STFT_HOP,
                channels: Optional[Sequence[str]] = None) -> S3RReport:
    if len(pred_waves) != len(gt_waves):
        raise ShapeMismatch(f"{len(pred_waves)} predicted channels for {len(gt_waves)} targets")
    mse_values, env_values = [], []
    for p, g in zip(pred_waves, gt_waves):
        if len(p) != len(g) or p.sample_rate != g.sample_rate:
            raise ShapeMismatch("predicted and target waves must share length and sample rate")
        mse_values.append(spectrogram_mse(stft(p, window, hop).bins, stft(g, window, hop).bins))
        env_values.append(envelope_error(p, g))
    labels = list(channels) if channels is not None else [f"ch{i}" for i in range(len(mse_values))]
    return S3RReport(channels=labels, s3r_mse=mse_values, s3r_env=env_values)


def merge_s3r_reports(reports: Sequence[S3RReport]) -> S3RReport:
    """Average per-channel errors over clips (all reports share channel labels)."""
    if not reports:
        return S3RReport(channels=[], s3r_mse=[], s3r_env=[])
    return S3RReport(
        channels=reports[0].channels,
        s3r_mse=np.mean([r.s3r_mse for r in reports], axis=0).tolist(),
        s3r_env=np.mean([r.s3r_env for r in reports], axis=0).tolist(),
    )

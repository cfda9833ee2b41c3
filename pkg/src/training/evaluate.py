"""Evaluation of a trained model plus the reference baselines.

Baselines: the per-cell mode of the train labels (BG), a constant
mean-depth predictor and the copy-reference S3R predictor that returns the
0 degree pair for every target pair.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from src.autodiff.tensor import Tensor, no_grad
from src.dsp.core import ComplexSpectrogram, Waveform, reconstruct_target
from src.labels.pseudo_label import LabelStack, mode_background
from src.metrics.evaluation import SegMetric, depth_metrics, merge_s3r_reports, s3r_metrics
from src.metrics.reports import (
    DepthReport,
    S3RReport,
    SemanticReport,
    depth_table,
    render_table,
    s3r_table,
    semantic_table,
)
from src.models.binaural_net import BinauralPerceptionNet
from src.simulator.ground_truth import SIM_CLASS_TABLE
from src.training.data import REFERENCE_ORIENTATION, SIDES, SceneDataset, batch_indices, collate, open_splits
from src.training.runs import read_run_config, restore_model
from src.utils.config import Config
from src.utils.errors import DataMissing
from src.utils.logging import get_logger

logger = get_logger(__name__)


class EvalResult(BaseModel):
    split: str
    scenes: int
    semantic: Optional[SemanticReport] = None
    depth: Optional[DepthReport] = None
    s3r: Optional[S3RReport] = None
    bg_semantic: SemanticReport
    mean_depth: DepthReport
    mean_depth_value: float
    copy_reference_s3r: S3RReport

    def tables(self) -> str:
        sections = []
        semantic_rows = {"BG": self.bg_semantic}
        if self.semantic is not None:
            semantic_rows["model"] = self.semantic
        sections.append("Semantic IoU (%)\n" + render_table(semantic_table(semantic_rows), 2))
        depth_rows = {"mean depth": self.mean_depth}
        if self.depth is not None:
            depth_rows["model"] = self.depth
        sections.append("Depth\n" + render_table(depth_table(depth_rows)))
        s3r_rows = {"copy reference": self.copy_reference_s3r}
        if self.s3r is not None:
            s3r_rows["model"] = self.s3r
        sections.append("S3R\n" + render_table(s3r_table(s3r_rows)))
        return "\n\n".join(sections) + "\n"


def channel_labels(target_pairs: Sequence[int]) -> List[str]:
    return [f"{alpha}{side}" for alpha in target_pairs for side in SIDES]


def train_statistics(train: SceneDataset):
    """(per-cell mode of the train labels, mean train depth in meters)."""
    grids, depth_sum, depth_count = [], 0.0, 0
    for index in range(len(train)):
        sample = train.sample(index)
        grids.append(sample.labels)
        depth_sum += float(sample.depth.cells.sum())
        depth_count += sample.depth.cells.size
    background = mode_background(LabelStack(grids, dict(SIM_CLASS_TABLE)))
    return background, depth_sum / max(depth_count, 1)


def _scaled_pair(sample, gains: np.ndarray, orientation: int, rig) -> List[Waveform]:
    waves = []
    for mic_id in rig.mic_ids[orientation]:
        index = rig.channel_index(mic_id)
        waves.append(Waveform(sample.clip.channels[index] * gains[index], sample.clip.sample_rate))
    return waves


def predict_targets(reference: Sequence[Waveform], masks: np.ndarray, ref_specs: np.ndarray,
                    target_pairs: Sequence[int], window: int, hop: int) -> List[Waveform]:
    """x_alpha = x0 - istft(S0 * mask) for every target pair and ear, in channel order."""
    waves = []
    for pair, _alpha in enumerate(target_pairs):
        for side in range(2):
            mask = masks[4 * pair + 2 * side] + 1j * masks[4 * pair + 2 * side + 1]
            diff = ComplexSpectrogram(ref_specs[side] * mask, window, hop, reference[side].sample_rate,
                                      length=len(reference[side]))
            waves.append(reconstruct_target(reference[side], diff))
    return waves


def evaluate_model(model: BinauralPerceptionNet, dataset: SceneDataset, cfg: Config,
                   train: SceneDataset) -> EvalResult:
    """Score ``model`` on ``dataset`` in eval mode, next to the baselines."""
    tasks = cfg.tasks
    window, hop = cfg.train.window, cfg.train.hop
    target_pairs = cfg.model.target_pairs
    labels = channel_labels(target_pairs)
    background, mean_depth_value = train_statistics(train)

    model_metric, bg_metric = SegMetric(), SegMetric()
    pred_depths, gt_depths, mean_depths = [], [], []
    model_s3r, copy_s3r = [], []

    model.eval()
    with no_grad():
        for indices in batch_indices(list(range(len(dataset))), cfg.train.batch):
            samples = [dataset.sample(i) for i in indices]
            examples = [dataset.encode(s) for s in samples]
            batch = collate(examples)
            outputs = model.forward_multitask(Tensor(batch.inputs), tasks)
            predicted = outputs.predicted_labels() if outputs.semantic_logits is not None else None

            for n, sample in enumerate(samples):
                bg_metric.add_batch(background.cells, sample.labels.cells)
                gt = sample.depth.cells
                gt_depths.append(gt)
                mean_depths.append(np.full_like(gt, mean_depth_value))
                if predicted is not None:
                    model_metric.add_batch(predicted[n], sample.labels.cells)
                if outputs.depth is not None:
                    pred_depths.append(outputs.depth.data[n, 0].astype(np.float64))

                gains = dataset.gains_for(sample.clip)
                reference = _scaled_pair(sample, gains, REFERENCE_ORIENTATION, dataset.rig)
                truth = [w for alpha in target_pairs for w in _scaled_pair(sample, gains, alpha, dataset.rig)]
                copies = [reference[side] for _alpha in target_pairs for side in range(2)]
                copy_s3r.append(s3r_metrics(copies, truth, window, hop, labels))
                if outputs.s3r_masks is not None:
                    masks = outputs.s3r_masks.data[n].astype(np.float64)
                    ref_specs = examples[n].reference.astype(np.complex128)
                    estimates = predict_targets(reference, masks, ref_specs, target_pairs, window, hop)
                    model_s3r.append(s3r_metrics(estimates, truth, window, hop, labels))

    result = EvalResult(
        split=dataset.split,
        scenes=len(dataset),
        semantic=model_metric.report() if "semantic" in tasks else None,
        depth=depth_metrics(pred_depths, gt_depths, dataset.far_depth) if "depth" in tasks else None,
        s3r=merge_s3r_reports(model_s3r) if "s3r" in tasks else None,
        bg_semantic=bg_metric.report(),
        mean_depth=depth_metrics(mean_depths, gt_depths, dataset.far_depth),
        mean_depth_value=mean_depth_value,
        copy_reference_s3r=merge_s3r_reports(copy_s3r) if copy_s3r else S3RReport(
            channels=labels, s3r_mse=[0.0] * len(labels), s3r_env=[0.0] * len(labels)),
    )
    if result.semantic is not None:
        logger.info(f"📊 {dataset.split}: mIoU {result.semantic.mean_iou:.4f} (BG {result.bg_semantic.mean_iou:.4f})")
    return result


def evaluate(checkpoint, split: str = "test", overrides: Optional[Dict[str, str]] = None) -> EvalResult:
    """Load ``checkpoint`` with its stored config and score it on ``split``."""
    cfg = read_run_config(checkpoint, overrides)
    datasets = open_splits(cfg, ("train", split))
    if split not in datasets:
        raise DataMissing(f"split '{split}' not found under {cfg.train.data_root}")
    model = restore_model(checkpoint, cfg, datasets["train"])
    return evaluate_model(model, datasets[split], cfg, datasets["train"])

"""Multi-task objective: semantic CE + lambda1 * depth MSE + lambda2 * S3R complex MSE."""
from typing import Dict, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.autodiff.losses import cross_entropy, mse
from src.autodiff.tensor import Tensor
from src.models.binaural_net import ModelOutput
from src.training.data import Batch
from src.utils.errors import MissingTarget


class LossWeights(BaseModel):
    lambda1: float = Field(0.2, ge=0.0)
    lambda2: float = Field(0.2, ge=0.0)


def masked_difference(masks: Tensor, reference: np.ndarray, pair: int, side: int):
    """Real and imaginary parts of reference * mask for one output channel."""
    mask_re = masks[:, 4 * pair + 2 * side]
    mask_im = masks[:, 4 * pair + 2 * side + 1]
    ref_re = np.ascontiguousarray(reference[:, side].real, dtype=masks.dtype)
    ref_im = np.ascontiguousarray(reference[:, side].imag, dtype=masks.dtype)
    real = mask_re * ref_re - mask_im * ref_im
    imag = mask_im * ref_re + mask_re * ref_im
    return real, imag


def s3r_loss(masks: Tensor, reference: np.ndarray, differences: np.ndarray) -> Tensor:
    """Mean over output channels of |reference * mask - stft(x0 - x_alpha)|^2."""
    pairs = differences.shape[1]
    if masks.shape[1] != 4 * pairs:
        raise MissingTarget(f"{masks.shape[1]} mask channels for {pairs} target pairs")
    total = None
    for pair in range(pairs):
        for side in range(2):
            real, imag = masked_difference(masks, reference, pair, side)
            target = differences[:, pair, side]
            term = mse(real, target.real) + mse(imag, target.imag)
            total = term if total is None else total + term
    return total / (2 * pairs)


def task_losses(outputs: ModelOutput, batch: Batch, far_depth: float, tasks: Sequence[str]) -> Dict[str, Tensor]:
    losses = {}
    if "semantic" in tasks:
        if outputs.semantic_logits is None or batch.labels is None:
            raise MissingTarget("semantic task enabled without logits or labels")
        losses["semantic"] = cross_entropy(outputs.semantic_logits, batch.labels)
    if "depth" in tasks:
        if outputs.depth is None or batch.depth is None:
            raise MissingTarget("depth task enabled without prediction or target")
        losses["depth"] = mse(outputs.depth / far_depth, batch.depth)
    if "s3r" in tasks:
        if outputs.s3r_masks is None or batch.differences is None or batch.differences.shape[1] == 0:
            raise MissingTarget("s3r task enabled without masks or difference spectrograms")
        losses["s3r"] = s3r_loss(outputs.s3r_masks, batch.reference, batch.differences)
    return losses


def combine_losses(components: Dict[str, Tensor], weights: LossWeights) -> Tensor:
    """Weighted sum; tasks absent from ``components`` contribute nothing."""
    factors = {"semantic": 1.0, "depth": weights.lambda1, "s3r": weights.lambda2}
    total: Optional[Tensor] = None
    for task in ("semantic", "depth", "s3r"):
        if task not in components:
            continue
        term = components[task] if task == "semantic" else components[task] * factors[task]
        total = term if total is None else total + term
    if total is None:
        raise MissingTarget("no task losses to combine")
    return total


def total_loss(outputs: ModelOutput, batch: Batch, weights: LossWeights, far_depth: float,
               tasks: Sequence[str]):
    """Returns (total, per-task components)."""
    components = task_losses(outputs, batch, far_depth, tasks)
    return combine_losses(components, weights), components

"""Scalar training losses."""
import numpy as np

from src.autodiff.ops import log_softmax_array
from src.autodiff.tensor import Tensor
from src.utils.errors import LabelOutOfRange, ShapeMismatch


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean pixel-wise cross-entropy of logits[N,C,H,W] against int labels[N,H,W]."""
    N, C, H, W = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (N, H, W):
        raise ShapeMismatch(f"labels {labels.shape} do not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise LabelOutOfRange(f"labels must lie in [0, {C}), got [{labels.min()}, {labels.max()}]")

    log_p = log_softmax_array(logits.data, axis=1)
    one_hot = np.zeros_like(log_p)
    np.put_along_axis(one_hot, labels[:, None].astype(np.int64), 1.0, axis=1)
    count = N * H * W
    value = -(one_hot * log_p).sum() / count

    def backward(g):
        return ((np.exp(log_p) - one_hot) * (g / count),)

    return Tensor.result(np.asarray(value, dtype=logits.dtype), (logits,), backward, "cross_entropy")


def mse(prediction: Tensor, target) -> Tensor:
    """Mean squared error against a constant target of the same shape."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=prediction.dtype)
    if target.shape != prediction.shape:
        raise ShapeMismatch(f"mse: prediction {prediction.shape} vs target {target.shape}")
    diff = prediction.data - target
    count = max(diff.size, 1)
    value = (diff ** 2).sum() / count

    def backward(g):
        return (diff * (2.0 * g / count),)

    return Tensor.result(np.asarray(value, dtype=prediction.dtype), (prediction,), backward, "mse")

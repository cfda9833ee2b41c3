"""Whole-network gradient checks on a tiny configuration."""
from typing import Callable, Dict, Tuple

import numpy as np

from src.autodiff.gradcheck import grad_check
from src.autodiff.losses import cross_entropy, mse
from src.autodiff.tensor import Tensor, no_grad, precision
from src.models.binaural_net import NUM_CLASSES, BinauralPerceptionNet
from src.utils.config import ModelConfig

TINY_SPEC_SHAPE = (8, 16)
MODEL_PARTS = ("encoder", "aspp", "fuse", "semantic_decoder", "depth_decoder", "s3r_decoder")
# biases feeding batchnorm have an exact zero gradient
WEIGHT_GRAD_FLOOR = 1e-6


def tiny_model_config(**overrides) -> ModelConfig:
    values = dict(
        base_channels=4,
        aspp_filters=8,
        dilation_scale=0.5,
        decoder_channels=4,
        output_grid=(8, 16),
        target_pairs=(90,),
    )
    values.update(overrides)
    return ModelConfig(**values)


def _tiny_problem(seed: int) -> Tuple[BinauralPerceptionNet, np.ndarray, Callable[[Tensor], Tensor]]:
    """A float64 tiny model, a batch and the summed three-task loss."""
    rng = np.random.default_rng(seed)
    cfg = tiny_model_config()
    with precision(np.float64):
        model = BinauralPerceptionNet(cfg, in_channels=2, spec_shape=TINY_SPEC_SHAPE, seed=seed)
    x = rng.standard_normal((2, 2) + TINY_SPEC_SHAPE)
    labels = rng.integers(0, NUM_CLASSES, size=(2,) + tuple(cfg.output_grid))
    depth = rng.uniform(0.1, 1.0, size=(2, 1) + tuple(cfg.output_grid))
    weights = rng.standard_normal((2, 4 * len(cfg.target_pairs)) + TINY_SPEC_SHAPE)

    def loss(t: Tensor) -> Tensor:
        out = model.forward_multitask(t)
        return (cross_entropy(out.semantic_logits, labels)
                + mse(out.depth / model.far_depth, depth)
                + (out.s3r_masks * weights).mean())

    return model, x, loss


def model_grad_check(seed: int = 0, coords: int = 24, h: float = 1e-5) -> float:
    """Max relative error of d(loss)/d(input) over ``coords`` random input cells."""
    _, x, loss = _tiny_problem(seed)
    rng = np.random.default_rng([seed, 0])
    picked = rng.choice(x.size, size=min(coords, x.size), replace=False)
    return grad_check(loss, Tensor(x), h=h, coords=picked.tolist())


def parameter_grad_check(seed: int = 0, coords_per_part: int = 6, h: float = 1e-5) -> Dict[str, float]:
    """Max relative error of d(loss)/d(weight) per network part.

    ``coords_per_part`` weight entries are drawn from each of the encoder,
    ASPP, fusion and the three decoders; absent parts are skipped.
    """
    model, x, loss = _tiny_problem(seed)
    rng = np.random.default_rng([seed, 1])
    worst: Dict[str, float] = {}
    with precision(np.float64):
        model.zero_grad()
        loss(Tensor(x)).backward()
        for part in MODEL_PARTS:
            module = getattr(model, part, None)
            if module is None:
                continue
            params = [p for _, p in module.named_parameters()]
            ends = np.cumsum([p.data.size for p in params])
            picked = rng.choice(ends[-1], size=min(coords_per_part, int(ends[-1])), replace=False)
            error = 0.0
            for flat_index in picked:
                which = int(np.searchsorted(ends, flat_index, side="right"))
                param = params[which]
                index = int(flat_index - (ends[which - 1] if which else 0))
                cell = np.unravel_index(index, param.data.shape)
                analytic = 0.0 if param.grad is None else float(param.grad[cell])
                original = param.data[cell]
                with no_grad():
                    param.data[cell] = original + h
                    plus = loss(Tensor(x)).item()
                    param.data[cell] = original - h
                    minus = loss(Tensor(x)).item()
                param.data[cell] = original
                numeric = (plus - minus) / (2 * h)
                error = max(error, abs(analytic - numeric) / max(abs(analytic), abs(numeric), WEIGHT_GRAD_FLOOR))
            worst[part] = error
    return worst

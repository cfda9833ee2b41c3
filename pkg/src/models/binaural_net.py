"""BinauralPerceptionNet: shared spectrogram encoder with ASPP and three task decoders.

Input is a batch of log-magnitude spectrograms ``[N, K, Fb, Tf]`` with one
channel per microphone. Every channel goes through the same strided conv
stack (one parameter set); branch features are concatenated on channels,
passed through ASPP and fused by a 1x1 conv. The fused map feeds the
semantic, depth and S3R decoders.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.settings import settings
from src.autodiff import ops
from src.autodiff.nn import Conv2d, ConvBNReLU, ConvTranspose2d, Module
from src.autodiff.tensor import Tensor
from src.utils.config import ModelConfig
from src.utils.errors import ShapeMismatch

NUM_CLASSES = 4
STRIDED_LAYERS = 4
ENCODER_KERNEL = 4


def encoder_output_size(size: int, layers: int = STRIDED_LAYERS) -> int:
    """Each strided layer maps n to ceil(n / 2)."""
    for _ in range(layers):
        size = -(-size // 2)
    return size


class SpectrogramEncoder(Module):
    """Four stride-2 4x4 conv+BN+ReLU layers, widths base * (1, 2, 4, 8)."""

    def __init__(self, base_channels: int, rng: np.random.Generator):
        widths = [base_channels * 2 ** i for i in range(STRIDED_LAYERS)]
        self.layers = []
        in_channels = 1
        for width in widths:
            conv = Conv2d(in_channels, width, ENCODER_KERNEL, rng, stride=2, padding="same")
            self.layers.append(ConvBNReLU(conv, width))
            in_channels = width
        self.out_channels = widths[-1]

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class ASPP(Module):
    def __init__(self, in_channels: int, filters: int, dilations: Sequence[int], rng: np.random.Generator):
        self.branches = [ConvBNReLU(Conv2d(in_channels, filters, 1, rng, padding=0), filters)]
        for d in dilations:
            self.branches.append(ConvBNReLU(Conv2d(in_channels, filters, 3, rng, dilation=d, padding=d), filters))

    def forward(self, x: Tensor) -> Tensor:
        return ops.concat([branch(x) for branch in self.branches], axis=1)


class DenseDecoder(Module):
    """Resize to the output grid, two 1x1 conv+BN+ReLU, 1x1 head with bias."""

    def __init__(self, in_channels: int, width: int, out_channels: int, grid: Tuple[int, int],
                 rng: np.random.Generator, head_init: str = "default", head_bias: float = 0.0):
        self.grid = tuple(grid)
        self.hidden = [
            ConvBNReLU(Conv2d(in_channels, width, 1, rng, padding=0), width),
            ConvBNReLU(Conv2d(width, width, 1, rng, padding=0), width),
        ]
        self.head = Conv2d(width, out_channels, 1, rng, padding=0, bias=True)
        if head_init == "zero":
            self.head.weight.data[...] = 0
        else:
            self.head.bias.data[...] = head_bias

    def forward(self, feat: Tensor) -> Tensor:
        x = ops.resize_bilinear(feat, *self.grid)
        for layer in self.hidden:
            x = layer(x)
        return self.head(x)


class MaskDecoder(Module):
    """Five transposed convs back to spectrogram resolution, then a P*4 channel mask head."""

    def __init__(self, in_channels: int, base_channels: int, strides: Sequence[int], pairs: int,
                 spec_shape: Tuple[int, int], rng: np.random.Generator, head_init: str = "default"):
        self.spec_shape = tuple(spec_shape)
        widths = [base_channels * m for m in (8, 4, 2, 1, 1)]
        self.layers = []
        for stride, width in zip(strides, widths):
            kernel = 4 if stride == 2 else 3
            conv = ConvTranspose2d(in_channels, width, kernel, rng, stride=stride, padding=1)
            self.layers.append(ConvBNReLU(conv, width))
            in_channels = width
        self.head = Conv2d(in_channels, pairs * 4, 1, rng, padding=0, bias=True)
        if head_init == "zero":
            self.head.weight.data[...] = 0

    def forward(self, feat: Tensor) -> Tensor:
        x = feat
        for layer in self.layers:
            x = layer(x)
        x = ops.crop_or_pad(x, *self.spec_shape)
        return ops.sigmoid(self.head(x)) * 2.0 - 1.0


@dataclass
class ModelOutput:
    semantic_logits: Optional[Tensor] = None
    depth: Optional[Tensor] = None
    s3r_masks: Optional[Tensor] = None
    features: Optional[Tensor] = None

    @property
    def semantic_probabilities(self) -> Optional[Tensor]:
        return None if self.semantic_logits is None else ops.softmax(self.semantic_logits, axis=1)

    def predicted_labels(self) -> np.ndarray:
        return np.argmax(self.semantic_logits.data, axis=1)


class BinauralPerceptionNet(Module):
    def __init__(self, cfg: ModelConfig, in_channels: int, spec_shape: Tuple[int, int],
                 seed: int = 0, far_depth: float = settings.FAR_DEPTH):
        if in_channels < 1:
            raise ShapeMismatch("the encoder needs at least one input channel")
        self.cfg = cfg
        self.in_channels = in_channels
        self.spec_shape = tuple(spec_shape)
        self.far_depth = far_depth
        rng = np.random.default_rng(seed)

        self.encoder = SpectrogramEncoder(cfg.base_channels, rng)
        stacked = self.encoder.out_channels * in_channels
        if cfg.use_aspp:
            self.aspp = ASPP(stacked, cfg.aspp_filters, cfg.effective_dilations(), rng)
            fuse_in = cfg.aspp_filters * (1 + len(cfg.dilations))
        else:
            self.aspp = None
            fuse_in = stacked
        self.fuse = ConvBNReLU(Conv2d(fuse_in, cfg.aspp_filters, 1, rng, padding=0), cfg.aspp_filters)

        width = cfg.decoder_channels
        grid = cfg.output_grid
        self.semantic_decoder = DenseDecoder(cfg.aspp_filters, width, NUM_CLASSES, grid, rng, cfg.head_init)
        # normalised depth starts near the far plane, where most cells sit
        self.depth_decoder = DenseDecoder(cfg.aspp_filters, width, 1, grid, rng, cfg.head_init, head_bias=1.0)
        self.s3r_decoder = MaskDecoder(cfg.aspp_filters, cfg.base_channels, cfg.s3r_strides,
                                       len(cfg.target_pairs), self.spec_shape, rng, cfg.head_init)

    # -- encoder ---------------------------------------------------------
    def _check_input(self, x: Tensor) -> None:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatch(f"expected input [N, {self.in_channels}, Fb, Tf], got {x.shape}")

    def branch_features(self, x: Tensor) -> List[Tensor]:
        """Shared-weight encoder output for each input channel."""
        self._check_input(x)
        N = x.shape[0]
        stacked = ops.concat([x[:, k:k + 1] for k in range(self.in_channels)], axis=0)
        encoded = self.encoder(stacked)
        return [encoded[k * N:(k + 1) * N] for k in range(self.in_channels)]

    def encode(self, x: Tensor) -> Tensor:
        feat = ops.concat(self.branch_features(x), axis=1)
        if self.aspp is not None:
            feat = self.aspp(feat)
        return self.fuse(feat)

    # -- decoders --------------------------------------------------------
    def semantic_logits(self, feat: Tensor) -> Tensor:
        return self.semantic_decoder(feat)

    def decode_semantic(self, feat: Tensor) -> Tensor:
        """Class probabilities [N, 4, H, W]."""
        return ops.softmax(self.semantic_logits(feat), axis=1)

    def decode_depth(self, feat: Tensor) -> Tensor:
        """Depth in meters [N, 1, H, W]."""
        return ops.relu(self.depth_decoder(feat)) * self.far_depth

    def decode_s3r(self, feat: Tensor) -> Tensor:
        """Complex masks [N, P*4, Fb, Tf] in [-1, 1]; pair p owns channels 4p..4p+3."""
        return self.s3r_decoder(feat)

    def forward_multitask(self, x: Tensor, tasks: Optional[Sequence[str]] = None) -> ModelOutput:
        tasks = self.cfg.tasks_enabled if tasks is None else tuple(tasks)
        feat = self.encode(x)
        return ModelOutput(
            semantic_logits=self.semantic_logits(feat) if "semantic" in tasks else None,
            depth=self.decode_depth(feat) if "depth" in tasks else None,
            s3r_masks=self.decode_s3r(feat) if "s3r" in tasks else None,
            features=feat,
        )

    def forward(self, x: Tensor) -> ModelOutput:
        return self.forward_multitask(x)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

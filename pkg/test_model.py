import sys
import os
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

import numpy as np
import pytest

from src.autodiff.tensor import Tensor, no_grad
from src.models.binaural_net import NUM_CLASSES, BinauralPerceptionNet, SpectrogramEncoder, encoder_output_size
from src.models.selfcheck import MODEL_PARTS, TINY_SPEC_SHAPE, model_grad_check, parameter_grad_check, tiny_model_config
from src.utils.errors import ShapeMismatch


def _inputs(n=2, k=2, seed=0, shape=TINY_SPEC_SHAPE):
    return Tensor(np.random.default_rng(seed).standard_normal((n, k) + tuple(shape)))


def test_encoder_shape_law():
    assert encoder_output_size(257) == 17 and encoder_output_size(201) == 13
    assert encoder_output_size(8) == 1 and encoder_output_size(16) == 1
    encoder = SpectrogramEncoder(1, np.random.default_rng(0))
    out = encoder(Tensor(np.random.default_rng(1).standard_normal((2, 1, 257, 201))))
    assert out.shape == (2, 8, 17, 13)


def test_shared_encoder_sees_identical_ears_identically():
    model = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE)
    one = np.random.default_rng(2).standard_normal((2, 1) + TINY_SPEC_SHAPE)
    left, right = model.branch_features(Tensor(np.concatenate([one, one], axis=1)))
    np.testing.assert_allclose(left.data, right.data, rtol=1e-6, atol=1e-7)
    assert len(model.encoder.parameters()) == 4 * 3


def test_output_shapes():
    cfg = tiny_model_config(target_pairs=(90, 180, 270))
    model = BinauralPerceptionNet(cfg, 2, TINY_SPEC_SHAPE)
    out = model(_inputs())
    assert out.semantic_logits.shape == (2, NUM_CLASSES, 8, 16)
    assert out.depth.shape == (2, 1, 8, 16)
    assert out.s3r_masks.shape == (2, 12) + TINY_SPEC_SHAPE
    assert np.all(np.abs(out.s3r_masks.data) <= 1.0)
    assert np.all(out.depth.data >= 0)
    np.testing.assert_allclose(out.semantic_probabilities.data.sum(axis=1), 1.0, rtol=1e-5)
    assert out.predicted_labels().shape == (2, 8, 16)


def test_masks_reach_odd_spectrogram_sizes():
    model = BinauralPerceptionNet(tiny_model_config(), 2, (33, 26))
    assert model(_inputs(shape=(33, 26))).s3r_masks.shape == (2, 4, 33, 26)


def test_zero_init_heads():
    model = BinauralPerceptionNet(tiny_model_config(head_init="zero"), 2, TINY_SPEC_SHAPE)
    out = model(_inputs())
    np.testing.assert_allclose(out.semantic_probabilities.data, 0.25, rtol=1e-6)
    assert not np.any(out.depth.data)
    assert not np.any(out.s3r_masks.data)


def test_task_subset_skips_decoders():
    model = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE)
    out = model.forward_multitask(_inputs(), ("semantic",))
    assert out.depth is None and out.s3r_masks is None and out.semantic_logits is not None


def test_multi_branch_and_no_aspp():
    model = BinauralPerceptionNet(tiny_model_config(use_aspp=False), 4, TINY_SPEC_SHAPE)
    assert model.aspp is None
    assert model(_inputs(k=4)).semantic_logits.shape == (2, NUM_CLASSES, 8, 16)
    with_aspp = BinauralPerceptionNet(tiny_model_config(), 4, TINY_SPEC_SHAPE)
    assert with_aspp.parameter_count() > model.parameter_count()


def test_input_channels_checked():
    model = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE)
    with pytest.raises(ShapeMismatch):
        model(_inputs(k=3))
    with pytest.raises(ShapeMismatch):
        BinauralPerceptionNet(tiny_model_config(), 0, TINY_SPEC_SHAPE)


def test_eval_mode_handles_single_clip():
    model = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE)
    model(_inputs())
    model.eval()
    with no_grad():
        out = model(_inputs(n=1, seed=3))
    assert out.semantic_logits.shape[0] == 1


def test_same_seed_same_weights():
    a = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE, seed=4)
    b = BinauralPerceptionNet(tiny_model_config(), 2, TINY_SPEC_SHAPE, seed=4)
    for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        np.testing.assert_array_equal(p.data, q.data, err_msg=name)


def test_whole_model_gradients():
    assert model_grad_check(seed=0) <= 1e-3


def test_weight_gradients_in_every_part():
    worst = parameter_grad_check(seed=0)
    assert set(worst) == set(MODEL_PARTS)
    for part, error in worst.items():
        assert error <= 1e-3, part

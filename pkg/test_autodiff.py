import sys
import os
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.autodiff import ops
from src.autodiff.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from src.autodiff.gradcheck import GRAD_CHECKS, SEEDS_PER_OP, grad_check
from src.autodiff.losses import cross_entropy, mse
from src.autodiff.nn import BatchNorm2d, Conv2d, ConvBNReLU, ConvTranspose2d, Module
from src.autodiff.optim import Adam, adam_step
from src.autodiff.tensor import Parameter, Tensor, no_grad, precision
from src.utils.errors import CheckpointCorrupt, DegenerateBatch, LabelOutOfRange, MissingGrad, NonFiniteValue, ShapeMismatch


def _t(values, requires_grad=False):
    with precision(np.float64):
        return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


def test_conv_hand_example():
    x = _t([[[[1, 2], [3, 4]]]])
    w = _t([[[[1, 0], [0, 1]]]])
    assert ops.conv2d(x, w).data.tolist() == [[[[5.0]]]]


def test_unit_kernel_is_identity():
    x = _t(np.random.default_rng(0).standard_normal((1, 1, 4, 5)))
    np.testing.assert_array_equal(ops.conv2d(x, _t(np.ones((1, 1, 1, 1)))).data, x.data)


def test_halving_encoder_shape():
    assert ops.conv_output_size(64, 4, 2, 1, 2) == 32
    x = _t(np.zeros((1, 1, 64, 64)))
    assert ops.conv2d(x, _t(np.zeros((1, 1, 4, 4))), stride=2, padding=1).shape == (1, 1, 32, 32)


@pytest.mark.parametrize("size,stride", [(257, 2), (201, 2), (8, 2), (7, 1)])
def test_same_padding_gives_ceil(size, stride):
    top, bottom = ops.same_padding(size, 4, stride)
    assert ops.conv_output_size(size, 4, stride, 1, top + bottom) == math.ceil(size / stride)


@given(seed=st.integers(0, 1000), stride=st.integers(1, 2), dilation=st.integers(1, 3), padding=st.integers(0, 2))
@settings(max_examples=25, deadline=None)
def test_conv_matches_loop_reference(seed, stride, dilation, padding):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 3, 9, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    fast = ops.conv2d(_t(x), _t(w), stride=stride, dilation=dilation, padding=padding).data
    np.testing.assert_allclose(fast, ops.conv2d_direct(x, w, stride, dilation, padding), atol=1e-9)


@given(seed=st.integers(0, 1000), a=st.floats(-3, 3), b=st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_conv_is_linear_in_input_and_weight(seed, a, b):
    rng = np.random.default_rng(seed)
    x1, x2 = rng.standard_normal((2, 2, 6, 5)), rng.standard_normal((2, 2, 6, 5))
    w1, w2 = rng.standard_normal((3, 2, 3, 3)), rng.standard_normal((3, 2, 3, 3))
    mixed = ops.conv2d(_t(a * x1 + b * x2), _t(w1), padding=1).data
    split = a * ops.conv2d(_t(x1), _t(w1), padding=1).data + b * ops.conv2d(_t(x2), _t(w1), padding=1).data
    np.testing.assert_allclose(mixed, split, atol=1e-9)
    mixed = ops.conv2d(_t(x1), _t(a * w1 + b * w2), stride=2).data
    split = a * ops.conv2d(_t(x1), _t(w1), stride=2).data + b * ops.conv2d(_t(x1), _t(w2), stride=2).data
    np.testing.assert_allclose(mixed, split, atol=1e-9)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        ops.conv2d(_t(np.zeros((1, 2, 4, 4))), _t(np.zeros((1, 3, 3, 3))))


def test_conv_transpose_output_size():
    x = _t(np.ones((1, 2, 4, 5)))
    w = _t(np.ones((2, 3, 4, 4)))
    assert ops.conv_transpose2d(x, w, stride=2, padding=1).shape == (1, 3, 8, 10)
    assert ops.conv_transpose2d(x, _t(np.ones((2, 3, 3, 3))), stride=1, padding=1).shape == (1, 3, 4, 5)


def test_batchnorm_two_values():
    x = _t(np.array([1.0, 3.0]).reshape(2, 1, 1, 1))
    out = ops.batchnorm(x, _t([1.0]), _t([0.0]), np.zeros(1), np.ones(1))
    np.testing.assert_allclose(out.data.reshape(-1), [-1.0, 1.0], atol=1e-5)


def test_batchnorm_constant_channel_is_zero():
    x = _t(np.full((2, 1, 2, 2), 7.0))
    out = ops.batchnorm(x, _t([1.0]), _t([0.0]), np.zeros(1), np.ones(1))
    assert not np.any(out.data)


def test_batchnorm_eval_with_unit_stats_is_identity():
    x = _t(np.random.default_rng(1).standard_normal((1, 2, 3, 3)))
    out = ops.batchnorm(x, _t([1.0, 1.0]), _t([0.0, 0.0]), np.zeros(2), np.ones(2), training=False)
    np.testing.assert_allclose(out.data, x.data, rtol=1e-5)


def test_batchnorm_updates_running_stats():
    x = _t(np.array([1.0, 3.0]).reshape(2, 1, 1, 1))
    mean, var = np.zeros(1), np.ones(1)
    ops.batchnorm(x, _t([1.0]), _t([0.0]), mean, var, momentum=0.1)
    np.testing.assert_allclose(mean, [0.2])
    np.testing.assert_allclose(var, [0.9 + 0.1 * 2.0])


def test_batchnorm_needs_two_values():
    with pytest.raises(DegenerateBatch):
        ops.batchnorm(_t(np.ones((1, 1, 1, 1))), _t([1.0]), _t([0.0]), np.zeros(1), np.ones(1))


def test_softmax_equal_logits():
    np.testing.assert_allclose(ops.softmax(_t(np.zeros((1, 4, 2, 2)))).data, 0.25)


@given(seed=st.integers(0, 1000), shift=st.floats(-50, 50))
@settings(max_examples=40, deadline=None)
def test_softmax_sums_to_one_and_ignores_shifts(seed, shift):
    logits = np.random.default_rng(seed).standard_normal((2, 4, 3, 3)) * 5
    probs = ops.softmax(_t(logits)).data
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)
    assert np.all(probs >= 0)
    np.testing.assert_allclose(ops.softmax(_t(logits + shift)).data, probs, atol=1e-12)


def test_upsample():
    x = _t(np.random.default_rng(2).standard_normal((1, 1, 3, 3)))
    np.testing.assert_allclose(ops.upsample_bilinear(x, 1).data, x.data)
    np.testing.assert_allclose(ops.upsample_bilinear(_t([[[[2.5]]]]), 2).data, np.full((1, 1, 2, 2), 2.5))
    with pytest.raises(ShapeMismatch):
        ops.upsample_bilinear(x, 1.5)


def test_bilinear_rows_sum_to_one():
    np.testing.assert_allclose(ops.bilinear_matrix(5, 13).sum(axis=1), 1.0)


def test_crop_or_pad_keeps_top_left():
    x = _t(np.arange(12.0).reshape(1, 1, 3, 4))
    out = ops.crop_or_pad(x, 4, 2).data[0, 0]
    np.testing.assert_array_equal(out, [[0, 1], [4, 5], [8, 9], [0, 0]])


def test_concat_and_getitem_gradients_route_back():
    a, b = _t(np.ones((1, 2, 2, 2)), True), _t(np.ones((1, 3, 2, 2)), True)
    out = ops.concat([a, b], axis=1)
    assert out.shape == (1, 5, 2, 2)
    (out[:, 1:3] * 2.0).sum().backward()
    np.testing.assert_array_equal(a.grad[0, :, 0, 0], [0.0, 2.0])
    np.testing.assert_array_equal(b.grad[0, :, 0, 0], [2.0, 0.0, 0.0])


def test_elementwise_shapes_must_match():
    with pytest.raises(ShapeMismatch):
        _t(np.ones(3)) + _t(np.ones(4))
    with pytest.raises(ShapeMismatch):
        _t(np.ones(3)) / _t(np.ones(3))


def test_non_finite_values_are_reported():
    with pytest.raises(NonFiniteValue):
        _t([1.0]) * np.inf


def test_cross_entropy_values():
    assert cross_entropy(_t(np.zeros((1, 4, 2, 2))), np.zeros((1, 2, 2), dtype=int)).item() == pytest.approx(math.log(4))
    logits = _t(np.array([2.0, 0.0]).reshape(1, 2, 1, 1))
    assert cross_entropy(logits, np.zeros((1, 1, 1), dtype=int)).item() == pytest.approx(0.1269, abs=1e-4)


def test_cross_entropy_rejects_bad_labels():
    logits = _t(np.zeros((1, 4, 1, 1)))
    with pytest.raises(LabelOutOfRange):
        cross_entropy(logits, np.full((1, 1, 1), 4))
    with pytest.raises(ShapeMismatch):
        cross_entropy(logits, np.zeros((1, 2, 1), dtype=int))


def test_mse_of_identical_is_zero():
    x = _t(np.random.default_rng(3).standard_normal((2, 1, 3, 3)))
    assert mse(x, x.data).item() == 0.0
    with pytest.raises(ShapeMismatch):
        mse(x, np.zeros(3))


def test_adam_zero_grad_leaves_parameter():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.zeros(2, dtype=p.dtype)
    adam_step(p, 1e-3)
    np.testing.assert_array_equal(p.data, np.array([1.0, -2.0], dtype=p.dtype))
    assert p.step_count == 1 and p.grad is None


def test_adam_first_step_moves_by_lr():
    with precision(np.float64):
        p = Parameter(np.array([1.0, 1.0]))
    p.grad = np.array([0.3, -40.0])
    adam_step(p, 1e-2)
    np.testing.assert_allclose(p.data, [1.0 - 1e-2, 1.0 + 1e-2], atol=1e-8)


def test_adam_two_steps_match_recurrence():
    with precision(np.float64):
        p = Parameter(np.array([0.5]))
    lr, g = 1e-3, 0.7
    m = v = 0.0
    expected = 0.5
    for step in (1, 2):
        p.grad = np.array([g])
        adam_step(p, lr)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        expected -= lr * (m / (1 - 0.9 ** step)) / (math.sqrt(v / (1 - 0.999 ** step)) + 1e-8)
    assert p.data[0] == pytest.approx(expected, abs=1e-12)


def test_adam_needs_gradients():
    with pytest.raises(MissingGrad):
        adam_step(Parameter(np.ones(2)), 1e-3)
    p, q = Parameter(np.ones(2)), Parameter(np.ones(2))
    p.grad = np.ones(2, dtype=p.dtype)
    assert Adam([p, q], lr=1e-3).step() == 1
    assert q.step_count == 0


def test_gradcheck_of_sum():
    x = _t(np.random.default_rng(4).standard_normal((2, 3)))
    assert grad_check(lambda t: t.sum(), x) < 1e-10


@pytest.mark.parametrize("name", sorted(GRAD_CHECKS))
def test_registered_gradients(name):
    assert max(GRAD_CHECKS[name](seed) for seed in range(SEEDS_PER_OP)) <= 1e-4


class _Tiny(Module):
    def __init__(self, seed=0):
        rng = np.random.default_rng(seed)
        self.block = ConvBNReLU(Conv2d(2, 3, 3, rng), 3)
        self.up = ConvTranspose2d(3, 2, 4, rng, stride=2, padding=1, bias=True)
        self.norms = [BatchNorm2d(2)]

    def forward(self, x):
        return self.norms[0](self.up(self.block(x)))


def test_module_discovers_parameters_and_buffers():
    model = _Tiny()
    names = [name for name, _ in model.named_parameters()]
    assert "block.conv.weight" in names and "up.bias" in names and "norms.0.gamma" in names
    assert [name for name, _ in model.named_buffers()] == [
        "block.bn.running_mean", "block.bn.running_var", "norms.0.running_mean", "norms.0.running_var"]
    model.eval()
    assert not model.block.bn.training and not model.norms[0].training


def test_checkpoint_round_trip(tmp_path):
    model = _Tiny(0)
    out = model(Tensor(np.random.default_rng(5).standard_normal((2, 2, 4, 4))))
    out.sum().backward()
    Adam(model.parameters(), lr=1e-2).step()

    restored = load_checkpoint(_Tiny(1), save_checkpoint(model, tmp_path / "tiny.bapn"))
    for (name, p), (_, q) in zip(model.named_parameters(), restored.named_parameters()):
        np.testing.assert_array_equal(p.data, q.data, err_msg=name)
        np.testing.assert_array_equal(p.m, q.m)
        assert p.step_count == q.step_count == 1
    for (_, a), (_, b) in zip(model.named_buffers(), restored.named_buffers()):
        np.testing.assert_array_equal(np.float32(a), np.float32(b))

    model.eval()
    restored.eval()
    x = Tensor(np.random.default_rng(6).standard_normal((1, 2, 4, 4)))
    with no_grad():
        np.testing.assert_allclose(model(x).data, restored(x).data, rtol=1e-5, atol=1e-6)


def test_checkpoint_corruption(tmp_path):
    blob = encode_checkpoint(_Tiny())
    assert blob[:4] == MAGIC
    with pytest.raises(CheckpointCorrupt):
        decode_checkpoint(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointCorrupt):
        decode_checkpoint(blob[:-3])
    with pytest.raises(CheckpointCorrupt):
        decode_checkpoint(blob[:4] + (2).to_bytes(4, "little") + blob[8:])
    with pytest.raises(CheckpointCorrupt):
        load_checkpoint(_Tiny(), tmp_path / "missing.bapn")

    class _Other(Module):
        def __init__(self):
            self.only = Parameter(np.zeros(3))

    path = save_checkpoint(_Other(), tmp_path / "other.bapn")
    with pytest.raises(CheckpointCorrupt):
        load_checkpoint(_Tiny(), path)

"""Differentiable operators used by the perception network.

Each op computes its forward value with numpy and returns a tensor whose
backward closure produces exact gradients for every parent.
"""
import math
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.autodiff.tensor import Tensor, as_tensor
from src.utils.errors import BadConfig, DegenerateBatch, ShapeMismatch

Padding = Union[int, Tuple[int, int, int, int]]


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")


def _constant(value, like: Tensor) -> np.ndarray:
    return np.asarray(value, dtype=like.dtype)


# -- elementwise -------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _same_shape(a, b, "add")
        return Tensor.result(a.data + b.data, (a, b), lambda g: (g, g), "add")
    const = _constant(b, a)
    if const.shape not in ((), a.shape):
        raise ShapeMismatch(f"add: cannot combine {a.shape} with constant {const.shape}")
    return Tensor.result(a.data + const, (a,), lambda g: (g,), "add")


def neg(a: Tensor) -> Tensor:
    return Tensor.result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        _same_shape(a, b, "mul")
        return Tensor.result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")
    const = _constant(b, a)
    if const.shape not in ((), a.shape):
        raise ShapeMismatch(f"mul: cannot combine {a.shape} with constant {const.shape}")
    return Tensor.result(a.data * const, (a,), lambda g: (g * const,), "mul")


def total(a: Tensor) -> Tensor:
    return Tensor.result(np.asarray(a.data.sum(), dtype=a.dtype), (a,),
                         lambda g: (np.full(a.shape, g, dtype=a.dtype),), "sum")


def mean(a: Tensor) -> Tensor:
    scale = 1.0 / a.size
    return Tensor.result(np.asarray(a.data.mean(), dtype=a.dtype), (a,),
                         lambda g: (np.full(a.shape, g * scale, dtype=a.dtype),), "mean")


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor.result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def getitem(a: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return Tensor.result(np.array(a.data[key]), (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    for t in tensors[1:]:
        rest = [d for i, d in enumerate(t.shape) if i != axis % t.ndim]
        first = [d for i, d in enumerate(tensors[0].shape) if i != axis % t.ndim]
        if rest != first:
            raise ShapeMismatch(f"concat: {t.shape} does not line up with {tensors[0].shape} off axis {axis}")
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor.result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def crop_or_pad(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left (height, width) window, zero-filling what is missing."""
    N, C, H, W = x.shape
    h, w = min(H, height), min(W, width)
    out = np.zeros((N, C, height, width), dtype=x.dtype)
    out[:, :, :h, :w] = x.data[:, :, :h, :w]

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, :, :h, :w] = g[:, :, :h, :w]
        return (full,)

    return Tensor.result(out, (x,), backward, "crop_or_pad")


# -- activations ---------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return Tensor.result(np.where(active, x.data, 0).astype(x.dtype), (x,), lambda g: (g * active,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data).astype(x.dtype)
    return Tensor.result(s, (x,), lambda g: (g * s * (1 - s),), "sigmoid")


def softmax(x: Tensor, axis: int = 1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor.result(s, (x,), backward, "softmax")


def log_softmax_array(x: np.ndarray, axis: int = 1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


# -- convolution -----------------------------------------------------------------

def _pads(padding: Padding) -> Tuple[int, int, int, int]:
    if isinstance(padding, int):
        return padding, padding, padding, padding
    if len(padding) != 4 or min(padding) < 0:
        raise BadConfig(f"padding must be an int or (top, bottom, left, right), got {padding}")
    return tuple(int(p) for p in padding)


def same_padding(size: int, kernel: int, stride: int, dilation: int = 1) -> Tuple[int, int]:
    """Split of the padding that maps ``size`` to ceil(size / stride)."""
    extent = dilation * (kernel - 1) + 1
    out = math.ceil(size / stride)
    total_pad = max((out - 1) * stride + extent - size, 0)
    return total_pad // 2, total_pad - total_pad // 2


def conv_output_size(size: int, kernel: int, stride: int, dilation: int, pad_total: int) -> int:
    return (size + pad_total - dilation * (kernel - 1) - 1) // stride + 1


def _padded(x: np.ndarray, pads) -> np.ndarray:
    top, bottom, left, right = pads
    if not any(pads):
        return x
    return np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))


def _conv_geometry(x_shape, w_shape, stride, dilation, pads, op):
    N, C, H, W = x_shape
    F, Cw, kh, kw = w_shape
    if C != Cw:
        raise ShapeMismatch(f"{op}: input has {C} channels, weight expects {Cw}")
    if stride < 1 or dilation < 1:
        raise BadConfig(f"{op}: stride and dilation must be >= 1")
    top, bottom, left, right = pads
    Ho = conv_output_size(H, kh, stride, dilation, top + bottom)
    Wo = conv_output_size(W, kw, stride, dilation, left + right)
    if Ho < 1 or Wo < 1:
        raise ShapeMismatch(f"{op}: input {H}x{W} is too small for kernel {kh}x{kw} (dilation {dilation})")
    return Ho, Wo


def im2col(xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int, Ho: int, Wo: int) -> np.ndarray:
    """Strided view (N, C, Ho, Wo, kh, kw) of the receptive fields."""
    windows = sliding_window_view(xp, ((kh - 1) * dilation + 1, (kw - 1) * dilation + 1), axis=(2, 3))
    return windows[:, :, ::stride, ::stride, ::dilation, ::dilation][:, :, :Ho, :Wo]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 1,
           dilation: int = 1, padding: Padding = 0) -> Tensor:
    """Cross-correlation of x[N,C,H,W] with weight[F,C,kh,kw]."""
    pads = _pads(padding)
    Ho, Wo = _conv_geometry(x.shape, weight.shape, stride, dilation, pads, "conv2d")
    F, C, kh, kw = weight.shape
    xp = _padded(x.data, pads)
    cols = im2col(xp, kh, kw, stride, dilation, Ho, Wo)
    out = np.tensordot(cols, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, F, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g):
        dw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                r, c = i * dilation, j * dilation
                dxp[:, :, r:r + stride * (Ho - 1) + 1:stride, c:c + stride * (Wo - 1) + 1:stride] += contrib
        top, _, left, _ = pads
        dx = dxp[:, :, top:top + x.shape[2], left:left + x.shape[3]]
        grads = [dx, dw.astype(weight.dtype)]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.result(out, parents, backward, "conv2d")


def conv2d_direct(x: np.ndarray, weight: np.ndarray, stride: int = 1, dilation: int = 1,
                  padding: Padding = 0) -> np.ndarray:
    """Loop-per-output-pixel reference for ``conv2d`` (no autodiff)."""
    pads = _pads(padding)
    Ho, Wo = _conv_geometry(x.shape, weight.shape, stride, dilation, pads, "conv2d_direct")
    F, C, kh, kw = weight.shape
    xp = _padded(x, pads)
    out = np.zeros((x.shape[0], F, Ho, Wo), dtype=np.result_type(x, weight))
    for ho in range(Ho):
        for wo in range(Wo):
            for i in range(kh):
                for j in range(kw):
                    patch = xp[:, :, ho * stride + i * dilation, wo * stride + j * dilation]
                    out[:, :, ho, wo] += patch @ weight[:, :, i, j].T
    return out


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor = None, stride: int = 2,
                     padding: int = 0) -> Tensor:
    """Transposed convolution of x[N,C,H,W] with weight[C,F,kh,kw].

    Output size is (H - 1) * stride + kh - 2 * padding.
    """
    N, C, H, W = x.shape
    Cw, F, kh, kw = weight.shape
    if C != Cw:
        raise ShapeMismatch(f"conv_transpose2d: input has {C} channels, weight expects {Cw}")
    full_h, full_w = (H - 1) * stride + kh, (W - 1) * stride + kw
    if full_h - 2 * padding < 1 or full_w - 2 * padding < 1:
        raise ShapeMismatch(f"conv_transpose2d: padding {padding} leaves no output")
    full = np.zeros((N, F, full_h, full_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(x.data, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            full[:, :, i:i + stride * (H - 1) + 1:stride, j:j + stride * (W - 1) + 1:stride] += contrib
    out = full[:, :, padding:full_h - padding, padding:full_w - padding]
    if bias is not None:
        out = out + bias.data.reshape(1, F, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def backward(g):
        g_full = np.zeros((N, F, full_h, full_w), dtype=g.dtype)
        g_full[:, :, padding:full_h - padding, padding:full_w - padding] = g
        dx = np.zeros_like(x.data)
        dw = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                window = g_full[:, :, i:i + stride * (H - 1) + 1:stride, j:j + stride * (W - 1) + 1:stride]
                dx += np.tensordot(window, weight.data[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
                dw[:, :, i, j] = np.tensordot(x.data, window, axes=([0, 2, 3], [0, 2, 3]))
        grads = [dx, dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.result(out, parents, backward, "conv_transpose2d")


# -- normalisation -----------------------------------------------------------------

def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool = True, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalisation over (N, H, W).

    Train mode normalises with batch statistics and updates the running
    buffers in place; eval mode uses the running buffers.
    """
    N, C, H, W = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ShapeMismatch(f"batchnorm: affine params must be ({C},)")
    axes = (0, 2, 3)
    count = N * H * W
    view = (1, C, 1, 1)

    if training:
        if count < 2:
            raise DegenerateBatch(f"batchnorm needs >= 2 values per channel, got {count}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * count / (count - 1)
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)

    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    x_hat = (x.data - mu.reshape(view)) * inv_std.reshape(view)
    out = gamma.data.reshape(view) * x_hat + beta.data.reshape(view)

    def backward(g):
        d_gamma = (g * x_hat).sum(axis=axes)
        d_beta = g.sum(axis=axes)
        d_hat = g * gamma.data.reshape(view)
        if training:
            dx = (inv_std.reshape(view) / count) * (
                count * d_hat
                - d_hat.sum(axis=axes).reshape(view)
                - x_hat * (d_hat * x_hat).sum(axis=axes).reshape(view)
            )
        else:
            dx = d_hat * inv_std.reshape(view)
        return dx, d_gamma, d_beta

    return Tensor.result(out.astype(x.dtype), (x, gamma, beta), backward, "batchnorm")


# -- resampling ------------------------------------------------------------------

def bilinear_matrix(n_in: int, n_out: int, dtype=np.float64) -> np.ndarray:
    """(n_out, n_in) interpolation weights, align_corners=False convention."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, None)
    lo = np.minimum(np.floor(src).astype(np.int64), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    matrix = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(dtype)


def resize_bilinear(x: Tensor, height: int, width: int) -> Tensor:
    N, C, H, W = x.shape
    if height < 1 or width < 1:
        raise ShapeMismatch(f"resize target {height}x{width} is empty")
    rows = bilinear_matrix(H, height, x.dtype)
    cols = bilinear_matrix(W, width, x.dtype)
    out = np.einsum("oh,nchw,pw->ncop", rows, x.data, cols)

    def backward(g):
        return (np.einsum("oh,ncop,pw->nchw", rows, g, cols),)

    return Tensor.result(np.ascontiguousarray(out), (x,), backward, "resize_bilinear")


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    if int(factor) != factor or factor < 1:
        raise ShapeMismatch(f"upsampling factor must be a positive integer, got {factor}")
    return resize_bilinear(x, x.shape[2] * int(factor), x.shape[3] * int(factor))

"""Central-difference gradient checker and the per-op check registry."""
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from src.autodiff import losses, ops
from src.autodiff.tensor import Tensor, no_grad, precision

SEEDS_PER_OP = 20


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5,
               coords: Optional[Sequence[int]] = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must map a tensor to a scalar tensor. Everything runs in float64;
    ``coords`` restricts the comparison to a subset of flat indices.
    """
    with precision(np.float64):
        base = np.array(x.data, dtype=np.float64)
        leaf = Tensor(base.copy(), requires_grad=True)
        f(leaf).backward()
        analytic = np.zeros_like(base) if leaf.grad is None else leaf.grad.reshape(-1)

        indices = range(base.size) if coords is None else coords
        worst = 0.0
        flat = base.reshape(-1)
        with no_grad():
            for index in indices:
                original = flat[index]
                flat[index] = original + h
                plus = f(Tensor(base)).item()
                flat[index] = original - h
                minus = f(Tensor(base)).item()
                flat[index] = original
                numeric = (plus - minus) / (2 * h)
                a = float(analytic[index])
                error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                worst = max(worst, error)
    return worst


def _nudged(rng: np.random.Generator, shape, margin: float = 0.05) -> np.ndarray:
    """Random values kept at least ``margin`` away from zero."""
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin + x, x)


def _weighted(out: Tensor, rng_or_r) -> Tensor:
    r = rng_or_r if isinstance(rng_or_r, np.ndarray) else rng_or_r.standard_normal(out.shape)
    return (out * r).sum()


def _check_inputs(build: Callable[..., Tensor], inputs: Sequence[np.ndarray], rng: np.random.Generator) -> float:
    """Check ``sum(build(*inputs) * R)`` with respect to every input in turn."""
    with precision(np.float64), no_grad():
        shape = build(*[Tensor(v) for v in inputs]).shape
    r = rng.standard_normal(shape)
    worst = 0.0
    for position in range(len(inputs)):
        def f(t, position=position):
            args = [t if i == position else Tensor(v) for i, v in enumerate(inputs)]
            return _weighted(build(*args), r)

        worst = max(worst, grad_check(f, Tensor(inputs[position])))
    return worst


def _small(rng, low=1, high=3):
    return int(rng.integers(low, high + 1))


def check_conv2d(seed: int) -> float:
    rng = np.random.default_rng(seed)
    N, C, F, k = _small(rng, 1, 2), _small(rng), _small(rng), _small(rng, 1, 3)
    stride, dilation, padding = _small(rng, 1, 2), _small(rng, 1, 2), _small(rng, 0, 2)
    size = dilation * (k - 1) + 1 + _small(rng, 1, 4)
    x = rng.standard_normal((N, C, size, size + 1))
    w = rng.standard_normal((F, C, k, k))
    b = rng.standard_normal(F)
    return _check_inputs(lambda x, w, b: ops.conv2d(x, w, b, stride, dilation, padding), [x, w, b], rng)


def check_conv_transpose2d(seed: int) -> float:
    rng = np.random.default_rng(seed)
    N, C, F, k = _small(rng, 1, 2), _small(rng), _small(rng), _small(rng, 2, 4)
    stride, padding = _small(rng, 1, 2), _small(rng, 0, 1)
    x = rng.standard_normal((N, C, _small(rng, 2, 4), _small(rng, 2, 4)))
    w = rng.standard_normal((C, F, k, k))
    b = rng.standard_normal(F)
    return _check_inputs(lambda x, w, b: ops.conv_transpose2d(x, w, b, stride, padding), [x, w, b], rng)


def check_batchnorm(seed: int) -> float:
    rng = np.random.default_rng(seed)
    C = _small(rng)
    x = rng.standard_normal((2, C, _small(rng, 2, 3), _small(rng, 2, 3))) * 2 + 1
    gamma, beta = rng.standard_normal(C), rng.standard_normal(C)

    def build(x, gamma, beta):
        return ops.batchnorm(x, gamma, beta, np.zeros(C), np.ones(C), training=True)

    return _check_inputs(build, [x, gamma, beta], rng)


def check_batchnorm_eval(seed: int) -> float:
    rng = np.random.default_rng(seed)
    C = _small(rng)
    x = rng.standard_normal((2, C, 3, 3))
    mean, var = rng.standard_normal(C), rng.uniform(0.5, 2.0, C)
    gamma, beta = rng.standard_normal(C), rng.standard_normal(C)

    def build(x, gamma, beta):
        return ops.batchnorm(x, gamma, beta, mean.copy(), var.copy(), training=False)

    return _check_inputs(build, [x, gamma, beta], rng)


def check_relu(seed: int) -> float:
    rng = np.random.default_rng(seed)
    return _check_inputs(ops.relu, [_nudged(rng, (2, 3, 4, 4))], rng)


def check_sigmoid(seed: int) -> float:
    rng = np.random.default_rng(seed)
    return _check_inputs(ops.sigmoid, [rng.standard_normal((2, 3, 4, 4)) * 3], rng)


def check_softmax(seed: int) -> float:
    rng = np.random.default_rng(seed)
    return _check_inputs(ops.softmax, [rng.standard_normal((2, 4, 3, 3)) * 2], rng)


def check_resize_bilinear(seed: int) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, _small(rng, 1, 4), _small(rng, 1, 4)))
    height, width = _small(rng, 1, 7), _small(rng, 1, 7)
    return _check_inputs(lambda t: ops.resize_bilinear(t, height, width), [x], rng)


def check_upsample_bilinear(seed: int) -> float:
    rng = np.random.default_rng(seed)
    factor = _small(rng, 1, 3)
    return _check_inputs(lambda t: ops.upsample_bilinear(t, factor), [rng.standard_normal((1, 2, 3, 2))], rng)


def check_concat(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, _small(rng), 3, 3))
    b = rng.standard_normal((2, _small(rng), 3, 3))
    return _check_inputs(lambda a, b: ops.concat([a, b], axis=1), [a, b], rng)


def check_crop_or_pad(seed: int) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((1, 2, _small(rng, 2, 5), _small(rng, 2, 5)))
    height, width = _small(rng, 1, 6), _small(rng, 1, 6)
    return _check_inputs(lambda t: ops.crop_or_pad(t, height, width), [x], rng)


def check_getitem(seed: int) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 6, 3, 3))
    start = _small(rng, 0, 3)
    return _check_inputs(lambda t: t[:, start:start + 2], [x], rng)


def check_arithmetic(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 3, 2, 2)), rng.standard_normal((2, 3, 2, 2))
    return _check_inputs(lambda a, b: (a * b - a * 0.5 + 1.0) / 3.0, [a, b], rng)


def check_cross_entropy(seed: int) -> float:
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((2, 4, 3, 3)) * 2
    labels = rng.integers(0, 4, size=(2, 3, 3))
    return grad_check(lambda t: losses.cross_entropy(t, labels), Tensor(logits))


def check_mse(seed: int) -> float:
    rng = np.random.default_rng(seed)
    target = rng.standard_normal((2, 1, 3, 3))
    return grad_check(lambda t: losses.mse(t, target), Tensor(rng.standard_normal((2, 1, 3, 3))))


def check_conv_mse(seed: int) -> float:
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    target = rng.standard_normal((2, 3, 3, 3))
    return max(
        grad_check(lambda t: losses.mse(ops.conv2d(t, Tensor(w)), target), Tensor(x)),
        grad_check(lambda t: losses.mse(ops.conv2d(Tensor(x), t), target), Tensor(w)),
    )


def check_bn_relu_softmax(seed: int) -> float:
    """Chain check; draws are retried until no relu input sits near its kink."""
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        x = rng.standard_normal((2, 3, 3, 3))
        with precision(np.float64), no_grad():
            z = ops.batchnorm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), np.zeros(3), np.ones(3))
        if np.min(np.abs(z.data)) > 0.05:
            break
    r = rng.standard_normal(x.shape)

    def f(t):
        z = ops.batchnorm(t, Tensor(np.ones(3)), Tensor(np.zeros(3)), np.zeros(3), np.ones(3))
        return _weighted(ops.softmax(ops.relu(z), axis=1), r)

    return grad_check(f, Tensor(x))


GRAD_CHECKS: Dict[str, Callable[[int], float]] = {
    "conv2d": check_conv2d,
    "conv_transpose2d": check_conv_transpose2d,
    "batchnorm": check_batchnorm,
    "batchnorm_eval": check_batchnorm_eval,
    "relu": check_relu,
    "sigmoid": check_sigmoid,
    "softmax": check_softmax,
    "resize_bilinear": check_resize_bilinear,
    "upsample_bilinear": check_upsample_bilinear,
    "concat": check_concat,
    "crop_or_pad": check_crop_or_pad,
    "getitem": check_getitem,
    "arithmetic": check_arithmetic,
    "cross_entropy": check_cross_entropy,
    "mse": check_mse,
    "conv2d+mse": check_conv_mse,
    "batchnorm+relu+softmax": check_bn_relu_softmax,
}


def run_grad_checks(seeds: int = SEEDS_PER_OP) -> Dict[str, float]:
    """Worst error per registered op over ``seeds`` random draws."""
    return {name: max(check(seed) for seed in range(seeds)) for name, check in GRAD_CHECKS.items()}

"""Minimal reverse-mode autodiff on numpy arrays.

Covers exactly the operations the generator/discriminator/losses need:
convolutions (direct and transposed) via im2col + GEMM, pooling,
normalization primitives, pointwise nonlinearities, channel/spatial
reductions, concatenation, and scalar reductions. Everything runs in
float64 so finite-difference checks are meaningful.

Graph recording is skipped for subgraphs that cannot influence any
gradient: wrap inference in ``no_grad()`` or mark frozen parameters with
``requires_grad=False`` and their branches cost nothing at backward time.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "pow_int",
    "abs_",
    "rsqrt",
    "relu",
    "leaky_relu",
    "sigmoid",
    "tanh",
    "reshape",
    "concat",
    "linear",
    "conv2d",
    "conv2d_transpose",
    "avg_pool2d",
    "spatial_mean",
    "spatial_max",
    "channel_mean",
    "channel_max",
    "mean_all",
    "sum_all",
    "moments_per_channel",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An array node in the computation graph."""

    __slots__ = ("value", "grad", "requires_grad", "_edges")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        # edges: (parent, fn) where fn maps d(out) -> d(parent) contribution
        self._edges: tuple[tuple["Tensor", Callable[[np.ndarray], np.ndarray]], ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if self.value.size != 1:
                raise ValueError("backward() without seed requires a scalar output")
            seed = np.ones_like(self.value)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._edges:
                if id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._edges:
                node.grad = g if node.grad is None else node.grad + g
            for parent, fn in node._edges:
                contribution = fn(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contribution
                else:
                    grads[key] = contribution


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(value: np.ndarray, edges: Iterable[tuple[Tensor, Callable]]) -> Tensor:
    out = Tensor(value)
    if _GRAD_ENABLED:
        kept = tuple((p, fn) for p, fn in edges if p.requires_grad or p._edges)
        if kept:
            out._edges = kept
            out.requires_grad = True
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    return _make(
        a.value + b.value,
        [
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ],
    )


def neg(a) -> Tensor:
    a = _wrap(a)
    return _make(-a.value, [(a, lambda g: -g)])


def sub(a, b) -> Tensor:
    return add(a, neg(b))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value
    return _make(
        av * bv,
        [
            (a, lambda g: _unbroadcast(g * bv, av.shape)),
            (b, lambda g: _unbroadcast(g * av, bv.shape)),
        ],
    )


def div(a, scalar: float) -> Tensor:
    if scalar == 0:
        raise ZeroDivisionError("division by zero")
    return mul(a, 1.0 / scalar)


def pow_int(a, exponent: int) -> Tensor:
    a = _wrap(a)
    if exponent < 1:
        raise ValueError("pow_int needs a positive integer exponent")
    av = a.value
    return _make(av**exponent, [(a, lambda g: g * exponent * av ** (exponent - 1))])


def abs_(a) -> Tensor:
    a = _wrap(a)
    sign = np.sign(a.value)
    return _make(np.abs(a.value), [(a, lambda g: g * sign)])


def rsqrt(a, eps: float = 0.0) -> Tensor:
    """1 / sqrt(a + eps); ``a + eps`` must be strictly positive."""
    a = _wrap(a)
    base = a.value + eps
    if base.min() <= 0:
        raise ValueError("rsqrt argument must be positive after adding eps")
    r = 1.0 / np.sqrt(base)
    return _make(r, [(a, lambda g: g * (-0.5) * r / base)])


def relu(a) -> Tensor:
    a = _wrap(a)
    gate = a.value > 0
    return _make(a.value * gate, [(a, lambda g: g * gate)])


def leaky_relu(a, negative_slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    scale = np.where(a.value > 0, 1.0, negative_slope)
    return _make(a.value * scale, [(a, lambda g: g * scale)])


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    s = 1.0 / (1.0 + np.exp(-a.value))
    return _make(s, [(a, lambda g: g * s * (1.0 - s))])


def tanh(a) -> Tensor:
    a = _wrap(a)
    t = np.tanh(a.value)
    return _make(t, [(a, lambda g: g * (1.0 - t * t))])


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _wrap(a)
    old = a.value.shape
    return _make(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def make_slice(i: int):
        def fn(g: np.ndarray) -> np.ndarray:
            index = [slice(None)] * g.ndim
            index[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            return g[tuple(index)]

        return fn

    value = np.concatenate([p.value for p in parts], axis=axis)
    return _make(value, [(p, make_slice(i)) for i, p in enumerate(parts)])


def linear(x, weight, bias=None) -> Tensor:
    """(N, C_in) @ weight.T -> (N, C_out); weight is (C_out, C_in)."""
    x, weight = _wrap(x), _wrap(weight)
    xv, wv = x.value, weight.value
    edges = [
        (x, lambda g: g @ wv),
        (weight, lambda g: g.T @ xv),
    ]
    value = xv @ wv.T
    if bias is not None:
        bias = _wrap(bias)
        value = value + bias.value
        edges.append((bias, lambda g: g.sum(axis=0)))
    return _make(value, edges)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    n, c = x.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(
    cols: np.ndarray, padded_shape: tuple[int, ...], kh: int, kw: int, stride: int, oh: int, ow: int
) -> np.ndarray:
    n, c = padded_shape[:2]
    out = np.zeros(padded_shape, dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[
                :, :, i, j
            ]
    return out


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _unpad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return x[:, :, pad:-pad, pad:-pad]


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """NCHW convolution (cross-correlation); weight is (C_out, C_in, kh, kw)."""
    x, weight = _wrap(x), _wrap(weight)
    xv, wv = x.value, weight.value
    n, cin, h, w = xv.shape
    cout, cin_w, kh, kw = wv.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels, weight expects {cin_w}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError("kernel does not fit the padded input")
    padded = _pad_hw(xv, padding)
    cols = _im2col(padded, kh, kw, stride, oh, ow)
    w2 = wv.reshape(cout, cin * kh * kw)
    # batched GEMMs keep these on the BLAS path
    out = np.matmul(w2, cols).reshape(n, cout, oh, ow)

    def grad_x(g: np.ndarray) -> np.ndarray:
        g2 = g.reshape(n, cout, oh * ow)
        gcols = np.matmul(w2.T, g2)
        return _unpad_hw(_col2im(gcols, padded.shape, kh, kw, stride, oh, ow), padding)

    def grad_w(g: np.ndarray) -> np.ndarray:
        g2 = g.reshape(n, cout, oh * ow)
        return np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(wv.shape)

    edges = [(x, grad_x), (weight, grad_w)]
    if bias is not None:
        bias = _wrap(bias)
        out = out + bias.value.reshape(1, cout, 1, 1)
        edges.append((bias, lambda g: g.sum(axis=(0, 2, 3))))
    return _make(out, edges)


def conv2d_transpose(
    x, weight, bias=None, stride: int = 2, padding: int = 0, output_shape: tuple[int, int] | None = None
) -> Tensor:
    """Transposed NCHW convolution; weight is (C_in, C_out, kh, kw).

    ``output_shape`` pins (H_out, W_out); it must be consistent with the
    stride/padding in the sense that a forward convolution with the same
    settings would map it back to the input shape.
    """
    x, weight = _wrap(x), _wrap(weight)
    xv, wv = x.value, weight.value
    n, cin, h, w = xv.shape
    cin_w, cout, kh, kw = wv.shape
    if cin != cin_w:
        raise ValueError(f"input has {cin} channels, weight expects {cin_w}")
    if output_shape is None:
        output_shape = ((h - 1) * stride - 2 * padding + kh, (w - 1) * stride - 2 * padding + kw)
    oh_out, ow_out = output_shape
    for out_n, in_n, k in ((oh_out, h, kh), (ow_out, w, kw)):
        span = out_n + 2 * padding - k
        if span < 0 or span // stride + 1 != in_n:
            raise ValueError(f"output_shape {output_shape} inconsistent with input {(h, w)}")
    padded_shape = (n, cout, oh_out + 2 * padding, ow_out + 2 * padding)
    w2 = wv.reshape(cin, cout * kh * kw)
    x2 = xv.reshape(n, cin, h * w)
    cols = np.matmul(w2.T, x2)
    out = _unpad_hw(_col2im(cols, padded_shape, kh, kw, stride, h, w), padding)

    def grad_x(g: np.ndarray) -> np.ndarray:
        gcols = _im2col(_pad_hw(g, padding), kh, kw, stride, h, w)
        return np.matmul(w2, gcols).reshape(xv.shape)

    def grad_w(g: np.ndarray) -> np.ndarray:
        gcols = _im2col(_pad_hw(g, padding), kh, kw, stride, h, w)
        return np.matmul(x2, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(wv.shape)

    edges = [(x, grad_x), (weight, grad_w)]
    if bias is not None:
        bias = _wrap(bias)
        out = out + bias.value.reshape(1, cout, 1, 1)
        edges.append((bias, lambda g: g.sum(axis=(0, 2, 3))))
    return _make(out, edges)


def avg_pool2d(x, k: int = 2) -> Tensor:
    x = _wrap(x)
    n, c, h, w = x.value.shape
    if h % k or w % k:
        raise ValueError(f"spatial size {(h, w)} not divisible by pool size {k}")
    v = x.value.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def grad_x(g: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)

    return _make(v, [(x, grad_x)])


def spatial_mean(x) -> Tensor:
    """(N, C, H, W) -> (N, C) mean over the spatial axes."""
    x = _wrap(x)
    n, c, h, w = x.value.shape
    v = x.value.mean(axis=(2, 3))

    def grad_x(g: np.ndarray) -> np.ndarray:
        return np.broadcast_to(g[:, :, None, None], (n, c, h, w)) / (h * w)

    return _make(v, [(x, grad_x)])


def spatial_max(x) -> Tensor:
    """(N, C, H, W) -> (N, C) max over the spatial axes (grad to first argmax)."""
    x = _wrap(x)
    n, c, h, w = x.value.shape
    flat = x.value.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)
    v = np.take_along_axis(flat, idx[:, :, None], axis=2)[:, :, 0]

    def grad_x(g: np.ndarray) -> np.ndarray:
        out = np.zeros((n, c, h * w))
        np.put_along_axis(out, idx[:, :, None], g[:, :, None], axis=2)
        return out.reshape(n, c, h, w)

    return _make(v, [(x, grad_x)])


def channel_mean(x) -> Tensor:
    """(N, C, H, W) -> (N, 1, H, W) mean over channels."""
    x = _wrap(x)
    c = x.value.shape[1]
    v = x.value.mean(axis=1, keepdims=True)

    def grad_x(g: np.ndarray) -> np.ndarray:
        return np.broadcast_to(g, x.value.shape) / c

    return _make(v, [(x, grad_x)])


def channel_max(x) -> Tensor:
    """(N, C, H, W) -> (N, 1, H, W) max over channels (grad to first argmax)."""
    x = _wrap(x)
    idx = x.value.argmax(axis=1)[:, None]
    v = np.take_along_axis(x.value, idx, axis=1)

    def grad_x(g: np.ndarray) -> np.ndarray:
        out = np.zeros(x.value.shape)
        np.put_along_axis(out, idx, g, axis=1)
        return out

    return _make(v, [(x, grad_x)])


def mean_all(x) -> Tensor:
    x = _wrap(x)
    size = x.value.size
    v = np.asarray(x.value.mean())
    return _make(v, [(x, lambda g: np.broadcast_to(g, x.value.shape) / size)])


def sum_all(x) -> Tensor:
    x = _wrap(x)
    v = np.asarray(x.value.sum())
    return _make(v, [(x, lambda g: np.broadcast_to(g, x.value.shape).copy())])


def moments_per_channel(x) -> tuple[Tensor, Tensor]:
    """Per-channel mean and biased variance over (N, H, W), as (1, C, 1, 1).

    Built from primitive ops so gradients flow through both moments; this
    is the training-mode half of batch normalization.
    """
    x = _wrap(x)
    n, c, h, w = x.value.shape
    count = n * h * w

    mean_v = x.value.mean(axis=(0, 2, 3), keepdims=True)
    mean = _make(
        mean_v, [(x, lambda g: np.broadcast_to(g, x.value.shape) / count)]
    )
    centered = sub(x, mean)
    var = _make(
        (centered.value**2).mean(axis=(0, 2, 3), keepdims=True),
        [(centered, lambda g: np.broadcast_to(g, x.value.shape) * 2.0 * centered.value / count)],
    )
    return mean, var

"""Layer math: forward and backward passes over batched numpy arrays.

Arrays carry a leading batch axis everywhere: feature maps are
(N, C, H, W), flat activations (N, D). Each forward returns (output, cache)
and the matching backward consumes that cache; weighted layers also return
parameter gradients. Convolutions use valid padding only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidRate, ShapeMismatch


# -- layer descriptions --------------------------------------------------

@dataclass(frozen=True)
class MaxPool2d:
    kind = "maxpool2d"
    pool: int = 2


@dataclass(frozen=True)
class Conv2d:
    kind = "conv2d"
    filters: int
    kernel: int
    stride: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.filters < 1 or self.kernel < 1:
            raise ValueError("conv2d needs filters >= 1 and kernel >= 1")
        if min(self.stride) < 1:
            raise ValueError("conv2d stride components must be >= 1")


@dataclass(frozen=True)
class Relu:
    kind = "relu"


@dataclass(frozen=True)
class Dropout:
    kind = "dropout"
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise InvalidRate(f"dropout rate {self.rate} outside [0, 1)")


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"


@dataclass(frozen=True)
class Dense:
    kind = "dense"
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("dense needs units >= 1")


@dataclass(frozen=True)
class Softmax:
    kind = "softmax"


LayerSpec = MaxPool2d | Conv2d | Relu | Dropout | Flatten | Dense | Softmax


# -- conv2d ---------------------------------------------------------------

def conv_output_hw(h: int, w: int, kernel: int, stride: tuple[int, int]) -> tuple[int, int]:
    if h < kernel or w < kernel:
        raise ShapeMismatch(f"input {h}x{w} smaller than {kernel}x{kernel} kernel")
    return (h - kernel) // stride[0] + 1, (w - kernel) // stride[1] + 1


def _im2col(x, k, stride):
    """Patches as a (N*H'*W', C*K*K) contiguous matrix for one GEMM."""
    sh, sw = stride
    windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::sh, ::sw]
    n, c, oh, ow = windows.shape[:4]
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * oh * ow, c * k * k), oh, ow


def conv2d_forward(x, weights, bias, stride=(1, 1)):
    """out[n,f,i,j] = b[f] + sum_cuv x[n,c,i*sh+u,j*sw+v] * w[f,c,u,v].

    Implemented as im2col + GEMM; the column matrix is kept in the cache so
    backward reuses it for the weight gradient.
    """
    if x.ndim != 4 or weights.ndim != 4:
        raise ShapeMismatch("conv2d expects (N,C,H,W) input and (F,C,K,K) weights")
    n, c, h, w = x.shape
    f, wc, k, k2 = weights.shape
    if wc != c or k != k2:
        raise ShapeMismatch(f"weights {weights.shape} incompatible with input channels {c}")
    conv_output_hw(h, w, k, stride)
    cols, oh, ow = _im2col(x, k, stride)
    out2d = cols @ weights.reshape(f, -1).T
    out2d += bias
    out = np.ascontiguousarray(out2d.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))
    return out, (cols, x.shape, x.dtype, weights, stride)


def conv2d_backward(d_out, cache, need_input_grad=True):
    """Returns (d_x, d_weights, d_bias); d_x is None when not requested."""
    cols, x_shape, x_dtype, weights, stride = cache
    sh, sw = stride
    f, c, k, _ = weights.shape
    n, _, oh, ow = d_out.shape

    d_out2d = np.ascontiguousarray(d_out.transpose(0, 2, 3, 1)).reshape(-1, f)
    d_bias = d_out2d.sum(axis=0)
    d_weights = (d_out2d.T @ cols).reshape(f, c, k, k)

    if not need_input_grad:
        return None, d_weights, d_bias
    if stride == (1, 1):
        # unit stride: d_x is the full correlation of d_out with the
        # 180-degree-rotated kernels, so it is one more im2col GEMM
        padded = np.zeros((n, f, oh + 2 * k - 2, ow + 2 * k - 2), dtype=d_out.dtype)
        padded[:, :, k - 1 : k - 1 + oh, k - 1 : k - 1 + ow] = d_out
        pad_cols, ph, pw = _im2col(padded, k, (1, 1))
        rotated = weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (C,F,K,K)
        d_x2d = pad_cols @ rotated.reshape(c, -1).T
        # ph = oh + k - 1 = input height exactly (unit stride, valid padding)
        d_x = np.ascontiguousarray(d_x2d.reshape(n, ph, pw, c).transpose(0, 3, 1, 2))
        return d_x.astype(x_dtype, copy=False), d_weights, d_bias

    d_cols = (d_out2d @ weights.reshape(f, -1)).reshape(n, oh, ow, c, k, k)
    d_x = np.zeros(x_shape, dtype=x_dtype)
    for u in range(k):
        for v in range(k):
            # out[n,f,i,j] touched x[n,c,i*sh+u,j*sw+v]
            d_x[:, :, u : u + sh * oh : sh, v : v + sw * ow : sw] += d_cols[
                :, :, :, :, u, v
            ].transpose(0, 3, 1, 2)
    return d_x, d_weights, d_bias


# -- maxpool2d ------------------------------------------------------------

def maxpool2d_forward(x, pool=2):
    """Non-overlapping pool x pool max; odd trailing rows/columns dropped."""
    if x.ndim != 4:
        raise ShapeMismatch("maxpool2d expects (N,C,H,W)")
    n, c, h, w = x.shape
    if h < pool or w < pool:
        raise ShapeMismatch(f"input {h}x{w} smaller than {pool}x{pool} pool")
    oh, ow = h // pool, w // pool
    trimmed = x[:, :, : oh * pool, : ow * pool]
    windows = (
        trimmed.reshape(n, c, oh, pool, ow, pool)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh, ow, pool * pool)
    )
    # argmax returns the first maximum in row-major window order, which
    # fixes the gradient tie-break deterministically
    idx = windows.argmax(axis=4)
    out = np.take_along_axis(windows, idx[..., None], axis=4)[..., 0]
    return out, (x.shape, pool, idx)


def maxpool2d_backward(d_out, cache):
    in_shape, pool, idx = cache
    n, c, h, w = in_shape
    oh, ow = h // pool, w // pool
    d_windows = np.zeros((n, c, oh, ow, pool * pool), dtype=d_out.dtype)
    np.put_along_axis(d_windows, idx[..., None], d_out[..., None], axis=4)
    d_trim = (
        d_windows.reshape(n, c, oh, ow, pool, pool)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, oh * pool, ow * pool)
    )
    if (h, w) == (oh * pool, ow * pool):
        return d_trim
    d_x = np.zeros((n, c, h, w), dtype=d_out.dtype)
    d_x[:, :, : oh * pool, : ow * pool] = d_trim
    return d_x


# -- dense ----------------------------------------------------------------

def dense_forward(x, weights, bias):
    """out = x @ W.T + b with W of shape (units, inputs)."""
    if x.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ShapeMismatch(f"dense input {x.shape} incompatible with weights {weights.shape}")
    return x @ weights.T + bias, (x, weights)


def dense_backward(d_out, cache):
    x, weights = cache
    return d_out @ weights, d_out.T @ x, d_out.sum(axis=0)


# -- elementwise ----------------------------------------------------------

def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(d_out, mask):
    # gradient at exactly 0 is defined as 0
    return d_out * mask


def dropout_forward(x, rate, train, rng=None):
    """Inverted dropout: survivors scaled by 1/(1-rate); identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"dropout rate {rate} outside [0, 1)")
    if not train or rate == 0.0:
        return x, None
    if rng is None:
        rng = np.random.default_rng()
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    keep = keep.astype(x.dtype)
    return x * keep, keep


def dropout_backward(d_out, keep):
    return d_out if keep is None else d_out * keep


def flatten_forward(x):
    return x.reshape(x.shape[0], -1), x.shape


def flatten_backward(d_out, shape):
    return d_out.reshape(shape)


def softmax(logits):
    """Row-wise softmax, shift-invariant and strictly positive."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)

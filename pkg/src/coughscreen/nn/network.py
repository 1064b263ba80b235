"""Running a layer stack: shape propagation, init, forward, backward.

The stack must end with a Softmax head; forward() returns the pre-softmax
logits and the loss/predict code applies the head. Parameters live in a
plain dict keyed "layerNN.weights"/"layerNN.bias" in declaration order,
which is also the serialization order.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    Relu,
    Softmax,
    conv_output_hw,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    flatten_backward,
    flatten_forward,
    maxpool2d_backward,
    maxpool2d_forward,
    relu_backward,
    relu_forward,
)


def propagate_shapes(input_shape, layers):
    """Per-layer output shapes (sans batch axis); raises ShapeMismatch with
    the offending layer's index."""
    shape = tuple(input_shape)
    shapes = []
    for i, layer in enumerate(layers):
        try:
            if isinstance(layer, MaxPool2d):
                c, h, w = shape
                if h < layer.pool or w < layer.pool:
                    raise ShapeMismatch(f"{h}x{w} too small for {layer.pool}x{layer.pool} pool")
                shape = (c, h // layer.pool, w // layer.pool)
            elif isinstance(layer, Conv2d):
                c, h, w = shape
                oh, ow = conv_output_hw(h, w, layer.kernel, layer.stride)
                shape = (layer.filters, oh, ow)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ShapeMismatch("dense needs flattened input")
                shape = (layer.units,)
            elif isinstance(layer, (Relu, Dropout, Softmax)):
                pass
            else:
                raise ShapeMismatch(f"unknown layer kind {layer!r}")
        except ShapeMismatch as exc:
            raise ShapeMismatch(f"layer {i} ({layer.kind}): {exc}") from None
        shapes.append(shape)
    return shapes


def param_shapes(input_shape, layers):
    """Ordered dict of parameter name -> shape, in declaration order.

    This ordering is the canonical one for serialization.
    """
    shapes = propagate_shapes(input_shape, layers)
    out: dict[str, tuple[int, ...]] = {}
    for i, layer in enumerate(layers):
        in_shape = tuple(input_shape) if i == 0 else shapes[i - 1]
        if isinstance(layer, Conv2d):
            out[f"layer{i:02d}.weights"] = (layer.filters, in_shape[0], layer.kernel, layer.kernel)
            out[f"layer{i:02d}.bias"] = (layer.filters,)
        elif isinstance(layer, Dense):
            out[f"layer{i:02d}.weights"] = (layer.units, in_shape[0])
            out[f"layer{i:02d}.bias"] = (layer.units,)
    return out


def init_params(input_shape, layers, seed, dtype=np.float32):
    """He-uniform weights (bound sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(input_shape, layers).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def _check_head(layers):
    if not layers or not isinstance(layers[-1], Softmax):
        raise ShapeMismatch("layer stack must end with a softmax head")


def forward(layers, params, x, train=False, dropout_seed=None, want_cache=False):
    """Run the stack on a batch, returning (logits, cache).

    x is (N, C, H, W). Dropout draws from a generator seeded per layer as
    (*dropout_seed, layer_index) so training batches are reproducible;
    dropout_seed=None draws fresh entropy. Inference mode is deterministic
    and never touches an RNG. cache is None unless want_cache.
    """
    _check_head(layers)
    if dropout_seed is not None and np.ndim(dropout_seed) == 0:
        dropout_seed = (int(dropout_seed),)
    caches = [] if want_cache else None
    out = x
    for i, layer in enumerate(layers[:-1]):
        try:
            if isinstance(layer, Conv2d):
                out, cache = conv2d_forward(
                    out, params[f"layer{i:02d}.weights"], params[f"layer{i:02d}.bias"], layer.stride
                )
            elif isinstance(layer, MaxPool2d):
                out, cache = maxpool2d_forward(out, layer.pool)
            elif isinstance(layer, Relu):
                out, cache = relu_forward(out)
            elif isinstance(layer, Dropout):
                rng = None
                if train and dropout_seed is not None:
                    rng = np.random.default_rng((*dropout_seed, i))
                out, cache = dropout_forward(out, layer.rate, train, rng)
            elif isinstance(layer, Flatten):
                out, cache = flatten_forward(out)
            elif isinstance(layer, Dense):
                out, cache = dense_forward(
                    out, params[f"layer{i:02d}.weights"], params[f"layer{i:02d}.bias"]
                )
            else:
                raise ShapeMismatch(f"unknown layer kind {layer!r}")
        except ShapeMismatch as exc:
            raise ShapeMismatch(f"layer {i} ({layer.kind}): {exc}") from None
        if want_cache:
            caches.append(cache)
    return out, caches


def backward(layers, params, caches, d_logits):
    """Gradients for every parameter, given d(logits) from the loss.

    Propagation stops at the earliest parameterized layer; nothing upstream
    of it needs an input gradient.
    """
    _check_head(layers)
    first_weighted = min(
        (i for i, l in enumerate(layers) if isinstance(l, (Conv2d, Dense))),
        default=0,
    )
    grads: dict[str, np.ndarray] = {}
    d_out = d_logits
    for i in range(len(layers) - 2, first_weighted - 1, -1):
        layer, cache = layers[i], caches[i]
        if isinstance(layer, Conv2d):
            d_out, d_w, d_b = conv2d_backward(d_out, cache, need_input_grad=i > first_weighted)
            grads[f"layer{i:02d}.weights"] = d_w
            grads[f"layer{i:02d}.bias"] = d_b
        elif isinstance(layer, MaxPool2d):
            d_out = maxpool2d_backward(d_out, cache)
        elif isinstance(layer, Relu):
            d_out = relu_backward(d_out, cache)
        elif isinstance(layer, Dropout):
            d_out = dropout_backward(d_out, cache)
        elif isinstance(layer, Flatten):
            d_out = flatten_backward(d_out, cache)
        elif isinstance(layer, Dense):
            d_out, d_w, d_b = dense_backward(d_out, cache)
            grads[f"layer{i:02d}.weights"] = d_w
            grads[f"layer{i:02d}.bias"] = d_b
    return grads

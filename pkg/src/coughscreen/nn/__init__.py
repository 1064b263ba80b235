from .adam import Adam
from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    LayerSpec,
    MaxPool2d,
    Relu,
    Softmax,
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
    softmax,
)
from .loss import softmax_cross_entropy
from .network import backward, forward, init_params, propagate_shapes

__all__ = [
    "Adam",
    "Conv2d",
    "Dense",
    "Dropout",
    "Flatten",
    "LayerSpec",
    "MaxPool2d",
    "Relu",
    "Softmax",
    "softmax",
    "softmax_cross_entropy",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2d_forward",
    "maxpool2d_backward",
    "dense_forward",
    "dense_backward",
    "relu_forward",
    "relu_backward",
    "dropout_forward",
    "dropout_backward",
    "flatten_forward",
    "flatten_backward",
    "forward",
    "backward",
    "init_params",
    "propagate_shapes",
]

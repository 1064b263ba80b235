"""The two classifier architectures, prediction, and the model file format.

Both nets share the template: an input-reducing 2x2 max-pool, then
conv blocks of two 5x5 convolutions + pool + light dropout, then two
128-unit dense layers with heavier dropout, then a softmax head. Detection
uses one conv block and 2 classes; diagnosis adds a second block and a
3-class head.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CorruptModelFile, InputTooSmall, ShapeMismatch, VersionMismatch
from .features import SpectrogramImage
from .nn import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    Relu,
    Softmax,
    forward,
    init_params,
    propagate_shapes,
    softmax,
)
from .nn.network import param_shapes

DETECTION_CLASSES = ("no_cough", "cough")
DIAGNOSIS_CLASSES = ("bronchiolitis", "bronchitis", "pertussis")

_MAGIC = b"CGHM"
_FILE_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    name: str
    input_shape: tuple[int, int, int]  # (channels, height, width)
    layers: tuple
    class_names: tuple[str, ...]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def output_shapes(self):
        return propagate_shapes(self.input_shape, self.layers)

    def flatten_size(self) -> int:
        shapes = self.output_shapes()
        for layer, shape in zip(self.layers, shapes):
            if isinstance(layer, Flatten):
                return shape[0]
        raise ShapeMismatch("spec has no flatten layer")


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, np.ndarray]
    seed: int = 0
    epochs_trained: int = 0
    best_val_loss: float | None = None

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


@dataclass(frozen=True)
class ClassProbs:
    probs: np.ndarray
    label_names: tuple[str, ...]

    def as_dict(self) -> dict[str, float]:
        return {name: float(p) for name, p in zip(self.label_names, self.probs)}


def _conv_block(filters: int, dropout: float):
    return [
        Conv2d(filters=filters, kernel=5, stride=(1, 1)),
        Relu(),
        Conv2d(filters=filters, kernel=5, stride=(1, 1)),
        Relu(),
        MaxPool2d(pool=2),
        Dropout(rate=dropout),
    ]


def _dense_head(units: int, n_classes: int):
    return [
        Flatten(),
        Dense(units=units),
        Relu(),
        Dropout(rate=0.5),
        Dense(units=units),
        Relu(),
        Dropout(rate=0.5),
        Dense(units=n_classes),
        Softmax(),
    ]


def build_detection_spec(
    input_shape=(1, 288, 432),
    filters: int = 32,
    dense_units: int = 128,
    class_names=DETECTION_CLASSES,
) -> ModelSpec:
    """Binary cough/no-cough net: pool, one conv block, dense head."""
    c, h, w = input_shape
    if c != 1 or h < 24 or w < 24:
        raise InputTooSmall(f"detection input must be (1, H>=24, W>=24), got {input_shape}")
    layers = [MaxPool2d(pool=2), *_conv_block(filters, 0.2), *_dense_head(dense_units, len(class_names))]
    return ModelSpec("detection", tuple(input_shape), tuple(layers), tuple(class_names))


def build_diagnosis_spec(
    input_shape=(1, 288, 432),
    filters: int = 32,
    dense_units: int = 128,
    class_names=DIAGNOSIS_CLASSES,
) -> ModelSpec:
    """Three-way illness net: like detection with a second conv block."""
    c, h, w = input_shape
    if c != 1 or h < 44 or w < 44:
        raise InputTooSmall(f"diagnosis input must be (1, H>=44, W>=44), got {input_shape}")
    layers = [
        MaxPool2d(pool=2),
        *_conv_block(filters, 0.2),
        *_conv_block(filters, 0.2),
        *_dense_head(dense_units, len(class_names)),
    ]
    return ModelSpec("diagnosis", tuple(input_shape), tuple(layers), tuple(class_names))


def init_model(spec: ModelSpec, seed: int = 0, dtype=np.float32) -> Model:
    return Model(spec, init_params(spec.input_shape, spec.layers, seed, dtype), seed=seed)


def param_count(spec: ModelSpec) -> int:
    """Analytic count: conv F*C*K^2+F, dense M*N+M, summed over the stack."""
    total = 0
    shape = spec.input_shape
    for layer, out_shape in zip(spec.layers, propagate_shapes(spec.input_shape, spec.layers)):
        if isinstance(layer, Conv2d):
            total += layer.filters * shape[0] * layer.kernel**2 + layer.filters
        elif isinstance(layer, Dense):
            total += layer.units * shape[0] + layer.units
        shape = out_shape
    return total


def _image_batch(image) -> np.ndarray:
    if isinstance(image, SpectrogramImage):
        image = image.pixels
    image = np.asarray(image)
    if image.ndim == 2:
        return image[None, None]
    raise ShapeMismatch(f"expected a 2-D image, got shape {image.shape}")


def predict(model: Model, image) -> tuple[ClassProbs, str]:
    """Inference-mode class probabilities and the argmax label.

    Ties break toward the lowest class index (numpy argmax order).
    """
    x = _image_batch(image)
    c, h, w = model.spec.input_shape
    if x.shape[2:] != (h, w):
        raise ShapeMismatch(f"image {x.shape[2:]} does not match model input {(h, w)}")
    logits, _ = forward(model.spec.layers, model.params, x, train=False)
    probs = softmax(logits.astype(np.float64))[0]
    label_idx = int(np.argmax(probs))
    return ClassProbs(probs, model.spec.class_names), model.spec.class_names[label_idx]


# -- persistence ----------------------------------------------------------
#
# Layout (all integers little-endian):
#   magic "CGHM" | u16 version | u32 header_len | header UTF-8 JSON
#   per parameter tensor, in declaration order:
#     u8 ndim | u32 * ndim dims | float32 data
#   u32 CRC-32 of everything prior

_LAYER_CODECS = {
    "maxpool2d": (lambda l: {"pool": l.pool}, lambda d: MaxPool2d(pool=d["pool"])),
    "conv2d": (
        lambda l: {"filters": l.filters, "kernel": l.kernel, "stride": list(l.stride)},
        lambda d: Conv2d(filters=d["filters"], kernel=d["kernel"], stride=tuple(d["stride"])),
    ),
    "relu": (lambda l: {}, lambda d: Relu()),
    "dropout": (lambda l: {"rate": l.rate}, lambda d: Dropout(rate=d["rate"])),
    "flatten": (lambda l: {}, lambda d: Flatten()),
    "dense": (lambda l: {"units": l.units}, lambda d: Dense(units=d["units"])),
    "softmax": (lambda l: {}, lambda d: Softmax()),
}


def _spec_to_header(model: Model) -> bytes:
    layers = []
    for layer in model.spec.layers:
        enc, _ = _LAYER_CODECS[layer.kind]
        layers.append({"kind": layer.kind, **enc(layer)})
    header = {
        "name": model.spec.name,
        "input": list(model.spec.input_shape),
        "layers": layers,
        "classes": list(model.spec.class_names),
        "seed": model.seed,
        "epochs_trained": model.epochs_trained,
        "best_val_loss": model.best_val_loss,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _spec_from_header(header: dict) -> ModelSpec:
    layers = []
    for entry in header["layers"]:
        kind = entry.get("kind")
        if kind not in _LAYER_CODECS:
            raise CorruptModelFile(f"unknown layer kind {kind!r} in model header")
        _, dec = _LAYER_CODECS[kind]
        layers.append(dec(entry))
    return ModelSpec(
        header["name"], tuple(header["input"]), tuple(layers), tuple(header["classes"])
    )


def save_model(model: Model, path) -> None:
    """Canonical binary serialization; identical models produce identical bytes."""
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<H", _FILE_VERSION)
    header = _spec_to_header(model)
    blob += struct.pack("<I", len(header))
    blob += header
    order = param_shapes(model.spec.input_shape, model.spec.layers)
    for name in order:
        tensor = np.ascontiguousarray(model.params[name], dtype="<f4")
        blob += struct.pack("<B", tensor.ndim)
        blob += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        blob += tensor.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as f:
        f.write(bytes(blob))


def load_model(path) -> Model:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 14 or blob[:4] != _MAGIC:
        raise CorruptModelFile(f"{path}: bad magic")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CorruptModelFile(f"{path}: checksum mismatch")
    version = struct.unpack("<H", blob[4:6])[0]
    if version != _FILE_VERSION:
        raise VersionMismatch(f"{path}: file version {version}, expected {_FILE_VERSION}")

    offset = 6
    (header_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    try:
        header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelFile(f"{path}: unreadable header ({exc})") from None
    offset += header_len

    spec = _spec_from_header(header)
    expected = param_shapes(spec.input_shape, spec.layers)
    params: dict[str, np.ndarray] = {}
    try:
        for name, want_shape in expected.items():
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            if shape != want_shape:
                raise CorruptModelFile(
                    f"{path}: tensor {name} has shape {shape}, spec wants {want_shape}"
                )
            count = int(np.prod(shape)) if ndim else 1
            if offset + 4 * count > len(blob) - 4:
                raise CorruptModelFile(f"{path}: truncated tensor data for {name}")
            tensor = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            if not np.all(np.isfinite(tensor)):
                raise CorruptModelFile(f"{path}: non-finite values in tensor {name}")
            params[name] = tensor.reshape(shape).copy()
    except struct.error:
        raise CorruptModelFile(f"{path}: truncated tensor data") from None
    if offset != len(blob) - 4:
        raise CorruptModelFile(f"{path}: trailing bytes after tensors")

    return Model(
        spec,
        params,
        seed=header.get("seed", 0),
        epochs_trained=header.get("epochs_trained", 0),
        best_val_loss=header.get("best_val_loss"),
    )

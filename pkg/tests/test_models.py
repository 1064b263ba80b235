import numpy as np
import pytest

from coughscreen import (
    DESK_PROFILE,
    build_detection_spec,
    build_diagnosis_spec,
    init_model,
    load_model,
    param_count,
    predict,
    save_model,
)
from coughscreen.errors import CorruptModelFile, InputTooSmall, ShapeMismatch, VersionMismatch
from coughscreen.features import SpectrogramImage
from coughscreen.nn import Conv2d, Dense


def test_detection_spec_shapes():
    spec = build_detection_spec((1, 288, 432))
    assert spec.flatten_size() == 68 * 104 * 32 == 226_304
    assert spec.output_shapes()[-1] == (2,)
    assert spec.class_names == ("no_cough", "cough")

    desk = build_detection_spec((1, 64, 96))
    assert desk.flatten_size() == 12 * 20 * 32 == 7_680


def test_diagnosis_spec_shapes():
    spec = build_diagnosis_spec((1, 288, 432))
    assert spec.flatten_size() == 30 * 48 * 32 == 46_080
    assert spec.output_shapes()[-1] == (3,)
    assert spec.class_names == ("bronchiolitis", "bronchitis", "pertussis")


def test_specs_reject_small_inputs():
    build_detection_spec((1, 24, 24))  # boundary accepted
    with pytest.raises(InputTooSmall):
        build_detection_spec((1, 23, 432))
    build_diagnosis_spec((1, 44, 44))
    with pytest.raises(InputTooSmall):
        build_diagnosis_spec((1, 43, 432))
    with pytest.raises(InputTooSmall):
        build_detection_spec((3, 288, 432))


def test_param_count_formula_matches_init():
    for spec in (
        build_detection_spec((1, 64, 96), filters=4, dense_units=16),
        build_diagnosis_spec((1, 64, 96), filters=4, dense_units=16),
    ):
        model = init_model(spec, seed=0)
        actual = sum(p.size for p in model.params.values())
        assert actual == param_count(spec)


def test_detection_param_count_at_full_resolution():
    spec = build_detection_spec((1, 288, 432))
    expected = (
        (32 * 1 * 25 + 32)
        + (32 * 32 * 25 + 32)
        + (128 * 226_304 + 128)
        + (128 * 128 + 128)
        + (2 * 128 + 2)
    )
    assert param_count(spec) == expected == 29_010_274


def _desk_model(seed=0):
    spec = build_detection_spec((1, 64, 96), filters=4, dense_units=16)
    return init_model(spec, seed=seed)


def _image(seed=0):
    pixels = np.random.default_rng(seed).uniform(0, 1, (64, 96))
    return SpectrogramImage(pixels, DESK_PROFILE)


def test_predict_uniform_on_zero_head():
    model = _desk_model()
    final = max(i for i, l in enumerate(model.spec.layers) if isinstance(l, Dense))
    model.params[f"layer{final:02d}.weights"][:] = 0.0
    model.params[f"layer{final:02d}.bias"][:] = 0.0
    probs, label = predict(model, _image())
    np.testing.assert_allclose(probs.probs, [0.5, 0.5])
    assert label == "no_cough"  # tie breaks to the lowest class index


def test_predict_probs_sum_and_determinism():
    model = _desk_model(seed=1)
    probs1, label1 = predict(model, _image(1))
    probs2, label2 = predict(model, _image(1))
    assert probs1.probs.sum() == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_array_equal(probs1.probs, probs2.probs)
    assert label1 == label2
    assert label1 in model.spec.class_names


def test_predict_logit_shift_keeps_label():
    model = _desk_model(seed=2)
    image = _image(2)
    _, label = predict(model, image)
    final = max(i for i, l in enumerate(model.spec.layers) if isinstance(l, Dense))
    model.params[f"layer{final:02d}.bias"] += 7.5  # shift every logit equally
    _, shifted = predict(model, image)
    assert shifted == label


def test_predict_rejects_wrong_size():
    model = _desk_model()
    with pytest.raises(ShapeMismatch):
        predict(model, np.zeros((32, 48)))


def test_save_load_roundtrip_bitexact(tmp_path):
    model = _desk_model(seed=4)
    model.epochs_trained = 12
    model.best_val_loss = 0.4375
    path_a = tmp_path / "a.cghm"
    save_model(model, path_a)
    loaded = load_model(path_a)

    assert loaded.spec == model.spec
    assert loaded.seed == model.seed
    assert loaded.epochs_trained == 12
    assert loaded.best_val_loss == 0.4375
    for name in model.params:
        np.testing.assert_array_equal(loaded.params[name], model.params[name])

    path_b = tmp_path / "b.cghm"
    save_model(loaded, path_b)
    assert path_a.read_bytes() == path_b.read_bytes()


def test_loaded_model_predicts_identically(tmp_path):
    model = _desk_model(seed=5)
    save_model(model, tmp_path / "m.cghm")
    loaded = load_model(tmp_path / "m.cghm")
    for i in range(100):
        probs_a, label_a = predict(model, _image(i))
        probs_b, label_b = predict(loaded, _image(i))
        np.testing.assert_array_equal(probs_a.probs, probs_b.probs)
        assert label_a == label_b


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bad.cghm"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CorruptModelFile):
        load_model(path)


def test_corrupted_byte_fails_checksum(tmp_path):
    model = _desk_model()
    path = tmp_path / "m.cghm"
    save_model(model, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptModelFile):
        load_model(path)


def test_truncated_file_rejected(tmp_path):
    model = _desk_model()
    path = tmp_path / "m.cghm"
    save_model(model, path)
    path.write_bytes(path.read_bytes()[:-100])
    with pytest.raises(CorruptModelFile):
        load_model(path)


def test_version_mismatch(tmp_path):
    model = _desk_model()
    path = tmp_path / "m.cghm"
    save_model(model, path)
    blob = bytearray(path.read_bytes())
    import struct
    import zlib

    blob[4:6] = struct.pack("<H", 99)
    blob[-4:] = struct.pack("<I", zlib.crc32(bytes(blob[:-4])))
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        load_model(path)


def test_diagnosis_second_block_mirrors_first():
    spec = build_diagnosis_spec((1, 288, 432))
    convs = [l for l in spec.layers if isinstance(l, Conv2d)]
    assert len(convs) == 4
    assert all(c.filters == 32 and c.kernel == 5 and c.stride == (1, 1) for c in convs)


def test_non_finite_params_rejected(tmp_path):
    import struct
    import zlib

    model = _desk_model()
    path = tmp_path / "m.cghm"
    save_model(model, path)
    blob = bytearray(path.read_bytes())
    nan_bytes = struct.pack("<f", float("nan"))
    # first tensor payload starts after magic+version+header_len+header+ndim+dims
    header_len = struct.unpack_from("<I", blob, 6)[0]
    tensor_start = 10 + header_len + 1 + 4 * 4  # conv weights are 4-D
    blob[tensor_start : tensor_start + 4] = nan_bytes
    blob[-4:] = struct.pack("<I", zlib.crc32(bytes(blob[:-4])))
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptModelFile, match="non-finite"):
        load_model(path)

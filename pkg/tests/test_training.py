import numpy as np
import pytest

from coughscreen import (
    EarlyStopping,
    TrainConfig,
    build_detection_spec,
    evaluate,
    save_model,
    train,
)
from coughscreen.errors import EmptySplit, NonFiniteLoss
from coughscreen.models import init_model
from coughscreen.nn import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2d,
    Relu,
    Softmax,
    backward,
    forward,
    init_params,
    softmax_cross_entropy,
)


def blobs_dataset(n_per_class, h=32, w=48, seed=0):
    """Class 0: smooth gradient images; class 1: images with a bright block."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for label in (0, 1):
        for _ in range(n_per_class):
            base = rng.uniform(0.0, 0.3, (h, w))
            base += np.linspace(0, 0.2, w)[None, :]
            if label == 1:
                r, c = rng.integers(0, h - 8), rng.integers(0, w - 8)
                base[r : r + 8, c : c + 8] += rng.uniform(0.5, 0.7)
            images.append(np.clip(base, 0, 1))
            labels.append(label)
    order = rng.permutation(len(labels))
    return np.asarray(images)[order], np.asarray(labels)[order]


def small_spec(h=32, w=48):
    return build_detection_spec((1, h, w), filters=4, dense_units=16)


def test_early_stopping_patience_semantics():
    stopper = EarlyStopping(patience=3, min_delta=1e-4)
    losses = [1.0, 0.9, 0.95, 0.96, 0.97]
    outcomes = [stopper.update(epoch, loss) for epoch, loss in enumerate(losses, start=1)]
    assert [stop for _, stop in outcomes] == [False, False, False, False, True]
    assert stopper.best_epoch == 2
    assert stopper.best_loss == 0.9


def test_early_stopping_snapshots_any_improvement():
    # a sub-min_delta improvement still updates the snapshot, only patience ignores it
    stopper = EarlyStopping(patience=2, min_delta=1e-2)
    stopper.update(1, 1.0)
    snapshot, stop = stopper.update(2, 0.999)
    assert snapshot and not stop
    assert stopper.best_epoch == 2
    _, stop = stopper.update(3, 0.9985)
    assert stop  # two non-significant epochs in a row
    assert stopper.best_epoch == 3


def test_training_improves_and_history_is_consistent(tmp_path):
    images, labels = blobs_dataset(24)
    split = 32
    config = TrainConfig(max_epochs=12, patience=12, batch_size=8, seed=0, learning_rate=1e-3)
    model, history = train(
        small_spec(), (images[:split], labels[:split]), (images[split:], labels[split:]), config
    )
    assert 1 <= len(history.epochs) <= 12
    assert history.stop_reason in ("patience_exhausted", "max_epochs")
    val_losses = [r.val_loss for r in history.epochs]
    assert model.best_val_loss == pytest.approx(min(val_losses))
    assert history.best_epoch == int(np.argmin(val_losses)) + 1
    assert history.epochs[-1].epoch == len(history.epochs)

    csv_path = tmp_path / "history.csv"
    history.to_csv(csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
    assert len(lines) == len(history.epochs) + 1


def test_training_deterministic_given_seed(tmp_path):
    images, labels = blobs_dataset(10)
    config = TrainConfig(max_epochs=3, patience=3, batch_size=8, seed=42)
    model_a, history_a = train(small_spec(), (images, labels), (images, labels), config)
    model_b, history_b = train(small_spec(), (images, labels), (images, labels), config)
    assert history_a.epochs == history_b.epochs
    save_model(model_a, tmp_path / "a.cghm")
    save_model(model_b, tmp_path / "b.cghm")
    assert (tmp_path / "a.cghm").read_bytes() == (tmp_path / "b.cghm").read_bytes()


def test_overfit_small_sample_reaches_full_train_accuracy():
    images, labels = blobs_dataset(8)  # 16 samples
    config = TrainConfig(max_epochs=40, patience=40, batch_size=16, seed=2, learning_rate=3e-3)
    model, history = train(small_spec(), (images, labels), (images, labels), config)
    assert len(history.epochs) <= 200
    cm, report, _ = evaluate(model, (images, labels))
    assert report.accuracy == 1.0
    assert cm.total == 16


def test_fixed_batch_loss_strictly_decreases_first_steps():
    images, labels = blobs_dataset(8)
    spec = small_spec()
    config = TrainConfig(seed=3)
    model = init_model(spec, seed=config.seed, dtype=np.float64)
    from coughscreen.nn import Adam

    optimizer = Adam(config.learning_rate)
    x = images[:, None].astype(np.float64)
    losses = []
    for step in range(5):
        logits, caches = forward(
            spec.layers, model.params, x, train=True, dropout_seed=(3, 0, 0), want_cache=True
        )
        _, batch_losses, d_logits = softmax_cross_entropy(logits, labels)
        losses.append(float(batch_losses.mean()))
        grads = backward(spec.layers, model.params, caches, d_logits / len(labels))
        optimizer.step(model.params, grads)
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_batch_mean_gradient_equals_mean_of_per_sample():
    # dropout-free stack so the claim is exact up to float roundoff
    layers = (
        MaxPool2d(pool=2),
        Conv2d(filters=3, kernel=3),
        Relu(),
        Flatten(),
        Dense(units=8),
        Relu(),
        Dense(units=2),
        Softmax(),
    )
    rng = np.random.default_rng(4)
    params = init_params((1, 12, 16), layers, seed=4, dtype=np.float64)
    x = rng.uniform(0, 1, (6, 1, 12, 16))
    y = rng.integers(0, 2, 6)

    logits, caches = forward(layers, params, x, want_cache=True, train=True)
    _, _, d_logits = softmax_cross_entropy(logits, y)
    batched = backward(layers, params, caches, d_logits / len(y))

    summed = {k: np.zeros_like(v) for k, v in params.items()}
    for i in range(len(y)):
        logits_i, caches_i = forward(layers, params, x[i : i + 1], want_cache=True, train=True)
        _, _, d_i = softmax_cross_entropy(logits_i, y[i : i + 1])
        for k, g in backward(layers, params, caches_i, d_i).items():
            summed[k] += g / len(y)
    for k in params:
        np.testing.assert_allclose(batched[k], summed[k], atol=1e-10)


def test_non_finite_loss_aborts_with_location():
    images, labels = blobs_dataset(16)
    config = TrainConfig(max_epochs=5, patience=5, batch_size=8, seed=0, learning_rate=1e6)
    with pytest.raises(NonFiniteLoss, match=r"epoch \d+"):
        train(small_spec(), (images, labels), (images, labels), config)


def test_empty_split_rejected():
    images, labels = blobs_dataset(4)
    config = TrainConfig(max_epochs=1)
    with pytest.raises(EmptySplit):
        train(small_spec(), (images[:0], labels[:0]), (images, labels), config)
    with pytest.raises(EmptySplit):
        train(small_spec(), (images, labels), (images[:0], labels[:0]), config)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(min_delta=-1.0)


def test_evaluate_constant_predictor():
    # zero the head so every prediction ties to class 0
    spec = small_spec()
    model = init_model(spec, seed=0)
    final = max(i for i, l in enumerate(spec.layers) if isinstance(l, Dense))
    model.params[f"layer{final:02d}.weights"][:] = 0.0
    model.params[f"layer{final:02d}.bias"][:] = 0.0

    images, labels = blobs_dataset(10)
    cm, report, loss = evaluate(model, (images, labels))
    assert cm.total == 20
    assert report.accuracy == pytest.approx(0.5)
    c0, c1 = report.per_class
    assert c0.sensitivity == 1.0 and c1.sensitivity == 0.0
    assert c0.specificity == 0.0 and c1.specificity == 1.0
    assert loss == pytest.approx(np.log(2.0), rel=1e-6)

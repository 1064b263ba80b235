"""Scikit-learn style wrappers so the pipeline composes with that ecosystem.

MelSpectrogramFeaturizer is a stateless transformer from audio to image
stacks; CoughNetClassifier wraps spec building, the training loop, and
prediction behind fit/predict/predict_proba with get_params/set_params.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .audio import AudioClip, PIPELINE_RATE, fit_detection_window, fit_diagnosis_window
from .features import PROFILES, FeatureProfile, featurize
from .models import build_detection_spec, build_diagnosis_spec
from .nn import forward, softmax
from .training import TrainConfig, train

_WINDOWS = {
    "detection": fit_detection_window,
    "diagnosis": fit_diagnosis_window,
    "none": lambda clip: clip,
}


def _resolve_profile(profile) -> FeatureProfile:
    if isinstance(profile, FeatureProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValueError(f"profile must be a FeatureProfile or one of {sorted(PROFILES)}") from None


class MelSpectrogramFeaturizer(TransformerMixin, BaseEstimator):
    """Transform audio clips into grayscale Mel-spectrogram image stacks.

    Accepts AudioClip objects or bare 1-D sample arrays (assumed to be at
    the pipeline rate). window picks the fixed-length fit applied first:
    "detection" (5 s), "diagnosis" (2 s), or "none".
    """

    def __init__(self, profile="desk", window="detection"):
        self.profile = profile
        self.window = window

    def fit(self, X, y=None):
        self.profile_ = _resolve_profile(self.profile)
        if self.window not in _WINDOWS:
            raise ValueError(f"window must be one of {sorted(_WINDOWS)}")
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "profile_")
        fit_window = _WINDOWS[self.window]
        images = []
        for item in X:
            clip = item if isinstance(item, AudioClip) else AudioClip(np.asarray(item), PIPELINE_RATE)
            images.append(featurize(fit_window(clip), self.profile_).pixels)
        if not images:
            return np.empty((0, self.profile_.image_h, self.profile_.image_w))
        return np.stack(images)


class CoughNetClassifier(ClassifierMixin, BaseEstimator):
    """CNN classifier over spectrogram images with early-stopped Adam training.

    task="detection" builds the 2-class net (one conv block), "diagnosis"
    the 3-class net (two conv blocks). X is (n, H, W) images, or (n, H*W)
    flat rows which are reshaped to image_shape. A stratified
    validation_fraction is held out of fit() for early stopping.
    """

    def __init__(
        self,
        task="detection",
        image_shape=(64, 96),
        filters=32,
        dense_units=128,
        learning_rate=1e-3,
        batch_size=32,
        max_epochs=50,
        patience=10,
        min_delta=1e-4,
        validation_fraction=0.15,
        random_state=0,
        dtype="float32",
    ):
        self.task = task
        self.image_shape = image_shape
        self.filters = filters
        self.dense_units = dense_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_delta = min_delta
        self.validation_fraction = validation_fraction
        self.random_state = random_state
        self.dtype = dtype

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        h, w = self.image_shape
        if X.ndim == 2 and X.shape[1] == h * w:
            X = X.reshape(-1, h, w)
        if X.ndim != 3 or X.shape[1:] != (h, w):
            raise ValueError(f"X must be (n, {h}, {w}) images or (n, {h * w}) rows, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        return X

    def fit(self, X, y):
        X = self._check_X(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError(f"y shape {y.shape} does not match {X.shape[0]} samples")

        builders = {"detection": (build_detection_spec, 2), "diagnosis": (build_diagnosis_spec, 3)}
        if self.task not in builders:
            raise ValueError(f"task must be one of {sorted(builders)}")
        build, n_classes = builders[self.task]

        self.classes_ = np.unique(y)
        if len(self.classes_) != n_classes:
            raise ValueError(
                f"task {self.task!r} needs exactly {n_classes} classes, got {len(self.classes_)}"
            )
        y_idx = np.searchsorted(self.classes_, y)

        if not isinstance(self.random_state, numbers.Integral):
            raise ValueError("random_state must be an integer seed")
        seed = int(self.random_state)

        spec = build(
            (1, *self.image_shape),
            filters=self.filters,
            dense_units=self.dense_units,
            class_names=tuple(str(c) for c in self.classes_),
        )
        config = TrainConfig(
            max_epochs=self.max_epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            seed=seed,
            learning_rate=self.learning_rate,
            min_delta=self.min_delta,
            dtype=self.dtype,
        )

        train_idx, val_idx = _stratified_holdout(y_idx, self.validation_fraction, seed)
        self.model_, self.history_ = train(
            spec,
            (X[train_idx], y_idx[train_idx]),
            (X[val_idx], y_idx[val_idx]),
            config,
        )
        self.n_features_in_ = X.shape[1] * X.shape[2]
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = self._check_X(X)[:, None]  # add channel axis
        logits, _ = forward(self.model_.spec.layers, self.model_.params, X, train=False)
        return softmax(logits.astype(np.float64))

    def predict(self, X):
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]


def _stratified_holdout(y_idx: np.ndarray, fraction: float, seed: int):
    """Per-class holdout of ceil(n * fraction) samples for validation."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("validation_fraction must be in (0, 1)")
    rng = np.random.default_rng((seed, 0x484F4C44))  # distinct stream from training
    train_idx, val_idx = [], []
    for cls in np.unique(y_idx):
        members = np.flatnonzero(y_idx == cls)
        members = members[rng.permutation(len(members))]
        n_val = max(1, int(np.ceil(len(members) * fraction)))
        if n_val >= len(members):
            raise ValueError(f"class {cls} too small to hold out validation data")
        val_idx.extend(members[:n_val])
        train_idx.extend(members[n_val:])
    return np.sort(train_idx), np.sort(val_idx)

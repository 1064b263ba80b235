"""Two-stage cough screening: detect cough events in 5 s environmental
audio clips, then classify detected coughs as bronchiolitis, bronchitis,
or pertussis from grayscale Mel-spectrogram images fed to small CNNs
trained from scratch.
"""

from .audio import (
    AudioClip,
    DETECTION_SECONDS,
    DIAGNOSIS_SECONDS,
    PIPELINE_RATE,
    fit_detection_window,
    fit_diagnosis_window,
    read_wav,
    resample,
    write_wav,
)
from .estimator import CoughNetClassifier, MelSpectrogramFeaturizer
from .features import (
    DESK_PROFILE,
    PAPER_PROFILE,
    FeatureProfile,
    SpectrogramImage,
    featurize,
    hz_to_mel,
    mel_filterbank,
    mel_to_hz,
    power_to_db,
    render_grayscale,
    save_png,
    stft_power,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    confusion_matrix,
    derive_metrics,
    normalize_rows,
)
from .models import (
    DETECTION_CLASSES,
    DIAGNOSIS_CLASSES,
    ClassProbs,
    Model,
    ModelSpec,
    build_detection_spec,
    build_diagnosis_spec,
    init_model,
    load_model,
    param_count,
    predict,
    save_model,
)
from .datasets import (
    DatasetManifest,
    SplitAssignment,
    load_manifest,
    stratified_split,
)
from .training import EarlyStopping, TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "PIPELINE_RATE",
    "DETECTION_SECONDS",
    "DIAGNOSIS_SECONDS",
    "read_wav",
    "write_wav",
    "resample",
    "fit_detection_window",
    "fit_diagnosis_window",
    "FeatureProfile",
    "SpectrogramImage",
    "PAPER_PROFILE",
    "DESK_PROFILE",
    "hz_to_mel",
    "mel_to_hz",
    "stft_power",
    "mel_filterbank",
    "power_to_db",
    "render_grayscale",
    "featurize",
    "save_png",
    "ModelSpec",
    "Model",
    "ClassProbs",
    "DETECTION_CLASSES",
    "DIAGNOSIS_CLASSES",
    "build_detection_spec",
    "build_diagnosis_spec",
    "init_model",
    "param_count",
    "predict",
    "save_model",
    "load_model",
    "DatasetManifest",
    "SplitAssignment",
    "load_manifest",
    "stratified_split",
    "TrainConfig",
    "TrainHistory",
    "EarlyStopping",
    "train",
    "evaluate",
    "ConfusionMatrix",
    "MetricsReport",
    "confusion_matrix",
    "derive_metrics",
    "normalize_rows",
    "CoughNetClassifier",
    "MelSpectrogramFeaturizer",
    "__version__",
]

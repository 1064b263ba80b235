"""Manifest-driven corpus handling: labeled audio lists, the stratified
70/15/15 split, featurized batches, and the on-disk feature cache.

Manifest CSV header is `path,label[,split][,patient]`. Relative paths
resolve against the manifest's directory. When a patient column is present
the split keeps all of a patient's clips in one partition.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import PIPELINE_RATE, fit_detection_window, fit_diagnosis_window, read_wav, resample
from .errors import (
    ClassTooSmall,
    DuplicatePath,
    ParseError,
    UnknownLabel,
)
from .features import FeatureProfile, SpectrogramImage, featurize
from .models import DETECTION_CLASSES, DIAGNOSIS_CLASSES

TASK_CLASSES = {"detection": DETECTION_CLASSES, "diagnosis": DIAGNOSIS_CLASSES}
SPLIT_NAMES = ("train", "val", "test")

_CACHE_MAGIC = b"CGHF"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str | None = None
    patient: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    task: str
    label_names: tuple[str, ...]

    def per_label_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.label_names}
        for entry in self.entries:
            counts[entry.label] += 1
        return counts


@dataclass(frozen=True)
class SplitAssignment:
    """entry index -> one of train/val/test; deterministic in the seed."""

    assignments: tuple[str, ...]
    seed: int

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.assignments) if s == split]


def load_manifest(path, task: str) -> DatasetManifest:
    """Parse and validate a manifest CSV for the given task."""
    if task not in TASK_CLASSES:
        raise ValueError(f"task must be one of {sorted(TASK_CLASSES)}, got {task!r}")
    label_names = TASK_CLASSES[task]
    path = Path(path)
    base = path.parent

    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty manifest") from None
        header = [h.strip() for h in header]
        allowed = ["path", "label", "split", "patient"]
        if header[:2] != ["path", "label"] or any(h not in allowed for h in header):
            raise ParseError(f"{path}: header must be path,label[,split][,patient], got {header}")
        col = {name: i for i, name in enumerate(header)}

        entries = []
        seen: set[str] = set()
        for row_num, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{row_num}: expected {len(header)} columns, got {len(row)}")
            raw_path = row[col["path"]].strip()
            label = row[col["label"]].strip()
            if not raw_path:
                raise ParseError(f"{path}:{row_num}: empty path")
            if label not in label_names:
                raise UnknownLabel(
                    f"{path}:{row_num}: label {label!r} not valid for task {task!r} "
                    f"(expected one of {list(label_names)})"
                )
            resolved = str((base / raw_path) if not Path(raw_path).is_absolute() else Path(raw_path))
            if resolved in seen:
                raise DuplicatePath(f"{path}:{row_num}: duplicate path {raw_path!r}")
            seen.add(resolved)

            split = None
            if "split" in col and row[col["split"]].strip():
                split = row[col["split"]].strip()
                if split not in SPLIT_NAMES:
                    raise ParseError(f"{path}:{row_num}: split must be train/val/test, got {split!r}")
            patient = None
            if "patient" in col and row[col["patient"]].strip():
                patient = row[col["patient"]].strip()
            entries.append(ManifestEntry(resolved, label, split, patient))

    if not entries:
        raise ParseError(f"{path}: manifest has no entries")
    return DatasetManifest(tuple(entries), task, label_names)


def _split_counts(n: int, ratios) -> tuple[int, int, int]:
    n_train = int(np.floor(n * ratios[0]))
    n_val = int(np.floor(n * ratios[1]))
    return n_train, n_val, n - n_train - n_val


def stratified_split(
    manifest: DatasetManifest, ratios=(0.70, 0.15, 0.15), seed: int = 0
) -> SplitAssignment:
    """Per-class shuffle and floor split; remainder goes to test.

    Rows with an explicit split override keep it; the ratios apply to the
    remaining rows of each class. With patient ids, whole patients are
    assigned together (sample proportions then only approximate).
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive values summing to 1, got {ratios}")

    assignments: list[str | None] = [entry.split for entry in manifest.entries]
    rng = np.random.default_rng(seed)

    for label in manifest.label_names:
        free = [i for i, e in enumerate(manifest.entries) if e.label == label and e.split is None]
        pinned = sum(1 for e in manifest.entries if e.label == label and e.split is not None)
        if len(free) + pinned < 3:
            raise ClassTooSmall(f"class {label!r} has fewer than 3 entries")
        if not free:
            continue

        groups: list[list[int]]
        if any(manifest.entries[i].patient for i in free):
            by_patient: dict[str, list[int]] = {}
            for i in free:
                key = manifest.entries[i].patient or f"__row{i}"
                by_patient.setdefault(key, []).append(i)
            groups = [by_patient[k] for k in sorted(by_patient)]
        else:
            groups = [[i] for i in free]

        order = rng.permutation(len(groups))
        n_train, n_val, _ = _split_counts(len(groups), ratios)
        for rank, g in enumerate(order):
            if rank < n_train:
                split = "train"
            elif rank < n_train + n_val:
                split = "val"
            else:
                split = "test"
            for i in groups[g]:
                assignments[i] = split

    return SplitAssignment(tuple(assignments), seed)


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the final partial batch is kept.

    The shuffle is keyed by (seed, epoch) so an epoch's order is reproducible.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng((seed, epoch)).permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


# -- featurization of manifest entries ------------------------------------

_WINDOW_FITTERS = {"detection": fit_detection_window, "diagnosis": fit_diagnosis_window}


def featurize_entry(path, task: str, profile: FeatureProfile) -> SpectrogramImage:
    """read -> resample to the pipeline rate -> window fit -> featurize."""
    clip = read_wav(path)
    clip = resample(clip, PIPELINE_RATE)
    clip = _WINDOW_FITTERS[task](clip)
    return featurize(clip, profile)


def profile_digest(profile: FeatureProfile, task: str) -> bytes:
    """32-byte key identifying (featurization parameters, windowing task)."""
    payload = json.dumps(
        {"task": task, "rate": PIPELINE_RATE, "profile": vars(profile)}, sort_keys=True
    ).encode()
    return hashlib.sha256(payload).digest()


def file_digest(path) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.digest()


def cache_blob_path(cache_dir, path, task: str, profile: FeatureProfile) -> Path:
    key = hashlib.sha256(file_digest(path) + profile_digest(profile, task)).hexdigest()[:32]
    return Path(cache_dir) / f"{key}.cghf"


def write_cache_blob(blob_path, image: SpectrogramImage, task: str) -> None:
    pixels = np.ascontiguousarray(image.pixels, dtype="<f4")
    h, w = pixels.shape
    with open(blob_path, "wb") as f:
        f.write(_CACHE_MAGIC)
        f.write(profile_digest(image.profile, task))
        f.write(struct.pack("<II", h, w))
        f.write(pixels.tobytes())


def read_cache_blob(blob_path, profile: FeatureProfile, task: str) -> SpectrogramImage:
    with open(blob_path, "rb") as f:
        blob = f.read()
    digest = profile_digest(profile, task)
    if blob[:4] != _CACHE_MAGIC or blob[4:36] != digest:
        raise ParseError(f"{blob_path}: not a feature blob for this profile")
    h, w = struct.unpack_from("<II", blob, 36)
    pixels = np.frombuffer(blob, dtype="<f4", count=h * w, offset=44).reshape(h, w)
    return SpectrogramImage(pixels.astype(np.float64), profile)


def featurize_entry_cached(path, task, profile, cache_dir=None):
    """featurize_entry with an optional disk cache; returns (image, hit)."""
    if cache_dir is None:
        return featurize_entry(path, task, profile), False
    blob = cache_blob_path(cache_dir, path, task, profile)
    if blob.exists():
        return read_cache_blob(blob, profile, task), True
    image = featurize_entry(path, task, profile)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    write_cache_blob(blob, image, task)
    return image, False


def load_split_arrays(
    manifest: DatasetManifest,
    assignment: SplitAssignment,
    split: str,
    profile: FeatureProfile,
    cache_dir=None,
    dtype=np.float32,
):
    """Featurize one partition into (images, labels) arrays.

    images is (n, H, W); labels are class indices in manifest.label_names
    order. Errors from audio or featurization carry the offending path.
    """
    idx = assignment.indices(split)
    label_to_int = {name: i for i, name in enumerate(manifest.label_names)}
    images = np.empty((len(idx), profile.image_h, profile.image_w), dtype=dtype)
    labels = np.empty(len(idx), dtype=np.int64)
    for row, i in enumerate(idx):
        entry = manifest.entries[i]
        try:
            image, _ = featurize_entry_cached(entry.path, manifest.task, profile, cache_dir)
        except Exception as exc:
            raise type(exc)(f"{entry.path}: {exc}") from exc
        images[row] = image.pixels
        labels[row] = label_to_int[entry.label]
    return images, labels


def iter_feature_batches(
    manifest: DatasetManifest,
    assignment: SplitAssignment,
    split: str,
    profile: FeatureProfile,
    batch_size: int = 32,
    seed: int = 0,
    epoch: int = 0,
    cache_dir=None,
    dtype=np.float32,
):
    """Yield (image_batch, label_batch) with a per-epoch reshuffle.

    Every split entry appears exactly once per epoch; the final partial
    batch is retained.
    """
    idx = assignment.indices(split)
    label_to_int = {name: i for i, name in enumerate(manifest.label_names)}
    for batch in batch_indices(len(idx), batch_size, seed, epoch):
        images = np.empty((len(batch), profile.image_h, profile.image_w), dtype=dtype)
        labels = np.empty(len(batch), dtype=np.int64)
        for row, j in enumerate(batch):
            entry = manifest.entries[idx[j]]
            try:
                image, _ = featurize_entry_cached(entry.path, manifest.task, profile, cache_dir)
            except Exception as exc:
                raise type(exc)(f"{entry.path}: {exc}") from exc
            images[row] = image.pixels
            labels[row] = label_to_int[entry.label]
        yield images, labels

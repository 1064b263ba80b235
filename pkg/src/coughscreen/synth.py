"""Synthetic labeled audio for demos and end-to-end runs.

The real clinical corpora are private, so this builds stand-ins with the
same surface: detection clips are broadband bursts over ambient noise vs
ambient noise alone; diagnosis clips are single bursts whose spectral
envelope differs by class. Run as `python -m coughscreen.synth` to write a
WAV corpus plus manifest.
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

import numpy as np

from .audio import AudioClip, PIPELINE_RATE, write_wav
from .models import DETECTION_CLASSES, DIAGNOSIS_CLASSES


def _ambient(rng: np.random.Generator, n: int) -> np.ndarray:
    """Low-frequency-weighted noise plus a faint mains-style hum."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / PIPELINE_RATE)
    spectrum *= 1.0 / (1.0 + freqs / 300.0)
    noise = np.fft.irfft(spectrum, n)
    noise /= max(np.abs(noise).max(), 1e-12)
    hum_f = rng.uniform(80.0, 320.0)
    t = np.arange(n) / PIPELINE_RATE
    hum = np.sin(2 * np.pi * hum_f * t) * rng.uniform(0.02, 0.08)
    return noise * rng.uniform(0.02, 0.06) + hum


def _band_noise(rng: np.random.Generator, n: int, low: float, high: float) -> np.ndarray:
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / PIPELINE_RATE)
    spectrum[(freqs < low) | (freqs > high)] = 0.0
    out = np.fft.irfft(spectrum, n)
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def _burst(rng: np.random.Generator, n: int, low: float, high: float) -> np.ndarray:
    """Sharp-attack, exponential-decay band noise, like a cough impulse."""
    burst = _band_noise(rng, n, low, high)
    t = np.arange(n) / PIPELINE_RATE
    attack = 1.0 - np.exp(-t / 0.004)
    decay = np.exp(-t / rng.uniform(0.15, 0.35))
    return burst * attack * decay


def _place(signal: np.ndarray, burst: np.ndarray, at: int) -> None:
    end = min(at + burst.size, signal.size)
    signal[at:end] += burst[: end - at]


def synth_detection_clip(label: str, rng: np.random.Generator) -> AudioClip:
    """5 s clip: ambient noise, plus 2-4 broadband bursts for the cough class."""
    n = PIPELINE_RATE * 5
    signal = _ambient(rng, n)
    if label == "cough":
        for _ in range(rng.integers(2, 5)):
            burst = _burst(rng, int(0.6 * PIPELINE_RATE), 250.0, 9000.0)
            amp = rng.uniform(0.5, 0.9)
            _place(signal, amp * burst, int(rng.integers(0, n - burst.size)))
    peak = np.abs(signal).max()
    if peak > 1.0:
        signal = signal / peak
    return AudioClip(signal, PIPELINE_RATE)


_DIAGNOSIS_BANDS = {
    "bronchiolitis": (250.0, 900.0),
    "bronchitis": (1200.0, 2600.0),
    "pertussis": (3200.0, 7000.0),
}


def synth_diagnosis_clip(label: str, rng: np.random.Generator) -> AudioClip:
    """2 s clip holding one burst whose spectral band depends on the class."""
    n = PIPELINE_RATE * 2
    low, high = _DIAGNOSIS_BANDS[label]
    signal = _ambient(rng, n) * 0.3
    burst = _burst(rng, int(0.6 * PIPELINE_RATE), low * rng.uniform(0.9, 1.1), high * rng.uniform(0.9, 1.1))
    _place(signal, rng.uniform(0.6, 0.9) * burst, int(rng.integers(0, n // 2)))
    peak = np.abs(signal).max()
    if peak > 1.0:
        signal = signal / peak
    return AudioClip(signal, PIPELINE_RATE)


_MAKERS = {
    "detection": (DETECTION_CLASSES, synth_detection_clip),
    "diagnosis": (DIAGNOSIS_CLASSES, synth_diagnosis_clip),
}


def synth_clips(task: str, per_class: int, seed: int = 0):
    """Yield (label, AudioClip) pairs, per_class of each task label."""
    labels, maker = _MAKERS[task]
    rng = np.random.default_rng(seed)
    for label in labels:
        for _ in range(per_class):
            yield label, maker(label, rng)


def write_corpus(out_dir, task: str, per_class: int, seed: int = 0) -> Path:
    """Write WAVs and a manifest.csv; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "label"])
        counters: dict[str, int] = {}
        for label, clip in synth_clips(task, per_class, seed):
            i = counters.get(label, 0)
            counters[label] = i + 1
            name = f"{label}_{i:04d}.wav"
            write_wav(out_dir / name, clip)
            writer.writerow([name, label])
    return manifest_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Generate a synthetic labeled WAV corpus.")
    parser.add_argument("out_dir")
    parser.add_argument("--task", choices=sorted(_MAKERS), default="detection")
    parser.add_argument("--per-class", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    manifest = write_corpus(args.out_dir, args.task, args.per_class, args.seed)
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

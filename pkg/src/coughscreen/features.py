"""Mel-spectrogram featurization: fixed-length audio in, grayscale image out.

The chain is STFT power -> triangular mel filterbank -> relative dB
(referenced to the per-clip maximum) -> [0, 1] intensity -> bilinear resize
to the profile's image size. Pixel row 0 is the highest frequency band, so
rendered images read like a conventional spectrogram plot.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip
from .errors import (
    ClipTooShort,
    DimensionMismatch,
    InvalidProfile,
    NegativeFrequency,
)

_POWER_EPS = 1e-10


@dataclass(frozen=True)
class FeatureProfile:
    """All featurization hyperparameters in one hashable bundle."""

    frame_size: int = 1024
    hop: int = 512
    n_mels: int = 128
    f_min: float = 0.0
    f_max: float | None = None  # None means Nyquist for the clip's rate
    db_floor: float = -80.0
    image_h: int = 288
    image_w: int = 432

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_size:
            raise InvalidProfile("need 0 < hop <= frame_size")
        if self.n_mels < 2:
            raise InvalidProfile("need n_mels >= 2")
        if self.f_min < 0:
            raise InvalidProfile("f_min must be >= 0")
        if self.f_max is not None and self.f_max <= self.f_min:
            raise InvalidProfile("need f_min < f_max")
        if self.db_floor >= 0:
            raise InvalidProfile("db_floor must be negative")
        if self.image_h <= 0 or self.image_w <= 0:
            raise InvalidProfile("image dimensions must be positive")

    def resolve_f_max(self, rate: int) -> float:
        f_max = rate / 2 if self.f_max is None else self.f_max
        if not self.f_min < f_max <= rate / 2:
            raise InvalidProfile(
                f"need f_min < f_max <= rate/2 (f_min={self.f_min}, f_max={f_max}, rate={rate})"
            )
        return f_max


# "paper" is the full 288x432 production configuration; "desk" keeps tests
# and desktop training runs fast.
PAPER_PROFILE = FeatureProfile()
DESK_PROFILE = FeatureProfile(n_mels=40, image_h=64, image_w=96)

PROFILES = {"paper": PAPER_PROFILE, "desk": DESK_PROFILE}


@dataclass(frozen=True)
class SpectrogramImage:
    """image_h x image_w grid of intensities in [0, 1]; the model input."""

    pixels: np.ndarray
    profile: FeatureProfile

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.shape != (self.profile.image_h, self.profile.image_w):
            raise DimensionMismatch(
                f"pixels {pixels.shape} != profile image "
                f"{(self.profile.image_h, self.profile.image_w)}"
            )
        object.__setattr__(self, "pixels", pixels)


def hz_to_mel(f):
    """2595 * log10(1 + f/700); strictly increasing on f >= 0."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise NegativeFrequency("frequency must be >= 0")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def stft_power(clip: AudioClip, profile: FeatureProfile) -> np.ndarray:
    """Hann-windowed short-time power spectrum.

    Returns a (frames, frame_size//2 + 1) array with
    frames = floor((len - frame_size)/hop) + 1; no frame runs past the
    signal end.
    """
    n = clip.samples.size
    if n < profile.frame_size:
        raise ClipTooShort(f"clip of {n} samples < frame_size {profile.frame_size}")
    n_frames = (n - profile.frame_size) // profile.hop + 1
    window = _hann(profile.frame_size)
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, profile.frame_size)
    frames = frames[:: profile.hop][:n_frames]
    spectrum = np.fft.rfft(frames * window, axis=1)
    return np.abs(spectrum) ** 2


@functools.lru_cache(maxsize=8)
def _hann(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@functools.lru_cache(maxsize=16)
def mel_filterbank(profile: FeatureProfile, rate: int) -> np.ndarray:
    """Triangular filters, peaks uniformly spaced in mel between f_min and f_max.

    Returns (n_mels, frame_size//2 + 1); each filter is nonnegative with a
    continuous peak of 1 (no area normalization). Raises InvalidProfile when
    the FFT resolution leaves a filter with no positive bin.
    """
    f_max = profile.resolve_f_max(rate)
    breakpoints = mel_to_hz(
        np.linspace(hz_to_mel(profile.f_min), hz_to_mel(f_max), profile.n_mels + 2)
    )
    n_bins = profile.frame_size // 2 + 1
    bin_freqs = np.arange(n_bins) * rate / profile.frame_size

    left = breakpoints[:-2, None]
    peak = breakpoints[1:-1, None]
    right = breakpoints[2:, None]
    rising = (bin_freqs - left) / (peak - left)
    falling = (right - bin_freqs) / (right - peak)
    bank = np.maximum(0.0, np.minimum(rising, falling))

    if np.any(bank.max(axis=1) <= 0.0):
        raise InvalidProfile(
            f"{profile.n_mels} mel filters too narrow for frame_size "
            f"{profile.frame_size} at rate {rate}"
        )
    bank.flags.writeable = False  # cached and shared across threads
    return bank


def power_to_db(power: np.ndarray, db_floor: float = -80.0) -> np.ndarray:
    """Relative dB against the array's own maximum, clamped to [db_floor, 0]."""
    power = np.maximum(np.asarray(power, dtype=np.float64), _POWER_EPS)
    ref = max(power.max(), _POWER_EPS)
    db = 10.0 * np.log10(power) - 10.0 * np.log10(ref)
    return np.clip(db, db_floor, 0.0)


def _resize_axis(m: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    src_len = m.shape[axis]
    if out_len == 1:
        coords = np.zeros(1)
    else:
        coords = np.linspace(0.0, src_len - 1.0, out_len)
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, src_len - 1)
    frac = coords - lo
    take_lo = np.take(m, lo, axis=axis)
    take_hi = np.take(m, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = out_len
    frac = frac.reshape(shape)
    return take_lo * (1.0 - frac) + take_hi * frac


def render_grayscale(db_spec: np.ndarray, profile: FeatureProfile) -> SpectrogramImage:
    """Map dB values to [0, 1] intensity and resize to the profile's image.

    Input rows are mel bands in ascending frequency; output row 0 is the
    highest band (frequency ascends bottom-to-top), columns are time left
    to right. Corner pixels of the resize land exactly on source corners.
    """
    db_spec = np.asarray(db_spec, dtype=np.float64)
    if db_spec.ndim != 2 or db_spec.size == 0:
        raise DimensionMismatch(f"expected nonempty 2-D dB matrix, got shape {db_spec.shape}")
    intensity = (db_spec - profile.db_floor) / (-profile.db_floor)
    resized = _resize_axis(intensity, profile.image_h, axis=0)
    resized = _resize_axis(resized, profile.image_w, axis=1)
    return SpectrogramImage(np.clip(resized[::-1], 0.0, 1.0), profile)


def featurize(clip: AudioClip, profile: FeatureProfile) -> SpectrogramImage:
    """Full deterministic pipeline from a window-fitted clip to an image."""
    power = stft_power(clip, profile)  # (frames, bins)
    bank = mel_filterbank(profile, clip.sample_rate)  # (n_mels, bins)
    mel_power = bank @ power.T  # (n_mels, frames)
    db = power_to_db(mel_power, profile.db_floor)
    return render_grayscale(db, profile)


def save_png(image: SpectrogramImage, path) -> None:
    """8-bit grayscale export for eyeballing; the pipeline never reads these."""
    from PIL import Image

    levels = np.round(image.pixels * 255.0).astype(np.uint8)
    Image.fromarray(levels, mode="L").save(path, format="PNG")

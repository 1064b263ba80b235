"""WAV ingestion, mono/rate normalization, and fixed-length windowing.

All audio in the pipeline is mono float64 in [-1, 1] at PIPELINE_RATE.
The detection model consumes 5 s windows, the diagnosis model 2 s windows.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyAudio, MalformedWav, UnsupportedEncoding

PIPELINE_RATE = 22050
DETECTION_SECONDS = 5.0
DIAGNOSIS_SECONDS = 2.0

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3


@dataclass(frozen=True)
class AudioClip:
    """Mono audio: samples in [-1, 1] plus the rate they were sampled at."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if samples.size == 0:
            raise EmptyAudio("clip has no samples")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return AudioClip(samples, self.sample_rate, self.source_id)


def _read_exact(stream, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise MalformedWav(f"truncated file while reading {what}")
    return data


def read_wav(path) -> AudioClip:
    """Decode a RIFF/WAVE file to a mono AudioClip.

    Supports PCM 8/16/24-bit and IEEE 32-bit float, 1 or 2 channels.
    Integer samples are scaled by the type's max magnitude so the int16
    endpoint -32768 maps to exactly -1.0. Stereo is averaged to mono.
    """
    with open(path, "rb") as f:
        riff = _read_exact(f, 12, "RIFF header")
        if riff[:4] != b"RIFF" or riff[8:12] != b"WAVE":
            raise MalformedWav(f"{path}: not a RIFF/WAVE file")

        fmt = None
        data = None
        while data is None:
            head = f.read(8)
            if len(head) == 0:
                break
            if len(head) != 8:
                raise MalformedWav(f"{path}: truncated chunk header")
            chunk_id, size = head[:4], struct.unpack("<I", head[4:])[0]
            if chunk_id == b"fmt ":
                if size < 16:
                    raise MalformedWav(f"{path}: fmt chunk too small ({size} bytes)")
                fmt = struct.unpack("<HHIIHH", _read_exact(f, 16, "fmt chunk"))
                f.seek(size - 16 + (size & 1), 1)
            elif chunk_id == b"data":
                if fmt is None:
                    raise MalformedWav(f"{path}: data chunk before fmt chunk")
                data = _read_exact(f, size, "data chunk")
            else:
                f.seek(size + (size & 1), 1)

        if fmt is None or data is None:
            raise MalformedWav(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if audio_format not in (_FMT_PCM, _FMT_IEEE_FLOAT):
        raise UnsupportedEncoding(f"{path}: format tag {audio_format} (only PCM and IEEE float)")
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels (only mono/stereo)")
    if sample_rate <= 0:
        raise MalformedWav(f"{path}: nonpositive sample rate")

    if audio_format == _FMT_PCM:
        if bits not in (8, 16, 24):
            raise UnsupportedEncoding(f"{path}: {bits}-bit PCM")
    elif bits != 32:
        raise UnsupportedEncoding(f"{path}: {bits}-bit float")

    expected_align = channels * bits // 8
    if block_align != expected_align:
        raise MalformedWav(f"{path}: block align {block_align}, expected {expected_align}")

    frames = len(data) // block_align
    if frames == 0:
        raise EmptyAudio(f"{path}: zero audio frames")
    data = data[: frames * block_align]

    if bits == 8:
        raw = np.frombuffer(data, dtype=np.uint8).astype(np.float64)
        samples = (raw - 128.0) / 128.0
    elif bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3)
        ints = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        ints -= (ints & 0x800000) << 1  # sign-extend
        samples = ints.astype(np.float64) / 8388608.0
    else:  # 32-bit float
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
        samples = np.clip(samples, -1.0, 1.0)

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)

    return AudioClip(samples, int(sample_rate), source_id=str(path))


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM mono. Inverse of read_wav on 16-bit input."""
    scaled = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = scaled.tobytes()
    byte_rate = clip.sample_rate * 2
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 36 + len(payload)))
        f.write(b"WAVE")
        f.write(b"fmt ")
        f.write(struct.pack("<IHHIIHH", 16, _FMT_PCM, 1, clip.sample_rate, byte_rate, 2, 16))
        f.write(b"data")
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling to target_rate.

    Output length is round(len * target/source); equal rates return the
    clip unchanged. Linear interpolation (not band-limited sinc) is a
    deliberate quality/complexity trade for spectrogram features.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if clip.samples.size == 0:
        raise EmptyAudio("cannot resample empty clip")
    if target_rate == clip.sample_rate:
        return clip

    n_in = clip.samples.size
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    n_out = max(n_out, 1)
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    samples = np.interp(positions, np.arange(n_in), clip.samples)
    return AudioClip(samples, target_rate, clip.source_id)


def _fit_window(clip: AudioClip, seconds: float) -> AudioClip:
    if clip.samples.size == 0:
        raise EmptyAudio("cannot window empty clip")
    target = int(round(seconds * clip.sample_rate))
    if clip.samples.size >= target:
        return clip.with_samples(clip.samples[:target])
    padded = np.zeros(target, dtype=np.float64)
    padded[: clip.samples.size] = clip.samples
    return clip.with_samples(padded)


def fit_detection_window(clip: AudioClip) -> AudioClip:
    """Exactly 5 s: truncate the end of longer clips, zero-pad shorter ones."""
    return _fit_window(clip, DETECTION_SECONDS)


def fit_diagnosis_window(clip: AudioClip) -> AudioClip:
    """Exactly 2 s: truncate the end of longer clips, zero-pad shorter ones."""
    return _fit_window(clip, DIAGNOSIS_SECONDS)

"""Audio ingestion and frame-level acoustic features.

Only 16 kHz mono PCM16 WAV is accepted. Features are three hand-computable
values per frame: log-energy, zero-crossing rate and delta log-energy.
"""
from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, dump_json, read_json
from .errors import CorruptFile, EmptyClip, SchemaError, UnsupportedFormat

SAMPLE_RATE = 16000
ENERGY_FLOOR = 1e-10
SILENCE_LOG_ENERGY = math.log(ENERGY_FLOOR)  # ≈ -23.0259


def n_frames(duration_s: float, hop_s: float) -> int:
    """Number of frames on a grid anchored at 0: ceil(duration / hop)."""
    # tolerance absorbs binary representation noise, e.g. 2.0 / 0.1 = 20.000000000000004
    return max(0, math.ceil(duration_s / hop_s - 1e-9))


@dataclass(frozen=True, eq=False)
class AudioClip:
    id: str
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedFormat(f"sample rate {self.sample_rate} != {SAMPLE_RATE}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise UnsupportedFormat("samples must be one-dimensional (mono)")
        if samples.size and (np.abs(samples).max() > 1.0 or not np.isfinite(samples).all()):
            raise ValueError("samples must lie within [-1, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class FrameFeatures:
    """T x dim feature matrix on a hop_s grid.

    ``frames[t]`` describes the window starting at ``t * hop_s``.
    """

    id: str
    hop_s: float
    duration_s: float
    frames: np.ndarray

    def __post_init__(self):
        frames = np.array(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise SchemaError("frames must be a 2-D matrix")
        if not np.isfinite(frames).all():
            raise SchemaError("frames contain non-finite values")
        if not self.hop_s > 0:
            raise SchemaError("hop_s must be positive")
        expected = n_frames(self.duration_s, self.hop_s)
        if frames.shape[0] != expected:
            raise SchemaError(
                f"{frames.shape[0]} frames, expected ceil({self.duration_s}/{self.hop_s}) = {expected}"
            )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FrameFeatures):
            return NotImplemented
        return (
            self.id == other.id
            and self.hop_s == other.hop_s
            and self.duration_s == other.duration_s
            and np.array_equal(self.frames, other.frames)
        )


def load_wav(path) -> AudioClip:
    """Read a 16 kHz mono PCM16LE WAV file, scaling samples by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels, width, rate = wf.getnchannels(), wf.getsampwidth(), wf.getframerate()
            declared = wf.getnframes()
            if channels != 1:
                raise UnsupportedFormat(f"{path}: {channels} channels, only mono is supported")
            if width != 2:
                raise UnsupportedFormat(f"{path}: {8 * width}-bit samples, only 16-bit PCM")
            if rate != SAMPLE_RATE:
                raise UnsupportedFormat(f"{path}: {rate} Hz, only {SAMPLE_RATE} Hz (no resampling)")
            raw = wf.readframes(declared)
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg or "bad sample width" in msg:
            raise UnsupportedFormat(f"{path}: {msg}") from exc
        raise CorruptFile(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise CorruptFile(f"{path}: truncated RIFF header") from exc
    if len(raw) != 2 * declared:
        raise CorruptFile(f"{path}: data chunk truncated ({len(raw)} of {2 * declared} bytes)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioClip(id=path.stem, sample_rate=SAMPLE_RATE, samples=pcm / 32768.0)


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(SAMPLE_RATE)
        wf.writeframes(pcm.tobytes())


def _zero_crossing_rate(window: np.ndarray) -> float:
    n = window.size
    if n < 2:
        return 0.0
    signs = np.sign(window)
    # a zero sample inherits the sign before it; leading zeros count as positive
    if not signs.all():
        signs[0] = signs[0] or 1.0
        idx = np.where(signs != 0, np.arange(n), 0)
        np.maximum.accumulate(idx, out=idx)
        signs = signs[idx]
    return float(np.count_nonzero(signs[1:] != signs[:-1])) / (n - 1)


def extract_features(clip: AudioClip, hop_s: float = 0.1, win_s: float = 0.1) -> FrameFeatures:
    """Frame-level (log-energy, zero-crossing rate, delta log-energy) features.

    Frame ``t`` covers ``[t*hop_s, t*hop_s + win_s)`` clamped to the clip end;
    the trailing partial window is kept.
    """
    if not 0 < hop_s <= win_s:
        raise ValueError(f"need 0 < hop_s <= win_s, got hop_s={hop_s}, win_s={win_s}")
    x = clip.samples
    if x.size == 0:
        raise EmptyClip(f"clip {clip.id!r} has no samples")
    sr = clip.sample_rate
    T = n_frames(clip.duration_s, hop_s)
    win = int(round(win_s * sr))
    out = np.zeros((T, 3))
    for t in range(T):
        start = int(round(t * hop_s * sr))
        w = x[start:min(start + win, x.size)]
        out[t, 0] = math.log(float(np.mean(w * w)) + ENERGY_FLOOR)
        out[t, 1] = _zero_crossing_rate(w)
    out[1:, 2] = np.diff(out[:, 0])
    return FrameFeatures(id=clip.id, hop_s=hop_s, duration_s=clip.duration_s, frames=out)


def features_to_json(features: FrameFeatures) -> str:
    return dump_json({
        "id": features.id,
        "hop_s": features.hop_s,
        "dim": features.dim,
        "duration_s": features.duration_s,
        "frames": features.frames.tolist(),
    })


def save_features_json(path, features: FrameFeatures) -> None:
    atomic_write_text(path, features_to_json(features))


def features_from_obj(obj) -> FrameFeatures:
    if not isinstance(obj, dict):
        raise SchemaError("feature file must hold a JSON object")
    missing = {"id", "hop_s", "dim", "duration_s", "frames"} - obj.keys()
    if missing:
        raise SchemaError(f"missing fields: {sorted(missing)}")
    rows = obj["frames"]
    dim = obj["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise SchemaError("dim must be a positive integer")
    if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
        raise SchemaError("frames must be a list of lists")
    if any(len(r) != dim for r in rows):
        raise SchemaError("ragged frames: every row must have exactly `dim` values")
    for r in rows:
        for v in r:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"non-numeric feature value {v!r}")
    for key in ("hop_s", "duration_s"):
        if isinstance(obj[key], bool) or not isinstance(obj[key], (int, float)):
            raise SchemaError(f"{key} must be a number")
    frames = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return FrameFeatures(
        id=str(obj["id"]), hop_s=float(obj["hop_s"]),
        duration_s=float(obj["duration_s"]), frames=frames,
    )


def load_features_json(path) -> FrameFeatures:
    return features_from_obj(read_json(path, SchemaError))

"""Baseline segmenters: fixed-length, energy VAD, imported external files, jitter."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SILENCE_LOG_ENERGY, FrameFeatures
from .errors import NonPositiveChunk, OutOfRange, SchemaError

EPS = 1e-9


def _t(x: float) -> float:
    """Canonical boundary time: rounding away float accumulation noise."""
    return round(float(x), 9)


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not 0 <= self.start_s < self.end_s:
            raise ValueError(f"bad segment [{self.start_s}, {self.end_s})")


@dataclass(frozen=True)
class Segmentation:
    """Boundary times over a clip; each boundary ends a segment.

    The last boundary is always the clip end. ``min_seg_s`` is the floor the
    constructor enforced; it applies to every segment except the final one,
    which simply runs to the end of the clip.
    """

    clip_duration_s: float
    boundaries: tuple
    min_seg_s: float = 0.0

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        check_segmentation(self)

    def segments(self) -> list[Segment]:
        starts = (0.0,) + self.boundaries[:-1]
        return [Segment(s, e) for s, e in zip(starts, self.boundaries)]

    def __len__(self):
        return len(self.boundaries)


def check_segmentation(seg: Segmentation) -> None:
    b = seg.boundaries
    d = seg.clip_duration_s
    if not b:
        raise ValueError("segmentation needs at least the clip-end boundary")
    if b[-1] != d:
        raise ValueError(f"final boundary {b[-1]} != clip duration {d}")
    prev = 0.0
    for i, x in enumerate(b):
        if not x > prev:
            raise ValueError(f"boundaries not strictly increasing in (0, {d}]: {b}")
        if i < len(b) - 1 and x - prev < seg.min_seg_s - EPS:
            raise ValueError(f"segment [{prev}, {x}) shorter than min_seg_s={seg.min_seg_s}")
        prev = x


def fixed_length(clip_duration_s: float, chunk_s: float) -> Segmentation:
    if not chunk_s > 0:
        raise NonPositiveChunk(f"chunk_s must be positive, got {chunk_s}")
    out = []
    k = 1
    while k * chunk_s < clip_duration_s - EPS:
        out.append(_t(k * chunk_s))
        k += 1
    out.append(clip_duration_s)
    return Segmentation(clip_duration_s, tuple(out))


def _forced_schedule(proposals, duration, min_seg_s, max_seg_s):
    """Merge proposals with forced breaks every max_seg_s; drop too-close ones."""
    out = []
    anchor, m = 0.0, 0  # forced breaks sit at anchor + m * max_seg_s

    def prev():
        return _t(anchor + m * max_seg_s)

    for p in proposals:
        while p - prev() > max_seg_s + EPS:
            m += 1
            out.append(prev())
        if p - prev() >= min_seg_s - EPS and p < duration - EPS:
            anchor, m = p, 0
            out.append(p)
    while duration - prev() > max_seg_s + EPS:
        m += 1
        out.append(prev())
    out.append(duration)
    return out


def silent_runs(features: FrameFeatures, energy_floor_offset: float) -> list[tuple[int, int]]:
    """Maximal runs ``[a, b)`` of frames whose log-energy is below the silence threshold."""
    silent = features.frames[:, 0] < SILENCE_LOG_ENERGY + energy_floor_offset
    runs = []
    t, T = 0, len(silent)
    while t < T:
        if silent[t]:
            a = t
            while t < T and silent[t]:
                t += 1
            runs.append((a, t))
        else:
            t += 1
    return runs


def vad_segment(
    features: FrameFeatures,
    energy_floor_offset: float = 10.0,
    min_silence_s: float = 0.3,
    min_seg_s: float = 0.5,
    max_seg_s: float = 10.0,
) -> Segmentation:
    """Energy VAD: cut at the middle frame of every long-enough silence.

    A frame is silent when its log-energy is below
    ``ln(1e-10) + energy_floor_offset``. A run of at least ``min_silence_s``
    proposes a boundary at its middle frame. Proposals closer than
    ``min_seg_s`` to the previous boundary are dropped, and a boundary is
    forced whenever a segment would exceed ``max_seg_s``.
    """
    hop = features.hop_s
    if min_silence_s < hop - EPS:
        raise ValueError(f"min_silence_s={min_silence_s} shorter than one hop ({hop})")
    if not 0 < min_seg_s < max_seg_s:
        raise ValueError("need 0 < min_seg_s < max_seg_s")
    need = math.ceil(min_silence_s / hop - EPS)
    proposals = [
        _t(((a + b - 1) // 2) * hop)
        for a, b in silent_runs(features, energy_floor_offset)
        if b - a >= need
    ]
    bounds = _forced_schedule(proposals, features.duration_s, min_seg_s, max_seg_s)
    return Segmentation(features.duration_s, tuple(bounds), min_seg_s)


def parse_segment_tsv(text: str) -> list[tuple[float, float]]:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise SchemaError(f"line {lineno}: expected 'start<TAB>end', got {line!r}")
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: {exc}") from exc
        if not (math.isfinite(start) and math.isfinite(end)) or not start < end:
            raise SchemaError(f"line {lineno}: need finite start < end")
        if rows and start < rows[-1][1] - EPS:
            raise SchemaError(f"line {lineno}: segments must be ascending and non-overlapping")
        rows.append((start, end))
    if not rows:
        raise SchemaError("no segments in file")
    return rows


def segmentation_from_segments(rows, clip_duration_s: float) -> Segmentation:
    for start, end in rows:
        if start < 0 or end > clip_duration_s + 1e-6:
            raise OutOfRange(f"segment [{start}, {end}) outside [0, {clip_duration_s}]")
    # each segment is extended up to the next start, so gaps merge backward
    inner = [s for s, _ in rows[1:] if EPS < s < clip_duration_s - EPS]
    return Segmentation(clip_duration_s, tuple(inner) + (clip_duration_s,))


def load_external_segmentation(path, clip_duration_s: float) -> Segmentation:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8") from exc
    return segmentation_from_segments(parse_segment_tsv(text), clip_duration_s)


def segmentation_to_tsv(seg: Segmentation) -> str:
    return "".join(f"{s.start_s!r}\t{s.end_s!r}\n" for s in seg.segments())


def perturb_segmentation(seg: Segmentation, jitter_s: float, seed: int) -> Segmentation:
    if jitter_s < 0:
        raise ValueError("jitter_s must be >= 0")
    d = seg.clip_duration_s
    inner = np.asarray(seg.boundaries[:-1])
    if jitter_s == 0 or inner.size == 0:
        return seg
    rng = np.random.default_rng(seed)
    moved = np.sort(inner + rng.uniform(-jitter_s, jitter_s, size=inner.size))
    moved = sorted({_t(x) for x in np.clip(moved, 0.0, d) if EPS < x < d - EPS})
    kept = []
    prev = 0.0
    for x in moved:
        if x - prev >= seg.min_seg_s - EPS:
            kept.append(x)
            prev = x
    return Segmentation(d, tuple(kept) + (d,), seg.min_seg_s)

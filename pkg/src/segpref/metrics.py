"""Quality and latency metrics, and latency-quality tradeoff sweeps."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text
from .errors import EmptyReference, EmptyTrace, SchemaError
from .translate import EmissionTrace, TimingConfig, run_pipeline


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu_stats(hypothesis, reference, max_n: int = 4) -> np.ndarray:
    """``[hyp_len, ref_len, match_1, total_1, ..., match_n, total_n]``."""
    if len(reference) == 0:
        raise EmptyReference("reference must not be empty")
    hyp, ref = list(hypothesis), list(reference)
    stats = [len(hyp), len(ref)]
    for n in range(1, max_n + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        stats.append(sum(min(c, r[g]) for g, c in h.items()))
        stats.append(max(len(hyp) - n + 1, 0))
    return np.array(stats, dtype=np.int64)


def bleu_from_stats(stats, max_n: int = 4) -> float:
    hyp_len, ref_len = int(stats[0]), int(stats[1])
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(max_n):
        matches, total = int(stats[2 + 2 * n]), int(stats[3 + 2 * n])
        if total == 0:
            return 0.0
        # zero precision is floored to half a match
        log_p += math.log(matches / total if matches else 1.0 / (2 * total))
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    return bp * math.exp(log_p / max_n) * 100.0


def bleu(hypothesis, reference, max_n: int = 4) -> float:
    """Sentence BLEU in [0, 100] with clipped n-gram precisions and brevity penalty."""
    return bleu_from_stats(bleu_stats(hypothesis, reference, max_n), max_n)


def corpus_bleu(pairs, max_n: int = 4) -> float:
    """Micro-averaged BLEU: n-gram counts are pooled over ``(hyp, ref)`` pairs."""
    total = sum(bleu_stats(h, r, max_n) for h, r in pairs)
    return bleu_from_stats(total, max_n)


def _lagging(trace: EmissionTrace, ideal_len: int) -> float:
    if len(trace) == 0:
        raise EmptyTrace("emission trace is empty")
    src = trace.source_duration_ms
    total = 0.0
    for i, d in enumerate(trace.emit_ms):
        total += d - i * src / ideal_len
        if d >= src:
            return total / (i + 1)
    return total / len(trace)


def average_lagging(trace: EmissionTrace, ref_len: int) -> float:
    """Average Lagging in ms against an ideal schedule of ``ref_len`` tokens.

    Only tokens up to and including the first one emitted once the whole
    source has been heard are counted.
    """
    if ref_len < 1:
        raise ValueError("ref_len must be >= 1")
    return _lagging(trace, ref_len)


def laal(trace: EmissionTrace, ref_len: int) -> float:
    """Length-adaptive AL: the ideal rate uses ``max(len(trace), ref_len)`` tokens.

    Over a whole talk's concatenated trace this is the streaming variant.
    """
    if ref_len < 1:
        raise ValueError("ref_len must be >= 1")
    return _lagging(trace, max(len(trace), ref_len))


@dataclass(frozen=True)
class TradeoffPoint:
    config_label: str
    knob_value: float
    bleu: float
    latency_ms: float

    def __post_init__(self):
        if not 0.0 <= self.bleu <= 100.0:
            raise ValueError(f"bleu {self.bleu} outside [0, 100]")
        if not (self.latency_ms >= 0 and math.isfinite(self.latency_ms)):
            raise ValueError(f"latency must be finite and >= 0, got {self.latency_ms}")


@dataclass(frozen=True)
class SystemSpec:
    """One curve in a sweep: a segmentation method and the knob values to try.

    The knob is the decode threshold for ``policy``, the chunk length for
    ``fixed``, the minimum silence for ``vad`` and is ignored for ``external``.
    """

    label: str
    method: str
    knobs: tuple
    options: dict = None

    def __post_init__(self):
        if self.method not in ("fixed", "vad", "policy", "external"):
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "knobs", tuple(float(k) for k in self.knobs))
        object.__setattr__(self, "options", dict(self.options or {}))


def make_segmenter(method: str, knob: float, options: dict):
    """Return ``f(features) -> Segmentation | DecodeResult`` for one operating point."""
    from pathlib import Path

    from .policy import DecodeConfig, PolicyParams, decode_streaming, load_policy
    from .segmenters import fixed_length, load_external_segmentation, vad_segment

    if method == "fixed":
        return lambda x: fixed_length(x.duration_s, knob)
    if method == "vad":
        kw = {k: options[k] for k in ("energy_floor_offset", "min_seg_s", "max_seg_s") if k in options}
        return lambda x: vad_segment(x, min_silence_s=knob, **kw)
    if method == "policy":
        params = options["policy"]
        if not isinstance(params, PolicyParams):
            params = load_policy(params)
        kw = {k: options[k] for k in ("window_s", "hop_s", "min_seg_s", "max_seg_s") if k in options}
        cfg = DecodeConfig(threshold=knob, **kw)
        return lambda x: decode_streaming(params, x, cfg)
    root = Path(options["dir"])
    return lambda x: load_external_segmentation(root / f"{x.id}.tsv", x.duration_s)


def evaluate(corpus, segmenter, timing: TimingConfig = TimingConfig(), translator_factory=None):
    """Corpus BLEU and mean streaming LAAL of one segmenter over ``(features, talk)`` items."""
    stats, lags = [], []
    for features, talk in corpus:
        translator = translator_factory(features, talk) if translator_factory else None
        trace, _ = run_pipeline(features, talk, segmenter, translator, timing)
        stats.append((trace.tokens, talk.reference))
        lags.append(laal(trace, len(talk.reference)))
    return corpus_bleu(stats), float(np.mean(lags))


def sweep_tradeoff(corpus, systems, timing: TimingConfig = TimingConfig()) -> list[TradeoffPoint]:
    if not corpus:
        raise ValueError("corpus is empty")
    points = []
    for system in systems:
        for knob in system.knobs:
            seg = make_segmenter(system.method, knob, system.options)
            b, lat = evaluate(corpus, seg, timing)
            points.append(TradeoffPoint(system.label, knob, b, lat))
    return sorted(points, key=lambda p: (p.config_label, p.knob_value))


CSV_HEADER = ["system", "knob", "bleu", "latency_ms"]


def tradeoff_to_csv(points) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in sorted(points, key=lambda p: (p.config_label, p.knob_value)):
        w.writerow([p.config_label, repr(float(p.knob_value)), repr(float(p.bleu)), repr(float(p.latency_ms))])
    return buf.getvalue()


def write_tradeoff_csv(path, points) -> None:
    atomic_write_text(path, tradeoff_to_csv(points))


def read_tradeoff_csv(path) -> list[TradeoffPoint]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except (UnicodeDecodeError, csv.Error) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    if not rows or rows[0] != CSV_HEADER:
        raise SchemaError(f"{path}: header must be {','.join(CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != 4:
            raise SchemaError(f"{path}:{lineno}: expected 4 columns")
        try:
            out.append(TradeoffPoint(row[0], float(row[1]), float(row[2]), float(row[3])))
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return out

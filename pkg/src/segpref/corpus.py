"""Synthetic talk corpora and corpus directories on disk.

A corpus directory holds ``<id>.talk.json`` and ``<id>.features.json`` per talk.
Synthetic features are drawn directly on the frame grid rather than
rendered from a waveform, so speech and silence contrast is exact.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text, dump_json, read_json
from .audio import SILENCE_LOG_ENERGY, FrameFeatures, load_features_json, n_frames, save_features_json
from .errors import SchemaError
from .translate import OracleTalk, Word, load_talk, save_talk

logger = logging.getLogger(__name__)

HOP_S = 0.1


@dataclass(frozen=True)
class SynthSpec:
    n_talks: int = 50
    mean_clauses_per_talk: int = 12
    clause_words: tuple = (3, 8)
    word_s: tuple = (0.2, 0.5)
    silence_s: tuple = (0.3, 0.8)
    vocab_size: int = 200
    speech_log_energy: float = -2.0
    speech_noise: float = 0.3
    silence_noise: float = 0.1
    speech_zcr: tuple = (0.05, 0.35)
    seed: int = 0

    def __post_init__(self):
        for name in ("clause_words", "word_s", "silence_s", "speech_zcr"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (lo, hi))
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be an ascending non-negative range")
        if self.n_talks < 1 or self.mean_clauses_per_talk < 1 or self.vocab_size < 1:
            raise ValueError("n_talks, mean_clauses_per_talk and vocab_size must be positive")
        if self.clause_words[0] < 1 or self.word_s[0] <= 0 or self.silence_s[0] <= 0:
            raise ValueError("clause, word and silence ranges must be positive")

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        obj = read_json(path, SchemaError)
        try:
            return cls(**obj)
        except TypeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc


def _ms(x: float) -> float:
    return round(float(x), 3)


def synth_talk(spec: SynthSpec, index: int, rng: np.random.Generator):
    """One synthetic talk and its frame features."""
    talk_id = f"talk{index:04d}"
    m = spec.mean_clauses_per_talk
    n_clauses = int(rng.integers(max(1, (m + 1) // 2), m + m // 2 + 1))
    words, clauses = [], []
    t = 0.0
    for _ in range(n_clauses):
        start = len(words)
        for _ in range(int(rng.integers(spec.clause_words[0], spec.clause_words[1] + 1))):
            tok = f"w{int(rng.integers(spec.vocab_size))}"
            t1 = _ms(t + rng.uniform(*spec.word_s))
            words.append(Word(tok, t, t1))
            t = t1
        clauses.append((start, len(words)))
        t = _ms(t + rng.uniform(*spec.silence_s))
    duration = t
    dictionary = {w.token: f"t_{w.token}" for w in sorted(words, key=lambda w: w.token)}
    talk = OracleTalk(
        id=talk_id, duration_s=duration, words=words, clauses=clauses,
        reference=[dictionary[w.token] for w in words], dictionary=dictionary,
    )

    T = n_frames(duration, HOP_S)
    centres = (np.arange(T) + 0.5) * HOP_S
    starts = np.array([w.t0 for w in words])
    ends = np.array([w.t1 for w in words])
    k = np.searchsorted(starts, centres, side="right") - 1
    speech = (k >= 0) & (centres < ends[np.clip(k, 0, None)])
    log_e = np.where(
        speech,
        spec.speech_log_energy + spec.speech_noise * rng.standard_normal(T),
        SILENCE_LOG_ENERGY + spec.silence_noise * rng.standard_normal(T),
    )
    zcr = np.where(speech, rng.uniform(*spec.speech_zcr, size=T), 0.0)
    delta = np.concatenate([[0.0], np.diff(log_e)])
    features = FrameFeatures(talk_id, HOP_S, duration, np.column_stack([log_e, zcr, delta]))
    return talk, features


def synth_corpus(spec: SynthSpec, out_dir=None):
    """Generate ``spec.n_talks`` talks; write them to ``out_dir`` when given."""
    rng = np.random.default_rng(spec.seed)
    items = []
    for i in range(spec.n_talks):
        talk, features = synth_talk(spec, i, rng)
        items.append((features, talk))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for features, talk in items:
            save_talk(out / f"{talk.id}.talk.json", talk)
            save_features_json(out / f"{talk.id}.features.json", features)
        atomic_write_text(out / "synth_spec.json", dump_json(asdict(spec)))
        logger.info("wrote %d talks to %s", len(items), out)
    return items


def load_corpus(corpus_dir):
    """``[(features, talk), ...]`` sorted by talk id."""
    root = Path(corpus_dir)
    talks = sorted(root.glob("*.talk.json"))
    if not talks:
        raise SchemaError(f"{root}: no *.talk.json files")
    items = []
    for p in talks:
        talk = load_talk(p)
        fp = root / f"{talk.id}.features.json"
        if not fp.exists():
            raise SchemaError(f"{root}: missing {fp.name}")
        features = load_features_json(fp)
        if abs(features.duration_s - talk.duration_s) > features.hop_s:
            raise SchemaError(f"{talk.id}: features and talk durations disagree")
        items.append((features, talk))
    return items

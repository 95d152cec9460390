"""Candidate segmentations, their quality/latency scores, and preference pairs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import SchemaError
from .segmenters import Segmentation, fixed_length, load_external_segmentation, perturb_segmentation, vad_segment
from .translate import TimingConfig, run_pipeline

DEFAULT_LAMBDA = 2.0  # BLEU points per second of LAAL


@dataclass(frozen=True)
class GenConfig:
    chunk_lengths: tuple = (3.0, 5.0, 8.0)
    energy_floor_offset: float = 10.0
    min_silence_s: float = 0.3
    vad_min_seg_s: float = 0.5
    vad_max_seg_s: float = 10.0
    n_perturb: int = 2
    jitter_s: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class ScoreConfig:
    lam: float = DEFAULT_LAMBDA
    timing: TimingConfig = field(default_factory=TimingConfig)


@dataclass(frozen=True)
class CandidateScore:
    bleu: float
    laal_ms: float
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not (math.isfinite(self.bleu) and math.isfinite(self.laal_ms)):
            raise ValueError("scores must be finite")

    @property
    def scalar(self) -> float:
        return self.bleu - self.lam * self.laal_ms / 1000.0


def _label_key(seg: Segmentation, features) -> bytes:
    from .policy import labels_from_segmentation

    return labels_from_segmentation(seg, features.hop_s, features.T).tobytes()


def _perturb_seed(seed: int, base: int, j: int) -> int:
    return int(np.random.SeedSequence([seed, base, j]).generate_state(1)[0])


def generate_candidates(features, external_paths=None, gen_cfg: GenConfig = GenConfig()):
    """Tagged candidate segmentations, deduplicated by their frame label vectors.

    Bases are fixed-length chunkings, energy VAD and any external files; each
    base additionally yields ``n_perturb`` jittered variants.
    """
    d = features.duration_s
    bases = [(f"fixed-{c:g}s", fixed_length(d, c)) for c in gen_cfg.chunk_lengths]
    bases.append(("vad", vad_segment(
        features, gen_cfg.energy_floor_offset, gen_cfg.min_silence_s,
        gen_cfg.vad_min_seg_s, gen_cfg.vad_max_seg_s,
    )))
    for k, p in enumerate(external_paths or ()):
        bases.append((f"external-{k}", load_external_segmentation(p, d)))
    cands = list(bases)
    for i, (tag, seg) in enumerate(bases):
        for j in range(gen_cfg.n_perturb):
            jittered = perturb_segmentation(seg, gen_cfg.jitter_s, _perturb_seed(gen_cfg.seed, i, j))
            cands.append((f"{tag}~p{j}", jittered))
    seen, out = set(), []
    for tag, seg in cands:
        key = _label_key(seg, features)
        if key not in seen:
            seen.add(key)
            out.append((tag, seg))
    return out


def score_candidate(seg: Segmentation, talk, translator=None, cfg: ScoreConfig = ScoreConfig()) -> CandidateScore:
    """Run the loop with ``seg`` and score BLEU against the talk reference and streaming LAAL."""
    from .metrics import bleu, laal

    trace, _ = run_pipeline(None, talk, seg, translator, cfg.timing)
    return CandidateScore(bleu(trace.tokens, talk.reference), laal(trace, len(talk.reference)), cfg.lam)


@dataclass(frozen=True, eq=False)
class PreferencePair:
    talk_id: str
    y_pref: Segmentation
    y_dispref: Segmentation
    score_pref: CandidateScore
    score_dispref: CandidateScore
    tags: tuple = ("", "")
    features: object = None

    @property
    def features_ref(self) -> str:
        return self.talk_id

    def _key(self):
        return (self.talk_id, self.y_pref.boundaries, self.y_dispref.boundaries,
                self.score_pref, self.score_dispref, tuple(self.tags))

    def __eq__(self, other):
        if not isinstance(other, PreferencePair):
            return NotImplemented
        return self._key() == other._key()


def build_pairs(scored, min_margin: float = 1.0, talk_id: str = "", features=None, max_pairs: int = 10):
    """All candidate pairs whose scalar scores differ by at least ``min_margin``.

    ``scored`` holds ``(tag, segmentation, score)`` triples. The higher
    scalar becomes the preferred side. When more than ``max_pairs`` qualify,
    the widest-margin pairs are kept. Input order does not matter.
    """
    items = sorted(scored, key=lambda s: s[0])
    keys = [_label_key(s[1], features) if features is not None else s[1].boundaries for s in items]
    found = []
    for a, b in combinations(range(len(items)), 2):
        gap = items[a][2].scalar - items[b][2].scalar
        if abs(gap) < min_margin or keys[a] == keys[b]:
            continue
        hi, lo = (a, b) if gap > 0 else (b, a)
        found.append((-abs(gap), hi, lo))
    found.sort()
    if max_pairs is not None:
        found = found[:max_pairs]
    return [
        PreferencePair(talk_id, items[hi][1], items[lo][1], items[hi][2], items[lo][2],
                       (items[hi][0], items[lo][0]), features)
        for _, hi, lo in found
    ]


def pairs_for_talk(features, talk, gen_cfg=GenConfig(), score_cfg=ScoreConfig(), min_margin=1.0,
                   max_pairs=10, external_paths=None, translator=None):
    cands = generate_candidates(features, external_paths, gen_cfg)
    scored = [(tag, seg, score_candidate(seg, talk, translator, score_cfg)) for tag, seg in cands]
    return build_pairs(scored, min_margin, talk.id, features, max_pairs)


def build_pair_dataset(corpus, gen_cfg=GenConfig(), score_cfg=ScoreConfig(), min_margin=1.0,
                       max_pairs=10, external_dir=None):
    pairs = []
    for features, talk in corpus:
        ext = None
        if external_dir is not None and (Path(external_dir) / f"{talk.id}.tsv").exists():
            ext = [Path(external_dir) / f"{talk.id}.tsv"]
        pairs.extend(pairs_for_talk(features, talk, gen_cfg, score_cfg, min_margin, max_pairs, ext))
    return pairs


def _score_obj(s: CandidateScore) -> dict:
    return {"bleu": s.bleu, "laal_ms": s.laal_ms}


def pairs_to_jsonl(pairs) -> str:
    lines = []
    for p in pairs:
        lines.append(json.dumps({
            "talk_id": p.talk_id,
            "pref": list(p.y_pref.boundaries),
            "dispref": list(p.y_dispref.boundaries),
            "score_pref": _score_obj(p.score_pref),
            "score_dispref": _score_obj(p.score_dispref),
            "tags": list(p.tags),
        }, ensure_ascii=False, allow_nan=False))
    return "".join(line + "\n" for line in lines)


def save_pairs(path, pairs) -> None:
    atomic_write_text(path, pairs_to_jsonl(pairs))


def _parse_pair(obj, lam, min_margin, features_by_id):
    if not isinstance(obj, dict):
        raise SchemaError("each line must hold a JSON object")
    try:
        talk_id = obj["talk_id"]
        pref = [float(x) for x in obj["pref"]]
        disp = [float(x) for x in obj["dispref"]]
        sp = CandidateScore(float(obj["score_pref"]["bleu"]), float(obj["score_pref"]["laal_ms"]), lam)
        sd = CandidateScore(float(obj["score_dispref"]["bleu"]), float(obj["score_dispref"]["laal_ms"]), lam)
        tags = tuple(str(t) for t in obj["tags"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed pair: {exc!r}") from exc
    if not isinstance(talk_id, str) or len(tags) != 2:
        raise SchemaError("talk_id must be a string and tags a pair of strings")
    if not pref or not disp or pref[-1] != disp[-1]:
        raise SchemaError("pref and dispref must cover the same clip duration")
    try:
        y_pref = Segmentation(pref[-1], tuple(pref))
        y_disp = Segmentation(disp[-1], tuple(disp))
    except ValueError as exc:
        raise SchemaError(f"invalid segmentation: {exc}") from exc
    if sp.scalar < sd.scalar + min_margin:
        raise SchemaError(
            f"pair for {talk_id}: scalar(pref)={sp.scalar:.4f} < scalar(dispref)={sd.scalar:.4f} + {min_margin}"
        )
    feats = (features_by_id or {}).get(talk_id)
    key_p = _label_key(y_pref, feats) if feats is not None else y_pref.boundaries
    key_d = _label_key(y_disp, feats) if feats is not None else y_disp.boundaries
    if key_p == key_d:
        raise SchemaError(f"pair for {talk_id}: preferred and dispreferred segmentations coincide")
    return PreferencePair(talk_id, y_pref, y_disp, sp, sd, tags, feats)


def load_pairs(path, features_by_id=None, min_margin: float = 1.0, lam: float = DEFAULT_LAMBDA):
    """Read pairs JSONL, re-checking the margin invariant on every line.

    ``features_by_id`` attaches feature matrices by talk id, as training needs.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8: {exc}") from exc
    out = []
    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line, parse_constant=_no_constants)
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
        try:
            out.append(_parse_pair(obj, lam, min_margin, features_by_id))
        except SchemaError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return out


def _no_constants(name):
    raise ValueError(f"non-finite number {name!r}")

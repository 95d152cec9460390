"""The segmentation-translation loop and its translator backends.

Two backends are provided: a deterministic oracle over synthetic talks whose
output is corrupted exactly where a clause is split, and an NDJSON adapter
that talks to an external translation process over a byte stream.
"""
from __future__ import annotations

import base64
import json
import logging
import queue
import subprocess
import threading
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._io import atomic_write_text, dump_json, read_json
from .errors import ProtocolError, SchemaError, TranslatorFailure
from .segmenters import EPS, Segment, Segmentation

logger = logging.getLogger(__name__)

CORRUPT = "⊥"


@dataclass(frozen=True)
class Word:
    token: str
    t0: float
    t1: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.t0 + self.t1)


@dataclass(frozen=True, eq=False)
class OracleTalk:
    id: str
    duration_s: float
    words: tuple
    clauses: tuple
    reference: tuple
    dictionary: dict

    def __post_init__(self):
        words = tuple(w if isinstance(w, Word) else Word(**w) for w in self.words)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))
        object.__setattr__(self, "reference", tuple(self.reference))
        prev = 0.0
        for w in words:
            if not (prev - EPS <= w.t0 < w.t1 <= self.duration_s + EPS):
                raise SchemaError(f"talk {self.id}: word {w} overlaps or leaves [0, {self.duration_s}]")
            prev = w.t1
        pos = 0
        for c in self.clauses:
            if len(c) != 2 or c[0] != pos or not c[1] > c[0]:
                raise SchemaError(f"talk {self.id}: clauses must partition the words in order")
            pos = c[1]
        if pos != len(words):
            raise SchemaError(f"talk {self.id}: clauses cover {pos} of {len(words)} words")
        try:
            expected = tuple(self.dictionary[w.token] for w in words)
        except KeyError as exc:
            raise SchemaError(f"talk {self.id}: token {exc} missing from dictionary") from exc
        if expected != self.reference:
            raise SchemaError(f"talk {self.id}: reference is not the dictionary image of the words")
        clause_of = np.empty(len(words), dtype=int)
        for k, (i, j) in enumerate(self.clauses):
            clause_of[i:j] = k
        object.__setattr__(self, "_clause_of", clause_of)
        object.__setattr__(self, "_mids", np.array([w.mid for w in words]))

    def __eq__(self, other):
        if not isinstance(other, OracleTalk):
            return NotImplemented
        return (self.id, self.duration_s, self.words, self.clauses, self.reference, self.dictionary) == (
            other.id, other.duration_s, other.words, other.clauses, other.reference, other.dictionary)

    def split_clauses(self, seg: Segmentation) -> int:
        """How many clauses have word midpoints on both sides of some boundary."""
        seg_of = np.searchsorted(np.asarray(seg.boundaries), self._mids, side="right")
        return sum(len(set(seg_of[i:j])) > 1 for i, j in self.clauses)


def talk_to_json(talk: OracleTalk) -> str:
    return dump_json({
        "id": talk.id,
        "duration_s": talk.duration_s,
        "words": [{"token": w.token, "t0": w.t0, "t1": w.t1} for w in talk.words],
        "clauses": [list(c) for c in talk.clauses],
        "reference": list(talk.reference),
        "dictionary": talk.dictionary,
    })


def save_talk(path, talk: OracleTalk) -> None:
    atomic_write_text(path, talk_to_json(talk))


def talk_from_obj(obj) -> OracleTalk:
    if not isinstance(obj, dict):
        raise SchemaError("talk file must hold a JSON object")
    missing = {"id", "duration_s", "words", "clauses", "reference", "dictionary"} - obj.keys()
    if missing:
        raise SchemaError(f"talk missing fields: {sorted(missing)}")
    try:
        words = [Word(str(w["token"]), float(w["t0"]), float(w["t1"])) for w in obj["words"]]
        return OracleTalk(
            id=str(obj["id"]), duration_s=float(obj["duration_s"]), words=words,
            clauses=[(int(i), int(j)) for i, j in obj["clauses"]],
            reference=[str(t) for t in obj["reference"]], dictionary=dict(obj["dictionary"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"malformed talk: {exc}") from exc


def load_talk(path) -> OracleTalk:
    return talk_from_obj(read_json(path, SchemaError))


def oracle_translate(segment: Segment, talk: OracleTalk) -> list[str]:
    """Word-for-word translation of the words whose midpoint lies in the segment.

    Words of a clause that straddles a segment edge come out as ``"⊥"``.
    """
    mids = talk._mids
    inside = (mids >= segment.start_s) & (mids < segment.end_s)
    out = []
    for k in np.flatnonzero(inside):
        i, j = talk.clauses[talk._clause_of[k]]
        if inside[i:j].all():
            out.append(talk.dictionary[talk.words[k].token])
        else:
            out.append(CORRUPT)
    return out


@dataclass(frozen=True)
class EmissionTrace:
    tokens: tuple
    emit_ms: tuple
    source_duration_ms: float

    def __post_init__(self):
        if len(self.tokens) != len(self.emit_ms):
            raise ValueError("tokens and emit_ms differ in length")
        if any(b < a for a, b in zip(self.emit_ms, self.emit_ms[1:])) or any(d < 0 for d in self.emit_ms):
            raise ValueError("emission times must be non-negative and non-decreasing")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class TimingConfig:
    fixed_delay_ms: float = 200.0
    per_token_ms: float = 0.0


def _resolve_segmentation(source, features):
    from .policy import DecodeResult

    if callable(source) and not isinstance(source, (Segmentation, DecodeResult)):
        source = source(features)
    if isinstance(source, DecodeResult):
        return source.segmentation, list(source.decision_times)
    if isinstance(source, Segmentation):
        return source, list(source.boundaries)
    raise TypeError(f"cannot obtain a segmentation from {type(source).__name__}")


def run_pipeline(features, talk: OracleTalk, segmenter, translator=None, timing: TimingConfig = TimingConfig()):
    """Segment, translate each chunk in order, and time-stamp every output token.

    ``segmenter`` is a :class:`Segmentation`, a streaming decode result, or a
    callable taking ``features`` and returning either. Non-streaming
    segmentations are decided at their boundary times. ``translator`` maps a
    :class:`Segment` to target tokens and defaults to the oracle.

    Tokens of a chunk decided at ``t`` ms are emitted at
    ``t + fixed_delay_ms + k * per_token_ms``; the translator serves chunks one
    at a time, so a chunk never starts emitting before the previous one is done.
    """
    seg, decided = _resolve_segmentation(segmenter, features)
    if translator is None:
        translator = partial(oracle_translate, talk=talk)
    tokens, times = [], []
    last = 0.0
    for segment, t_dec in zip(seg.segments(), decided):
        out = translator(segment)
        base = 1000.0 * t_dec + timing.fixed_delay_ms
        for k, tok in enumerate(out):
            last = max(last, base + k * timing.per_token_ms)
            tokens.append(tok)
            times.append(last)
    return EmissionTrace(tuple(tokens), tuple(times), 1000.0 * talk.duration_s), seg


class AdapterSession:
    """Strict request/response client for an external translator.

    Requests and responses are newline-delimited UTF-8 JSON objects. Each
    request carries an integer id and the adapter must answer it with exactly
    one response carrying the same id before the next request is sent.
    """

    def __init__(self, reader, writer, timeout_s: float = 30.0, src: str = "en", tgt: str = "de", process=None):
        self._writer = writer
        self.timeout_s = timeout_s
        self.src, self.tgt = src, tgt
        self.process = process
        self._next_id = 0
        self._lines: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(reader,), daemon=True)
        self._thread.start()

    @classmethod
    def spawn(cls, cmd, **kwargs) -> "AdapterSession":
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(proc.stdout, proc.stdin, process=proc, **kwargs)

    def _pump(self, reader):
        try:
            for line in iter(reader.readline, b""):
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(None)

    def request(self, start_s: float, end_s: float, audio_b64=None) -> list[str]:
        rid = self._next_id
        self._next_id += 1
        msg = {"id": rid, "start_s": start_s, "end_s": end_s, "audio_b64": audio_b64, "src": self.src, "tgt": self.tgt}
        try:
            self._writer.write(json.dumps(msg).encode("utf-8") + b"\n")
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise TranslatorFailure(f"adapter stream closed while sending request {rid}") from exc
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise TranslatorFailure(f"no response to request {rid} within {self.timeout_s} s") from None
        if line is None:
            self._lines.put(None)
            raise TranslatorFailure(f"adapter closed the stream before answering request {rid}")
        if not line.endswith(b"\n"):
            raise TranslatorFailure(f"adapter closed the stream mid-response to request {rid}")
        try:
            resp = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise TranslatorFailure(f"malformed response to request {rid}: {line[:80]!r}") from exc
        if not isinstance(resp, dict) or not isinstance(resp.get("id"), int):
            raise TranslatorFailure(f"response to request {rid} lacks an integer id")
        if resp["id"] != rid:
            raise ProtocolError(f"expected response id {rid}, got {resp['id']}")
        toks = resp.get("tokens")
        if not isinstance(toks, list) or not all(isinstance(t, str) for t in toks):
            raise TranslatorFailure(f"response {rid}: 'tokens' must be a list of strings")
        return toks

    def close(self) -> None:
        try:
            self._writer.close()
        except OSError:
            pass
        if self.process is not None:
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def segment_audio_b64(segment: Segment, clip) -> str:
    sr = clip.sample_rate
    x = clip.samples[int(round(segment.start_s * sr)):int(round(segment.end_s * sr))]
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    return base64.b64encode(pcm.tobytes()).decode("ascii")


def adapter_translate(segment: Segment, clip, session: AdapterSession) -> list[str]:
    audio = segment_audio_b64(segment, clip) if clip is not None else None
    return session.request(segment.start_s, segment.end_s, audio)


@dataclass
class AdapterTranslator:
    """Callable translator bound to one session and one clip, for :func:`run_pipeline`."""

    session: AdapterSession
    clip: object = None

    def __call__(self, segment: Segment) -> list[str]:
        return adapter_translate(segment, self.clip, self.session)

"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest, or directly with ``python3 tests/test_acceptance.py``.
"""
import functools
import math
import random
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import central_differences, random_pair, rel_error  # noqa: E402
from segpref.audio import load_features_json, save_features_json  # noqa: E402
from segpref.corpus import SynthSpec, synth_corpus  # noqa: E402
from segpref.dpo import DpoConfig, dpo_grad, dpo_loss, loss_from_gap, train  # noqa: E402
from segpref.errors import ProtocolError, SchemaError, TranslatorFailure  # noqa: E402
from segpref.metrics import (  # noqa: E402
    SystemSpec, average_lagging, bleu, laal, read_tradeoff_csv, sweep_tradeoff, write_tradeoff_csv,
)
from segpref.pairs import build_pair_dataset, build_pairs, load_pairs, save_pairs, score_candidate  # noqa: E402
from segpref.pairs import generate_candidates  # noqa: E402
from segpref.policy import (  # noqa: E402
    DecodeConfig, PolicyParams, decode_streaming, init_policy, load_policy, policy_to_json, save_policy,
)
from segpref.segmenters import Segmentation, fixed_length  # noqa: E402
from segpref.translate import AdapterSession, EmissionTrace, load_talk, run_pipeline, save_talk  # noqa: E402

ADAPTERS = Path(__file__).parent / "adapters"
TRAIN_SEED = 42
EVAL_SEED = 43
MATCH_MS = 300.0
FIXED_GRID = (2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0)
THRESHOLD_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))


def emit(n, title, ok, detail):
    print(f"[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}", flush=True)


def c1_loss_closed_forms():
    ln2 = math.log(2.0)
    target = math.log1p(math.exp(-2.0))
    errs = [abs(loss_from_gap(0.0, b) - ln2) for b in (0.1, 0.5, 1.0, 7.0)]
    errs += [abs(loss_from_gap(2.0, 1.0) - target), abs(loss_from_gap(1.0, 2.0) - target)]
    return max(errs) <= 1e-12, f"max abs error {max(errs):.2e} (tol 1e-12)"


def c2_gradient_check():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        params, pair = random_pair(rng)
        beta = float(rng.uniform(0.1, 2.0))
        g = dpo_grad(params, pair, beta)
        fd = central_differences(lambda th: dpo_loss(params.with_theta(th), pair, beta), params.theta, h=1e-5)
        worst = max(worst, rel_error(g, fd))
    dt = time.perf_counter() - t0
    return worst < 1e-6 and dt < 5.0, f"max relative error {worst:.2e} (tol 1e-6) in {dt:.2f} s"


def c3_beta_gap_invariance():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        params, pair = random_pair(rng)
        beta = float(rng.uniform(0.05, 3.0))
        # logits are linear in theta, so halving theta halves every logit and the gap
        half = params.with_theta(params.theta / 2)
        worst = max(worst, abs(dpo_loss(params, pair, beta) - dpo_loss(half, pair, 2 * beta)))
    return worst <= 1e-9, f"max |loss(b, pair) - loss(2b, halved)| = {worst:.2e} (tol 1e-9)"


def _trace(times, T):
    return EmissionTrace(tuple(f"y{i}" for i in range(len(times))), tuple(times), T)


def c4_metric_exactness():
    T, n = 6000.0, 12
    oracle = [i * T / n for i in range(n)]
    checks = {
        "AL oracle": abs(average_lagging(_trace(oracle, T), n)) <= 1e-9,
        "AL all-at-end": average_lagging(_trace([T] * n, T), n) == T,
        "AL uniform delay": abs(average_lagging(_trace([d + 123.0 for d in oracle], T), n) - 123.0) <= 1e-9,
        "BLEU hand": abs(bleu("a b c d".split(), "a b c e".split()) - 59.46) <= 0.01,
        "BLEU identity": bleu("x y z w v".split(), "x y z w v".split()) == 100.0,
    }
    rng = np.random.default_rng(4)
    same = True
    for _ in range(200):
        m = int(rng.integers(1, 15))
        ref_len = m + int(rng.integers(0, 4))
        t = _trace(sorted(rng.uniform(0, 1.2 * T, m)), T)
        same &= laal(t, ref_len) == average_lagging(t, ref_len)
    checks["LAAL == AL when |Y| <= ref"] = bool(same)
    bad = [k for k, v in checks.items() if not v]
    return not bad, "all exact" if not bad else f"failed: {bad}"


def c5_oracle_characterization():
    corpus = synth_corpus(SynthSpec(n_talks=20, seed=5))
    rng = np.random.default_rng(5)
    mismatches = splits = 0
    for _ in range(1000):
        x, talk = corpus[int(rng.integers(len(corpus)))]
        d = talk.duration_s
        k = int(rng.integers(0, 16))
        cuts = sorted({round(float(v), 3) for v in rng.uniform(0, d, k) if 1e-3 < v < d - 1e-3})
        seg = Segmentation(d, tuple(cuts) + (d,))
        trace, _ = run_pipeline(x, talk, seg)
        n_split = talk.split_clauses(seg)
        splits += n_split > 0
        mismatches += (bleu(trace.tokens, talk.reference) == 100.0) != (n_split == 0)
    ok = mismatches == 0 and 0 < splits < 1000
    return ok, f"{mismatches} mismatches over 1000 segmentations ({splits} split at least one clause)"


@functools.lru_cache(maxsize=None)
def train_corpus():
    return synth_corpus(SynthSpec(n_talks=50, seed=TRAIN_SEED))


@functools.lru_cache(maxsize=None)
def train_pairs():
    return build_pair_dataset(train_corpus())


def c6_pair_soundness():
    t0 = time.perf_counter()
    corpus = train_corpus()
    pairs = train_pairs()
    feats = {x.id: x for x, _ in corpus}
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "pairs.jsonl"
        save_pairs(path, pairs)
        persisted = load_pairs(path, feats)
    margin_ok = all(p.score_pref.scalar >= p.score_dispref.scalar + 1.0 for p in persisted)
    rng = random.Random(6)
    antisym_ok = True
    for x, talk in corpus[:10]:
        scored = [(t, s, score_candidate(s, talk)) for t, s in generate_candidates(x)]
        ref = build_pairs(scored, talk_id=talk.id, features=x, max_pairs=None)
        for _ in range(5):
            rng.shuffle(scored)
            antisym_ok &= build_pairs(scored, talk_id=talk.id, features=x, max_pairs=None) == ref
    dt = time.perf_counter() - t0
    ok = margin_ok and antisym_ok and persisted == pairs and dt < 60
    return ok, (f"{len(persisted)} persisted pairs, margin {'ok' if margin_ok else 'VIOLATED'}, "
                f"antisymmetry {'ok' if antisym_ok else 'VIOLATED'}, {dt:.1f} s")


def dpo_config():
    return DpoConfig(beta=0.5, epochs=5, batch_size=1, learning_rate=5e-5, seed=TRAIN_SEED)


@functools.lru_cache(maxsize=None)
def trained():
    pairs = train_pairs()
    return train(init_policy(pairs[0].features.dim, seed=TRAIN_SEED), pairs, dpo_config())


def dominance(points):
    """Share of matched fixed-length points beaten by the best policy point within the window."""
    fixed = [p for p in points if p.config_label == "fixed"]
    policy = [p for p in points if p.config_label == "policy"]
    matched = won = 0
    for f in fixed:
        near = [p.bleu for p in policy if abs(p.latency_ms - f.latency_ms) <= MATCH_MS]
        if near:
            matched += 1
            won += max(near) > f.bleu
    return won, matched


def c7_training_effectiveness():
    t0 = time.perf_counter()
    pairs = train_pairs()
    report = trained()
    losses = report.epoch_loss
    a_ok = len(pairs) >= 500 and losses[-1] < losses[0] and losses[-1] < math.log(2.0)

    held_out = synth_corpus(SynthSpec(n_talks=50, seed=EVAL_SEED))
    systems = [
        SystemSpec("fixed", "fixed", FIXED_GRID),
        SystemSpec("policy", "policy", THRESHOLD_GRID, {"policy": report.params}),
        SystemSpec("vad", "vad", (0.3,)),
    ]
    points = sweep_tradeoff(held_out, systems)
    won, matched = dominance(points)
    vad = next(p for p in points if p.config_label == "vad")
    best = max((p for p in points if p.config_label == "policy"), key=lambda p: p.bleu)
    b_ok = matched > 0 and won >= 0.8 * matched and best.bleu >= vad.bleu

    again = train(init_policy(pairs[0].features.dim, seed=TRAIN_SEED), pairs, dpo_config())
    c_ok = policy_to_json(again.params).encode() == policy_to_json(report.params).encode()
    dt = time.perf_counter() - t0
    ok = a_ok and b_ok and c_ok and dt < 300
    detail = (
        f"(a) {len(pairs)} pairs, epoch loss {losses[0]:.4f} -> {losses[-1]:.4f} {'ok' if a_ok else 'FAIL'}; "
        f"(b) dominates {won}/{matched} matched fixed points, best policy BLEU {best.bleu:.2f} "
        f"@{best.latency_ms:.0f} ms (threshold {best.knob_value}) vs VAD {vad.bleu:.2f} "
        f"@{vad.latency_ms:.0f} ms {'ok' if b_ok else 'FAIL'}; "
        f"(c) bit-identical rerun {'ok' if c_ok else 'FAIL'}; {dt:.0f} s"
    )
    return ok, detail


def c8_streaming_causality():
    corpus = synth_corpus(SynthSpec(n_talks=20, seed=8))
    rng = np.random.default_rng(8)
    causal = determ = forced = True
    for x, _ in corpus:
        params = init_policy(x.dim, 4, seed=int(rng.integers(1 << 30)))
        params = params.with_theta(params.theta + rng.normal(0, 0.3, params.theta.size))
        for thr in (0.2, 0.5, 0.8):
            cfg = DecodeConfig(threshold=thr)
            r1, r2 = decode_streaming(params, x, cfg), decode_streaming(params, x, cfg)
            causal &= all(t >= b - 1e-9 for b, t in zip(r1.segmentation.boundaries, r1.decision_times))
            determ &= r1.segmentation == r2.segmentation and list(r1.decision_times) == list(r2.decision_times)
        silent = PolicyParams(4, x.dim, np.zeros(9 * x.dim), -50.0)
        for max_seg in (3.0, 5.0, 10.0):
            cfg = DecodeConfig(min_seg_s=1.0, max_seg_s=max_seg)
            got = decode_streaming(silent, x, cfg).segmentation.boundaries
            forced &= got == fixed_length(x.duration_s, max_seg).boundaries
    ok = causal and determ and forced
    return ok, f"causality {causal}, determinism {determ}, forced schedule == fixed-length {forced}"


def _mutations(text, rng, n=60):
    """Truncations, byte flips and token swaps of a valid file body."""
    raw = text.encode("utf-8")
    out = [b"", b"\xff\xfe", raw[: len(raw) // 2], raw + b"garbage"]
    for _ in range(n):
        kind = rng.integers(3)
        if kind == 0:
            out.append(raw[: int(rng.integers(1, len(raw)))])
        elif kind == 1:
            b = bytearray(raw)
            i = int(rng.integers(len(b)))
            b[i] = int(rng.integers(256))
            out.append(bytes(b))
        else:
            swaps = [("1", "\"1\""), ("[", "{"), (",", ",,"), ("0.", "-1e999"), ("true", "null"),
                     ("e", "NaN"), ("\n", "\n\n,"), ("\t", ",")]
            a, b_ = swaps[int(rng.integers(len(swaps)))]
            out.append(text.replace(a, b_, 1).encode("utf-8"))
    return out


def c9_format_roundtrips():
    corpus = synth_corpus(SynthSpec(n_talks=3, seed=9))
    x, talk = corpus[0]
    pairs = build_pair_dataset(corpus)
    params = init_policy(3, 4, seed=9)
    points = sweep_tradeoff(corpus, [SystemSpec("fixed", "fixed", (3.0, 5.0)), SystemSpec("vad", "vad", (0.3,))])
    feats = {f.id: f for f, _ in corpus}
    formats = {
        "features": (save_features_json, load_features_json, x, "f.json"),
        "talk": (save_talk, load_talk, talk, "t.json"),
        "pairs": (save_pairs, lambda p: load_pairs(p, feats), pairs, "p.jsonl"),
        "policy": (save_policy, load_policy, params, "policy.json"),
        "tradeoff": (write_tradeoff_csv, read_tradeoff_csv, points, "s.csv"),
    }
    rng = np.random.default_rng(9)
    failures, malformed = [], 0
    with tempfile.TemporaryDirectory() as tmp:
        for name, (save, load, obj, fname) in formats.items():
            p = Path(tmp) / fname
            save(p, obj)
            first = p.read_bytes()
            back = load(p)
            save(p, back)
            if back != obj or p.read_bytes() != first:
                failures.append(f"{name} round-trip")
            for body in _mutations(first.decode("utf-8"), rng):
                p.write_bytes(body)
                try:
                    load(p)
                except SchemaError:
                    malformed += 1
                except Exception as exc:  # anything else is a crash
                    failures.append(f"{name}: {type(exc).__name__}: {exc}"[:120])
    ok = not failures
    return ok, f"5 formats byte-stable, {malformed} malformed inputs rejected with SchemaError" if ok else str(
        failures[:4])


def c10_adapter_protocol():
    t0 = time.perf_counter()
    results = {}
    with AdapterSession.spawn([sys.executable, "-m", "segpref.echo_adapter", "--tokens", "a", "b"],
                              timeout_s=5) as s:
        results["loopback"] = s.request(0.0, 1.0) == ["a", "b"] and s.request(1.0, 2.0) == ["a", "b"]

    def expect(mode, exc_type, timeout_s=5.0):
        s = AdapterSession.spawn([sys.executable, str(ADAPTERS / "scripted_adapter.py"), mode], timeout_s=timeout_s)
        try:
            s.request(0.0, 1.0)
            return False
        except exc_type as exc:
            return exc_type is ProtocolError or not isinstance(exc, ProtocolError)
        finally:
            s.process.kill()
            s.close()

    results["timeout"] = expect("slow", TranslatorFailure, timeout_s=1.0)
    results["mid-stream close"] = expect("truncate", TranslatorFailure)
    results["id mismatch"] = expect("wrong-id", ProtocolError)
    dt = time.perf_counter() - t0
    ok = all(results.values()) and dt < 10
    return ok, ", ".join(f"{k} {'ok' if v else 'FAIL'}" for k, v in results.items()) + f" in {dt:.1f} s"


CRITERIA = [
    (1, "DPO loss closed forms", c1_loss_closed_forms),
    (2, "gradient vs finite differences", c2_gradient_check),
    (3, "beta-gap invariance", c3_beta_gap_invariance),
    (4, "metric exactness", c4_metric_exactness),
    (5, "oracle characterization", c5_oracle_characterization),
    (6, "pair construction soundness", c6_pair_soundness),
    (7, "training effectiveness", c7_training_effectiveness),
    (8, "streaming causality and determinism", c8_streaming_causality),
    (9, "format round-trips", c9_format_roundtrips),
    (10, "adapter protocol", c10_adapter_protocol),
]


@pytest.mark.parametrize("n,title,check", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(n, title, check, capsys):
    ok, detail = check()
    with capsys.disabled():
        print()
        emit(n, title, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for n, title, check in CRITERIA:
        ok, detail = check()
        emit(n, title, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)

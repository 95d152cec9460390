"""Command-line entry point: ``segpref <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or protocol error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ._io import atomic_write_text, dump_json, read_json
from .errors import SchemaError, SegprefError

logger = logging.getLogger("segpref")

METHODS = ("fixed", "vad", "policy", "external")


@dataclass
class RunConfig:
    corpus_dir: str = None
    out_dir: str = None
    policy_file: str = None
    pairs_file: str = None
    decode: dict = field(default_factory=dict)
    dpo: dict = field(default_factory=dict)
    pairs: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def load(cls, path) -> "RunConfig":
        obj = read_json(path, SchemaError)
        if not isinstance(obj, dict):
            raise SchemaError(f"{path}: config must be a JSON object")
        unknown = obj.keys() - {f.name for f in fields(cls)}
        if unknown:
            raise SchemaError(f"{path}: unknown config fields {sorted(unknown)}")
        return cls(**obj)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _pick(flag, config_value, default):
    if flag is not None:
        return flag
    if config_value is not None:
        return config_value
    return default


def _timing(cfg: RunConfig):
    from .translate import TimingConfig

    return TimingConfig(**cfg.timing)


def cmd_synth(args, cfg):
    from .corpus import SynthSpec, synth_corpus

    spec = SynthSpec.from_json(args.spec) if args.spec else SynthSpec(seed=cfg.seed)
    overrides = {k: v for k, v in (("n_talks", args.n_talks), ("seed", args.seed)) if v is not None}
    if overrides:
        spec = SynthSpec(**{**asdict(spec), **overrides})
    out = _pick(args.out, cfg.corpus_dir, None)
    if out is None:
        raise UsageError("synth: --out is required")
    synth_corpus(spec, out)
    print(f"wrote {spec.n_talks} talks to {out}")


def cmd_features(args, cfg):
    from .audio import extract_features, load_wav, save_features_json

    clip = load_wav(args.wav)
    save_features_json(args.out, extract_features(clip, args.hop_s, args.win_s))


def cmd_segment(args, cfg):
    from .audio import load_features_json
    from .policy import DecodeConfig, decode_streaming, load_policy
    from .segmenters import fixed_length, load_external_segmentation, segmentation_to_tsv, vad_segment

    features = load_features_json(args.features) if args.features else None
    duration = args.duration if args.duration is not None else (features.duration_s if features else None)
    if args.method == "fixed":
        if duration is None:
            raise UsageError("segment --method fixed needs --duration or --features")
        seg = fixed_length(duration, args.chunk_s)
    elif args.method == "external":
        if args.tsv is None or duration is None:
            raise UsageError("segment --method external needs --tsv and --duration or --features")
        seg = load_external_segmentation(args.tsv, duration)
    else:
        if features is None:
            raise UsageError(f"segment --method {args.method} needs --features")
        if args.method == "vad":
            seg = vad_segment(features, args.energy_offset, args.min_silence_s, args.min_seg_s or 0.5,
                              args.max_seg_s or 10.0)
        else:
            policy = _pick(args.policy, cfg.policy_file, None)
            if policy is None:
                raise UsageError("segment --method policy needs --policy")
            dec = {**cfg.decode, **{k: v for k, v in (("threshold", args.threshold), ("min_seg_s", args.min_seg_s),
                                                        ("max_seg_s", args.max_seg_s)) if v is not None}}
            seg = decode_streaming(load_policy(policy), features, DecodeConfig(**dec)).segmentation
    text = segmentation_to_tsv(seg)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_pairs(args, cfg):
    from .corpus import load_corpus
    from .pairs import GenConfig, ScoreConfig, build_pair_dataset, save_pairs

    corpus_dir = _pick(args.corpus, cfg.corpus_dir, None)
    out = _pick(args.out, cfg.pairs_file, None)
    if corpus_dir is None or out is None:
        raise UsageError("pairs: --corpus and --out are required")
    pc = dict(cfg.pairs)
    min_margin = _pick(args.min_margin, pc.pop("min_margin", None), 1.0)
    max_pairs = _pick(args.max_pairs, pc.pop("max_pairs", None), 10)
    lam = pc.pop("lam", 2.0)
    gen = GenConfig(**{"seed": _pick(args.seed, None, cfg.seed), **pc})
    pairs = build_pair_dataset(load_corpus(corpus_dir), gen, ScoreConfig(lam, _timing(cfg)), min_margin,
                               max_pairs, args.external)
    save_pairs(out, pairs)
    print(f"wrote {len(pairs)} pairs to {out}")


def cmd_train(args, cfg):
    from .corpus import load_corpus
    from .dpo import DpoConfig, train
    from .pairs import load_pairs
    from .policy import DEFAULT_CONTEXT, init_policy, save_policy

    pairs_file = _pick(args.pairs, cfg.pairs_file, None)
    if pairs_file is None:
        raise UsageError("train: --pairs is required")
    corpus_dir = _pick(args.corpus, cfg.corpus_dir, str(Path(pairs_file).parent))
    features = {x.id: x for x, _ in load_corpus(corpus_dir)}
    pairs = load_pairs(pairs_file, features)
    missing = sorted({p.talk_id for p in pairs if p.features is None})
    if missing:
        raise SchemaError(f"no features in {corpus_dir} for talks {missing[:5]}")
    dc = dict(cfg.dpo)
    for key, flag in (("beta", args.beta), ("epochs", args.epochs), ("learning_rate", args.lr), ("seed", args.seed)):
        if flag is not None:
            dc[key] = flag
    dc.setdefault("seed", cfg.seed)
    dpo_cfg = DpoConfig(**dc)
    context = _pick(args.context_frames, None, DEFAULT_CONTEXT)
    dim = pairs[0].features.dim if pairs else 3
    report = train(init_policy(dim, context, dpo_cfg.seed), pairs, dpo_cfg)
    out_policy = _pick(args.out_policy, cfg.policy_file, "policy.json")
    save_policy(out_policy, report.params)
    report_path = args.report or str(Path(out_policy).with_suffix("")) + ".report.json"
    report.save(report_path)
    print(f"trained on {report.pairs} pairs; epoch losses {[round(v, 6) for v in report.epoch_loss]}")


def cmd_eval(args, cfg):
    from .corpus import load_corpus
    from .metrics import evaluate, make_segmenter

    corpus_dir = _pick(args.corpus, cfg.corpus_dir, None)
    policy = _pick(args.policy, cfg.policy_file, None)
    if corpus_dir is None or policy is None or args.out is None:
        raise UsageError("eval: --corpus, --policy and --out are required")
    dec = dict(cfg.decode)
    threshold = _pick(args.threshold, dec.pop("threshold", None), 0.5)
    corpus = load_corpus(corpus_dir)
    seg = make_segmenter("policy", threshold, {"policy": policy, **dec})
    score, lat = evaluate(corpus, seg, _timing(cfg))
    atomic_write_text(args.out, dump_json({"talks": len(corpus), "threshold": threshold, "bleu": score,
                                           "laal_ms": lat}))
    print(f"BLEU {score:.2f}  LAAL {lat:.0f} ms over {len(corpus)} talks")


def load_systems(path):
    from .metrics import SystemSpec

    obj = read_json(path, SchemaError)
    if not isinstance(obj, list):
        raise SchemaError(f"{path}: systems file must hold a JSON list")
    base = Path(path).parent
    out = []
    for item in obj:
        try:
            opts = dict(item.get("options", {}))
            for key in ("policy", "dir"):
                if key in opts and not Path(opts[key]).is_absolute():
                    opts[key] = str(base / opts[key])
            out.append(SystemSpec(item["label"], item["method"], item.get("knobs", [0.0]), opts))
        except (KeyError, TypeError, AttributeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad system entry {item!r}: {exc}") from exc
    return out


def cmd_sweep(args, cfg):
    from .corpus import load_corpus
    from .metrics import sweep_tradeoff, write_tradeoff_csv

    corpus_dir = _pick(args.corpus, cfg.corpus_dir, None)
    if corpus_dir is None:
        raise UsageError("sweep: --corpus is required")
    points = sweep_tradeoff(load_corpus(corpus_dir), load_systems(args.systems), _timing(cfg))
    write_tradeoff_csv(args.out, points)
    print(f"wrote {len(points)} points to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="segpref", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON run configuration; explicit flags override it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--spec")
    s.add_argument("--out")
    s.add_argument("--n-talks", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("features", help="extract frame features from a WAV file")
    s.add_argument("--wav", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--hop-s", type=float, default=0.1)
    s.add_argument("--win-s", type=float, default=0.1)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("segment", help="segment one clip and print Segment TSV")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--features")
    s.add_argument("--duration", type=float)
    s.add_argument("--chunk-s", type=float, default=3.0)
    s.add_argument("--tsv")
    s.add_argument("--policy")
    s.add_argument("--threshold", type=float)
    s.add_argument("--energy-offset", type=float, default=10.0)
    s.add_argument("--min-silence-s", type=float, default=0.3)
    s.add_argument("--min-seg-s", type=float)
    s.add_argument("--max-seg-s", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("pairs", help="score candidates and build preference pairs")
    s.add_argument("--corpus")
    s.add_argument("--out")
    s.add_argument("--external", help="directory of <talk id>.tsv external segmentations")
    s.add_argument("--min-margin", type=float)
    s.add_argument("--max-pairs", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_pairs)

    s = sub.add_parser("train", help="train a boundary policy on preference pairs")
    s.add_argument("--pairs")
    s.add_argument("--corpus", help="corpus holding the pairs' features (default: the pairs file's directory)")
    s.add_argument("--out-policy")
    s.add_argument("--report")
    s.add_argument("--beta", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--context-frames", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="corpus BLEU and LAAL of a trained policy")
    s.add_argument("--corpus")
    s.add_argument("--policy")
    s.add_argument("--out")
    s.add_argument("--threshold", type=float)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="latency-quality tradeoff sweep to CSV")
    s.add_argument("--corpus")
    s.add_argument("--systems", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        args.func(args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (SegprefError, OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
        print(f"segpref: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

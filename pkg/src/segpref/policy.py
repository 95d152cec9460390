"""Trainable boundary policy.

The policy scores every frame with a linear function of the surrounding
``2c + 1`` feature frames and treats each frame as an independent Bernoulli
"cut here" decision. That gives a closed-form sequence log-likelihood
``log pi(y | x)`` for a segmentation ``y`` and a cheap streaming decoder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit, log_expit

from ._io import atomic_write_text, dump_json, read_json
from .audio import FrameFeatures
from .errors import DimensionMismatch, SchemaError
from .segmenters import EPS, Segmentation, _t

DEFAULT_CONTEXT = 4
INIT_BIAS = -2.0


@dataclass(eq=False)
class PolicyParams:
    context_frames: int
    feature_dim: int
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64).ravel()
        self.bias = float(self.bias)
        expected = (2 * self.context_frames + 1) * self.feature_dim
        if self.weights.size != expected:
            raise DimensionMismatch(
                f"{self.weights.size} weights, expected (2*{self.context_frames}+1)*{self.feature_dim}"
            )
        if not (np.isfinite(self.weights).all() and math.isfinite(self.bias)):
            raise ValueError("policy parameters must be finite")

    @property
    def theta(self) -> np.ndarray:
        """Flat parameter vector ``weights ⊕ bias``."""
        return np.append(self.weights, self.bias)

    def with_theta(self, theta: np.ndarray) -> "PolicyParams":
        return PolicyParams(self.context_frames, self.feature_dim, theta[:-1], theta[-1])

    def __eq__(self, other):
        if not isinstance(other, PolicyParams):
            return NotImplemented
        return (
            self.context_frames == other.context_frames
            and self.feature_dim == other.feature_dim
            and np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
        )


def init_policy(feature_dim: int, context_frames: int = DEFAULT_CONTEXT, seed: int = 0) -> PolicyParams:
    if feature_dim < 1 or context_frames < 0:
        raise ValueError("need feature_dim >= 1 and context_frames >= 0")
    rng = np.random.default_rng(seed)
    w = rng.uniform(-0.01, 0.01, size=(2 * context_frames + 1) * feature_dim)
    return PolicyParams(context_frames, feature_dim, w, INIT_BIAS)


def context_matrix(features: FrameFeatures, context_frames: int) -> np.ndarray:
    """Row ``t`` concatenates frames ``t-c .. t+c``, zero-padded at the edges."""
    c = context_frames
    x = features.frames
    padded = np.vstack([np.zeros((c, x.shape[1])), x, np.zeros((c, x.shape[1]))])
    # (T, d, 2c+1) -> (T, 2c+1, d) so each row reads frame by frame
    win = sliding_window_view(padded, 2 * c + 1, axis=0).transpose(0, 2, 1)
    return win.reshape(x.shape[0], -1)


def _check_dim(params: PolicyParams, features: FrameFeatures) -> None:
    if features.dim != params.feature_dim:
        raise DimensionMismatch(f"features have dim {features.dim}, policy expects {params.feature_dim}")


def boundary_logits(params: PolicyParams, features: FrameFeatures) -> np.ndarray:
    _check_dim(params, features)
    return context_matrix(features, params.context_frames) @ params.weights + params.bias


def labels_from_segmentation(seg: Segmentation, hop_s: float, T: int) -> np.ndarray:
    """Binary per-frame cut labels; the final clip-end boundary is not a cut."""
    if abs(seg.clip_duration_s - T * hop_s) > hop_s + EPS:
        raise ValueError(f"segmentation of {seg.clip_duration_s} s does not fit {T} frames of {hop_s} s")
    y = np.zeros(T)
    for b in seg.boundaries[:-1]:
        y[min(max(int(round(b / hop_s)), 0), T - 1)] = 1.0
    return y


def log_prob_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    # y*log(sigmoid(l)) + (1-y)*log(sigmoid(-l)), stable for large |l|
    return float(np.sum(labels * log_expit(logits) + (1.0 - labels) * log_expit(-logits)))


def seg_log_prob(params: PolicyParams, features: FrameFeatures, seg: Segmentation) -> float:
    """``log pi(seg | features)`` under independent per-frame Bernoullis."""
    logits = boundary_logits(params, features)
    return log_prob_from_logits(logits, labels_from_segmentation(seg, features.hop_s, features.T))


def seg_log_prob_grad(params: PolicyParams, features: FrameFeatures, seg: Segmentation) -> np.ndarray:
    """Gradient of :func:`seg_log_prob` w.r.t. ``params.theta``."""
    phi = context_matrix(features, params.context_frames)
    _check_dim(params, features)
    y = labels_from_segmentation(seg, features.hop_s, features.T)
    r = y - expit(phi @ params.weights + params.bias)
    return np.append(phi.T @ r, r.sum())


@dataclass(frozen=True)
class DecodeConfig:
    window_s: float = 4.0
    hop_s: float = 2.0
    threshold: float = 0.5
    min_seg_s: float = 1.0
    max_seg_s: float = 10.0

    def __post_init__(self):
        if not 0 < self.hop_s <= self.window_s:
            raise ValueError("need 0 < hop_s <= window_s")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0 < self.min_seg_s < self.max_seg_s:
            raise ValueError("need 0 < min_seg_s < max_seg_s")


@dataclass
class DecodeResult:
    segmentation: Segmentation
    decision_times: list = field(default_factory=list)

    def __iter__(self):
        yield self.segmentation
        yield self.decision_times


def _ticks(duration: float, cfg: DecodeConfig):
    k = math.ceil(cfg.window_s / cfg.hop_s - EPS)
    while k * cfg.hop_s < duration - EPS:
        yield _t(k * cfg.hop_s)
        k += 1
    yield duration


def decode_streaming(params: PolicyParams, features: FrameFeatures, cfg: DecodeConfig = DecodeConfig()) -> DecodeResult:
    """Sliding-window next-breakpoint decoding over a simulated clock.

    At each tick ``k * cfg.hop_s`` (starting once a full window has arrived)
    every frame that has completely arrived becomes visible. Inside the open
    segment the earliest unscanned frame at least ``min_seg_s`` after the last
    boundary whose probability reaches the threshold becomes the next
    boundary, decided at that tick. A segment that reaches ``max_seg_s`` is
    cut there, decided at the first tick where that frame is visible.
    """
    probs = expit(boundary_logits(params, features))
    hop = features.hop_s
    T, D = features.T, features.duration_s
    min_f = max(1, math.ceil(cfg.min_seg_s / hop - EPS))
    max_f = max(min_f, int(round(cfg.max_seg_s / hop)))
    prev = 0
    scanned = 0
    bounds, times = [], []
    for tick in _ticks(D, cfg):
        visible = T if tick >= D else min(T, int(math.floor(tick / hop + EPS)))
        while True:
            forced = prev + max_f
            lo = max(scanned, prev + min_f)
            hi = min(visible, forced + 1)
            hits = np.flatnonzero(probs[lo:hi] >= cfg.threshold) if hi > lo else ()
            if len(hits):
                cut = lo + int(hits[0])
            elif forced < visible and forced * hop < D - EPS:
                cut = forced
            else:
                scanned = max(scanned, hi)
                break
            bounds.append(_t(cut * hop))
            times.append(tick)
            prev = cut
            scanned = cut + 1
    bounds.append(D)
    times.append(D)
    return DecodeResult(Segmentation(D, tuple(bounds), cfg.min_seg_s), times)


def policy_to_json(params: PolicyParams) -> str:
    return dump_json({
        "context_frames": params.context_frames,
        "feature_dim": params.feature_dim,
        "weights": params.weights.tolist(),
        "bias": params.bias,
    })


def save_policy(path, params: PolicyParams) -> None:
    atomic_write_text(path, policy_to_json(params))


def load_policy(path) -> PolicyParams:
    obj = read_json(path, SchemaError)
    if not isinstance(obj, dict):
        raise SchemaError("policy file must hold a JSON object")
    try:
        c, d = obj["context_frames"], obj["feature_dim"]
        w, b = obj["weights"], obj["bias"]
    except KeyError as exc:
        raise SchemaError(f"policy file missing field {exc}") from exc
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in (c, d)):
        raise SchemaError("context_frames and feature_dim must be integers")
    if not isinstance(w, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in w):
        raise SchemaError("weights must be a list of numbers")
    if isinstance(b, bool) or not isinstance(b, (int, float)):
        raise SchemaError("bias must be a number")
    try:
        return PolicyParams(c, d, w, b)
    except (DimensionMismatch, ValueError) as exc:
        raise SchemaError(str(exc)) from exc

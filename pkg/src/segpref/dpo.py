"""Preference optimization of the boundary policy.

The loss for one pair is ``-log sigmoid(beta * (log pi(y_pref|x) - log pi(y_dispref|x)))``
with no reference-policy term. Optimization is AdamW with one pair per step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from ._io import atomic_write_text, dump_json
from .errors import EmptyDataset
from .pairs import PreferencePair
from .policy import PolicyParams, boundary_logits, labels_from_segmentation, log_prob_from_logits, seg_log_prob_grad

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.5
    epochs: int = 5
    batch_size: int = 1
    learning_rate: float = 5e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size != 1:
            raise ValueError("only batch_size=1 is supported")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def softplus(x: float) -> float:
    """``log(1 + e^x)`` without overflow."""
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def log_prob_gap(params: PolicyParams, pair: PreferencePair) -> float:
    """``log pi(y_pref|x) - log pi(y_dispref|x)``."""
    x = pair.features
    logits = boundary_logits(params, x)
    y_pref = labels_from_segmentation(pair.y_pref, x.hop_s, x.T)
    y_disp = labels_from_segmentation(pair.y_dispref, x.hop_s, x.T)
    return log_prob_from_logits(logits, y_pref) - log_prob_from_logits(logits, y_disp)


def loss_from_gap(gap: float, beta: float) -> float:
    # -log sigmoid(z) == log(1 + e^-z)
    return softplus(-beta * gap)


def dpo_loss(params: PolicyParams, pair: PreferencePair, beta: float) -> float:
    return loss_from_gap(log_prob_gap(params, pair), beta)


def dpo_grad(params: PolicyParams, pair: PreferencePair, beta: float) -> np.ndarray:
    """Analytic gradient of :func:`dpo_loss` w.r.t. ``params.theta``."""
    z = beta * log_prob_gap(params, pair)
    d_gap = seg_log_prob_grad(params, pair.features, pair.y_pref) - seg_log_prob_grad(
        params, pair.features, pair.y_dispref
    )
    return -expit(-z) * beta * d_gap


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_step(state: AdamState, params: PolicyParams, grad: np.ndarray, cfg: DpoConfig):
    """One decoupled-weight-decay Adam update. Returns ``(params', state')``."""
    theta = params.theta
    if grad.shape != theta.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {theta.shape}")
    t = state.step + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    theta = theta - cfg.learning_rate * cfg.weight_decay * theta
    theta = theta - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return params.with_theta(theta), AdamState(m, v, t)


@dataclass
class TrainReport:
    epoch_loss: list
    params: PolicyParams
    pairs: int
    config: DpoConfig = field(default_factory=DpoConfig)

    def to_json(self) -> str:
        return dump_json({"epoch_loss": self.epoch_loss, "pairs": self.pairs, "config": asdict(self.config)})

    def save(self, path) -> None:
        atomic_write_text(path, self.to_json())


def train(params: PolicyParams, pairs: list, cfg: DpoConfig = DpoConfig()) -> TrainReport:
    """Sequential batch-1 AdamW on the preference loss.

    Each epoch visits the pairs in a fresh permutation drawn from
    ``cfg.seed``; the reported epoch loss is the mean of the per-step losses
    measured just before each update.
    """
    if not pairs:
        raise EmptyDataset("no preference pairs to train on")
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.zeros(params.theta.size)
    epoch_loss = []
    for epoch in range(cfg.epochs):
        losses = []
        for i in rng.permutation(len(pairs)):
            pair = pairs[i]
            losses.append(dpo_loss(params, pair, cfg.beta))
            params, state = adamw_step(state, params, dpo_grad(params, pair, cfg.beta), cfg)
        epoch_loss.append(float(np.mean(losses)))
        logger.info("epoch %d/%d  mean loss %.6f", epoch + 1, cfg.epochs, epoch_loss[-1])
    return TrainReport(epoch_loss, params, len(pairs), cfg)

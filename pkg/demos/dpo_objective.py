"""
The preference loss up close
============================

Loss and gradient of the reference-free preference objective for a single
pair, checked against finite differences, then a few AdamW steps.
"""
import numpy as np

from segpref.audio import FrameFeatures
from segpref.dpo import AdamState, DpoConfig, adamw_step, dpo_grad, dpo_loss, log_prob_gap
from segpref.pairs import CandidateScore, PreferencePair
from segpref.policy import init_policy
from segpref.segmenters import Segmentation

# a 4 s clip with a pause at 2 s
frames = np.zeros((40, 3))
frames[:, 0] = -2.0
frames[18:22, 0] = -23.0
x = FrameFeatures("toy", 0.1, 4.0, frames)
good, bad = Segmentation(4.0, (2.0, 4.0)), Segmentation(4.0, (1.0, 4.0))
pair = PreferencePair("toy", good, bad, CandidateScore(100, 2200), CandidateScore(60, 1200), features=x)

params = init_policy(3, context_frames=2, seed=0)
beta = 0.5
print("gap", log_prob_gap(params, pair), "loss", dpo_loss(params, pair, beta), "(ln 2 =", np.log(2), ")")

g = dpo_grad(params, pair, beta)
h = 1e-5
fd = np.array([(dpo_loss(params.with_theta(params.theta + h * e), pair, beta)
                - dpo_loss(params.with_theta(params.theta - h * e), pair, beta)) / (2 * h)
               for e in np.eye(params.theta.size)])
print("max |analytic - numeric| =", np.abs(g - fd).max())

cfg = DpoConfig(learning_rate=0.05)
state = AdamState.zeros(params.theta.size)
for step in range(20):
    params, state = adamw_step(state, params, dpo_grad(params, pair, beta), cfg)
    if step % 5 == 4:
        print(f"step {step + 1:2d}: loss {dpo_loss(params, pair, beta):.4f}")

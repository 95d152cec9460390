"""Shared builders for tests that need random policies and preference pairs."""
import numpy as np

from segpref.audio import FrameFeatures
from segpref.pairs import CandidateScore, PreferencePair
from segpref.policy import PolicyParams
from segpref.segmenters import Segmentation


def random_pair(rng, T=None, d=3, c=None):
    """A random policy and a pair of distinct segmentations over random features."""
    T = T or int(rng.integers(5, 51))
    c = int(rng.integers(0, 5)) if c is None else c
    x = FrameFeatures("t", 0.1, round(T * 0.1, 9), rng.standard_normal((T, d)))

    def seg():
        k = int(rng.integers(0, min(4, T - 1) + 1))
        cuts = sorted(set(int(v) for v in rng.integers(1, T, size=k)))
        return Segmentation(x.duration_s, tuple(round(v * 0.1, 9) for v in cuts) + (x.duration_s,))

    a, b = seg(), seg()
    while a == b:
        b = seg()
    params = PolicyParams(c, d, rng.standard_normal((2 * c + 1) * d) * 0.3, rng.standard_normal())
    pair = PreferencePair("t", a, b, CandidateScore(60, 1000), CandidateScore(50, 1000), ("a", "b"), x)
    return params, pair


def central_differences(f, theta, h=1e-5):
    out = np.zeros_like(theta)
    for i in range(theta.size):
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        out[i] = (f(up) - f(dn)) / (2 * h)
    return out


def rel_error(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-300)

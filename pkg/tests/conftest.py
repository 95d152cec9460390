import numpy as np
import pytest

from segpref.audio import SILENCE_LOG_ENERGY, FrameFeatures, n_frames
from segpref.corpus import SynthSpec, synth_corpus


def make_features(log_energy, hop_s=0.1, talk_id="clip", duration_s=None):
    """Feature matrix with the given log-energy column and consistent ZCR/delta."""
    e = np.asarray(log_energy, dtype=float)
    zcr = np.where(e > SILENCE_LOG_ENERGY + 1.0, 0.2, 0.0)
    delta = np.concatenate([[0.0], np.diff(e)])
    if duration_s is None:
        duration_s = round(len(e) * hop_s, 9)
    assert n_frames(duration_s, hop_s) == len(e)
    return FrameFeatures(talk_id, hop_s, duration_s, np.column_stack([e, zcr, delta]))


def speech_with_silences(duration_s, silent_frames, hop_s=0.1):
    T = n_frames(duration_s, hop_s)
    e = np.full(T, -2.0)
    for a, b in silent_frames:
        e[a:b] = SILENCE_LOG_ENERGY
    return make_features(e, hop_s, duration_s=duration_s)


@pytest.fixture(scope="session")
def small_corpus():
    return synth_corpus(SynthSpec(n_talks=6, seed=7))


@pytest.fixture(scope="session")
def talk_and_features(small_corpus):
    features, talk = small_corpus[0]
    return talk, features

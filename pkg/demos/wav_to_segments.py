"""
From a WAV file to segment boundaries
=====================================

Write a short clip with a pause in the middle, extract frame features and
cut it three ways.
"""
import tempfile
from pathlib import Path

import numpy as np

from segpref.audio import AudioClip, extract_features, load_wav, write_wav
from segpref.segmenters import fixed_length, perturb_segmentation, segmentation_to_tsv, vad_segment

sr = 16000
tone = 0.3 * np.sin(2 * np.pi * 220 * np.arange(2 * sr) / sr)
clip = AudioClip("demo", sr, np.concatenate([tone, np.zeros(sr // 2), tone]))

path = Path(tempfile.mkdtemp()) / "demo.wav"
write_wav(path, clip)
x = extract_features(load_wav(path))
print(f"{x.T} frames of {x.dim} features; log-energy ranges {x.frames[:, 0].min():.1f} .. {x.frames[:, 0].max():.1f}")

# every 1.5 s, whatever is being said
print(segmentation_to_tsv(fixed_length(x.duration_s, 1.5)))

# cut in the middle of the silence
vad = vad_segment(x)
print(segmentation_to_tsv(vad))

# jittered copies are how extra training candidates are made
print(perturb_segmentation(vad, jitter_s=0.3, seed=1).boundaries)

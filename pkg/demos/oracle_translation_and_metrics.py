"""
Oracle translation, BLEU and lagging
====================================

The oracle translator only goes wrong where a clause is cut in two. That
makes BLEU a direct readout of segmentation quality.
"""
from segpref.corpus import SynthSpec, synth_corpus
from segpref.metrics import average_lagging, bleu, laal
from segpref.segmenters import Segmentation, fixed_length, vad_segment
from segpref.translate import run_pipeline

x, talk = synth_corpus(SynthSpec(n_talks=1, seed=3))[0]
print(talk.id, f"{talk.duration_s:.1f} s,", len(talk.words), "words in", len(talk.clauses), "clauses")

for name, seg in [("whole talk", Segmentation(talk.duration_s, (talk.duration_s,))),
                  ("fixed 3 s", fixed_length(talk.duration_s, 3.0)),
                  ("vad", vad_segment(x))]:
    trace, _ = run_pipeline(x, talk, seg)
    print(f"{name:>10}: {len(seg)} chunks, {talk.split_clauses(seg)} split clauses, "
          f"BLEU {bleu(trace.tokens, talk.reference):6.2f}, AL {average_lagging(trace, len(talk.reference)):7.0f} ms, "
          f"LAAL {laal(trace, len(talk.reference)):7.0f} ms")

# what a cut clause looks like
trace, _ = run_pipeline(x, talk, fixed_length(talk.duration_s, 3.0))
print(" ".join(trace.tokens[:20]))

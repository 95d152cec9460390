"""
Talking to an external translator
=================================

Any process that answers newline-delimited JSON requests can stand in for
the oracle. Here the bundled echo adapter plays that role.
"""
import sys

from segpref.corpus import SynthSpec, synth_corpus
from segpref.segmenters import vad_segment
from segpref.translate import AdapterSession, AdapterTranslator, run_pipeline

x, talk = synth_corpus(SynthSpec(n_talks=1, seed=0))[0]

cmd = [sys.executable, "-m", "segpref.echo_adapter", "--tokens", "hallo", "welt"]
with AdapterSession.spawn(cmd, timeout_s=10) as session:
    trace, seg = run_pipeline(x, talk, vad_segment(x), AdapterTranslator(session))

print(len(seg), "segments sent")
print(list(zip(trace.tokens, trace.emit_ms))[:6])

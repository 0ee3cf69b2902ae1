"""
Train a small spotter end to end
================================

Synthetic "speech" stands in for a real corpus: every character has a
fixed feature template, held for a few frames and buried in noise. We
train a 3x32 LSTM with CTC on a stream of concatenated sentences, then
spot two keyword sets in a separate evaluation stream. Long keywords
should come out well ahead of short ones, which also hide inside other
words. Takes about four minutes on one CPU core.
"""

import logging
import time

import numpy as np

from ctckws.decoder import KeywordSpotter, build_keyword_network
from ctckws.evaluate import GroundTruthOccurrence, events_at, latency_stats, match_detections, pr_sweep
from ctckws.features import fit_normalizer, normalize
from ctckws.lstm import NetworkConfig, StreamState, forward_frames
from ctckws.synth import (DEFAULT_VOCABULARY, MONO_KEYWORDS, MULTI_KEYWORDS, SynthConfig,
                          build_corpus, concatenate_stream)
from ctckws.training import train_stream

# quiet the per-utterance notices about sentences too long for the unroll window
logging.basicConfig(level=logging.ERROR)

sc = SynthConfig(noise_std=1.0)
train = build_corpus(DEFAULT_VOCABULARY, 200, sc, seed=11)
val = build_corpus(DEFAULT_VOCABULARY, 30, sc, seed=77)
stream = concatenate_stream(build_corpus(DEFAULT_VOCABULARY, 100, sc, seed=12345), sc, seed=999)
print(f"training frames {train.num_frames}, evaluation frames {len(stream.features)}")
print("example sentence:", train.utterances[0].text)

stats = fit_normalizer(np.vstack([u.features for u in train.utterances]))


def prep(corpus):
    return [(normalize(u.features, stats).astype(np.float32), u.labels) for u in corpus.utterances]


# Updates every 256 frames, back-propagating through the last 512.
cfg = NetworkConfig(layer_sizes=[32, 32, 32], unroll_length=512, update_period=256, seed=1)
t0 = time.time()


def progress(rec):
    if rec.update % 250 == 0:
        print(f"  update {rec.update:5d}  loss/frame {rec.loss:.3f}  {time.time() - t0:5.0f} s")


res = train_stream(cfg, prep(train), 2000, validation=prep(val), validate_every=250,
                   callback=progress)
print("validation loss:", [round(v, 3) for _, v in res.validation])

# Run the trained network over the evaluation stream once, then decode.
post, _ = forward_frames(res.params, cfg, normalize(stream.features, stats).astype(np.float32),
                         StreamState.zeros(cfg))
truth = [GroundTruthOccurrence(w, e) for w, e in stream.occurrences]

print(f"\n{'keywords':>8} {'decoder':>18} {'max-F1':>7} {'median latency':>15}")
for name, kws in [("long", MULTI_KEYWORDS), ("short", MONO_KEYWORDS)]:
    nets = [build_keyword_network(k) for k in kws]
    for mode, sem in [("keyword-only", "sum"), ("keyword-only", "max"), ("filler", "max")]:
        out = KeywordSpotter(nets, mode, sem).process(post)
        scores = {k: out[:, i] for i, k in enumerate(kws)}
        sweep = pr_sweep(scores, truth, np.linspace(0, 6, 121))
        best = events_at(scores, {k: len(k) for k in kws}, sweep.best.threshold)
        lat = latency_stats(match_detections(best, [t for t in truth if t.keyword in scores]).pairs)
        print(f"{name:>8} {mode + '/' + sem:>18} {sweep.max_f1:7.3f} {lat.median_ms:12.0f} ms")

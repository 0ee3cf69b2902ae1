"""
Why the word boundary matters
=============================

A keyword network is the chain ``_ k e y w o r d _``. The leading and
trailing boundary labels stop it from firing on a keyword hidden inside a
longer word. We build idealized posteriors for "honey" and "honeymoon" and
watch the score for the keyword "honey" under both decoders.
"""

import numpy as np

from ctckws.ctc import DEFAULT_ALPHABET
from ctckws.decoder import KeywordSpotter, build_keyword_network, detect

A = DEFAULT_ALPHABET


def posteriors(text, frames_per_char=3, confidence=0.9):
    """Each character held for a few frames, with blanks between letters."""
    rows = []
    for ch in text:
        for k in range(frames_per_char):
            y = np.full(len(A), (1 - confidence) / (len(A) - 1))
            y[A.blank_index if k == frames_per_char - 1 else A.index(ch)] = confidence
            rows.append(y)
    return np.array(rows)


net = build_keyword_network("honey", per_char_threshold=1.0)
print("keyword chain:", [A.labels[i] for i in net.node_labels])
print(f"fires when the score exceeds {net.score_threshold:.1f}")

for utterance in ["_honey_", "_honeymoon_"]:
    y = posteriors(utterance)
    for mode, semantics in [("keyword-only", "sum"), ("keyword-only", "max"), ("filler", "max")]:
        scores = KeywordSpotter([net], mode, semantics).process(y)[:, 0]
        events = detect(scores, net.score_threshold, keyword="honey")
        print(f"{utterance:>12} {mode:>12}/{semantics}: best score {scores.max():8.2f}, "
              f"detections at frames {[e.frame for e in events]}")

# The sum over alignments is never below the best single alignment. Where
# the keyword peaks, one alignment carries most of the mass.
y = posteriors("_honey_")
s_sum = KeywordSpotter([net], semantics="sum").process(y)[:, 0]
s_max = KeywordSpotter([net], semantics="max").process(y)[:, 0]
peak = int(np.argmax(s_sum))
print(f"\nat the peak (frame {peak}): sum {s_sum[peak]:.3f}, max {s_max[peak]:.3f}")

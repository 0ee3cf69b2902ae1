"""
CTC on a toy problem
====================

Connectionist temporal classification scores a transcription by summing
over every framewise path that collapses to it. Here we compare the
forward-backward result with brute-force enumeration, then look at the
gradient the network is trained with.
"""

import numpy as np

from ctckws.ctc import (DEFAULT_ALPHABET, collapse_path, ctc_grad, ctc_log_likelihood,
                        enumerate_paths_oracle)

A = DEFAULT_ALPHABET

# Collapsing merges repeats first and then drops blanks, so a blank between
# two identical letters is what keeps them apart.
for path in ["--hh-e-ll-l-oo", "hello", "h-e-l-l-o"]:
    print(f"{path:>16} -> {A.decode(collapse_path([A.index(c) for c in path]))}")

# A three-label world: 'a', 'b' and the blank (index 2). Random posteriors
# over 6 frames.
rng = np.random.default_rng(0)
y = rng.dirichlet(np.ones(3), size=6)
seq = [0, 1, 0]

dp = ctc_log_likelihood(y, seq, blank=2)
brute = enumerate_paths_oracle(y, seq, blank=2)
print(f"\nlog p('aba') forward-backward {dp:.12f}")
print(f"log p('aba') enumeration      {np.log(brute):.12f}  ({3 ** 6} paths)")

# A repeated label needs a blank in between, so 'aa' cannot fit in 2 frames.
print("log p('aa' | 2 frames) =", ctc_log_likelihood(y[:2], [0, 0], blank=2))

# The loss gradient with respect to the pre-softmax activations is the
# posterior minus the state occupancy. It sums to zero on every frame.
logits = np.log(y)
loss, grad = ctc_grad(logits, seq, blank=2)
print(f"\nloss {loss:.4f}; per-frame gradient sums {np.round(grad.sum(axis=1), 12)}")

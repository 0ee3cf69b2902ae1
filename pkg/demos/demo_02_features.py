"""
Filterbank features, batch and streaming
========================================

The front end turns 16 kHz audio into 123-dimensional frames every 10 ms:
40 log mel energies plus log frame energy, with first and second
derivatives. The streaming featurizer emits the same frames as the batch
version while holding only a few frames of context.
"""

import numpy as np

from ctckws.features import StreamingFeaturizer, compute_features, fit_normalizer, normalize

# One second of a rising tone with a little noise.
rng = np.random.default_rng(0)
t = np.arange(16000) / 16000
audio = 0.3 * np.sin(2 * np.pi * (200 + 1500 * t) * t) + 0.01 * rng.standard_normal(len(t))

feats = compute_features(audio)
print("frames x dims:", feats.shape)

# The strongest mel band climbs with the tone's frequency.
peaks = feats[::10, :40].argmax(axis=1)
print("strongest band every 100 ms:", peaks)

# Feed the same audio in irregular pieces, as a microphone would.
fz = StreamingFeaturizer()
pieces, pos = [], 0
while pos < len(audio):
    n = int(rng.integers(50, 3000))
    pieces.append(fz.push(audio[pos:pos + n]))
    pos += n
pieces.append(fz.flush())
streamed = np.vstack(pieces)
print("streaming vs batch, max abs difference:", np.abs(streamed - feats).max())

# Mean and variance normalization is fitted once on training data and then
# applied frame by frame.
stats = fit_normalizer(feats)
z = normalize(feats, stats)
print(f"normalized: max |mean| {np.abs(z.mean(0)).max():.1e}, "
      f"max |std - 1| {np.abs(z.std(0) - 1).max():.1e}")

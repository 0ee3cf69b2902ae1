"""Constant-memory spotting over unbounded input.

A :class:`SpottingPipeline` chains the optional front end (audio to
features), the normalizer and network (features to posteriors), the
keyword decoder and one peak detector per keyword. Every stage carries its
own state, so feeding a stream in any chunking gives the same events.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .decoder import (DEFAULT_REFRACTORY, DetectionEvent, KeywordSpotter, StreamingDetector,
                      build_keyword_network)
from .features import StreamingFeaturizer, normalize
from .lstm import StreamState, forward_frames
from .modelio import Model


class SpottingPipeline:
    def __init__(self, keywords: Sequence[str], model: Model | None = None,
                 mode: str = "keyword-only", semantics: str = "sum",
                 per_char_threshold: float = 1.0, refractory: int = DEFAULT_REFRACTORY,
                 alphabet=None):
        if alphabet is None:
            alphabet = model.alphabet if model is not None else None
        kw_args = {} if alphabet is None else {"alphabet": alphabet}
        self.networks = [build_keyword_network(k, per_char_threshold=per_char_threshold, **kw_args)
                         for k in keywords]
        self.model = model
        self.spotter = KeywordSpotter(self.networks, mode, semantics, **kw_args)
        self.detectors = [StreamingDetector(n.score_threshold, refractory, n.keyword)
                          for n in self.networks]
        self._featurizer = None
        self._state = StreamState.zeros(model.config) if model is not None else None

    @property
    def keywords(self) -> list[str]:
        return [n.keyword for n in self.networks]

    def push_posteriors(self, posteriors):
        """Decode posterior frames; returns ``(scores, events)``."""
        scores = self.spotter.process(posteriors)
        events = []
        for row in scores:
            for k, det in enumerate(self.detectors):
                events += det.push(row[k])
        return scores, sorted(events)

    def push_features(self, frames):
        if self.model is None:
            raise ValueError("feature input needs a model")
        m = self.model
        x = normalize(np.asarray(frames, dtype=np.float64), m.stats).astype(m.config.dtype)
        post, self._state = forward_frames(m.params, m.config, x, self._state)
        return self.push_posteriors(post)

    def push_audio(self, samples):
        if self._featurizer is None:
            self._featurizer = StreamingFeaturizer()
        return self.push_features(self._featurizer.push(samples))

    def flush(self):
        """End of stream: drain the front end lookahead and the detectors."""
        scores = np.zeros((0, len(self.networks)))
        events: list[DetectionEvent] = []
        if self._featurizer is not None:
            scores, events = self.push_features(self._featurizer.flush())
        for det in self.detectors:
            events += det.flush()
        return scores, sorted(events)

"""Truncated-BPTT CTC training on an endless stream of concatenated utterances.

The stream is built by drawing utterances in random order, epoch after
epoch, and placing them back to back. The network state is never reset.
Every ``update_period`` frames the trainer runs the new frames forward,
back-propagates through the last ``unroll_length`` frames, and takes one
SGD step. Each utterance contributes its exact CTC loss once: in the
update whose newest frames contain its last frame, provided the whole
utterance lies inside that update's window. Longer utterances are skipped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import ctc
from .ctc import DEFAULT_ALPHABET, Alphabet
from .lstm import (NetworkConfig, StreamState, backward_sequence, concat_caches,
                   forward_sequence, init_params, slice_cache)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


class EmptyCorpusError(ValueError):
    pass


def utterance_target(labels: Sequence[int], alphabet: Alphabet = DEFAULT_ALPHABET) -> list[int]:
    """Transcription of one stream segment: the utterance followed by a word boundary."""
    labels = list(labels)
    if not labels or labels[-1] != alphabet.boundary_index:
        labels.append(alphabet.boundary_index)
    return labels


def random_stream(corpus: Sequence, rng: np.random.Generator) -> Iterator:
    """Endless random concatenation order: reshuffle the corpus every epoch."""
    if len(corpus) == 0:
        raise EmptyCorpusError("training corpus is empty")
    while True:
        for i in rng.permutation(len(corpus)):
            yield corpus[i]


def sequence_loss_and_grads(params, config: NetworkConfig, features, labels,
                            blank: int | None = None):
    """Full-BPTT CTC loss and parameter gradients for one utterance from a zero state."""
    logits, cache, _ = forward_sequence(params, config, features, StreamState.zeros(config))
    loss, dlogits = ctc.ctc_grad(logits, labels, blank)
    return loss, backward_sequence(params, config, cache, dlogits)


def utterance_loss(params, config: NetworkConfig, features, labels, blank: int | None = None) -> float:
    logits, _, _ = forward_sequence(params, config, features, StreamState.zeros(config))
    return -ctc.ctc_log_likelihood(ctc.softmax_rows(logits), labels, blank)


@dataclass
class UpdateRecord:
    update: int
    frames: int  # stream position after the update
    loss: float  # mean CTC loss per frame over the scored segments; nan if none
    segments: int
    grad_norm: float
    learning_rate: float


@dataclass
class _Segment:
    start: int
    end: int  # exclusive
    labels: list[int]


class StreamTrainer:
    def __init__(self, config: NetworkConfig, corpus: Sequence, params=None,
                 alphabet: Alphabet = DEFAULT_ALPHABET, stream: Iterable | None = None):
        self.config = config
        self.alphabet = alphabet
        self.params = init_params(config) if params is None else params
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.learning_rate = config.learning_rate
        rng = np.random.default_rng(config.seed)
        self._source = iter(stream) if stream is not None else random_stream(corpus, rng)
        self._pending: list[np.ndarray] = []  # feature blocks not yet consumed
        self._pending_frames = 0
        self._produced = 0  # absolute frames pulled from the source
        self._segments: list[_Segment] = []
        self.position = 0
        self.state = StreamState.zeros(config)
        self._tail = None  # cache for frames [position - tail_len, position)
        self.history: list[UpdateRecord] = []
        self.last_grads = None
        self.skipped_segments = 0

    def _fill(self, n: int):
        while self._pending_frames < n:
            try:
                features, labels = next(self._source)
            except StopIteration:
                break
            features = np.asarray(features)
            if features.ndim != 2 or features.shape[1] != self.config.input_dim:
                raise ValueError(f"utterance features must be (T, {self.config.input_dim})")
            start = self._produced
            self._produced += len(features)
            self._segments.append(_Segment(start, self._produced,
                                           utterance_target(labels, self.alphabet)))
            self._pending.append(features)
            self._pending_frames += len(features)

    def _take(self, n: int) -> np.ndarray:
        self._fill(n)
        if self._pending_frames == 0:
            return np.zeros((0, self.config.input_dim))
        block = np.concatenate(self._pending)
        out, rest = block[:n], block[n:]
        self._pending = [rest] if len(rest) else []
        self._pending_frames = len(rest)
        return out

    def step(self) -> UpdateRecord | None:
        """Consume ``update_period`` new frames and apply one weight update."""
        cfg = self.config
        frames = self._take(cfg.update_period)
        if len(frames) == 0:
            return None
        logits_new, cache_new, self.state = forward_sequence(self.params, cfg, frames, self.state)
        new_end = self.position + len(frames)
        cache = cache_new if self._tail is None else concat_caches(self._tail, cache_new)
        win_len = len(cache["top"])
        win_start = new_end - win_len
        top = cache["top"]
        logits = top @ self.params["softmax.W"].T + self.params["softmax.b"]
        if not np.all(np.isfinite(logits[-len(frames):])):
            raise TrainingDiverged(f"non-finite network output at update {len(self.history)}")

        dlogits = np.zeros(logits.shape, dtype=np.float64)
        total_loss = 0.0
        total_frames = 0
        n_seg = 0
        keep = []
        for seg in self._segments:
            if seg.end <= self.position:
                continue  # finished in an earlier update
            if seg.end > new_end:
                keep.append(seg)
                continue
            if seg.start < win_start:
                self.skipped_segments += 1
                log.warning("utterance of %d frames exceeds the unroll window; skipped",
                            seg.end - seg.start)
                continue
            a, b = seg.start - win_start, seg.end - win_start
            try:
                loss, g = ctc.ctc_grad(logits[a:b], seg.labels, self.alphabet.blank_index)
            except ctc.InfeasibleAlignmentError as exc:
                self.skipped_segments += 1
                log.warning("skipping segment: %s", exc)
                continue
            dlogits[a:b] += g
            total_loss += loss
            total_frames += b - a
            n_seg += 1
        self._segments = keep

        grad_norm = 0.0
        if n_seg:
            if not math.isfinite(total_loss):
                raise TrainingDiverged(f"non-finite CTC loss at update {len(self.history)}")
            dlogits /= total_frames
            grads = backward_sequence(self.params, cfg, cache, dlogits)
            grad_norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if not math.isfinite(grad_norm):
                raise TrainingDiverged(f"non-finite gradient at update {len(self.history)}")
            scale = 1.0
            if cfg.clip_norm and grad_norm > cfg.clip_norm:
                scale = cfg.clip_norm / grad_norm
            for k, p in self.params.items():
                v = self.velocity[k]
                v *= cfg.momentum
                v -= (self.learning_rate * scale * grads[k]).astype(v.dtype)
                p += v
            self.last_grads = grads
        else:
            self.last_grads = None

        keep_len = cfg.unroll_length - cfg.update_period
        self._tail = slice_cache(cache, max(win_len - keep_len, 0)) if keep_len > 0 else None
        self.position = new_end
        rec = UpdateRecord(len(self.history), new_end,
                           total_loss / total_frames if n_seg else float("nan"),
                           n_seg, grad_norm, self.learning_rate)
        self.history.append(rec)
        return rec


@dataclass
class TrainingResult:
    params: dict
    history: list[UpdateRecord]
    validation: list[tuple[int, float]] = field(default_factory=list)
    skipped_segments: int = 0


def validation_loss(params, config: NetworkConfig, corpus: Sequence,
                    alphabet: Alphabet = DEFAULT_ALPHABET) -> float:
    """Mean per-frame CTC loss with every utterance decoded from a zero state."""
    total, frames = 0.0, 0
    for features, labels in corpus:
        total += utterance_loss(params, config, features, utterance_target(labels, alphabet),
                                alphabet.blank_index)
        frames += len(features)
    return total / max(frames, 1)


def train_stream(config: NetworkConfig, corpus: Sequence, updates: int,
                 validation: Sequence | None = None, validate_every: int = 100,
                 max_anneals: int = 4, alphabet: Alphabet = DEFAULT_ALPHABET,
                 params=None, callback=None) -> TrainingResult:
    """Train on a random concatenation of ``corpus`` for a fixed number of updates.

    With a ``validation`` set, the learning rate is halved whenever the
    validation loss fails to improve (the best parameters are restored), and
    training stops after ``max_anneals`` halvings.
    """
    if len(corpus) == 0:
        raise EmptyCorpusError("training corpus is empty")
    trainer = StreamTrainer(config, corpus, params=params, alphabet=alphabet)
    val_log = []
    best = (math.inf, None)
    anneals = 0
    for u in range(updates):
        rec = trainer.step()
        if rec is None:
            break
        if callback is not None:
            callback(rec)
        if validation is not None and (u + 1) % validate_every == 0:
            vl = validation_loss(trainer.params, config, validation, alphabet)
            val_log.append((u + 1, vl))
            log.info("update %d: validation loss %.4f (lr %.4g)", u + 1, vl, trainer.learning_rate)
            if not math.isfinite(vl):
                raise TrainingDiverged("validation loss is not finite")
            if vl < best[0]:
                best = (vl, {k: v.copy() for k, v in trainer.params.items()})
            else:
                anneals += 1
                if anneals > max_anneals:
                    break
                trainer.learning_rate *= 0.5
                for k, v in best[1].items():
                    trainer.params[k][...] = v
                for v in trainer.velocity.values():
                    v[...] = 0.0
    final = trainer.params
    if best[1] is not None:
        final = best[1]
    return TrainingResult(final, trainer.history, val_log, trainer.skipped_segments)

"""Deterministic synthetic "speech" for desk-scale training and evaluation.

Every label gets a fixed template vector; templates are orthogonal and
pairwise ``separation`` apart. A character is rendered as a run of frames
of its template, shaped by a bell envelope so that two identical adjacent
characters remain distinguishable, plus white Gaussian noise. Spaces render
the word-boundary template (a short pause).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ctc import DEFAULT_ALPHABET, Alphabet
from .features import FEATURE_DIM

# Multisyllabic-analog keywords (>= 6 characters).
MULTI_KEYWORDS = ["percent", "hundred", "thousand", "million", "people",
                  "average", "foreign", "nuclear"]
# Monosyllabic-analog keywords (<= 3 characters), each hidden inside other words.
MONO_KEYWORDS = ["and", "or", "not", "but", "on", "in"]
FILLER_WORDS = ["band", "sand", "order", "report", "nothing", "note", "button",
                "butter", "money", "honey", "honeymoon", "into", "finance",
                "market", "stock", "price", "trade", "point", "bond", "rate"]
DEFAULT_VOCABULARY = MULTI_KEYWORDS + MONO_KEYWORDS + FILLER_WORDS


class SynthError(ValueError):
    pass


@dataclass
class SynthConfig:
    labels: str = "abcdefghijklmnopqrstuvwxyz_"
    feature_dim: int = FEATURE_DIM
    mean_duration: int = 4
    jitter: int = 1
    separation: float = 4.0
    noise_std: float = 0.5
    envelope_floor: float = 0.5
    seed: int = 0  # fixes the templates; corpora draw their own sentence seeds

    def __post_init__(self):
        if self.mean_duration < 2:
            raise SynthError("mean_duration must be at least 2 frames")
        if not 0 <= self.jitter < self.mean_duration:
            raise SynthError("jitter must be in [0, mean_duration)")
        if self.noise_std < 0:
            raise SynthError("noise_std must be non-negative")
        if self.separation <= 0:
            raise SynthError("separation must be positive")
        if not 0 < self.envelope_floor <= 1:
            raise SynthError("envelope_floor must be in (0, 1]")
        if len(self.labels) > self.feature_dim:
            raise SynthError("need feature_dim >= number of labels for orthogonal templates")


@dataclass
class AlignedUtterance:
    text: str
    features: np.ndarray
    labels: list[int]
    spans: list[tuple[int, int]]  # per label, [start, end) frames

    @property
    def num_frames(self) -> int:
        return len(self.features)


def templates(config: SynthConfig, alphabet: Alphabet = DEFAULT_ALPHABET) -> dict[int, np.ndarray]:
    rng = np.random.default_rng(config.seed)
    q, _ = np.linalg.qr(rng.standard_normal((config.feature_dim, len(config.labels))))
    scale = config.separation / np.sqrt(2.0)
    return {alphabet.index(ch): q[:, j] * scale for j, ch in enumerate(config.labels)}


def envelope(d: int, floor: float) -> np.ndarray:
    return floor + (1.0 - floor) * np.sin(np.pi * (np.arange(d) + 0.5) / d)


def synth_utterance(text: str, config: SynthConfig, rng: np.random.Generator | None = None,
                    alphabet: Alphabet = DEFAULT_ALPHABET, _templates=None) -> AlignedUtterance:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    tmpl = templates(config, alphabet) if _templates is None else _templates
    labels = []
    for ch in text.lower():
        sym = alphabet.boundary if ch == " " else ch
        if sym not in config.labels:
            raise SynthError(f"character {ch!r} is outside the configured label set")
        labels.append(alphabet.index(sym))
    lo, hi = config.mean_duration - config.jitter, config.mean_duration + config.jitter
    durations = rng.integers(lo, hi + 1, size=len(labels))
    blocks, spans, t = [], [], 0
    for lab, d in zip(labels, durations):
        blocks.append(envelope(int(d), config.envelope_floor)[:, None] * tmpl[lab][None, :])
        spans.append((t, t + int(d)))
        t += int(d)
    clean = np.vstack(blocks) if blocks else np.zeros((0, config.feature_dim))
    noisy = clean + config.noise_std * rng.standard_normal(clean.shape)
    return AlignedUtterance(text, noisy, labels, spans)


@dataclass
class Occurrence:
    keyword: str
    utterance: int
    end_frame: int  # last frame of the word's final character


@dataclass
class Corpus:
    utterances: list[AlignedUtterance]
    occurrences: list[Occurrence] = field(default_factory=list)

    def pairs(self):
        return [(u.features, u.labels) for u in self.utterances]

    @property
    def num_frames(self) -> int:
        return sum(u.num_frames for u in self.utterances)


def word_end_frames(utt: AlignedUtterance) -> list[tuple[str, int]]:
    out, pos = [], 0
    for word in utt.text.split(" "):
        if word:
            out.append((word, utt.spans[pos + len(word) - 1][1] - 1))
        pos += len(word) + 1
    return out


def build_corpus(vocabulary, sentences: int, config: SynthConfig, seed: int = 1,
                 min_words: int = 3, max_words: int = 10,
                 alphabet: Alphabet = DEFAULT_ALPHABET) -> Corpus:
    """Random sentences over ``vocabulary``, each followed by a trailing pause."""
    vocabulary = list(vocabulary)
    if not vocabulary:
        raise SynthError("vocabulary is empty")
    rng = np.random.default_rng(seed)
    tmpl = templates(config, alphabet)
    utts, occ = [], []
    for u in range(sentences):
        n = int(rng.integers(min_words, max_words + 1))
        words = [vocabulary[i] for i in rng.integers(0, len(vocabulary), size=n)]
        utt = synth_utterance(" ".join(words) + " ", config, rng, alphabet, tmpl)
        utts.append(utt)
        occ += [Occurrence(w, u, end) for w, end in word_end_frames(utt)]
    return Corpus(utts, occ)


@dataclass
class EvalStream:
    features: np.ndarray
    labels: list[int]
    occurrences: list[tuple[str, int]]  # (word, end frame in stream coordinates)
    utterance_offsets: list[int]


def concatenate_stream(corpus: Corpus, config: SynthConfig, seed: int = 0,
                       alphabet: Alphabet = DEFAULT_ALPHABET) -> EvalStream:
    """Join utterances into one stream behind a leading pause."""
    lead = synth_utterance(" ", config, np.random.default_rng(seed), alphabet)
    parts, labels, offsets = [lead.features], list(lead.labels), []
    t = lead.num_frames
    for utt in corpus.utterances:
        offsets.append(t)
        parts.append(utt.features)
        labels += utt.labels
        t += utt.num_frames
    occ = [(o.keyword, offsets[o.utterance] + o.end_frame) for o in corpus.occurrences]
    return EvalStream(np.vstack(parts), labels, occ, offsets)


def nearest_template_labels(features, config: SynthConfig,
                            alphabet: Alphabet = DEFAULT_ALPHABET) -> np.ndarray:
    tmpl = templates(config, alphabet)
    keys = np.array(list(tmpl))
    mat = np.array([tmpl[k] for k in keys])
    d = ((np.asarray(features)[:, None, :] - mat[None]) ** 2).sum(-1)
    return keys[d.argmin(axis=1)]

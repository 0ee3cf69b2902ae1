"""Label alphabet and connectionist temporal classification (CTC) primitives.

All dynamic programming here runs in the log domain with 64-bit floats.
``-inf`` marks unreachable states and propagates through ``np.logaddexp``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

NEG_INF = -np.inf

LETTERS = "abcdefghijklmnopqrstuvwxyz"
DEFAULT_LABELS = tuple(LETTERS) + ("'", ".", "_", "-")


class AlphabetError(ValueError):
    pass


class InfeasibleAlignmentError(ValueError):
    """Raised when a label sequence cannot fit into the available frames."""


@dataclass(frozen=True)
class Alphabet:
    labels: tuple[str, ...] = DEFAULT_LABELS
    boundary: str = "_"
    blank: str = "-"

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise AlphabetError("duplicate labels in alphabet")
        if self.blank not in self.labels or self.boundary not in self.labels:
            raise AlphabetError("alphabet must contain the blank and boundary labels")
        if self.blank == self.boundary:
            raise AlphabetError("blank and boundary labels must differ")

    def __len__(self):
        return len(self.labels)

    @property
    def blank_index(self) -> int:
        return self.labels.index(self.blank)

    @property
    def boundary_index(self) -> int:
        return self.labels.index(self.boundary)

    def index(self, symbol: str) -> int:
        try:
            return self.labels.index(symbol)
        except ValueError:
            raise AlphabetError(f"symbol {symbol!r} is not in the alphabet") from None

    def encode(self, text: str) -> list[int]:
        """Map text to label indices; spaces become the word-boundary label."""
        out = []
        for ch in text.lower():
            if ch == " ":
                ch = self.boundary
            if ch == self.blank:
                raise AlphabetError("text may not contain the blank label")
            out.append(self.index(ch))
        return out

    def decode(self, indices: Sequence[int]) -> str:
        return "".join(self.labels[i] for i in indices)

    def to_string(self) -> str:
        return "".join(self.labels)

    @classmethod
    def from_string(cls, s: str, boundary: str = "_", blank: str = "-") -> "Alphabet":
        return cls(tuple(s), boundary=boundary, blank=blank)


DEFAULT_ALPHABET = Alphabet()


def expand_with_blanks(seq: Sequence[int], blank: int) -> np.ndarray:
    """Interleave blanks: ``(l1, ..., lL)`` -> ``(-, l1, -, ..., lL, -)``."""
    ext = np.full(2 * len(seq) + 1, blank, dtype=np.int64)
    ext[1::2] = seq
    return ext


def min_frames(seq: Sequence[int]) -> int:
    """Shortest input length that admits an alignment of ``seq``."""
    repeats = sum(1 for a, b in zip(seq[:-1], seq[1:]) if a == b)
    return len(seq) + repeats


def _skip_allowed(ext: np.ndarray, blank: int) -> np.ndarray:
    # s -> s+2 is allowed only into a label state whose label differs from
    # the label two states back
    allowed = np.zeros(len(ext), dtype=bool)
    allowed[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return allowed


def _safe_log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _forward(logp_ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """Log forward variables, shape (T, S), for the extended state sequence."""
    T, S = logp_ext.shape
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = logp_ext[0, 0]
    if S > 1:
        alpha[0, 1] = logp_ext[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[skip] = np.logaddexp(acc[skip], prev[np.flatnonzero(skip) - 2])
        alpha[t] = acc + logp_ext[t]
    return alpha


def _backward(logp_ext: np.ndarray, skip: np.ndarray) -> np.ndarray:
    """Log backward variables, excluding the emission at frame t."""
    T, S = logp_ext.shape
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    skip_src = np.flatnonzero(skip) - 2
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + logp_ext[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[skip_src] = np.logaddexp(acc[skip_src], nxt[skip_src + 2])
        beta[t] = acc
    return beta


def _final_logprob(alpha_last: np.ndarray) -> float:
    if len(alpha_last) == 1:
        return float(alpha_last[0])
    return float(np.logaddexp(alpha_last[-1], alpha_last[-2]))


def ctc_log_likelihood(posteriors, seq: Sequence[int], blank: int | None = None) -> float:
    """Log probability that the framewise posteriors emit ``seq``.

    ``posteriors`` is a (T, K) array of per-frame label probabilities.
    Returns ``-inf`` when ``seq`` does not fit into T frames.
    """
    probs = np.asarray(posteriors, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ValueError("posteriors must be a non-empty (T, K) array")
    if blank is None:
        blank = DEFAULT_ALPHABET.blank_index
    seq = list(seq)
    if min_frames(seq) > probs.shape[0]:
        return NEG_INF
    ext = expand_with_blanks(seq, blank)
    logp_ext = _safe_log(probs)[:, ext]
    alpha = _forward(logp_ext, _skip_allowed(ext, blank))
    return _final_logprob(alpha[-1])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ctc_grad(logits, seq: Sequence[int], blank: int | None = None):
    """CTC loss and its gradient with respect to pre-softmax activations.

    Returns ``(loss, grad)`` where ``loss = -log p(seq | x)`` and ``grad`` has
    the shape of ``logits``. Raises :class:`InfeasibleAlignmentError` when
    the sequence needs more frames than are available.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if blank is None:
        blank = DEFAULT_ALPHABET.blank_index
    seq = list(seq)
    T = logits.shape[0]
    if min_frames(seq) > T:
        raise InfeasibleAlignmentError(
            f"label sequence needs {min_frames(seq)} frames, got {T}")
    logy = log_softmax(logits)
    ext = expand_with_blanks(seq, blank)
    skip = _skip_allowed(ext, blank)
    logp_ext = logy[:, ext]
    alpha = _forward(logp_ext, skip)
    beta = _backward(logp_ext, skip)
    log_z = _final_logprob(alpha[-1])
    # state occupancy gamma(t, s) = alpha * beta / Z, accumulated per label
    log_gamma = alpha + beta - log_z
    occupancy = np.zeros_like(logits)
    gamma = np.exp(log_gamma)
    for s, k in enumerate(ext):
        occupancy[:, k] += gamma[:, s]
    grad = np.exp(logy) - occupancy
    return -log_z, grad


def collapse_path(framewise: Sequence[int], blank: int | None = None) -> list[int]:
    """Merge adjacent repeats, then drop blanks."""
    if blank is None:
        blank = DEFAULT_ALPHABET.blank_index
    return [k for k, _ in itertools.groupby(framewise) if k != blank]


def enumerate_paths_oracle(posteriors, seq: Sequence[int], blank: int,
                           max_frames: int = 10, max_labels: int = 6) -> float:
    """Brute-force total probability of all framewise paths collapsing to ``seq``.

    Exponential in T; only meant as a test oracle on tiny problems.
    """
    probs = np.asarray(posteriors, dtype=np.float64)
    T, K = probs.shape
    if T > max_frames or K > max_labels:
        raise ValueError(f"oracle limited to T <= {max_frames} and K <= {max_labels}")
    target = list(seq)
    total = 0.0
    for path in itertools.product(range(K), repeat=T):
        if collapse_path(path, blank) == target:
            total += float(np.prod(probs[np.arange(T), path]))
    return total


def softmax_rows(logits) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))

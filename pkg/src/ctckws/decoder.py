"""Streaming keyword decoder over CTC label posteriors.

A keyword network is the node chain ``_ c1 ... cn _``; each node owns a
label state and a blank state. Every frame, a state's log value becomes the
combined incoming log value plus the log posterior of its own label. Label
states are entered from the previous node's label state (unless both carry
the same label) or blank state; blank states only from their own label
state; all states loop on themselves.

Keyword-only mode feeds the entry boundary label with probability one every
frame. That injection dominates the entry self-loop, so the entry label
state simply holds the current boundary posterior. Incoming values combine
by log-sum-exp (``sum``) or max (``max``).

Keyword-filler mode runs an ergodic filler network of every non-blank label
next to the keyword chains. Paths that merge there carry different label
histories, so every combination is a max.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ctc import DEFAULT_ALPHABET, NEG_INF, Alphabet, AlphabetError

SEMANTICS = ("sum", "max")
MODES = ("keyword-only", "filler")
DEFAULT_REFRACTORY = 30


class KeywordError(ValueError):
    pass


@dataclass(frozen=True)
class KeywordNetwork:
    keyword: str
    node_labels: tuple[int, ...]  # boundary, characters..., boundary
    per_char_threshold: float = 0.0

    @property
    def num_chars(self) -> int:
        return len(self.node_labels) - 2

    @property
    def num_states(self) -> int:
        return 2 * len(self.node_labels)

    @property
    def threshold(self) -> float:
        """Total threshold on the negative log posterior: per-character value times length."""
        return self.per_char_threshold * self.num_chars

    @property
    def score_threshold(self) -> float:
        return -self.threshold


def build_keyword_network(keyword: str, alphabet: Alphabet = DEFAULT_ALPHABET,
                          per_char_threshold: float = 0.0) -> KeywordNetwork:
    text = keyword.strip().lower()
    if not text:
        raise KeywordError("keyword is empty")
    chars = []
    for ch in text:
        if ch in (alphabet.blank, alphabet.boundary, " "):
            raise KeywordError(f"keyword {keyword!r} contains a reserved label {ch!r}")
        try:
            chars.append(alphabet.index(ch))
        except AlphabetError:
            raise KeywordError(f"keyword {keyword!r} contains unsupported character {ch!r}") from None
    b = alphabet.boundary_index
    return KeywordNetwork(text, (b, *chars, b), float(per_char_threshold))


def read_keyword_list(path) -> list[str]:
    """One keyword per line; blank lines and ``#`` comments are ignored."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                words.append(line.lower())
    return words


def _log(frame) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(frame, dtype=np.float64))


@dataclass
class DecoderState:
    """Per-stream decoder memory.

    ``values`` holds the log values of all keyword CTC states back to back,
    ``filler`` the filler states (empty in keyword-only mode), and ``start``
    the log value of the virtual start-of-stream state.
    """

    values: np.ndarray
    filler: np.ndarray
    start: float = 0.0
    frame: int = 0

    def copy(self) -> "DecoderState":
        return DecoderState(self.values.copy(), self.filler.copy(), self.start, self.frame)


class KeywordSpotter:
    """Decodes one posterior stream against a set of keyword networks.

    Each call to :meth:`step` returns one score per keyword: the keyword
    log posterior in keyword-only mode, or keyword minus filler log posterior
    in filler mode. A keyword fires when its score exceeds
    ``network.score_threshold``.
    """

    def __init__(self, networks: Sequence[KeywordNetwork], mode: str = "keyword-only",
                 semantics: str = "sum", alphabet: Alphabet = DEFAULT_ALPHABET,
                 coupled: bool = True, allow_repeat_skip: bool = False):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if semantics not in SEMANTICS:
            raise ValueError(f"semantics must be one of {SEMANTICS}")
        if mode == "filler" and semantics == "sum":
            raise ValueError("filler mode merges paths with different histories; only max is defined")
        if not networks:
            raise KeywordError("no keywords given")
        self.networks = list(networks)
        self.mode = mode
        self.semantics = semantics
        self.alphabet = alphabet
        self.coupled = coupled
        self._combine = np.maximum.reduce if semantics == "max" else np.logaddexp.reduce
        self._build(allow_repeat_skip)
        self.state = self.initial_state()

    def _build(self, allow_repeat_skip: bool):
        blank = self.alphabet.blank_index
        offsets, labels, preds = [], [], []
        entry, final_l, final_b = [], [], []
        S = 0
        for net in self.networks:
            offsets.append(S)
            nodes = net.node_labels
            for j, lab in enumerate(nodes):
                L, B = S + 2 * j, S + 2 * j + 1
                labels += [lab, blank]
                if j == 0:
                    entry.append(L)
                    lp = [-2, -1, -1]  # filled per frame with the entry feed
                else:
                    lp = [L, S + 2 * (j - 1) + 1, -1]
                    if nodes[j - 1] != lab or allow_repeat_skip:
                        lp[2] = S + 2 * (j - 1)
                preds.append(lp)
                preds.append([B, L, -1])
            final_l.append(S + 2 * (len(nodes) - 1))
            final_b.append(S + 2 * (len(nodes) - 1) + 1)
            S += net.num_states
        self.num_states = S
        self.offsets = np.array(offsets)
        self.labels = np.array(labels)
        # index S is a constant -inf slot, S + 1 the entry feed slot
        p = np.array(preds)
        p[p == -1] = S
        p[p == -2] = S + 1
        if self.mode == "filler":
            p[entry, 1] = np.array(entry)  # entry label keeps its self-loop
        self.preds = p
        self.entry = np.array(entry)
        self.final_l = np.array(final_l)
        self.final_b = np.array(final_b)
        # filler: one node per non-blank label
        self.filler_labels = np.array([i for i in range(len(self.alphabet)) if i != blank])
        self.filler_boundary = int(np.flatnonzero(self.filler_labels == self.alphabet.boundary_index)[0])

    def initial_state(self) -> DecoderState:
        nf = 2 * len(self.filler_labels) if self.mode == "filler" else 0
        return DecoderState(np.full(self.num_states, NEG_INF), np.full(nf, NEG_INF), 0.0, 0)

    def reset(self):
        self.state = self.initial_state()
        return self.state

    def _filler_update(self, st: DecoderState, logy: np.ndarray) -> tuple[np.ndarray, float]:
        """New filler values and the feed into keyword entry (boundary) label states."""
        blank = self.alphabet.blank_index
        Lp, Bp = st.filler[0::2], st.filler[1::2]
        nb = self.filler_boundary
        max_b = Bp.max()
        order = np.argsort(-Lp, kind="stable")
        top1, top2 = Lp[order[0]], Lp[order[1]]
        excl = np.full(len(Lp), top1)
        excl[order[0]] = top2  # best label state with a different label
        if self.coupled:
            kw_l = st.values[self.final_l].max()
            kw_b = st.values[self.final_b].max()
        else:
            kw_l = kw_b = NEG_INF
        from_kw = np.full(len(Lp), max(kw_l, kw_b))
        from_kw[nb] = kw_b  # keyword ends on a boundary label state
        inc_l = np.maximum.reduce([Lp, np.full(len(Lp), max(max_b, st.start)), excl, from_kw])
        inc_b = np.maximum(Bp, Lp)
        newL = inc_l + logy[self.filler_labels]
        newB = inc_b + logy[blank]
        new = np.empty_like(st.filler)
        new[0::2], new[1::2] = newL, newB
        entry_feed = max(max_b, excl[nb], st.start) if self.coupled else 0.0
        return new, entry_feed

    def step(self, frame) -> np.ndarray:
        """Consume one posterior frame; returns per-keyword scores."""
        st = self.state
        logy = _log(frame)
        if self.mode == "filler":
            new_filler, feed = self._filler_update(st, logy)
        else:
            new_filler, feed = st.filler, 0.0
        ext = np.concatenate([st.values, [NEG_INF, feed]])
        incoming = self._combine(ext[self.preds], axis=1)
        values = incoming + logy[self.labels]
        kw = self._combine(np.stack([values[self.final_l], values[self.final_b]]), axis=0)
        if self.mode == "filler":
            filler_score = new_filler.max()
            self.last_filler = filler_score
            scores = kw - filler_score
        else:
            scores = kw
        self.last_keyword = kw
        self.state = DecoderState(values, new_filler, NEG_INF, st.frame + 1)
        return scores

    def process(self, frames: Iterable) -> np.ndarray:
        rows = [self.step(f) for f in frames]
        if not rows:
            return np.zeros((0, len(self.networks)))
        return np.array(rows)

    def keyword_values(self, k: int) -> np.ndarray:
        """Current log values of the CTC states of keyword ``k``: [L0, B0, L1, B1, ...]."""
        o = self.offsets[k]
        return self.state.values[o:o + self.networks[k].num_states]


def step_keyword_only(spotter: KeywordSpotter, frame) -> np.ndarray:
    return spotter.step(frame)


def step_keyword_filler(spotter: KeywordSpotter, frame):
    """Returns (statistic, keyword log posterior, filler log posterior)."""
    stat = spotter.step(frame)
    return stat, spotter.last_keyword, spotter.last_filler


# Detection -------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class DetectionEvent:
    frame: int
    keyword: str
    score: float


def peak_frames(scores, refractory: int = DEFAULT_REFRACTORY) -> np.ndarray:
    """Frames whose score beats every score within ``refractory`` frames.

    Earlier frames must be strictly lower and later frames not higher, so a
    plateau yields its first frame. Peaks do not depend on any threshold,
    which makes detections nested across thresholds.
    """
    s = np.asarray(scores, dtype=np.float64)
    n = len(s)
    finite = np.flatnonzero(s > NEG_INF)
    out = []
    for i in finite:
        lo, hi = max(i - refractory, 0), min(i + refractory + 1, n)
        if (lo < i and s[lo:i].max() >= s[i]) or (i + 1 < hi and s[i + 1:hi].max() > s[i]):
            continue
        out.append(i)
    return np.array(out, dtype=np.int64)


def detect(scores, threshold: float, refractory: int = DEFAULT_REFRACTORY,
           keyword: str = "") -> list[DetectionEvent]:
    """Events at score peaks above ``threshold``; peaks are at least refractory+1 frames apart."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    s = np.asarray(scores, dtype=np.float64)
    return [DetectionEvent(int(i), keyword, float(s[i]))
            for i in peak_frames(s, refractory) if s[i] > threshold]


class StreamingDetector:
    """Incremental :func:`detect` with a lookahead of ``refractory`` frames."""

    def __init__(self, threshold: float, refractory: int = DEFAULT_REFRACTORY, keyword: str = ""):
        if not np.isfinite(threshold):
            raise ValueError("threshold must be finite")
        self.threshold = threshold
        self.refractory = refractory
        self.keyword = keyword
        self._buf: list[float] = []  # scores from frame self._base on
        self._base = 0
        self._next = 0  # next frame to decide

    def push(self, score: float) -> list[DetectionEvent]:
        self._buf.append(float(score))
        return self._decide(final=False)

    def flush(self) -> list[DetectionEvent]:
        return self._decide(final=True)

    def _decide(self, final: bool) -> list[DetectionEvent]:
        R = self.refractory
        end = self._base + len(self._buf)
        events = []
        while self._next < end and (final or self._next + R < end):
            i = self._next
            s = self._buf[i - self._base]
            if s > self.threshold:
                left = self._buf[max(i - R, self._base) - self._base:i - self._base]
                right = self._buf[i + 1 - self._base:min(i + R + 1, end) - self._base]
                if all(v < s for v in left) and all(v <= s for v in right):
                    events.append(DetectionEvent(i, self.keyword, s))
            self._next += 1
        drop = max(self._next - R - self._base, 0)
        if drop:
            del self._buf[:drop]
            self._base += drop
        return events


DETECTION_COLUMNS = ["frame", "time_seconds", "keyword", "score"]


def detection_row(ev: DetectionEvent, frame_period: float = 0.01) -> list:
    return [ev.frame, f"{ev.frame * frame_period:.2f}", ev.keyword, repr(ev.score)]


def write_detections_csv(path_or_fh, events: Iterable[DetectionEvent], frame_period: float = 0.01):
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh)
        w.writerow(DETECTION_COLUMNS)
        for ev in events:
            w.writerow(detection_row(ev, frame_period))
    finally:
        if own:
            fh.close()


def read_detections_csv(path) -> list[DetectionEvent]:
    with open(path, newline="") as fh:
        return [DetectionEvent(int(r["frame"]), r["keyword"], float(r["score"]))
                for r in csv.DictReader(fh)]

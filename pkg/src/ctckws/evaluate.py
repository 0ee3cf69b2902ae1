"""Scoring of detection events: matching, precision/recall sweeps, latency."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .decoder import DEFAULT_REFRACTORY, DetectionEvent, peak_frames

DEFAULT_WINDOW = 50
FRAME_MS = 10.0


@dataclass(frozen=True)
class GroundTruthOccurrence:
    keyword: str
    end_frame: int


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    pairs: list[tuple[DetectionEvent, GroundTruthOccurrence]]


def match_detections(events: Sequence[DetectionEvent], truth: Sequence[GroundTruthOccurrence],
                     window: int = DEFAULT_WINDOW) -> MatchResult:
    """Greedy one-to-one matching in event order.

    Each event takes the nearest still-unmatched occurrence of its keyword
    whose end frame lies within ``window`` frames (earlier occurrence on ties).
    """
    by_kw = defaultdict(list)
    for occ in truth:
        by_kw[occ.keyword].append(occ)
    frames = {k: np.array([o.end_frame for o in v]) for k, v in by_kw.items()}
    used = {k: np.zeros(len(v), dtype=bool) for k, v in by_kw.items()}
    pairs = []
    fp = 0
    for ev in sorted(events, key=lambda e: (e.frame, e.keyword)):
        ends = frames.get(ev.keyword)
        if ends is None or len(ends) == 0:
            fp += 1
            continue
        dist = np.abs(ends - ev.frame).astype(float)
        dist[used[ev.keyword] | (dist > window)] = np.inf
        j = int(np.argmin(dist))
        if not np.isfinite(dist[j]):
            fp += 1
            continue
        used[ev.keyword][j] = True
        pairs.append((ev, by_kw[ev.keyword][j]))
    tp = len(pairs)
    return MatchResult(tp, fp, len(truth) - tp, pairs)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @property
    def detections(self) -> int:
        return self.tp + self.fp


def pr_point(threshold: float, result: MatchResult) -> PRPoint:
    n_det = result.tp + result.fp
    n_true = result.tp + result.fn
    precision = result.tp / n_det if n_det else 1.0
    recall = result.tp / n_true if n_true else 0.0
    return PRPoint(threshold, precision, recall, f1_score(precision, recall),
                   result.tp, result.fp, result.fn)


@dataclass
class SweepResult:
    points: list[PRPoint]

    @property
    def best(self) -> PRPoint:
        # earliest threshold among ties
        return max(self.points, key=lambda p: p.f1)

    @property
    def max_f1(self) -> float:
        return self.best.f1


def events_at(scores: Mapping[str, np.ndarray], num_chars: Mapping[str, int],
              per_char_threshold: float, refractory: int = DEFAULT_REFRACTORY,
              _peaks=None) -> list[DetectionEvent]:
    """Detections for every keyword at a per-character threshold."""
    events = []
    for kw, s in scores.items():
        s = np.asarray(s, dtype=np.float64)
        peaks = peak_frames(s, refractory) if _peaks is None else _peaks[kw]
        thr = -per_char_threshold * num_chars[kw]
        events += [DetectionEvent(int(i), kw, float(s[i])) for i in peaks if s[i] > thr]
    events.sort()
    return events


def pr_sweep(scores: Mapping[str, np.ndarray], truth: Sequence[GroundTruthOccurrence],
             thresholds: Sequence[float], num_chars: Mapping[str, int] | None = None,
             refractory: int = DEFAULT_REFRACTORY, window: int = DEFAULT_WINDOW) -> SweepResult:
    """Micro-averaged precision/recall for each per-character threshold.

    ``scores`` maps keyword -> per-frame score stream; a keyword fires where
    its score peaks above ``-threshold * len(keyword)``. Truth occurrences of
    words outside ``scores`` are ignored.
    """
    if len(thresholds) == 0:
        raise ValueError("need at least one threshold")
    if num_chars is None:
        num_chars = {kw: len(kw) for kw in scores}
    truth = [t for t in truth if t.keyword in scores]
    peaks = {kw: peak_frames(np.asarray(s, dtype=np.float64), refractory) for kw, s in scores.items()}
    points = []
    for th in thresholds:
        ev = events_at(scores, num_chars, th, refractory, peaks)
        points.append(pr_point(float(th), match_detections(ev, truth, window)))
    return SweepResult(points)


def sweep_events(events: Sequence[DetectionEvent], truth: Sequence[GroundTruthOccurrence],
                 thresholds: Sequence[float], window: int = DEFAULT_WINDOW) -> SweepResult:
    """PR sweep over a fixed event list, keeping events whose score clears each threshold."""
    if len(thresholds) == 0:
        raise ValueError("need at least one threshold")
    points = []
    for th in thresholds:
        kept = [e for e in events if e.score > -th * len(e.keyword)]
        points.append(pr_point(float(th), match_detections(kept, truth, window)))
    return SweepResult(points)


@dataclass
class LatencyStats:
    count: int
    median_frames: float
    mean_frames: float
    max_frames: float

    @property
    def empty(self) -> bool:
        return self.count == 0

    @property
    def median_ms(self) -> float:
        return self.median_frames * FRAME_MS

    @property
    def mean_ms(self) -> float:
        return self.mean_frames * FRAME_MS

    @property
    def max_ms(self) -> float:
        return self.max_frames * FRAME_MS


def latency_stats(pairs: Iterable[tuple[DetectionEvent, GroundTruthOccurrence]]) -> LatencyStats:
    """Event frame minus true end frame; negative when the decoder fires early."""
    lat = np.array([ev.frame - occ.end_frame for ev, occ in pairs], dtype=float)
    if len(lat) == 0:
        return LatencyStats(0, float("nan"), float("nan"), float("nan"))
    return LatencyStats(len(lat), float(np.median(lat)), float(lat.mean()), float(lat.max()))


def write_pr_csv(path, sweep: SweepResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "precision", "recall", "f1"])
        for p in sweep.points:
            w.writerow([repr(p.threshold), repr(p.precision), repr(p.recall), repr(p.f1)])


def read_truth_csv(path) -> list[GroundTruthOccurrence]:
    with open(path, newline="") as fh:
        return [GroundTruthOccurrence(r["keyword"], int(r["end_frame"])) for r in csv.DictReader(fh)]


def write_truth_csv(path, occurrences: Iterable[tuple[str, int]]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["keyword", "end_frame"])
        for kw, end in occurrences:
            w.writerow([kw, end])

"""Log mel filterbank front end: 40 bands + log energy, deltas, normalization."""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
WINDOW = 400  # 25 ms
HOP = 160  # 10 ms
NFFT = 512
NUM_MELS = 40
STATIC_DIM = NUM_MELS + 1
FEATURE_DIM = 3 * STATIC_DIM
LOG_FLOOR = 1e-10
STD_FLOOR = 1e-5
DELTA_WIDTH = 2


class FeatureError(ValueError):
    pass


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(num_mels: int = NUM_MELS, low_hz: float = 0.0,
                   high_hz: float = SAMPLE_RATE / 2) -> np.ndarray:
    """Corner frequencies in Hz; band b spans edges[b]..edges[b + 2], peak at edges[b + 1]."""
    mels = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(num_mels: int = NUM_MELS, nfft: int = NFFT,
                   sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters evaluated at the rfft bin frequencies, shape (num_mels, nfft//2 + 1)."""
    edges = mel_band_edges(num_mels, 0.0, sample_rate / 2)
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.clip(np.minimum(rising, falling), 0.0, None)


_FBANK = mel_filterbank()
_HAMMING = np.hamming(WINDOW)


def num_frames(n_samples: int) -> int:
    if n_samples < WINDOW:
        return 0
    return (n_samples - WINDOW) // HOP + 1


def extract_filterbank(samples, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Static 41-dim frames: 40 log mel energies followed by log frame energy."""
    if sample_rate != SAMPLE_RATE:
        raise FeatureError(f"only {SAMPLE_RATE} Hz audio is supported, got {sample_rate}")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise FeatureError("expected mono samples")
    n = num_frames(len(x))
    if n == 0:
        raise FeatureError(f"need at least {WINDOW} samples, got {len(x)}")
    idx = np.arange(WINDOW)[None, :] + HOP * np.arange(n)[:, None]
    frames = x[idx] * _HAMMING
    power = np.abs(np.fft.rfft(frames, NFFT)) ** 2
    mel = power @ _FBANK.T
    energy = np.sum(frames ** 2, axis=1, keepdims=True)
    return np.log(np.maximum(np.hstack([mel, energy]), LOG_FLOOR))


def _delta_padded(padded: np.ndarray, width: int) -> np.ndarray:
    # padded carries `width` context frames on both sides
    n = len(padded) - 2 * width
    denom = 2.0 * sum(k * k for k in range(1, width + 1))
    out = np.zeros((n, padded.shape[1]))
    for k in range(1, width + 1):
        out += k * (padded[width + k:width + k + n] - padded[width - k:width - k + n])
    return out / denom


def delta(frames: np.ndarray, width: int = DELTA_WIDTH) -> np.ndarray:
    """Regression deltas over +-width frames with edge replication."""
    frames = np.asarray(frames, dtype=np.float64)
    if len(frames) == 0:
        raise FeatureError("empty feature sequence")
    padded = np.pad(frames, ((width, width), (0, 0)), mode="edge")
    return _delta_padded(padded, width)


def append_deltas(static: np.ndarray) -> np.ndarray:
    static = np.asarray(static, dtype=np.float64)
    d1 = delta(static)
    d2 = delta(d1)
    return np.hstack([static, d1, d2])


@dataclass(frozen=True)
class NormalizerStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise FeatureError("mean and std must be vectors of the same length")

    @property
    def dim(self) -> int:
        return len(self.mean)

    @classmethod
    def identity(cls, dim: int) -> "NormalizerStats":
        return cls(np.zeros(dim), np.ones(dim))


def fit_normalizer(frames, std_floor: float = STD_FLOOR) -> NormalizerStats:
    """Per-dimension mean and population standard deviation."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise FeatureError("need at least 2 frames to fit a normalizer")
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    return NormalizerStats(mean, np.maximum(std, std_floor))


def normalize(frames, stats: NormalizerStats) -> np.ndarray:
    x = np.asarray(frames, dtype=np.float64)
    if x.shape[-1] != stats.dim:
        raise FeatureError(f"feature dim {x.shape[-1]} does not match normalizer dim {stats.dim}")
    return (x - stats.mean) / stats.std


def compute_features(samples, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Full 123-dim features for an in-memory signal."""
    return append_deltas(extract_filterbank(samples, sample_rate))


class StreamingFeaturizer:
    """Incremental front end for unbounded audio.

    Emits exactly the frames ``compute_features`` would produce for the
    concatenated input, with a lookahead of ``2 * DELTA_WIDTH`` frames
    that is released by :meth:`flush`.
    """

    def __init__(self):
        self._samples = np.zeros(0)
        self._static: list[np.ndarray] = []  # recent static frames
        self._first = 0  # absolute index of self._static[0]
        self._emitted = 0
        self._head: np.ndarray | None = None  # first static frame, for left-edge replication
        self._total = 0

    def push(self, samples) -> np.ndarray:
        self._samples = np.concatenate([self._samples, np.asarray(samples, dtype=np.float64)])
        n = num_frames(len(self._samples))
        if n:
            static = extract_filterbank(self._samples[: (n - 1) * HOP + WINDOW])
            self._samples = self._samples[n * HOP:]
            if self._head is None:
                self._head = static[0]
            self._static.extend(static)
            self._total += n
        return self._emit(final=False)

    def flush(self) -> np.ndarray:
        return self._emit(final=True)

    def _static_at(self, i: int) -> np.ndarray:
        i = min(max(i, 0), self._total - 1)
        if i < self._first:
            return self._head
        return self._static[i - self._first]

    def _emit(self, final: bool) -> np.ndarray:
        w = DELTA_WIDTH
        end = self._total if final else self._total - 2 * w
        if self._total == 0 or end <= self._emitted:
            return np.zeros((0, FEATURE_DIM))
        start = self._emitted
        # static context [start - 2w, end + 2w) with edge replication
        ctx = np.array([self._static_at(i) for i in range(start - 2 * w, end + 2 * w)])
        d1 = _delta_padded(ctx, w)  # deltas for [start - w, end + w)
        if final or start - w < 0:
            # deltas beyond the signal edges replicate the edge delta
            first_valid = 0 if start - w >= 0 else w - start
            last_valid = len(d1) if not final else len(d1) - w
            d1[:first_valid] = d1[first_valid]
            d1[last_valid:] = d1[last_valid - 1]
        d2 = _delta_padded(d1, w)
        out = np.hstack([ctx[2 * w:2 * w + (end - start)], d1[w:w + (end - start)], d2])
        self._emitted = end
        keep_from = max(self._emitted - 2 * w, 0)
        drop = keep_from - self._first
        if drop > 0:
            del self._static[:drop]
            self._first = keep_from
        return out


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a 16-bit mono PCM WAV file as floats in [-1, 1)."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise FeatureError("expected 16-bit mono PCM WAV")
        rate = w.getframerate()
        data = w.readframes(w.getnframes())
    return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0, rate


def iter_wav_chunks(path, chunk_frames: int = 16000):
    """Yield (samples, sample_rate) blocks so long recordings stay out of memory."""
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise FeatureError("expected 16-bit mono PCM WAV")
        rate = w.getframerate()
        while True:
            data = w.readframes(chunk_frames)
            if not data:
                break
            yield np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0, rate


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE):
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())

"""Differential Manchester line coding and the interval-based receiver.

Convention: every bit period has a mid-bit transition; a transition at
the start of the bit encodes 0, its absence encodes 1.  Transmissions are
preceded by the 8-bit preamble 0xAA and start from an idle level of 0, so
the first slot on the wire is always high.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DecodeFailure, DegenerateInput, MissingMidTransition, OddLengthError

PREAMBLE = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=np.uint8)
IDLE_LEVEL = 0
DEFAULT_LEVELS = 256


# -- bit strings -------------------------------------------------------------

def as_bits(bits: Iterable[int]) -> np.ndarray:
    arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
    if arr.ndim != 1 or np.any(arr > 1):
        raise ValueError("bits must be a flat sequence of 0/1")
    return arr


def bits_from_int(value: int, width: int) -> np.ndarray:
    if value < 0 or value >> width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def bits_to_int(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def bits_from_bytes(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def bits_to_bytes(bits: Sequence[int]) -> bytes:
    bits = as_bits(bits)
    if len(bits) % 8:
        raise ValueError("bit count must be a multiple of 8")
    return np.packbits(bits).tobytes()


def bits_from_hex(text: str, width: int | None = None) -> np.ndarray:
    """Parse MSB-first hex; ``width`` defaults to 4 bits per digit."""
    text = text.strip().lower().removeprefix("0x")
    width = 4 * len(text) if width is None else width
    return bits_from_int(int(text, 16) if text else 0, width)


def bits_to_hex(bits: Sequence[int]) -> str:
    bits = as_bits(bits)
    if len(bits) == 0:
        return ""
    digits = (len(bits) + 3) // 4
    return format(bits_to_int(bits), f"0{digits}x")


# -- line code ---------------------------------------------------------------

@dataclass(frozen=True)
class LevelSequence:
    levels: np.ndarray
    half_period: float

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def duration(self) -> float:
        return len(self.levels) * self.half_period


@dataclass(frozen=True)
class IntervalClassification:
    labels: np.ndarray
    threshold: float


def dm_encode(bits: Iterable[int], half_period: float, initial_level: int = 1) -> LevelSequence:
    """Encode ``bits`` to two half-period slots per bit.

    ``initial_level`` is the line level immediately before the first bit.
    """
    if half_period <= 0:
        raise ValueError("half_period must be positive")
    bits = as_bits(bits)
    if len(bits) == 0:
        return LevelSequence(np.zeros(0, dtype=np.uint8), half_period)
    # first slot of bit k = initial ^ 1 ^ (b0 ^ ... ^ bk)
    first = (np.cumsum(bits) + initial_level + 1) % 2
    levels = np.empty(2 * len(bits), dtype=np.uint8)
    levels[0::2] = first
    levels[1::2] = 1 - first
    return LevelSequence(levels, half_period)


def dm_decode(levels: LevelSequence | Sequence[int], initial_level: int = 1) -> np.ndarray:
    lv = np.asarray(levels.levels if isinstance(levels, LevelSequence) else levels, dtype=np.uint8)
    if len(lv) % 2:
        raise OddLengthError(f"level sequence has odd length {len(lv)}")
    if len(lv) == 0:
        return np.zeros(0, dtype=np.uint8)
    first, second = lv[0::2], lv[1::2]
    bad = np.flatnonzero(first == second)
    if len(bad):
        raise MissingMidTransition(f"bit {bad[0]} has no mid-bit transition")
    prev = np.concatenate(([initial_level], second[:-1])).astype(np.uint8)
    return (first == prev).astype(np.uint8)


def frame_bits(payload: Iterable[int]) -> np.ndarray:
    """Prefix the preamble."""
    return np.concatenate((PREAMBLE, as_bits(payload)))


def encode_frame(payload: Iterable[int], half_period: float) -> LevelSequence:
    return dm_encode(frame_bits(payload), half_period, initial_level=1)


# -- Otsu ----------------------------------------------------------------------

def otsu_bin(hist: Sequence[int]) -> int:
    """Index k maximizing inter-class variance for the split {bins < k} / {bins >= k}.

    Ties go to the lowest k.  Scores are screened in floating point and the
    near-maximal candidates compared exactly.
    """
    h = np.asarray(hist, dtype=np.int64)
    if h.ndim != 1 or len(h) < 2 or np.any(h < 0):
        raise ValueError("histogram needs >= 2 non-negative bins")
    idx = np.arange(len(h), dtype=np.int64)
    n = int(h.sum())
    s = int((idx * h).sum())
    n0 = np.cumsum(h)[:-1]
    s0 = np.cumsum(idx * h)[:-1]
    n1 = n - n0
    valid = (n0 > 0) & (n1 > 0)
    if not valid.any():
        raise DegenerateInput("histogram has a single occupied bin")
    diff = s0.astype(float) * n - float(s) * n0
    score = np.where(valid, diff * diff / np.where(valid, n0 * n1, 1), -1.0)
    best = score.max()
    # a split right after an empty bin repeats the previous split exactly
    cands = np.flatnonzero((score >= best * (1 - 1e-9)) & (h[:-1] > 0))
    best_k, best_num, best_den = -1, -1, 1
    for c in cands:
        a0, b0 = int(n0[c]), int(s0[c])
        num, den = (b0 * n - s * a0) ** 2, a0 * (n - a0)
        if num * best_den > best_num * den:
            best_k, best_num, best_den = int(c) + 1, num, den
    return best_k


def quantize(samples: np.ndarray, levels: int) -> tuple[np.ndarray, float, float]:
    """Bin samples over [min, max] into ``levels`` left-open bins.

    Returns (bin indices, lower bound, bin width).  Bin k covers
    (lo + k*w, lo + (k+1)*w]; the minimum falls in bin 0.
    """
    x = np.asarray(samples, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    w = (hi - lo) / levels
    idx = np.clip(np.ceil((x - lo) / w).astype(np.int64) - 1, 0, levels - 1)
    return idx, lo, w


def _otsu_split(samples, levels: int) -> tuple[np.ndarray, int, float, float]:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise DegenerateInput("need at least two samples")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if np.any(x < 0):
        raise ValueError("samples must be non-negative")
    if x.max() == x.min():
        raise DegenerateInput("all samples identical")
    idx, lo, w = quantize(x, levels)
    k = otsu_bin(np.bincount(idx, minlength=levels))
    return idx, k, lo, w


def otsu_threshold(samples, levels: int = DEFAULT_LEVELS) -> float:
    _, k, lo, w = _otsu_split(samples, levels)
    return lo + k * w


def otsu_labels(samples, levels: int = DEFAULT_LEVELS) -> IntervalClassification:
    idx, k, lo, w = _otsu_split(samples, levels)
    return IntervalClassification((idx >= k).astype(np.uint8), lo + k * w)


def classify_intervals(
    intervals, levels: int = DEFAULT_LEVELS, threshold: float | None = None
) -> IntervalClassification:
    """Label transition intervals short (0) / long (1).

    With an explicit ``threshold`` (e.g. trained on the preamble) Otsu is
    skipped, which is how a run of equal intervals can still be labelled.
    """
    x = np.asarray(intervals, dtype=float)
    if np.any(x <= 0):
        raise ValueError("intervals must be positive")
    if threshold is not None:
        return IntervalClassification((x > threshold).astype(np.uint8), float(threshold))
    return otsu_labels(x, levels)


def overlap_process(classification: IntervalClassification | Sequence[int]) -> np.ndarray:
    """Rebuild the level waveform from long/short labels.

    The level starts at 1 and toggles after every interval; a long interval
    contributes two equal slots, a short one a single slot.
    """
    labels = np.asarray(
        classification.labels if isinstance(classification, IntervalClassification) else classification,
        dtype=np.uint8,
    )
    if len(labels) == 0:
        return np.zeros(0, dtype=np.uint8)
    mu = (np.arange(len(labels)) + 1) % 2  # 1, 0, 1, ...
    return np.repeat(mu, labels.astype(np.int64) + 1).astype(np.uint8)


# -- interval extraction / full receive path -----------------------------------

def run_lengths(levels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Return (run values, run lengths)."""
    lv = np.asarray(levels)
    if len(lv) == 0:
        return lv[:0], np.zeros(0, dtype=np.int64)
    edges = np.flatnonzero(np.diff(lv)) + 1
    starts = np.concatenate(([0], edges))
    lengths = np.diff(np.concatenate((starts, [len(lv)])))
    return lv[starts], lengths


def transition_intervals(levels: LevelSequence, idle: int = IDLE_LEVEL) -> np.ndarray:
    """Durations between successive transitions of a waveform framed by idle.

    A leading or trailing run at the idle level is indistinguishable from
    the idle line and is not reported.
    """
    values, lengths = run_lengths(levels.levels)
    if len(values) and values[0] == idle:
        values, lengths = values[1:], lengths[1:]
    if len(values) and values[-1] == idle:
        lengths = lengths[:-1]
    return lengths * levels.half_period


def fit_slots(levels: np.ndarray, n_slots: int, slack: int = 2) -> np.ndarray:
    """Pad (with the next toggled level) or trim a rebuilt waveform to ``n_slots``.

    The final run merges with the idle line when it sits at the idle level,
    so up to ``slack`` trailing slots may be missing; edge reconstruction can
    also overshoot by a slot.
    """
    if abs(len(levels) - n_slots) > slack:
        raise DecodeFailure(f"rebuilt {len(levels)} slots, expected {n_slots}")
    if len(levels) >= n_slots:
        return levels[:n_slots]
    tail = IDLE_LEVEL if len(levels) == 0 else 1 - int(levels[-1])
    return np.concatenate((levels, np.full(n_slots - len(levels), tail, dtype=np.uint8)))


def decode_intervals(
    intervals, n_bits: int, levels: int = DEFAULT_LEVELS, threshold: float | None = None
) -> np.ndarray:
    """Transition intervals of a preamble-framed transmission -> payload bits."""
    x = np.asarray(intervals, dtype=float)
    if len(x) < 2:
        raise DecodeFailure("fewer than two transition intervals")
    try:
        labels = classify_intervals(x, levels, threshold)
    except DegenerateInput as exc:
        raise DecodeFailure(str(exc)) from exc
    wave = fit_slots(overlap_process(labels), 2 * (len(PREAMBLE) + n_bits))
    try:
        bits = dm_decode(wave, initial_level=1)
    except MissingMidTransition as exc:
        raise DecodeFailure(str(exc)) from exc
    if not np.array_equal(bits[: len(PREAMBLE)], PREAMBLE):
        raise DecodeFailure("preamble mismatch")
    return bits[len(PREAMBLE):]


def bit_errors(sent: Sequence[int], received: Sequence[int]) -> int:
    a, b = as_bits(sent), as_bits(received)
    n = min(len(a), len(b))
    return int(np.count_nonzero(a[:n] != b[:n])) + abs(len(a) - len(b))

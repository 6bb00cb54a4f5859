"""Ultrasonic on-off keyed channel at the envelope level.

The 40 kHz carrier is not sampled.  The transmitter keys the carrier with
the line-coded level sequence; the receiver only trusts rising edges of the
envelope, since angle and distance stretch the ON bursts (duty cycle) but
leave the burst start times, and hence the period, untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codec
from .codec import LevelSequence
from .errors import ConfigError, DecodeFailure

DEFAULT_PERIOD = 0.020
MAX_ANGLE_DEG = 45.0


@dataclass(frozen=True)
class TransducerConfig:
    angle_deg: float = 0.0
    distance_m: float = 0.0
    period: float = DEFAULT_PERIOD      # modulation (bit) period m, seconds
    alpha_angle: float = 0.15
    alpha_dist: float = 0.10
    d_max: float = 3.0
    gain: float = 1.0
    samples_per_slot: int = 20
    jitter: float = 0.0                 # edge timing std, seconds
    glitch_rate: float = 0.0            # spurious pulses per second
    glitch_width: float = 0.001

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigError("modulation period must be positive")
        if abs(self.angle_deg) > MAX_ANGLE_DEG:
            raise ConfigError(f"angle {self.angle_deg} outside the +/-45 degree detection cone")
        if self.distance_m < 0 or self.d_max <= 0:
            raise ConfigError("distance must be >= 0 and d_max > 0")
        if self.samples_per_slot < 10:
            raise ConfigError("need at least 10 samples per half period")

    @property
    def half_period(self) -> float:
        return self.period / 2

    @property
    def sample_rate(self) -> float:
        return self.samples_per_slot / self.half_period

    @property
    def distortion(self) -> float:
        """ON-run stretch factor."""
        return 1.0 + self.gain * (
            self.alpha_angle * abs(self.angle_deg) / MAX_ANGLE_DEG
            + self.alpha_dist * self.distance_m / self.d_max
        )


@dataclass(frozen=True)
class EnvelopeTrace:
    samples: np.ndarray
    sample_rate: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def on_runs(levels: LevelSequence) -> tuple[np.ndarray, np.ndarray]:
    """(start, end) times of the high runs, relative to the first slot."""
    values, lengths = codec.run_lengths(levels.levels)
    ends = np.cumsum(lengths)
    starts = ends - lengths
    high = values == 1
    return starts[high] * levels.half_period, ends[high] * levels.half_period


def acoustic_transmit(
    levels: LevelSequence,
    cfg: TransducerConfig,
    seed: int | None = None,
    lead_in: float | None = None,
    tail: float | None = None,
) -> EnvelopeTrace:
    """Key the carrier with ``levels`` and return the received envelope."""
    if not np.isclose(levels.half_period, cfg.half_period):
        raise ConfigError("level sequence half period does not match the transducer period")
    rng = np.random.default_rng(seed) if cfg.jitter > 0 or cfg.glitch_rate > 0 else None
    h = cfg.half_period
    lead_in = 2 * h if lead_in is None else lead_in
    tail = 4 * h if tail is None else tail
    rise, fall = on_runs(levels)
    rise = rise + lead_in
    stretched = rise + (fall + lead_in - rise) * cfg.distortion
    nxt = np.append(rise[1:], np.inf)
    if np.any(stretched >= nxt):
        raise ConfigError(f"duty-cycle distortion {cfg.distortion:.3f} erases an OFF run")
    fall = stretched
    if cfg.jitter > 0 and len(rise):
        rise = rise + rng.normal(0, cfg.jitter, len(rise))
        fall = fall + rng.normal(0, cfg.jitter, len(fall))
    total = lead_in + levels.duration * cfg.distortion + tail
    fs = cfg.sample_rate
    n = int(np.ceil(total * fs))
    edges = np.empty(2 * len(rise))
    edges[0::2], edges[1::2] = rise, fall
    edges = np.sort(edges)
    t = np.arange(n) / fs
    samples = (np.searchsorted(edges, t, side="right") % 2).astype(np.uint8)
    if cfg.glitch_rate > 0:
        for start in rng.uniform(0, total, rng.poisson(cfg.glitch_rate * total)):
            a, b = int(start * fs), int(np.ceil((start + cfg.glitch_width) * fs))
            samples[a:b] = 1
    return EnvelopeTrace(samples, fs)


def rising_edges(trace: EnvelopeTrace) -> np.ndarray:
    s = trace.samples.astype(np.int8)
    idx = np.flatnonzero(np.diff(np.concatenate(([0], s))) == 1)
    return idx / trace.sample_rate


def sound_preprocess(trace: EnvelopeTrace, m: float = DEFAULT_PERIOD) -> np.ndarray:
    """Rising-edge to rising-edge distances longer than m/2.

    Edges closer than m/2 to the last accepted edge are glitches and are
    skipped without moving the reference.
    """
    if m <= 0:
        raise ValueError("m must be positive")
    edges = rising_edges(trace)
    d = np.diff(edges)
    if len(d) and np.all(d > m / 2):
        return d
    out = []
    if len(edges):
        ref = edges[0]
        for t in edges[1:]:
            if t - ref > m / 2:
                out.append(t - ref)
                ref = t
    if not out:
        raise DecodeFailure("no qualifying rising edges")
    return np.asarray(out)


def rising_to_transitions(rising: np.ndarray, m: float) -> np.ndarray:
    """Expand rise-to-rise distances into the full transition interval series.

    Rise-to-rise distances are 2, 3 or 4 half periods.  The falling edge
    between two rises is pinned by the line code: it sits on the one odd
    (mid-bit) slot boundary strictly between them, or right after the rise
    when no such boundary exists.  Slot 0 is the first rising edge.
    """
    h = m / 2
    units = np.rint(np.asarray(rising) / h).astype(np.int64)
    if np.any((units < 2) | (units > 4)):
        raise DecodeFailure("rise-to-rise distance outside 2..4 half periods")
    rises = np.concatenate(([0], np.cumsum(units)))
    a, b = rises[:-1], rises[1:]
    odd = a % 2 == 1
    if np.any((b - a == 4) & ~odd):
        raise DecodeFailure("impossible 4-slot period after a bit-boundary rise")
    falls = a + 1 + (odd & (b - a > 2))
    last = rises[-1]
    trans = np.empty(2 * len(rises), dtype=np.int64)
    trans[0::2] = rises
    trans[1::2] = np.append(falls, last + 1 + last % 2)
    return np.diff(trans) * h


def acoustic_receive(trace: EnvelopeTrace, m: float, n_bits: int) -> np.ndarray:
    """Envelope trace -> payload bits."""
    intervals = rising_to_transitions(sound_preprocess(trace, m), m)
    return codec.decode_intervals(intervals, n_bits)


def duty_cycle(trace: EnvelopeTrace) -> float:
    """ON fraction between the first and last rising edge."""
    edges = np.rint(rising_edges(trace) * trace.sample_rate).astype(np.int64)
    if len(edges) < 2:
        raise DecodeFailure("need two rising edges to measure a duty cycle")
    return float(trace.samples[edges[0]:edges[-1]].mean())


def write_trace_csv(trace: EnvelopeTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "level"])
        for t, v in zip(trace.times, trace.samples):
            w.writerow([f"{t:.9f}", int(v)])


def read_trace_csv(path: str | Path) -> EnvelopeTrace:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two samples")
    t = np.array([float(r["time_s"]) for r in rows])
    v = np.array([int(r["level"]) for r in rows], dtype=np.uint8)
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-12):
        raise ConfigError(f"{path}: samples must be uniformly spaced")
    return EnvelopeTrace(v, 1.0 / float(dt.mean()))

"""CMOS camera light channel: capture simulator and frame-correlation receiver.

The receiver compares frames a fixed lookahead apart.  With one frame per
line-code slot and a lookahead equal to one bit period, each comparison
asks whether the same half of two consecutive bits differs, which is the
differential Manchester bit itself; frames that straddle the always-present
mid-bit transition are equally blurred on both sides of the comparison, so
transient frames cancel out.
"""

from __future__ import annotations

import functools
import json
import re
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import codec
from .codec import LevelSequence
from .errors import ConfigError, DecodeFailure, DegenerateInput, EmptyRegion, PlateNotVisible


@dataclass(frozen=True)
class PlatePose:
    x: float
    y: float
    s: float = 56.0          # pixels per plate half-width
    theta: float = 0.0
    skew: float = 0.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("plate scale must be positive")


@dataclass(frozen=True)
class LightGeometry:
    """One light source, in plate half-width units relative to the plate origin."""

    offset: tuple[float, float] = (0.0, -2.0)
    semi_axes: tuple[float, float] = (0.85, 0.55)
    orientation: float = 0.0


DEFAULT_GEOMETRY = (LightGeometry(),)


@dataclass(frozen=True)
class LightRegion:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    orientation: float
    sigma: float

    def __post_init__(self):
        if min(self.semi_axes) <= 0 or self.sigma <= 0:
            raise ValueError("semi-axes and sigma must be positive")

    def to_pixels(self, uv: np.ndarray) -> np.ndarray:
        """Map unit-disk coordinates (N, 2) to pixel (x, y)."""
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        a, b = self.semi_axes
        x = self.center[0] + c * a * uv[:, 0] - s * b * uv[:, 1]
        y = self.center[1] + s * a * uv[:, 0] + c * b * uv[:, 1]
        return np.stack((x, y), axis=1)

    def to_local(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c, s = np.cos(self.orientation), np.sin(self.orientation)
        dx, dy = x - self.center[0], y - self.center[1]
        a, b = self.semi_axes
        return (c * dx + s * dy) / a, (-s * dx + c * dy) / b


@dataclass(frozen=True)
class CameraConfig:
    frame_rate: float = 30.0
    exposure: float = 0.8 / 30       # seconds the shutter integrates per frame
    phase: float = 0.4 / 30          # exposure start after the frame tick
    levels: int = 256
    lookahead: int = 2
    downsample: int = 1
    noise: float = 0.0               # pixel noise std at full exposure, 8-bit units
    locate_noise: float = 0.0        # plate-locator position std, pixels
    scene_drift: float = 0.0         # reflection drift on the unlit lens, rad/s
    width: int = 320
    height: int = 240
    min_contrast: float = 0.01

    def __post_init__(self):
        if self.frame_rate <= 0:
            raise ConfigError("frame_rate must be positive")
        if self.levels < 2:
            raise ConfigError("need at least 2 quantisation levels")
        if self.lookahead < 1:
            raise ConfigError("lookahead must be >= 1")
        if self.downsample < 1:
            raise ConfigError("downsample must be >= 1")
        if not 0 < self.exposure:
            raise ConfigError("exposure must be positive")
        if self.phase < 0 or self.phase + self.exposure > 2 / self.frame_rate:
            raise ConfigError("exposure window must start inside its frame period")

    @property
    def frame_period(self) -> float:
        return 1.0 / self.frame_rate


@dataclass
class Frame:
    pixels: np.ndarray   # (H, W, 3) uint8
    timestamp: float
    index: int
    occluded: bool = False


# -- geometry -----------------------------------------------------------------

def map_pose_to_lights(pose: PlatePose, light: LightGeometry = DEFAULT_GEOMETRY[0]) -> LightRegion:
    """Affine image of the light ellipse under the plate pose."""
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    A = pose.s * np.array([[c, -s], [s, c]]) @ np.array([[1.0, pose.skew], [0.0, 1.0]])
    center = np.array([pose.x, pose.y]) + A @ np.asarray(light.offset, dtype=float)
    co, so = np.cos(light.orientation), np.sin(light.orientation)
    M = A @ np.array([[co, -so], [so, co]]) @ np.diag(light.semi_axes)
    U, sv, _ = np.linalg.svd(M)
    angle = float(np.arctan2(U[1, 0], U[0, 0]))
    # keep the orientation in (-pi/2, pi/2] so nearby poses give nearby regions
    if angle > np.pi / 2:
        angle -= np.pi
    elif angle <= -np.pi / 2:
        angle += np.pi
    return LightRegion(
        center=(float(center[0]), float(center[1])),
        semi_axes=(float(sv[0]), float(sv[1])),
        orientation=angle,
        sigma=float(sv[1]) / 4,
    )


def locate_plate(
    frame: Frame,
    ground_truth: PlatePose,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> PlatePose:
    """Simulated plate detector: ground truth plus Gaussian position error."""
    if frame.occluded:
        raise PlateNotVisible(f"plate not visible in frame {frame.index}")
    if noise == 0:
        return ground_truth
    rng = rng if rng is not None else np.random.default_rng()
    dx, dy = rng.normal(0.0, noise, 2)
    return replace(ground_truth, x=ground_truth.x + dx, y=ground_truth.y + dy)


def pose_track(
    n: int,
    base: PlatePose,
    seed: int | None = None,
    sway: float = 0.0,
    sway_period: float = 3.0,
    frame_rate: float = 30.0,
) -> list[PlatePose]:
    """A plate pose per frame: ``base`` with a slow lateral sway in pixels."""
    rng = np.random.default_rng(seed)
    ph = rng.uniform(0, 2 * np.pi)
    t = np.arange(n) / frame_rate
    dx = sway * np.sin(2 * np.pi * t / sway_period + ph)
    dy = 0.3 * sway * np.sin(2 * np.pi * t / (1.7 * sway_period) + 2 * ph)
    return [replace(base, x=base.x + float(a), y=base.y + float(b)) for a, b in zip(dx, dy)]


# -- capture simulator --------------------------------------------------------

def _lamp_looks(u: np.ndarray, v: np.ndarray, drift: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value-channel appearance of the lit and unlit lamp at local coords."""
    r = np.hypot(u, v)
    ring = np.exp(-((r - 0.25) ** 2) / (2 * 0.08**2))
    glint = np.exp(-(r**2) / (2 * 0.08**2))
    lit = 30 + 220 * ring
    unlit = 20 + 120 * glint + drift
    return lit, unlit


def _drift_field(rng: np.random.Generator, k: int = 3):
    """Two smooth random fields used to rotate reflections over time."""
    waves = rng.normal(0, 4.0, (2, k, 2))
    phases = rng.uniform(0, 2 * np.pi, (2, k))

    def field_at(u, v, angle):
        f = [sum(np.cos(waves[j, i, 0] * u + waves[j, i, 1] * v + phases[j, i]) for i in range(k)) / k
             for j in range(2)]
        return 25.0 * (np.cos(angle) * f[0] + np.sin(angle) * f[1])

    return field_at


def exposure_levels(levels: LevelSequence, n_frames: int, cfg: CameraConfig) -> np.ndarray:
    """Fraction of each frame's exposure window during which the light was on."""
    h = levels.half_period
    lv = levels.levels.astype(float)
    edges = np.arange(len(lv) + 1) * h
    cum = np.concatenate(([0.0], np.cumsum(lv) * h))

    def integral(t):
        t = np.clip(t, 0.0, edges[-1])
        k = np.minimum((t / h).astype(np.int64), len(lv) - 1)
        return cum[k] + (t - edges[k]) * lv[k]

    start = np.arange(n_frames) * cfg.frame_period + cfg.phase
    if len(lv) == 0:
        return np.zeros(n_frames)
    return (integral(start + cfg.exposure) - integral(start)) / cfg.exposure


def render_capture(
    levels: LevelSequence,
    poses: Sequence[PlatePose],
    cfg: CameraConfig,
    geometry: Sequence[LightGeometry] = DEFAULT_GEOMETRY,
    seed: int | None = None,
    occluded: Sequence[int] = (),
    colour: tuple[float, float, float] = (1.0, 0.18, 0.12),
) -> list[Frame]:
    """Render one frame per pose of a vehicle whose lights carry ``levels``.

    Light pixels are the exposure-weighted blend of the unlit and lit lamp,
    so a window straddling a level change yields a transient frame.
    """
    if cfg.exposure > cfg.frame_period:
        raise ConfigError("exposure window exceeds the frame period")
    rng = np.random.default_rng(seed)
    drift = _drift_field(rng)
    n = len(poses)
    x = exposure_levels(levels, n, cfg)
    H, W = cfg.height, cfg.width
    yy, xx = np.mgrid[0:H, 0:W].astype(float)
    body = 45 + 8 * np.sin(xx / 7.0) * np.cos(yy / 5.0)
    base = np.repeat(body[:, :, None], 3, axis=2).astype(np.float32)
    col = np.asarray(colour, dtype=float)
    sigma = cfg.noise * np.sqrt(cfg.frame_period / cfg.exposure)
    occluded = set(occluded)
    frames = []
    for k, pose in enumerate(poses):
        img = base.copy()
        t = k * cfg.frame_period
        _draw_plate(img, pose)
        for light in geometry:
            region = map_pose_to_lights(pose, light)
            sel, u, v = _ellipse_pixels(region, H, W)
            if sel is None:
                continue
            lit, unlit = _lamp_looks(u, v, drift(u, v, cfg.scene_drift * t))
            val = (1 - x[k]) * unlit[:, None] + x[k] * lit[:, None] * col[None, :]
            # the unlit lens is grey: its value equals every channel
            val = np.maximum(val, ((1 - x[k]) * unlit)[:, None])
            img[sel] = val
        if k in occluded:
            img[:] = 60.0
        if sigma > 0:
            img += sigma * rng.standard_normal(img.shape, dtype=np.float32)
        pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        frames.append(Frame(pixels, t, k, occluded=k in occluded))
    return frames


def _ellipse_pixels(region: LightRegion, H: int, W: int):
    r = max(region.semi_axes) + 1
    cx, cy = region.center
    x0, x1 = max(int(cx - r), 0), min(int(cx + r) + 2, W)
    y0, y1 = max(int(cy - r), 0), min(int(cy + r) + 2, H)
    if x0 >= x1 or y0 >= y1:
        return None, None, None
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(float)
    u, v = region.to_local(xx, yy)
    inside = u**2 + v**2 <= 1
    if not inside.any():
        return None, None, None
    return (yy[inside].astype(int), xx[inside].astype(int)), u[inside], v[inside]


def _draw_plate(img: np.ndarray, pose: PlatePose) -> None:
    H, W = img.shape[:2]
    r = pose.s * (1 + abs(pose.skew)) + 1
    x0, x1 = max(int(pose.x - r), 0), min(int(pose.x + r) + 2, W)
    y0, y1 = max(int(pose.y - r), 0), min(int(pose.y + r) + 2, H)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(float)
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    dx, dy = xx - pose.x, yy - pose.y
    u = (c * dx + s * dy) / pose.s
    v = (-s * dx + c * dy) / pose.s
    u = u - pose.skew * v
    img[y0:y1, x0:x1][(np.abs(u) <= 1) & (np.abs(v) <= 0.25)] = 215.0


# -- receiver stages ----------------------------------------------------------

def value_quantize(frame: Frame | np.ndarray, levels: int = 256) -> np.ndarray:
    """Max of R, G, B quantised to ``levels`` steps (0 .. levels-1)."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    v = np.maximum(np.maximum(px[..., 0], px[..., 1]), px[..., 2]).astype(np.int64)
    return (v * levels) // 256


def unit_disk_grid(n: int) -> np.ndarray:
    """Points of an n x n lattice on [-1, 1]^2 that fall inside the unit disk."""
    t = np.linspace(-1, 1, n)
    u, v = np.meshgrid(t, t)
    keep = u**2 + v**2 <= 1 + 1e-12
    return np.stack((u[keep], v[keep]), axis=1)


def downscale(gray: np.ndarray, ratio: int) -> np.ndarray:
    """Block-mean downscale by an integer ratio (edges cropped)."""
    if ratio == 1:
        return gray.astype(float)
    H, W = gray.shape
    h, w = H // ratio, W // ratio
    return gray[: h * ratio, : w * ratio].reshape(h, ratio, w, ratio).mean(axis=(1, 3))


def region_statistic(
    gray: np.ndarray,
    region: LightRegion,
    levels: int = 256,
    grid: np.ndarray | None = None,
    ratio: int = 1,
    origin: tuple[int, int] = (0, 0),
) -> np.ndarray:
    """Gaussian-weighted samples of the light ellipse, normalised by levels * m.

    ``gray`` is the quantised value image, downscaled by ``ratio``.  Samples
    sit on ``grid`` (unit-disk coordinates) so frames with different poses
    yield vectors of equal length; they are read with bilinear interpolation
    and samples falling off the image count as 0.  ``origin`` is the
    full-resolution (x, y) of the top-left pixel when ``gray`` is a crop.
    """
    if grid is None:
        grid = unit_disk_grid(default_grid_size(region, ratio))
    pts = region.to_pixels(grid)
    x = (pts[:, 0] - origin[0] + 0.5) / ratio - 0.5
    y = (pts[:, 1] - origin[1] + 0.5) / ratio - 0.5
    vals, ok = _bilinear(gray, x, y)
    if not ok.any():
        raise EmptyRegion("light region lies outside the frame")
    d = np.hypot(pts[:, 0] - region.center[0], pts[:, 1] - region.center[1])
    w = np.exp(-0.5 * (d / region.sigma) ** 2) / (region.sigma * np.sqrt(2 * np.pi))
    return vals * w / (levels * len(grid))


def default_grid_size(region: LightRegion, ratio: int = 1) -> int:
    """About one sample per (downscaled) pixel along the minor axis."""
    return max(5, int(round(2 * min(region.semi_axes) / ratio)))


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H, W = img.shape
    ok = (x > -0.5) & (x < W - 0.5) & (y > -0.5) & (y < H - 0.5)
    xc, yc = np.clip(x, 0, W - 1), np.clip(y, 0, H - 1)
    x0 = np.minimum(np.floor(xc).astype(np.int64), max(W - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.int64), max(H - 2, 0))
    x1, y1 = np.minimum(x0 + 1, W - 1), np.minimum(y0 + 1, H - 1)
    fx, fy = xc - x0, yc - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return np.where(ok, top * (1 - fy) + bot * fy, 0.0), ok


def correlate_lookahead(rows: np.ndarray, a: int) -> np.ndarray:
    """1 - Pearson correlation between row i and row i + a.

    A constant row has no defined correlation: two equal constant rows give
    0, any other pairing with a constant row gives 2.
    """
    rows = np.asarray(rows, dtype=float)
    if a < 1 or len(rows) < a + 1:
        raise ValueError("need at least a + 1 rows")
    c = rows - rows.mean(axis=1, keepdims=True)
    norm = np.sqrt((c * c).sum(axis=1))
    top = (c[:-a] * c[a:]).sum(axis=1)
    n0, n1 = norm[:-a], norm[a:]
    flat = (n0 == 0) | (n1 == 0)
    out = np.empty(len(top))
    out[~flat] = 1 - top[~flat] / (n0[~flat] * n1[~flat])
    same = np.all(rows[:-a] == rows[a:], axis=1)
    out[flat] = np.where(same[flat], 0.0, 2.0)
    return np.clip(out, 0.0, 2.0)


def ideal_rows(levels: LevelSequence, n_frames: int, cfg: CameraConfig, grid_size: int = 9) -> np.ndarray:
    """Noise-free region rows straight from the lamp model, skipping rendering.

    Each row is what ``region_statistic`` would see for an unrotated lamp:
    the exposure-weighted blend of the lit and unlit appearance.
    """
    lit, unlit = _ideal_looks(grid_size)
    x = exposure_levels(levels, n_frames, cfg)[:, None]
    return (unlit + x * (lit - unlit)) / cfg.levels


@functools.lru_cache(maxsize=8)
def _ideal_looks(grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    grid = unit_disk_grid(grid_size)
    u, v = grid[:, 0], grid[:, 1]
    lit, unlit = _lamp_looks(u, v, np.zeros(len(grid)))
    w = np.exp(-0.5 * ((u**2 + v**2) / 0.25**2)) / len(grid)
    return lit * w, unlit * w


def ideal_intervals(levels: LevelSequence, cfg: CameraConfig, n_bits: int, tail_frames: int = 4) -> np.ndarray:
    """Transition intervals recovered by the frame-correlation decoder from ideal rows."""
    q = frames_per_slot(levels.half_period, cfg)
    n = len(levels) * q + tail_frames
    corr = correlate_lookahead(ideal_rows(levels, n, cfg), cfg.lookahead)
    span = 2 * (len(codec.PREAMBLE) + n_bits) * q
    chain = lag_chain_decode(corr, cfg.lookahead, q, n, span, cfg.levels, cfg.min_contrast)
    return slots_to_intervals(frames_to_slots(chain.frame_levels, q)[: span // q], levels.half_period)


def frame_rows(
    frames: Sequence[Frame],
    poses: Sequence[PlatePose],
    cfg: CameraConfig,
    geometry: Sequence[LightGeometry] = DEFAULT_GEOMETRY,
    seed: int | None = None,
) -> np.ndarray:
    """Locate, map, quantise and sample every frame; one row per frame."""
    if len(frames) != len(poses):
        raise ValueError("need one ground-truth pose per frame")
    rng = np.random.default_rng(seed)
    grids = None
    rows = []
    for frame, gt in zip(frames, poses):
        try:
            pose = locate_plate(frame, gt, cfg.locate_noise, rng)
        except PlateNotVisible as exc:
            raise DecodeFailure(str(exc)) from exc
        regions = [map_pose_to_lights(pose, light) for light in geometry]
        if grids is None:
            grids = [unit_disk_grid(default_grid_size(r, cfg.downsample)) for r in regions]
        rows.append(np.concatenate([
            _sample_region(frame.pixels, r, cfg, g) for r, g in zip(regions, grids)
        ]))
    return np.asarray(rows)


def _sample_region(pixels: np.ndarray, region: LightRegion, cfg: CameraConfig, grid) -> np.ndarray:
    """Quantise and downscale only a ratio-aligned crop around the region."""
    d = cfg.downsample
    H, W = pixels.shape[:2]
    r = max(region.semi_axes) + 2 * d
    x0 = max(int(np.floor((region.center[0] - r) / d)) * d, 0)
    y0 = max(int(np.floor((region.center[1] - r) / d)) * d, 0)
    x1 = min(int(np.ceil((region.center[0] + r) / d)) * d, (W // d) * d)
    y1 = min(int(np.ceil((region.center[1] + r) / d)) * d, (H // d) * d)
    if x1 <= x0 or y1 <= y0:
        raise EmptyRegion("light region lies outside the frame")
    gray = downscale(value_quantize(pixels[y0:y1, x0:x1], cfg.levels), d)
    return region_statistic(gray, region, cfg.levels, grid, d, origin=(x0, y0))


@dataclass
class ChainDecode:
    """Per-frame level estimates plus what the receiver saw on the way."""

    frame_levels: np.ndarray
    correlations: np.ndarray
    binary: np.ndarray
    threshold: float
    kept_half: int | None = None
    kept_positions: tuple[int, ...] = ()
    separability: dict = field(default_factory=dict)


def _separability(values: np.ndarray, labels: np.ndarray) -> float:
    n = len(values)
    n1 = int(labels.sum())
    if n < 2 or n1 in (0, n):
        return 0.0
    total = float(values.sum())
    var = float(np.dot(values, values)) / n - (total / n) ** 2
    if var <= 0:
        return 0.0
    s1 = float(values @ labels)
    m1, m0 = s1 / n1, (total - s1) / (n - n1)
    w1 = n1 / n
    return w1 * (1 - w1) * (m1 - m0) ** 2 / var


@functools.lru_cache(maxsize=4)
def _preamble_slots() -> np.ndarray:
    return codec.encode_frame([], 1).levels


def lag_chain_decode(
    correlations: np.ndarray,
    a: int,
    frames_per_slot: int,
    n_frames: int,
    span: int | None = None,
    levels: int = 256,
    min_contrast: float = 0.0,
) -> ChainDecode:
    """Binarise lookahead correlations and chain them into per-frame levels.

    Frame i + a has the level of frame i flipped iff the pair was classed
    as different.  The chains start from the known preamble waveform.  When
    the lookahead is a whole number of bit periods, each chain stays at one
    position inside the bit.  Pairs are then thresholded per position, and
    for every offset inside a slot the receiver keeps the cleaner half of
    the bit and derives the other through the mandatory mid-bit inversion.
    """
    q = frames_per_slot
    pre = _preamble_slots()  # preamble, one entry per slot
    if a >= len(pre) * q:
        raise ConfigError("lookahead longer than the preamble")
    x = np.asarray(correlations, dtype=float)
    aligned = a % (2 * q) == 0
    span = n_frames if span is None else min(span, n_frames)
    pos = np.arange(len(x)) % (2 * q)
    inside = np.arange(len(x)) + a < span  # pairs past the end compare idle frames
    groups = [inside & (pos == k) for k in range(2 * q)] if aligned else [inside]
    c = np.zeros(len(x), dtype=np.uint8)
    thresholds, score, contrast = [], {}, {}
    for g, sel in enumerate(groups):
        thresholds.append(float("nan"))
        score[g], contrast[g] = 0.0, 0.0
        try:
            lab = codec.otsu_labels(x[sel], levels)
        except DegenerateInput:
            continue
        c[sel] = lab.labels
        thresholds[g] = lab.threshold
        score[g] = _separability(x[sel], lab.labels)
        contrast[g] = x[sel][lab.labels == 1].mean() - x[sel][lab.labels == 0].mean()
    # per offset inside a slot: which half of the bit to trust
    keep = tuple(max((o, o + q), key=lambda g: (score[g], -g)) for o in range(q)) if aligned else (0,)
    best = max(keep, key=lambda g: (score[g], -g))
    if contrast[best] < max(min_contrast, 1e-300):
        raise DecodeFailure("no modulation detected")
    est = np.zeros(n_frames, dtype=np.uint8)
    for j in range(min(a, n_frames)):
        idx = np.arange(j, n_frames, a)
        flips = c[idx[:-1]]
        est[idx] = pre[j // q] ^ np.concatenate(([0], np.cumsum(flips) % 2)).astype(np.uint8)
    out = ChainDecode(est, x, c, thresholds[best], separability=score)
    if aligned:
        i = np.arange(span)
        p = i % (2 * q)
        trusted = np.isin(p, keep)
        partner = np.where(p < q, i + q, i - q)
        fix = ~trusted & (partner >= 0) & (partner < span)
        est[i[fix]] = 1 - est[partner[fix]]
        out.kept_half = keep[0] // q
        out.kept_positions = keep
    return out


def frames_to_slots(frame_levels: np.ndarray, q: int) -> np.ndarray:
    n = len(frame_levels) // q
    blocks = frame_levels[: n * q].reshape(n, q)
    return (blocks.sum(axis=1) * 2 > q).astype(np.uint8) if q > 1 else blocks[:, 0].copy()


def frames_per_slot(half_period: float, cfg: CameraConfig) -> int:
    q = half_period * cfg.frame_rate
    if q < 1 - 1e-9 or abs(q - round(q)) > 1e-6:
        raise ConfigError("half period must be a whole number of frame periods")
    return int(round(q))


def decode_slots(
    frames: Sequence[Frame],
    poses: Sequence[PlatePose],
    cfg: CameraConfig,
    half_period: float,
    geometry: Sequence[LightGeometry] = DEFAULT_GEOMETRY,
    n_bits: int | None = None,
    seed: int | None = None,
) -> tuple[np.ndarray, ChainDecode]:
    """Frames -> estimated slot levels (and chain diagnostics)."""
    q = frames_per_slot(half_period, cfg)
    a = cfg.lookahead
    if len(frames) < 2 * a:
        raise DecodeFailure("need at least 2 * lookahead frames")
    rows = frame_rows(frames, poses, cfg, geometry, seed)
    corr = correlate_lookahead(rows, a)
    span = None if n_bits is None else 2 * (len(codec.PREAMBLE) + n_bits) * q
    chain = lag_chain_decode(corr, a, q, len(frames), span, cfg.levels, cfg.min_contrast)
    slots = frames_to_slots(chain.frame_levels, q)
    if span is not None:
        slots = slots[: span // q]
    return slots, chain


def video_preprocess(
    frames: Sequence[Frame],
    poses: Sequence[PlatePose],
    cfg: CameraConfig,
    half_period: float,
    geometry: Sequence[LightGeometry] = DEFAULT_GEOMETRY,
    n_bits: int | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Frames -> durations between detected light transitions, in seconds."""
    slots, _ = decode_slots(frames, poses, cfg, half_period, geometry, n_bits, seed)
    return slots_to_intervals(slots, half_period)


def slots_to_intervals(slots: np.ndarray, half_period: float) -> np.ndarray:
    rises = np.count_nonzero(np.diff(np.concatenate(([codec.IDLE_LEVEL], slots)).astype(int)) == 1)
    if rises < 2:
        raise DecodeFailure("fewer than two rising edges")
    return codec.transition_intervals(LevelSequence(np.asarray(slots, dtype=np.uint8), half_period))


def visual_receive(
    frames: Sequence[Frame],
    poses: Sequence[PlatePose],
    cfg: CameraConfig,
    half_period: float,
    n_bits: int,
    geometry: Sequence[LightGeometry] = DEFAULT_GEOMETRY,
    seed: int | None = None,
) -> np.ndarray:
    intervals = video_preprocess(frames, poses, cfg, half_period, geometry, n_bits, seed)
    return codec.decode_intervals(intervals, n_bits, cfg.levels)


def transition_mistakes(decoded: Sequence[int], sent: Sequence[int]) -> int:
    """Slot boundaries where a transition was seen but not sent, or vice versa."""
    d = np.concatenate(([codec.IDLE_LEVEL], np.asarray(decoded, dtype=np.int64)))
    s = np.concatenate(([codec.IDLE_LEVEL], np.asarray(sent, dtype=np.int64)))
    n = min(len(d), len(s))
    td, ts = np.diff(d[:n]) != 0, np.diff(s[:n]) != 0
    return int(np.count_nonzero(td != ts)) + abs(len(d) - len(s))


# -- link helper and sweep ----------------------------------------------------

@dataclass
class VisualLink:
    """Transmitter + camera pair with everything needed to run a transfer."""

    cfg: CameraConfig = field(default_factory=CameraConfig)
    base_pose: PlatePose = field(default_factory=lambda: PlatePose(160.0, 176.0))
    geometry: tuple[LightGeometry, ...] = DEFAULT_GEOMETRY
    frames_per_slot: int = 1
    sway: float = 0.0
    tail_frames: int = 0

    @property
    def half_period(self) -> float:
        return self.frames_per_slot / self.cfg.frame_rate

    def capture(self, payload, seed: int | None = None, occluded: Sequence[int] = ()):
        levels = codec.encode_frame(payload, self.half_period)
        n = len(levels) * self.frames_per_slot + self.tail_frames
        poses = pose_track(n, self.base_pose, seed, self.sway, frame_rate=self.cfg.frame_rate)
        frames = render_capture(levels, poses, self.cfg, self.geometry, seed, occluded)
        return levels, frames, poses

    def transfer(self, payload, seed: int | None = None, occluded: Sequence[int] = (),
                 cfg: CameraConfig | None = None):
        """Send ``payload``; return (decoded bits, sent levels, decoded slots)."""
        payload = codec.as_bits(payload)
        levels, frames, poses = self.capture(payload, seed, occluded)
        cfg = cfg or self.cfg
        slots, _ = decode_slots(frames, poses, cfg, self.half_period, self.geometry, len(payload), seed)
        intervals = slots_to_intervals(slots, self.half_period)
        return codec.decode_intervals(intervals, len(payload), cfg.levels), levels.levels, slots

    def airtime(self, n_bits: int) -> float:
        return 2 * (len(codec.PREAMBLE) + n_bits) * self.half_period


def sweep_configurations(
    link: VisualLink,
    payload,
    exposures: Sequence[float],
    lookaheads: Sequence[int] = (1, 2, 4),
    downsamples: Sequence[int] = (1, 2, 4),
    seed: int = 0,
) -> list[dict]:
    """Transition mistakes and processing time for every configuration.

    One capture is rendered per exposure and decoded under every
    lookahead / downsample pair.  ``time_s`` is measured wall-clock time.
    """
    payload = codec.as_bits(payload)
    rows = []
    for exposure in exposures:
        cap_cfg = replace(link.cfg, exposure=exposure)
        cap = replace(link, cfg=cap_cfg)
        levels, frames, poses = cap.capture(payload, seed)
        for a in lookaheads:
            for d in downsamples:
                cfg = replace(cap_cfg, lookahead=a, downsample=d)
                t0 = time.perf_counter()
                try:
                    slots, _ = decode_slots(frames, poses, cfg, link.half_period, link.geometry,
                                            len(payload), seed)
                    mistakes = transition_mistakes(slots, levels.levels)
                except DecodeFailure:
                    mistakes = transition_mistakes([], levels.levels)
                rows.append(dict(exposure=exposure, lookahead=a, downsample=d, mistakes=mistakes,
                                 time_s=time.perf_counter() - t0))
    return rows


# -- capture files --------------------------------------------------------------

def write_capture(
    directory: str | Path,
    frames: Sequence[Frame],
    poses: Sequence[PlatePose],
    cfg: CameraConfig,
    seed: int | None = None,
    extra: dict | None = None,
) -> Path:
    """Binary PPM per frame plus ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for f in frames:
        name = f"frame_{f.index:05d}.ppm"
        H, W, _ = f.pixels.shape
        with open(out / name, "wb") as fh:
            fh.write(f"P6\n{W} {H}\n255\n".encode())
            fh.write(np.ascontiguousarray(f.pixels).tobytes())
        names.append(name)
    manifest = {
        "frame_rate": cfg.frame_rate,
        "exposure": cfg.exposure,
        "seed": seed,
        "camera": asdict(cfg),
        "frames": [
            {"file": n, "timestamp": f.timestamp, "occluded": f.occluded, "pose": asdict(p)}
            for n, f, p in zip(names, frames, poses)
        ],
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out


def _read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # exactly one whitespace byte separates the header from the raster
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if not m or int(m.group(3)) != 255:
        raise ConfigError(f"{path}: not an 8-bit binary PPM")
    W, H = int(m.group(1)), int(m.group(2))
    body = data[m.end():]
    if len(body) < W * H * 3:
        raise ConfigError(f"{path}: truncated raster")
    return np.frombuffer(body[: W * H * 3], dtype=np.uint8).reshape(H, W, 3).copy()


def read_capture(directory: str | Path) -> tuple[list[Frame], list[PlatePose], dict]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    frames, poses = [], []
    for i, rec in enumerate(manifest["frames"]):
        frames.append(Frame(_read_ppm(d / rec["file"]), rec["timestamp"], i, rec.get("occluded", False)))
        poses.append(PlatePose(**rec["pose"]))
    return frames, poses, manifest

"""Procedural letter glyphs for the three handwriting classes.

Stand-in for real letter corpora: each letter is a stroke skeleton in the unit
square, rasterized with anti-aliased thick lines. Reversal glyphs are mirror
images; Corrected glyphs carry a faint mirrored ghost plus a few overdraw
strokes.

Random streams: sample ``i`` of a pool draws its render jitter from
``SeedSequence(rng_seed, spawn_key=(0, i))`` and its correction artifact from
``SeedSequence(rng_seed, spawn_key=(1, i))``, both fed to PCG64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from synthwords.core import BIN_THRESHOLD, ConfigError, LetterClass
from synthwords.letter_prep import (
    LetterPool,
    LetterSample,
    crop_to_content,
    resize_letter,
)

Segment = tuple[float, float, float, float]

_RENDER_STREAM = 0
_ARTIFACT_STREAM = 1


@dataclass(frozen=True)
class StrokeSkeleton:
    letter_id: str
    segments: tuple[Segment, ...]
    stroke_width: float = 0.11  # fraction of glyph size

    def __post_init__(self):
        if not self.segments:
            raise ValueError(f"skeleton {self.letter_id!r} has no segments")
        for seg in self.segments:
            if not all(-1e-9 <= v <= 1 + 1e-9 for v in seg):
                raise ValueError(f"skeleton {self.letter_id!r} endpoint outside unit square: {seg}")


def _poly(*pts) -> list[Segment]:
    return [(*a, *b) for a, b in zip(pts, pts[1:])]


def _arc(cx, cy, rx, ry, deg0, deg1, n=10) -> list[Segment]:
    # y grows downward, so positive angles sweep counter-clockwise on screen
    ts = np.radians(np.linspace(deg0, deg1, n + 1))
    pts = [(round(cx + rx * math.cos(t), 6), round(cy - ry * math.sin(t), 6)) for t in ts]
    return _poly(*pts)


def _skeletons() -> dict[str, tuple[Segment, ...]]:
    s = {
        "b": _poly((0.2, 0.0), (0.2, 1.0)) + _arc(0.5, 0.7, 0.3, 0.3, 180, -180, 16),
        "d": _poly((0.8, 0.0), (0.8, 1.0)) + _arc(0.5, 0.7, 0.3, 0.3, 0, 360, 16),
        "c": _arc(0.5, 0.5, 0.42, 0.5, 45, 315, 14),
        "e": _poly((0.1, 0.5), (0.9, 0.5)) + _arc(0.5, 0.5, 0.4, 0.5, 0, 315, 16),
        "f": _poly((0.35, 0.25), (0.35, 1.0)) + _arc(0.6, 0.25, 0.25, 0.25, 180, 30, 8)
        + _poly((0.1, 0.45), (0.7, 0.45)),
        "j": _poly((0.35, 0.0), (0.7, 0.0), (0.7, 0.75)) + _arc(0.45, 0.75, 0.25, 0.25, 0, -180, 8),
        "k": _poly((0.2, 0.0), (0.2, 1.0)) + _poly((0.85, 0.3), (0.2, 0.7))
        + _poly((0.45, 0.55), (0.85, 1.0)),
        "r": _poly((0.25, 0.2), (0.25, 1.0)) + _arc(0.55, 0.5, 0.3, 0.3, 180, 30, 8),
        "s": _arc(0.5, 0.25, 0.38, 0.25, 20, 270, 12) + _arc(0.5, 0.75, 0.38, 0.25, 90, -160, 12),
        "z": _poly((0.1, 0.0), (0.9, 0.0), (0.1, 1.0), (0.9, 1.0)),
        "o": _arc(0.5, 0.5, 0.4, 0.5, 0, 360, 16),
        "x": _poly((0.1, 0.0), (0.9, 1.0)) + _poly((0.9, 0.0), (0.1, 1.0)),
    }
    return {k: tuple(tuple(max(0.0, min(1.0, v)) for v in seg) for seg in v) for k, v in s.items()}


SKELETONS = _skeletons()
DEFAULT_ALPHABET = ("b", "c", "e", "f", "j", "k", "r", "s")


def skeleton(letter_id: str, stroke_width: float = 0.11) -> StrokeSkeleton:
    try:
        return StrokeSkeleton(letter_id, SKELETONS[letter_id], stroke_width)
    except KeyError:
        raise ConfigError(f"no skeleton for letter {letter_id!r}; known: {sorted(SKELETONS)}") from None


@dataclass
class SynthConfig:
    alphabet: tuple[str, ...] = DEFAULT_ALPHABET
    jitter_px: float = 2.0
    width_range: tuple[float, float] = (0.06, 0.10)
    correction_ghost_alpha: float = 0.35
    artifact_prob: float = 1.0
    overdraw_strokes: tuple[int, int] = (1, 3)
    overdraw_length: tuple[float, float] = (0.05, 0.12)
    overdraw_width: float = 0.6  # relative to the glyph stroke width
    render_size: int = 64
    rng_seed: int = 0

    def validate(self) -> None:
        if not self.alphabet:
            raise ConfigError("alphabet: must not be empty")
        if not 0.0 <= self.correction_ghost_alpha <= 1.0:
            raise ConfigError("correction_ghost_alpha: must lie in [0, 1]")
        if not 0.0 <= self.artifact_prob <= 1.0:
            raise ConfigError("artifact_prob: must lie in [0, 1]")
        lo, hi = self.width_range
        if not 0 < lo <= hi < 0.5:
            raise ConfigError(f"width_range: need 0 < lo <= hi < 0.5, got {self.width_range}")
        if self.jitter_px < 0:
            raise ConfigError("jitter_px: must be >= 0")
        if self.render_size < 8:
            raise ConfigError("render_size: must be >= 8")
        n0, n1 = self.overdraw_strokes
        if not 0 <= n0 <= n1:
            raise ConfigError(f"overdraw_strokes: need 0 <= lo <= hi, got {self.overdraw_strokes}")
        flipped = {}
        for letter in self.alphabet:
            sk = skeleton(letter)
            if not is_asymmetric(sk):
                raise ConfigError(f"alphabet: letter {letter!r} is mirror-symmetric")
            flipped[letter] = mirror(render_skeleton(sk, 48))
        # a letter whose mirror is another alphabet letter makes Reversal ambiguous
        for a in self.alphabet:
            for b in self.alphabet:
                if a < b and _differs(flipped[a], render_skeleton(skeleton(b), 48)) < 0.05:
                    raise ConfigError(f"alphabet: {a!r} mirrored is indistinguishable from {b!r}")


def seed_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def draw_segment(img: np.ndarray, x0, y0, x1, y1, width: float, intensity: float = 255.0) -> None:
    """Anti-aliased thick line, merged into ``img`` (float) by max. Coordinates in pixels."""
    h, w = img.shape
    r = width / 2.0
    pad = int(math.ceil(r + 1))
    cx0 = max(int(math.floor(min(x0, x1))) - pad, 0)
    cx1 = min(int(math.ceil(max(x0, x1))) + pad + 1, w)
    cy0 = max(int(math.floor(min(y0, y1))) - pad, 0)
    cy1 = min(int(math.ceil(max(y0, y1))) + pad + 1, h)
    if cx0 >= cx1 or cy0 >= cy1:
        return
    px = np.arange(cx0, cx1) + 0.5
    py = np.arange(cy0, cy1) + 0.5
    gx, gy = np.meshgrid(px, py)
    dx, dy = x1 - x0, y1 - y0
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0:
        t = np.zeros_like(gx)
    else:
        t = np.clip(((gx - x0) * dx + (gy - y0) * dy) / seg_len2, 0.0, 1.0)
    dist = np.hypot(gx - (x0 + t * dx), gy - (y0 + t * dy))
    cover = np.clip(r + 0.5 - dist, 0.0, 1.0) * intensity
    region = img[cy0:cy1, cx0:cx1]
    np.maximum(region, cover, out=region)


def render_skeleton(
    sk: StrokeSkeleton,
    size: int,
    rng: np.random.Generator | None = None,
    jitter_px: float = 0.0,
) -> np.ndarray:
    """Rasterize a skeleton to a (size, size) ink-bright uint8 image.

    Shared endpoints receive the same jitter so joints stay attached.
    """
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    width = sk.stroke_width * size
    pad = width / 2 + 1.0
    span = size - 2 * pad
    offsets: dict[tuple[float, float], tuple[float, float]] = {}

    def place(u: float, v: float) -> tuple[float, float]:
        key = (round(u, 6), round(v, 6))
        if key not in offsets:
            if jitter_px > 0 and rng is not None:
                offsets[key] = tuple(rng.uniform(-jitter_px, jitter_px, size=2))
            else:
                offsets[key] = (0.0, 0.0)
        ox, oy = offsets[key]
        return (
            min(max(pad + u * span + ox, pad), size - pad),
            min(max(pad + v * span + oy, pad), size - pad),
        )

    canvas = np.zeros((size, size), dtype=np.float64)
    for u0, v0, u1, v1 in sk.segments:
        draw_segment(canvas, *place(u0, v0), *place(u1, v1), width)
    return np.floor(canvas + 0.5).astype(np.uint8)


def mirror(img: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(img[:, ::-1])


def apply_correction_artifact(
    img: np.ndarray,
    alpha: float,
    rng: np.random.Generator,
    n_strokes: tuple[int, int] = (1, 3),
    stroke_width: float | None = None,
    stroke_length: tuple[float, float] = (0.15, 0.3),
) -> np.ndarray:
    """Blend a faint mirrored ghost into ``img`` and add short overdraw strokes.

    Overdraw strokes start on an existing ink pixel, so the glyph stays one
    connected piece.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    ghost = np.floor(alpha * mirror(img).astype(np.float64) + 0.5)
    out = np.maximum(img.astype(np.float64), ghost)
    size = img.shape[0]
    count = int(rng.integers(n_strokes[0], n_strokes[1] + 1)) if n_strokes[1] > 0 else 0
    ys, xs = np.nonzero(img > BIN_THRESHOLD)
    if count and ys.size:
        width = stroke_width if stroke_width is not None else 0.1 * size
        for _ in range(count):
            k = int(rng.integers(ys.size))
            angle = rng.uniform(0, 2 * math.pi)
            length = rng.uniform(*stroke_length) * size
            x0, y0 = xs[k] + 0.5, ys[k] + 0.5
            draw_segment(out, x0, y0, x0 + length * math.cos(angle), y0 + length * math.sin(angle), width)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# Crop level for synthetic glyphs. Every edge row and column then holds a pixel
# of at least 172, and 0.75 * 172 rounds above 128, so a 2x bilinear upscale
# keeps the ink on all four edges and the tight box fills the whole slot.
EDGE_THRESHOLD = 172


def normalize_glyph(img: np.ndarray, threshold: int = EDGE_THRESHOLD, max_passes: int = 8) -> np.ndarray:
    """Crop to ink and resize to 32x32, repeated until the result is a fixed point.

    A fixed point at ``threshold`` >= 128 also survives a later prep pass
    (export then reload) unchanged.
    """
    out = resize_letter(crop_to_content(img, threshold))
    for _ in range(max_passes):
        again = resize_letter(crop_to_content(out, threshold))
        if np.array_equal(again, out):
            break
        out = again
    return out


def _differs(a: np.ndarray, b: np.ndarray, tol: int = 32) -> float:
    return float(np.mean(np.abs(a.astype(np.int16) - b.astype(np.int16)) > tol))


def is_asymmetric(sk: StrokeSkeleton, size: int = 48, min_fraction: float = 0.05) -> bool:
    img = render_skeleton(sk, size)
    return _differs(img, mirror(img)) >= min_fraction


def synth_pool(cfg: SynthConfig, per_class_count: int) -> LetterPool:
    """Build a pool with ``per_class_count`` samples in each class.

    Sample ``i`` in every class starts from the same raw render of
    ``alphabet[i % len(alphabet)]``; Reversal mirrors it and Corrected adds the
    correction artifact. Each class list is then stably sorted by letter.
    """
    cfg.validate()
    if per_class_count < 1:
        raise ValueError("per_class_count must be >= 1")
    pool = LetterPool()
    lo, hi = cfg.width_range
    for i in range(per_class_count):
        letter = cfg.alphabet[i % len(cfg.alphabet)]
        rng = seed_stream(cfg.rng_seed, _RENDER_STREAM, i)
        width = float(rng.uniform(lo, hi))
        raw = render_skeleton(skeleton(letter, width), cfg.render_size, rng, cfg.jitter_px)
        art_rng = seed_stream(cfg.rng_seed, _ARTIFACT_STREAM, i)
        if art_rng.random() < cfg.artifact_prob:
            corrected = apply_correction_artifact(
                raw,
                cfg.correction_ghost_alpha,
                art_rng,
                cfg.overdraw_strokes,
                cfg.overdraw_width * width * cfg.render_size,
                cfg.overdraw_length,
            )
        else:
            corrected = raw
        tag = f"synth:{cfg.rng_seed}:{i}"
        for cls, img in (
            (LetterClass.NORMAL, raw),
            (LetterClass.REVERSAL, mirror(raw)),
            (LetterClass.CORRECTED, corrected),
        ):
            pool.add(LetterSample(normalize_glyph(img), cls, letter, tag))
    # same order a reload of the exported folders produces
    for cls in LetterClass:
        pool.samples[cls].sort(key=lambda s: s.letter_id)
    return pool

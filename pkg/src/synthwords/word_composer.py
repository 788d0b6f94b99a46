"""Compose pooled letters into 640x640 word scenes with exact ground truth.

Layout: each letter owns a square slot of ``base_letter_size`` px, widened by
the worst-case augmentation overshoot on every side. Slots on a row are
separated by a random gap, so letters can never touch. Ground-truth boxes are
the tight boxes of the placed ink (pixels above ``bin_threshold``); fainter
anti-aliasing outside a letter's box is cleared, leaving pure background.

Scene ``i`` draws everything from ``SeedSequence(rng_seed, spawn_key=(2, i))``.
Dataset split membership ranks scenes by ``sha256(f"{rng_seed}:{i}")``.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from synthwords.core import BIN_THRESHOLD, ConfigError, GroundTruthBox, LetterClass, PixelBox, tight_box
from synthwords.glyph_synth import seed_stream
from synthwords.letter_prep import LetterPool, LetterSample, resize_bilinear, write_gray_png

log = logging.getLogger(__name__)

_SCENE_STREAM = 2
SPLITS = ("train", "val", "test")


class CompositionError(RuntimeError):
    pass


class PlacementError(CompositionError):
    pass


@dataclass
class MixtureConfig:
    p_normal: float = 0.40
    p_reversal: float = 0.30
    p_corrected: float = 0.30

    def probs(self) -> tuple[float, float, float]:
        return (self.p_normal, self.p_reversal, self.p_corrected)

    def validate(self) -> None:
        p = self.probs()
        if any(v < 0 for v in p):
            raise ConfigError(f"mixture: probabilities must be >= 0, got {p}")
        if abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError(f"mixture: probabilities must sum to 1, got {sum(p)!r}")


@dataclass
class AugmentConfig:
    enabled: bool = False
    rotation_deg: float = 5.0
    translate_ratio: float = 0.1
    scale_delta: float = 0.2

    def validate(self) -> None:
        for name in ("rotation_deg", "translate_ratio", "scale_delta"):
            if getattr(self, name) < 0:
                raise ConfigError(f"augment.{name}: must be >= 0")
        if self.rotation_deg > 45:
            raise ConfigError("augment.rotation_deg: must be <= 45")
        if self.scale_delta >= 1:
            raise ConfigError("augment.scale_delta: must be < 1")

    def overshoot(self, size: int) -> int:
        """Most pixels a transformed glyph can reach beyond its square slot, per side."""
        if not self.enabled:
            return 0
        t = math.radians(self.rotation_deg)
        half = size / 2 * (1 + self.scale_delta) * (math.cos(t) + math.sin(t))
        return int(math.ceil(half - size / 2 + self.translate_ratio * size + 1))


@dataclass
class ComposerConfig:
    canvas_size: int = 640
    min_len: int = 2
    max_len: int = 7
    base_letter_size: int = 64
    gap_range: tuple[int, int] = (8, 22)
    margin: int = 16
    row_gap: int = 16
    words_per_image: int = 1
    bin_threshold: int = BIN_THRESHOLD
    mixture: MixtureConfig = field(default_factory=MixtureConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    rng_seed: int = 0

    @property
    def slot(self) -> int:
        return self.base_letter_size + 2 * self.augment.overshoot(self.base_letter_size)

    def validate(self) -> None:
        self.mixture.validate()
        self.augment.validate()
        if not 2 <= self.min_len <= self.max_len:
            raise ConfigError(f"min_len/max_len: need 2 <= min_len <= max_len, got {self.min_len}, {self.max_len}")
        g0, g1 = self.gap_range
        if not 1 <= g0 <= g1:
            raise ConfigError(f"gap_range: need 1 <= min <= max, got {self.gap_range}")
        if self.base_letter_size < 1 or self.margin < 0 or self.words_per_image < 1:
            raise ConfigError("base_letter_size, margin and words_per_image must be positive")
        width = self.max_len * (self.slot + g1) + 2 * self.margin
        if width > self.canvas_size:
            raise ConfigError(
                f"canvas_size: {self.max_len} letters x (slot {self.slot} + max gap {g1}) "
                f"+ 2 x margin {self.margin} = {width} px exceeds canvas {self.canvas_size}"
            )
        height = self.words_per_image * self.slot + (self.words_per_image - 1) * self.row_gap + 2 * self.margin
        if height > self.canvas_size:
            raise ConfigError(f"words_per_image: {self.words_per_image} rows need {height} px > canvas")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ComposerConfig":
        d = dict(d)
        mixture = MixtureConfig(**d.pop("mixture", {}))
        augment = AugmentConfig(**d.pop("augment", {}))
        if "gap_range" in d:
            d["gap_range"] = tuple(d["gap_range"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"compose: unknown field(s) {sorted(unknown)}")
        return cls(mixture=mixture, augment=augment, **d)


@dataclass
class WordScene:
    canvas: np.ndarray
    boxes: list[GroundTruthBox]
    scene_id: int = 0
    seed: int = 0
    ink_pixels: int = 0


def sample_word_spec(
    rng: np.random.Generator, cfg: ComposerConfig, pool: LetterPool | None = None
) -> list[tuple[LetterClass, str]]:
    """Draw a word: length uniform on [min_len, max_len], classes i.i.d. from the mixture."""
    length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
    cum = np.cumsum(cfg.mixture.probs())
    spec = []
    for _ in range(length):
        cls = LetterClass(min(int(np.searchsorted(cum, rng.random(), side="right")), 2))
        if pool is None:
            spec.append((cls, ""))
            continue
        ids = pool.letter_ids(cls)
        if not ids:
            raise CompositionError(f"class {cls.display} is requested but the pool has no {cls.display} samples")
        spec.append((cls, ids[int(rng.integers(len(ids)))]))
    return spec


def _affine_patch(glyph: np.ndarray, patch: int, angle: float, scale: float, tx: float, ty: float) -> np.ndarray:
    """Rotate/scale ``glyph`` about its centre, shift by (tx, ty), into a patch x patch canvas.

    Inverse-mapped bilinear sampling; outside the glyph reads as 0.
    """
    n = glyph.shape[0]
    c = np.arange(patch) + 0.5 - patch / 2.0
    gx, gy = np.meshgrid(c - tx, c - ty)
    cos, sin = math.cos(angle), math.sin(angle)
    # inverse rotation, then inverse scale, back to glyph pixel coordinates
    sx = (cos * gx + sin * gy) / scale + n / 2.0 - 0.5
    sy = (-sin * gx + cos * gy) / scale + n / 2.0 - 0.5
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    fx = sx - x0
    fy = sy - y0
    padded = np.zeros((n + 2, n + 2), dtype=np.float64)
    padded[1:-1, 1:-1] = glyph

    def tap(yy, xx):
        yy = np.clip(yy + 1, 0, n + 1)
        xx = np.clip(xx + 1, 0, n + 1)
        return padded[yy, xx]

    out = (
        tap(y0, x0) * (1 - fx) * (1 - fy)
        + tap(y0, x0 + 1) * fx * (1 - fy)
        + tap(y0 + 1, x0) * (1 - fx) * fy
        + tap(y0 + 1, x0 + 1) * fx * fy
    )
    return np.floor(out + 0.5).clip(0, 255).astype(np.uint8)


def place_letter(
    canvas: np.ndarray,
    sample: LetterSample,
    anchor_x: int,
    baseline_y: int,
    aug: AugmentConfig,
    rng: np.random.Generator,
    size: int = 64,
    bin_threshold: int = BIN_THRESHOLD,
    max_tries: int = 10,
) -> GroundTruthBox:
    """Draw one letter into the square slot [anchor_x, +size) x [baseline_y - size, baseline_y).

    The glyph is upscaled to ``size`` and, with augmentation on, rotated,
    rescaled and shifted. It is merged by max into ``canvas`` in place. The
    returned box is the tight box of the transformed ink.
    """
    glyph = resize_bilinear(sample.image, size, size)
    o = aug.overshoot(size)
    top = baseline_y - size
    H, W = canvas.shape
    for _ in range(max_tries):
        if aug.enabled:
            angle = math.radians(rng.uniform(-aug.rotation_deg, aug.rotation_deg))
            scale = 1.0 + rng.uniform(-aug.scale_delta, aug.scale_delta)
            tx, ty = rng.uniform(-aug.translate_ratio * size, aug.translate_ratio * size, size=2)
            patch = _affine_patch(glyph, size + 2 * o, angle, scale, tx, ty)
        else:
            patch = glyph
        local = tight_box(patch, bin_threshold)
        if local is None:
            continue
        box = local.shifted(anchor_x - o, top - o)
        if not box.inside(W, H):
            continue
        ly, lx = local.slices()
        cy, cx = box.slices()
        np.maximum(canvas[cy, cx], patch[ly, lx], out=canvas[cy, cx])
        return GroundTruthBox(box, sample.cls, sample.letter_id)
    raise PlacementError(
        f"letter {sample.letter_id!r} at x={anchor_x}, baseline={baseline_y} "
        f"does not fit the {W}x{H} canvas after {max_tries} draws"
    )


def compose_word(
    spec: list[tuple[LetterClass, str]] | list[list[tuple[LetterClass, str]]],
    pool: LetterPool,
    cfg: ComposerConfig,
    rng: np.random.Generator,
) -> WordScene:
    """Render one scene. ``spec`` is a single word or a list of words (one per row)."""
    words = spec if spec and isinstance(spec[0], list) else [spec]
    n = cfg.canvas_size
    canvas = np.zeros((n, n), dtype=np.uint8)
    slot, size = cfg.slot, cfg.base_letter_size
    o = (slot - size) // 2
    rows_h = len(words) * slot + (len(words) - 1) * cfg.row_gap
    y = cfg.margin + int(rng.integers(0, n - 2 * cfg.margin - rows_h + 1))
    boxes: list[GroundTruthBox] = []
    for word in words:
        gaps = [int(rng.integers(cfg.gap_range[0], cfg.gap_range[1] + 1)) for _ in range(len(word) - 1)]
        width = len(word) * slot + sum(gaps)
        x = cfg.margin + int(rng.integers(0, n - 2 * cfg.margin - width + 1))
        for k, (cls, letter_id) in enumerate(word):
            candidates = [s for s in pool.samples[cls] if s.letter_id == letter_id] or pool.samples[cls]
            if not candidates:
                raise CompositionError(f"pool has no {cls.display} samples")
            sample = candidates[int(rng.integers(len(candidates)))]
            boxes.append(
                place_letter(canvas, sample, x + o, y + o + size, cfg.augment, rng, size, cfg.bin_threshold)
            )
            if k < len(gaps):
                x += slot + gaps[k]
        y += slot + cfg.row_gap
    # clear sub-threshold halo outside the letter boxes
    keep = np.zeros_like(canvas, dtype=bool)
    for gt in boxes:
        keep[gt.box.slices()] = True
    canvas[~keep] = 0
    ink = int(np.count_nonzero(canvas > cfg.bin_threshold))
    return WordScene(canvas, boxes, ink_pixels=ink)


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return seed_stream(seed, _SCENE_STREAM, index)


def make_scene(pool: LetterPool, cfg: ComposerConfig, index: int) -> WordScene:
    rng = scene_rng(cfg.rng_seed, index)
    words = [sample_word_spec(rng, cfg, pool) for _ in range(cfg.words_per_image)]
    scene = compose_word(words, pool, cfg, rng)
    scene.scene_id = index
    scene.seed = int(np.random.SeedSequence(cfg.rng_seed, spawn_key=(_SCENE_STREAM, index)).generate_state(2, np.uint64)[0])
    return scene


def split_hash(seed: int, index: int) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}:{index}".encode()).digest()[:8], "big")


def assign_splits(n: int, fractions: tuple[float, float, float], seed: int) -> list[str]:
    """Split name per scene index.

    Counts come from largest-remainder rounding of ``fractions * n`` (ties go
    to the earlier split). Scenes are ranked by ``split_hash`` and dealt out in
    that order: the first ``count[train]`` to train, then val, then test.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split: need three non-negative fractions summing to 1, got {fractions}")
    raw = [f * n for f in fractions]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(3), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[: n - sum(counts)]:
        counts[k] += 1
    ranked = sorted(range(n), key=lambda i: (split_hash(seed, i), i))
    names = [""] * n
    pos = 0
    for split, c in zip(SPLITS, counts):
        for i in ranked[pos : pos + c]:
            names[i] = split
        pos += c
    return names


def _render_job(args) -> tuple[int, list[tuple[int, int, int, int, int]], int]:
    pool, cfg, index, image_path, label_path = args
    from synthwords.annotation_io import write_labels

    scene = make_scene(pool, cfg, index)
    write_gray_png(image_path, scene.canvas)
    write_labels(scene, label_path)
    return index, len(scene.boxes), scene.ink_pixels


def generate_dataset(
    pool: LetterPool,
    cfg: ComposerConfig,
    n_images: int,
    split: tuple[float, float, float],
    out_dir: str | Path,
    workers: int = 1,
    extra_meta: dict | None = None,
):
    """Write ``n_images`` scenes plus labels and ``manifest.json`` under ``out_dir``.

    Output bytes do not depend on ``workers``.
    """
    from synthwords.annotation_io import DatasetManifest, config_hash

    cfg.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    names = assign_splits(n_images, tuple(split), cfg.rng_seed)
    entries: dict[str, list[tuple[str, str]]] = {s: [] for s in SPLITS}
    jobs = []
    for i, sp in enumerate(names):
        img_rel = f"images/{sp}/{i:06d}.png"
        lab_rel = f"labels/{sp}/{i:06d}.txt"
        entries[sp].append((img_rel, lab_rel))
        jobs.append((pool, cfg, i, out / img_rel, out / lab_rel))
    for sp in SPLITS:
        (out / "images" / sp).mkdir(parents=True, exist_ok=True)
        (out / "labels" / sp).mkdir(parents=True, exist_ok=True)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            list(ex.map(_render_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        for job in jobs:
            _render_job(job)
    meta = {"composer": cfg.to_dict(), "n_images": n_images, "split": list(split)}
    if extra_meta:
        meta.update(extra_meta)
    manifest = DatasetManifest(
        image_size=cfg.canvas_size,
        splits=entries,
        config_hash=config_hash(meta, pool),
        master_seed=cfg.rng_seed,
        config=meta,
        root=out,
    )
    manifest.save(out / "manifest.json")
    return manifest


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)

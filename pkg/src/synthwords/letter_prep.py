"""Normalize single-letter images into 32x32 white-on-black glyphs.

Pipeline: grayscale -> polarity -> crop to ink -> bilinear resize.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from synthwords.core import BIN_THRESHOLD, CLASS_NAMES, ConfigError, LetterClass, tight_box

log = logging.getLogger(__name__)

LETTER_SIZE = 32


class EmptyGlyphError(ValueError):
    """No pixel exceeds the binarization threshold."""


@dataclass
class LetterSample:
    image: np.ndarray  # (32, 32) uint8, ink-bright
    cls: LetterClass
    letter_id: str
    source: str = ""

    def check(self, threshold: int = BIN_THRESHOLD) -> None:
        img = self.image
        if img.shape != (LETTER_SIZE, LETTER_SIZE) or img.dtype != np.uint8:
            raise ValueError(f"letter sample must be 32x32 uint8, got {img.shape} {img.dtype}")
        if img.mean() >= 128:
            raise ValueError(f"letter sample {self.source!r} is not ink-bright (mean {img.mean():.1f})")
        if not (img > threshold).any():
            raise EmptyGlyphError(f"letter sample {self.source!r} has no ink")


@dataclass
class LetterPool:
    samples: dict[LetterClass, list[LetterSample]] = field(
        default_factory=lambda: {c: [] for c in LetterClass}
    )
    skipped: int = 0

    def counts(self) -> dict[LetterClass, int]:
        return {c: len(self.samples[c]) for c in LetterClass}

    def letter_ids(self, cls: LetterClass) -> list[str]:
        return sorted({s.letter_id for s in self.samples[cls]})

    def add(self, sample: LetterSample) -> None:
        self.samples[sample.cls].append(sample)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Collapse an (H, W) or (H, W, C) uint8 raster to one channel.

    RGB(A) uses the 0.299/0.587/0.114 luminance weights, rounded half up in
    integer arithmetic. Alpha is ignored.
    """
    img = np.asarray(img)
    if img.ndim == 2:
        return img
    if img.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D raster, got {img.ndim} dimensions")
    channels = img.shape[2]
    if channels == 1:
        return img[:, :, 0]
    if channels not in (3, 4):
        raise ValueError(f"unsupported channel count: {channels}")
    rgb = img[:, :, :3].astype(np.int64)
    lum = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2] + 500) // 1000
    return lum.astype(np.uint8)


def normalize_polarity(img: np.ndarray) -> np.ndarray:
    """Invert predominantly light images (mean > 127.5) so ink is bright."""
    if img.mean() > 127.5:
        return (255 - img).astype(np.uint8)
    return img


def crop_to_content(img: np.ndarray, bin_threshold: int = BIN_THRESHOLD) -> np.ndarray:
    box = tight_box(img, bin_threshold)
    if box is None:
        raise EmptyGlyphError(f"no pixel above threshold {bin_threshold}")
    return img[box.slices()]


def _axis_taps(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # Pixel centres aligned: src = (dst + 0.5) * n_in / n_out - 0.5, clamped to the edge.
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize with edge clamping; values rounded half up."""
    src = img.astype(np.float64)
    r0, r1, fy = _axis_taps(img.shape[0], height)
    c0, c1, fx = _axis_taps(img.shape[1], width)
    rows = src[r0] * (1.0 - fy)[:, None] + src[r1] * fy[:, None]
    out = rows[:, c0] * (1.0 - fx)[None, :] + rows[:, c1] * fx[None, :]
    return np.floor(out + 0.5).clip(0, 255).astype(np.uint8)


def resize_letter(img: np.ndarray, size: int = LETTER_SIZE) -> np.ndarray:
    return resize_bilinear(img, size, size)


def prep_letter(img: np.ndarray, bin_threshold: int = BIN_THRESHOLD) -> np.ndarray:
    gray = normalize_polarity(to_grayscale(img))
    return resize_letter(crop_to_content(gray, bin_threshold))


def read_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("P", "LA", "I;16", "I", "F", "1", "CMYK"):
            im = im.convert("RGBA" if "A" in im.mode or im.mode == "P" else "L")
        return np.asarray(im)


def write_gray_png(path: str | Path, img: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(img, dtype=np.uint8), mode="L").save(path, format="PNG")


def load_letter_pool(root_dir: str | Path, bin_threshold: int = BIN_THRESHOLD) -> LetterPool:
    """Read ``root/<Class>/*.png`` into a pool of normalized samples.

    Files are visited in sorted name order. Files that fail to decode, or that
    decode to a blank page, are skipped and counted in ``pool.skipped``.
    """
    root = Path(root_dir)
    missing = [name for name in CLASS_NAMES if not (root / name).is_dir()]
    if missing:
        raise ConfigError(f"missing class folder(s) under {root}: {', '.join(missing)}")
    pool = LetterPool()
    for cls in LetterClass:
        for path in sorted((root / cls.display).iterdir(), key=lambda p: p.name):
            if not path.is_file():
                continue
            try:
                image = prep_letter(read_image(path), bin_threshold)
            except (UnidentifiedImageError, OSError, ValueError) as exc:
                log.warning("skipping %s: %s", path, exc)
                pool.skipped += 1
                continue
            letter_id = path.stem.rsplit("_", 1)[0] if "_" in path.stem else path.stem
            pool.add(LetterSample(image, cls, letter_id, str(path)))
    return pool


def export_pool(pool: LetterPool, root_dir: str | Path) -> list[Path]:
    """Write every sample to ``root/<Class>/<letter_id>_<index>.png``."""
    root = Path(root_dir)
    written = []
    for cls in LetterClass:
        (root / cls.display).mkdir(parents=True, exist_ok=True)
        for i, sample in enumerate(pool.samples[cls]):
            path = root / cls.display / f"{sample.letter_id}_{i:05d}.png"
            write_gray_png(path, sample.image)
            written.append(path)
    return written

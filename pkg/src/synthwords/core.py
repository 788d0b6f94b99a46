"""Types shared by every stage of the pipeline."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class LetterClass(enum.IntEnum):
    """Handwriting category. Integer codes are the ones written to label files."""

    NORMAL = 0
    REVERSAL = 1
    CORRECTED = 2

    @property
    def display(self) -> str:
        return CLASS_NAMES[self.value]

    @classmethod
    def from_name(cls, name: str) -> "LetterClass":
        try:
            return cls(CLASS_NAMES.index(name))
        except ValueError:
            raise ValueError(f"unknown class name {name!r}; expected one of {CLASS_NAMES}") from None


CLASS_NAMES = ("Normal", "Reversal", "Corrected")

# Default intensity above which a pixel counts as ink.
BIN_THRESHOLD = 128


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in canvas pixels, origin top-left.

    The box covers the half-open region [x, x + w) x [y, y + h). Ground-truth
    boxes have integer coordinates; detections read from text may not.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive extent, got w={self.w}, h={self.h}")

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def inside(self, width: float, height: float | None = None) -> bool:
        height = width if height is None else height
        return self.x >= 0 and self.y >= 0 and self.x1 <= width and self.y1 <= height

    def shifted(self, dx: float = 0, dy: float = 0) -> "PixelBox":
        return PixelBox(self.x + dx, self.y + dy, self.w, self.h)

    def slices(self) -> tuple[slice, slice]:
        """Row/column slices for an integer box, for indexing a (H, W) array."""
        return slice(int(self.y), int(self.y1)), slice(int(self.x), int(self.x1))


@dataclass(frozen=True)
class GroundTruthBox:
    box: PixelBox
    cls: LetterClass
    letter_id: str = ""
    image_id: str = ""


def tight_box(img: np.ndarray, threshold: int = BIN_THRESHOLD) -> PixelBox | None:
    """Minimal integer box around pixels strictly above ``threshold``; None if there are none."""
    mask = img > threshold
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1]) + 1
    x0, x1 = int(cols[0]), int(cols[-1]) + 1
    return PixelBox(x0, y0, x1 - x0, y1 - y0)


class ConfigError(ValueError):
    """A configuration value or input layout is invalid."""

"""Classical reference detector: connected components + nearest template."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from synthwords.annotation_io import Detection
from synthwords.core import BIN_THRESHOLD, LetterClass, PixelBox
from synthwords.letter_prep import EmptyGlyphError, LetterPool, crop_to_content, resize_letter

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Component:
    box: PixelBox
    area: int
    mask: np.ndarray  # (h, w) bool over ``box``

    @property
    def key(self) -> tuple[int, int]:
        return int(self.box.y), int(self.box.x)


class TemplateBank:
    """Per-class stacks of normalized glyphs, read-only once built."""

    def __init__(self, templates: dict[LetterClass, list[np.ndarray]]):
        for cls in LetterClass:
            if not templates.get(cls):
                raise ValueError(f"template bank needs at least one {cls.display} template")
        shapes = {t.shape for ts in templates.values() for t in ts}
        if len(shapes) != 1:
            raise ValueError(f"templates must share one shape, got {sorted(shapes)}")
        self.size = shapes.pop()[0]
        stacks, labels = [], []
        for cls in LetterClass:
            stacks.extend(np.asarray(t, dtype=np.float64) for t in templates[cls])
            labels.extend([int(cls)] * len(templates[cls]))
        self.stack = np.stack(stacks).reshape(len(stacks), -1)
        self.labels = np.asarray(labels)

    @classmethod
    def from_pool(cls, pool: LetterPool) -> "TemplateBank":
        return cls({c: [s.image for s in pool.samples[c]] for c in LetterClass})


@dataclass
class DetectParams:
    bin_threshold: int = BIN_THRESHOLD
    min_area: int = 16


def binarize(canvas: np.ndarray, thr: int = BIN_THRESHOLD) -> np.ndarray:
    return canvas > thr


def connected_components(mask: np.ndarray) -> list[Component]:
    """8-connected components, ordered by (top row, left column) of their box."""
    labels, n = ndimage.label(mask, structure=_EIGHT)
    comps = []
    for lab, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        sub = labels[sl] == lab
        box = PixelBox(sl[1].start, sl[0].start, sl[1].stop - sl[1].start, sl[0].stop - sl[0].start)
        comps.append(Component(box, int(sub.sum()), sub))
    comps.sort(key=lambda c: c.key)
    return comps


def classify_crop(
    crop: np.ndarray, bank: TemplateBank, bin_threshold: int = BIN_THRESHOLD
) -> tuple[LetterClass, float]:
    """Nearest template by mean absolute difference.

    Confidence is d2 / (d1 + d2), d1 the nearest distance and d2 the nearest
    distance to a template of any other class; 0.5 when both are zero.
    Raises EmptyGlyphError for a crop without ink.
    """
    glyph = resize_letter(crop_to_content(crop, bin_threshold), bank.size).astype(np.float64)
    dist = np.abs(bank.stack - glyph.reshape(1, -1)).mean(axis=1)
    best = int(np.argmin(dist))
    cls = int(bank.labels[best])
    d1 = float(dist[best])
    d2 = float(dist[bank.labels != cls].min())
    conf = 0.5 if d1 + d2 == 0 else d2 / (d1 + d2)
    return LetterClass(cls), conf


def detect(
    canvas: np.ndarray, bank: TemplateBank, params: DetectParams | None = None, image_id: str = ""
) -> list[Detection]:
    params = params or DetectParams()
    dets = []
    for comp in connected_components(binarize(canvas, params.bin_threshold)):
        if comp.area < params.min_area:
            continue
        crop = canvas[comp.box.slices()]
        try:
            cls, conf = classify_crop(crop, bank, params.bin_threshold)
        except EmptyGlyphError:
            continue
        dets.append(Detection(comp.box, cls, conf, image_id))
    # stable: equal confidences keep component order
    dets.sort(key=lambda d: -d.confidence)
    return dets

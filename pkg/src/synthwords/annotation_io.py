"""YOLO-style text labels, prediction files, and the dataset manifest.

Label line:      ``<class> <cx> <cy> <w> <h>``               (6 decimals)
Prediction line: ``<class> <cx> <cy> <w> <h> <confidence>``

Coordinates are fractions of the image side. On reading, a pixel edge within
the 6-decimal quantization of an integer is snapped to that integer, so
integer boxes survive a write/read cycle exactly.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from synthwords import __version__
from synthwords.core import CLASS_NAMES, GroundTruthBox, LetterClass, PixelBox

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "synthwords-manifest/1"


class LabelParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class LabelClassError(LabelParseError):
    pass


class ManifestError(ValueError):
    pass


class NormalizedBox(NamedTuple):
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class Detection:
    box: PixelBox
    cls: LetterClass
    confidence: float
    image_id: str = ""

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


def to_normalized(box: PixelBox, img_size: int) -> NormalizedBox:
    s = float(img_size)
    return NormalizedBox((box.x + box.w / 2) / s, (box.y + box.h / 2) / s, box.w / s, box.h / s)


def _snap(v: float, tol: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) <= tol else v


def to_pixel(nb: NormalizedBox, img_size: int) -> PixelBox:
    s = float(img_size)
    tol = s * 1e-6 + 1e-9
    x0 = _snap((nb.cx - nb.w / 2) * s, tol)
    x1 = _snap((nb.cx + nb.w / 2) * s, tol)
    y0 = _snap((nb.cy - nb.h / 2) * s, tol)
    y1 = _snap((nb.cy + nb.h / 2) * s, tol)
    return PixelBox(x0, y0, x1 - x0, y1 - y0)


def format_label_line(cls: int, nb: NormalizedBox, confidence: float | None = None) -> str:
    fields = [str(int(cls))] + [f"{v:.6f}" for v in nb]
    if confidence is not None:
        fields.append(f"{confidence:.6f}")
    return " ".join(fields) + "\n"


def write_labels(scene, path: str | Path) -> None:
    """One line per ground-truth box of ``scene``, in scene order."""
    size = scene.canvas.shape[1]
    text = "".join(format_label_line(gt.cls, to_normalized(gt.box, size)) for gt in scene.boxes)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("ascii"))


def write_predictions(detections, path: str | Path, img_size: int) -> None:
    text = "".join(
        format_label_line(d.cls, to_normalized(d.box, img_size), d.confidence) for d in detections
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(text.encode("ascii"))


def _parse(path, img_size: int, arity: int):
    out = []
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != arity:
                raise LabelParseError(path, lineno, f"expected {arity} fields, got {len(parts)}")
            try:
                code = int(parts[0])
                vals = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise LabelParseError(path, lineno, str(exc)) from None
            if code not in (0, 1, 2):
                raise LabelClassError(path, lineno, f"class code {code} not in {{0, 1, 2}}")
            nb = NormalizedBox(*vals[:4])
            if nb.w <= 0 or nb.h <= 0:
                raise LabelParseError(path, lineno, "box width and height must be positive")
            box = to_pixel(nb, img_size)
            if arity == 5:
                out.append(GroundTruthBox(box, LetterClass(code), image_id=Path(path).stem))
            else:
                conf = vals[4]
                if not 0.0 <= conf <= 1.0:
                    raise ValueError(f"{path}:{lineno}: confidence {conf} outside [0, 1]")
                out.append(Detection(box, LetterClass(code), conf, Path(path).stem))
    return out


def read_labels(path: str | Path, img_size: int) -> list:
    return _parse(path, img_size, 5)


def read_predictions(path: str | Path, img_size: int) -> list[Detection]:
    return _parse(path, img_size, 6)


def pool_digest(pool) -> str:
    h = hashlib.sha256()
    for cls in LetterClass:
        for s in pool.samples[cls]:
            h.update(f"{int(cls)}:{s.letter_id}:".encode())
            h.update(s.image.tobytes())
    return h.hexdigest()


def config_hash(meta: dict, pool=None) -> str:
    h = hashlib.sha256(json.dumps(meta, sort_keys=True, separators=(",", ":")).encode())
    if pool is not None:
        h.update(pool_digest(pool).encode())
    return h.hexdigest()


@dataclass
class DatasetManifest:
    """Index of a generated dataset. Paths are relative to ``root``."""

    image_size: int
    splits: dict[str, list[tuple[str, str]]]
    config_hash: str = ""
    master_seed: int = 0
    config: dict = field(default_factory=dict)
    class_names: tuple[str, ...] = CLASS_NAMES
    tool_version: str = __version__
    root: Path = Path(".")

    def to_json(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "class_names": list(self.class_names),
            "image_size": self.image_size,
            "master_seed": self.master_seed,
            "fingerprint": {"config_hash": self.config_hash, "tool_version": self.tool_version},
            "splits": {
                name: [{"image": img, "label": lab} for img, lab in items]
                for name, items in self.splits.items()
            },
            "config": self.config,
        }

    def save(self, path: str | Path) -> None:
        text = json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        if d.get("format") != MANIFEST_FORMAT:
            raise ManifestError(f"{path}: unsupported manifest format {d.get('format')!r}")
        fp = d.get("fingerprint", {})
        return cls(
            image_size=int(d["image_size"]),
            splits={k: [(e["image"], e["label"]) for e in v] for k, v in d["splits"].items()},
            config_hash=fp.get("config_hash", ""),
            master_seed=int(d.get("master_seed", 0)),
            config=d.get("config", {}),
            class_names=tuple(d["class_names"]),
            tool_version=fp.get("tool_version", ""),
            root=path.parent,
        )

    def validate(self) -> None:
        if tuple(self.class_names) != CLASS_NAMES:
            raise ManifestError(f"class_names must be {list(CLASS_NAMES)}, got {list(self.class_names)}")
        for name, items in self.splits.items():
            for img, lab in items:
                for rel in (img, lab):
                    if not (self.root / rel).is_file():
                        raise ManifestError(f"split {name}: missing file {rel}")
            img_dir = self.root / "images" / name
            lab_dir = self.root / "labels" / name
            n_img = len(list(img_dir.glob("*.png"))) if img_dir.is_dir() else 0
            n_lab = len(list(lab_dir.glob("*.txt"))) if lab_dir.is_dir() else 0
            if n_img != n_lab:
                raise ManifestError(f"split {name}: {n_img} image files but {n_lab} label files")

    def items(self, split: str) -> list[tuple[str, Path, Path]]:
        """(image id, image path, label path) for every scene in ``split``."""
        if split not in self.splits:
            raise ManifestError(f"manifest has no split {split!r}; available: {sorted(self.splits)}")
        return [(Path(img).stem, self.root / img, self.root / lab) for img, lab in self.splits[split]]

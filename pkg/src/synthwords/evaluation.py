"""Detection scoring: IoU, greedy matching, P/R/F1, AP and mAP over IoU thresholds.

Conventions:

* Boxes are half-open rectangles; IoU uses real-valued areas.
* Matching is per image and per class. Detections are visited in descending
  confidence (ties keep input order); each takes the unmatched ground truth
  of its class with the highest IoU (ties: earliest ground truth) if that IoU
  is at least the threshold, otherwise it is a false positive.
* AP is the exact area under the precision envelope (running maximum from
  the right) over recall, with every ranked detection as a curve point.
* mAP averages over classes that have at least one ground truth.
* Precision is 1.0 when there are no predictions; recall is 1.0 when there
  are no ground truths; F1 is 0 when P + R = 0.
"""
from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from synthwords import __version__
from synthwords.annotation_io import DatasetManifest, Detection, read_labels, read_predictions
from synthwords.core import CLASS_NAMES, ConfigError, GroundTruthBox, LetterClass, PixelBox

log = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))


@dataclass
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    conf_threshold: float = 0.25
    prf_iou: float = 0.5
    best_f1: bool = True

    def validate(self) -> None:
        t = list(self.iou_thresholds)
        if not t:
            raise ConfigError("iou_thresholds: must not be empty")
        if any(not 0 < v < 1 for v in t):
            raise ConfigError(f"iou_thresholds: every value must lie in (0, 1), got {t}")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError(f"iou_thresholds: must be strictly increasing, got {t}")
        if not 0 < self.prf_iou < 1:
            raise ConfigError("prf_iou: must lie in (0, 1)")


@dataclass
class MatchResult:
    det_match: list[int | None]  # per input detection: index of matched ground truth
    gt_matched: list[bool]  # per input ground truth
    ious: dict[int, float] = field(default_factory=dict)  # detection index -> IoU of its match

    @property
    def tp(self) -> int:
        return sum(m is not None for m in self.det_match)


def iou(a: PixelBox, b: PixelBox) -> float:
    iw = min(a.x1, b.x1) - max(a.x, b.x)
    ih = min(a.y1, b.y1) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def confidence_order(dets: Sequence[Detection]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def match_detections(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cls: LetterClass, iou_thr: float
) -> MatchResult:
    """Greedy same-class matching. Detections and ground truths of other classes are ignored."""
    det_match: list[int | None] = [None] * len(dets)
    gt_matched = [False] * len(gts)
    ious: dict[int, float] = {}
    by_image: dict[str, list[int]] = defaultdict(list)
    for j, g in enumerate(gts):
        if g.cls == cls:
            by_image[g.image_id].append(j)
    for i in confidence_order(dets):
        d = dets[i]
        if d.cls != cls:
            continue
        best_j, best_iou = None, -1.0
        for j in by_image.get(d.image_id, ()):
            if gt_matched[j]:
                continue
            v = iou(d.box, gts[j].box)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j is not None and best_iou >= iou_thr:
            det_match[i] = best_j
            gt_matched[best_j] = True
            ious[i] = best_iou
    return MatchResult(det_match, gt_matched, ious)


def ranked_hits(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cls: LetterClass, iou_thr: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """(confidences, true-positive flags) of class detections in rank order, plus the ground-truth count."""
    m = match_detections(dets, gts, cls, iou_thr)
    order = [i for i in confidence_order(dets) if dets[i].cls == cls]
    conf = np.array([dets[i].confidence for i in order], dtype=np.float64)
    hit = np.array([m.det_match[i] is not None for i in order], dtype=bool)
    return conf, hit, sum(g.cls == cls for g in gts)


def ap_from_hits(hit: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        return math.nan
    if hit.size == 0:
        return 0.0
    tp = np.cumsum(hit)
    precision = tp / np.arange(1, hit.size + 1)
    recall = tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(steps * envelope))


def average_precision(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cls: LetterClass, iou_thr: float
) -> float:
    """AP of one class; NaN when the class has no ground truth."""
    _, hit, n_gt = ranked_hits(dets, gts, cls, iou_thr)
    return ap_from_hits(hit, n_gt)


@dataclass
class MapResult:
    map50: float
    map_range: float
    ap: dict[LetterClass, list[float]]  # per present class, AP at each threshold
    thresholds: tuple[float, ...]
    ap50: dict[LetterClass, float]

    def class_ap_range(self, cls: LetterClass) -> float:
        return float(np.mean(self.ap[cls])) if cls in self.ap else math.nan


def present_classes(gts: Sequence[GroundTruthBox]) -> list[LetterClass]:
    seen = {g.cls for g in gts}
    return [c for c in LetterClass if c in seen]


def map_range(dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cfg: EvalConfig | None = None) -> MapResult:
    cfg = cfg or EvalConfig()
    cfg.validate()
    present = present_classes(gts)
    ap = {c: [average_precision(dets, gts, c, t) for t in cfg.iou_thresholds] for c in present}
    ap50 = {}
    for c in present:
        hits = [k for k, t in enumerate(cfg.iou_thresholds) if t == 0.5]
        ap50[c] = ap[c][hits[0]] if hits else average_precision(dets, gts, c, 0.5)
    if not present:
        return MapResult(0.0, 0.0, {}, tuple(cfg.iou_thresholds), {})
    m50 = float(np.mean([ap50[c] for c in present]))
    mr = float(np.mean([np.mean(ap[c]) for c in present]))
    return MapResult(m50, mr, ap, tuple(cfg.iou_thresholds), ap50)


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        p = tp / (tp + fp) if tp + fp else 1.0
        r = tp / (tp + fn) if tp + fn else 1.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f1, tp, fp, fn)

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "fp": self.fp, "fn": self.fn}


def _macro(rows: list[PRF]) -> PRF:
    if not rows:
        return PRF(1.0, 1.0, 0.0)
    return PRF(
        float(np.mean([r.precision for r in rows])),
        float(np.mean([r.recall for r in rows])),
        float(np.mean([r.f1 for r in rows])),
        sum(r.tp for r in rows), sum(r.fp for r in rows), sum(r.fn for r in rows),
    )


def prf_at(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], iou_thr: float = 0.5, conf_thr: float = 0.25
) -> tuple[dict[LetterClass, PRF], PRF]:
    """Per-class P/R/F1 keeping detections with confidence >= ``conf_thr``; macro over present classes."""
    kept = [d for d in dets if d.confidence >= conf_thr]
    per = {}
    for c in LetterClass:
        m = match_detections(kept, gts, c, iou_thr)
        n_det = sum(d.cls == c for d in kept)
        n_gt = sum(g.cls == c for g in gts)
        per[c] = PRF.from_counts(m.tp, n_det - m.tp, n_gt - m.tp)
    return per, _macro([per[c] for c in present_classes(gts)])


def best_f1(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_thr: float = 0.5,
    cls: LetterClass | None = None,
) -> tuple[float, float, float, float]:
    """Confidence threshold maximizing F1, with its (P, R, F1).

    With ``cls`` None the objective is macro F1 over present classes. Every
    distinct confidence is a candidate; ties go to the higher threshold. No
    candidates gives conf* = 1.0.
    """
    classes = [cls] if cls is not None else present_classes(gts)
    pool = [d for d in dets if cls is None or d.cls == cls]
    # matching of a detection never depends on lower-ranked ones, so one pass per class suffices
    curves = {}
    for c in classes:
        conf, hit, n_gt = ranked_hits(pool, gts, c, iou_thr)
        curves[c] = (conf, np.cumsum(hit), n_gt)

    def at(t: float) -> PRF:
        rows = []
        for c in classes:
            conf, ctp, n_gt = curves[c]
            k = int(np.searchsorted(-conf, -t, side="right"))  # detections with conf >= t
            tp = int(ctp[k - 1]) if k else 0
            rows.append(PRF.from_counts(tp, k - tp, n_gt - tp))
        return rows[0] if len(rows) == 1 else _macro(rows)

    candidates = sorted({d.confidence for d in pool if d.cls in classes}, reverse=True)
    if not candidates:
        r = at(math.inf)
        return 1.0, r.precision, r.recall, r.f1
    best_t, best = candidates[0], at(candidates[0])
    for t in candidates[1:]:
        r = at(t)
        if r.f1 > best.f1:
            best_t, best = t, r
    return best_t, best.precision, best.recall, best.f1


@dataclass
class EvalReport:
    split: str
    n_images: int
    cfg: EvalConfig
    maps: MapResult
    fixed: dict[LetterClass, PRF]
    fixed_macro: PRF
    best: dict[LetterClass, tuple[float, float, float, float]]
    best_macro: tuple[float, float, float, float] | None
    gt_count: dict[LetterClass, int]
    det_count: dict[LetterClass, int]
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        classes = {}
        for c in LetterClass:
            present = c in self.maps.ap
            entry = {
                "gt_count": self.gt_count[c],
                "det_count": self.det_count[c],
                "ap": {f"{t:.2f}": self.maps.ap[c][k] for k, t in enumerate(self.maps.thresholds)} if present else None,
                "ap_50": self.maps.ap50.get(c),
                "ap_50_95": self.maps.class_ap_range(c) if present else None,
                "fixed": {"conf": self.cfg.conf_threshold, **self.fixed[c].as_dict()},
            }
            if c in self.best:
                conf, p, r, f1 = self.best[c]
                entry["best"] = {"conf": conf, "precision": p, "recall": r, "f1": f1}
            classes[c.display] = entry
        agg = {
            "map_50": self.maps.map50,
            "map_50_95": self.maps.map_range,
            "fixed": {"conf": self.cfg.conf_threshold, **self.fixed_macro.as_dict()},
        }
        if self.best_macro is not None:
            conf, p, r, f1 = self.best_macro
            agg["best"] = {"conf": conf, "precision": p, "recall": r, "f1": f1}
        return {
            "split": self.split,
            "n_images": self.n_images,
            "iou_thresholds": list(self.maps.thresholds),
            "prf_iou": self.cfg.prf_iou,
            "classes": classes,
            "aggregate": agg,
            "metadata": self.metadata,
        }

    def render_table(self) -> str:
        return render_table(self.to_json())


def _cell(v) -> str:
    return "   -  " if v is None else f"{v:.4f}"


def render_table(report: dict) -> str:
    """Per-class text table: Class | Precision | Recall | mAP@0.5:0.95."""
    lines = [f"{'Class':<10} {'Precision':>9} {'Recall':>9} {'mAP@0.5:0.95':>13}"]
    for name in CLASS_NAMES:
        e = report["classes"][name]
        lines.append(f"{name:<10} {_cell(e['fixed']['precision']):>9} {_cell(e['fixed']['recall']):>9} "
                     f"{_cell(e['ap_50_95']):>13}")
    a = report["aggregate"]
    lines.append(f"{'all':<10} {_cell(a['fixed']['precision']):>9} {_cell(a['fixed']['recall']):>9} "
                 f"{_cell(a['map_50_95']):>13}")
    lines.append(f"mAP@0.5 = {a['map_50']:.4f}   mAP@0.5:0.95 = {a['map_50_95']:.4f}   "
                 f"(P/R at conf >= {a['fixed']['conf']:g}, IoU {report['prf_iou']:g})")
    if "best" in a:
        b = a["best"]
        lines.append(f"best F1 = {b['f1']:.4f} at conf {b['conf']:.4f} (P {b['precision']:.4f}, R {b['recall']:.4f})")
    return "\n".join(lines)


def load_split(
    manifest: DatasetManifest, predictions_root: str | Path, split: str
) -> tuple[list[Detection], list[GroundTruthBox], int]:
    """Read ground truth and predictions for every scene of ``split``.

    Prediction files live at ``<root>/<split>/<scene id>.txt``. A missing
    file means no detections for that scene.
    """
    items = manifest.items(split)
    size = manifest.image_size
    pred_dir = Path(predictions_root) / split
    known = {image_id for image_id, _, _ in items}
    if pred_dir.is_dir():
        extra = sorted(p.stem for p in pred_dir.glob("*.txt") if p.stem not in known)
        if extra:
            log.warning("ignoring %d prediction file(s) not in the manifest split %s: %s",
                        len(extra), split, ", ".join(extra[:5]))
    dets: list[Detection] = []
    gts: list[GroundTruthBox] = []
    missing = 0
    for image_id, _, label_path in items:
        gts.extend(read_labels(label_path, size))
        pred_path = pred_dir / f"{image_id}.txt"
        if pred_path.is_file():
            dets.extend(read_predictions(pred_path, size))
        else:
            missing += 1
    if missing:
        log.warning("%d of %d scenes in split %s have no prediction file; scored as no detections",
                    missing, len(items), split)
    return dets, gts, len(items)


def score(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cfg: EvalConfig | None = None,
    split: str = "", n_images: int = 0, metadata: dict | None = None,
) -> EvalReport:
    cfg = cfg or EvalConfig()
    cfg.validate()
    maps = map_range(dets, gts, cfg)
    fixed, fixed_macro = prf_at(dets, gts, cfg.prf_iou, cfg.conf_threshold)
    best, best_macro = {}, None
    if cfg.best_f1:
        best = {c: best_f1(dets, gts, cfg.prf_iou, c) for c in present_classes(gts)}
        best_macro = best_f1(dets, gts, cfg.prf_iou)
    return EvalReport(
        split=split,
        n_images=n_images,
        cfg=cfg,
        maps=maps,
        fixed=fixed,
        fixed_macro=fixed_macro,
        best=best,
        best_macro=best_macro,
        gt_count={c: sum(g.cls == c for g in gts) for c in LetterClass},
        det_count={c: sum(d.cls == c for d in dets) for c in LetterClass},
        metadata=metadata or {},
    )


def evaluate(
    manifest: DatasetManifest, predictions_root: str | Path, cfg: EvalConfig | None = None, split: str = "val"
) -> EvalReport:
    manifest.validate()
    dets, gts, n = load_split(manifest, predictions_root, split)
    meta = {
        "dataset_fingerprint": manifest.config_hash,
        "predictions_root": str(predictions_root),
        "tool_version": __version__,
        "eval_config": asdict(cfg or EvalConfig()),
    }
    return score(dets, gts, cfg, split, n, meta)


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

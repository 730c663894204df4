"""Detection evaluation metrics for crossarm inspection.

IoU (box and mask), greedy detection-to-ground-truth matching, COCO-style
average precision with 101-point interpolation, mAP over IoU 0.50-0.95,
F1-vs-confidence threshold selection, the healthy/defective instance
confusion matrix with its four class ratios, and lift over a baseline.

Matching protocol (used everywhere): detections are processed in descending
confidence, ties broken by lower submission index; each detection claims the
still-unmatched ground truth with maximum IoU if that IoU reaches the
threshold, ties broken by lower ground-truth index.  The protocol is prefix
stable: dropping low-confidence detections never changes how the survivors
match, which lets one match per image serve every confidence threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import raster
from .coco import CategorySpec, Health, InstanceAnnotation, MissingDims

ZeroDims = raster.ZeroDims
rasterize_polygon = raster.rasterize_rings

IOU_THRESHOLDS = tuple((50 + 5 * k) / 100 for k in range(10))
CONFIDENCE_GRID = tuple(i / 100 for i in range(101))
DEFAULT_MAX_PER_IMAGE = 6


class MetricsError(Exception):
    """Base class for evaluation failures."""


class DegenerateBox(MetricsError):
    """Box with non-positive width or height."""


class MixedImages(MetricsError):
    """Single-image operation fed items from multiple images."""


class UnknownCategory(MetricsError):
    """Category id with no entry in the supplied lookup."""


class ZeroBaseline(MetricsError):
    """lift_percent needs a positive baseline."""


class MatchMode(str, Enum):
    BOX = "box"
    MASK = "mask"


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    confidence: float
    segmentation: tuple[tuple[float, ...], ...] = ()
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if len(self.bbox) != 4 or self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise DegenerateBox(f"detection bbox must have positive w/h, got {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        object.__setattr__(
            self, "segmentation",
            tuple(tuple(float(v) for v in ring) for ring in self.segmentation),
        )
        object.__setattr__(self, "tags", tuple(self.tags))

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "category_id": self.category_id,
            "bbox": list(self.bbox),
            "score": self.confidence,
            "segmentation": [list(ring) for ring in self.segmentation],
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, doc) -> "Detection":
        return cls(
            image_id=int(doc["image_id"]),
            category_id=int(doc["category_id"]),
            bbox=tuple(doc["bbox"]),
            confidence=float(doc["score"]),
            segmentation=tuple(tuple(r) for r in doc.get("segmentation", ())),
            tags=tuple(doc.get("tags", ())),
        )


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]
    unmatched_detections: tuple[int, ...]
    unmatched_ground_truth: tuple[int, ...]


@dataclass(frozen=True)
class HealthConfusion:
    true_healthy: int = 0
    false_defective: int = 0  # actual healthy, predicted defective
    false_healthy: int = 0    # actual defective, predicted healthy
    true_defective: int = 0
    unmatched_detections: int = 0
    unmatched_ground_truth: int = 0

    def __post_init__(self):
        for name in ("true_healthy", "false_defective", "false_healthy",
                     "true_defective", "unmatched_detections", "unmatched_ground_truth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def __add__(self, other: "HealthConfusion") -> "HealthConfusion":
        return HealthConfusion(
            self.true_healthy + other.true_healthy,
            self.false_defective + other.false_defective,
            self.false_healthy + other.false_healthy,
            self.true_defective + other.true_defective,
            self.unmatched_detections + other.unmatched_detections,
            self.unmatched_ground_truth + other.unmatched_ground_truth,
        )

    @property
    def matched_total(self) -> int:
        return (self.true_healthy + self.false_defective
                + self.false_healthy + self.true_defective)


@dataclass(frozen=True)
class ClassMetrics:
    precision_healthy: float
    recall_healthy: float
    precision_defective: float
    recall_defective: float
    f1_healthy: float
    f1_defective: float
    degenerate: tuple[str, ...] = ()  # ratios whose denominator was zero


@dataclass(frozen=True)
class EvalReport:
    ap_per_iou: Mapping[float, float]
    ap50: float
    ap75: float
    map_50_95: float
    f1_curve: tuple[tuple[float, float, float, float], ...]
    optimal_threshold: float

    def to_dict(self) -> dict:
        return {
            "ap_per_iou": {f"{t:.2f}": v for t, v in sorted(self.ap_per_iou.items())},
            "ap50": self.ap50,
            "ap75": self.ap75,
            "map_50_95": self.map_50_95,
            "optimal_threshold": self.optimal_threshold,
            "f1_curve": [list(row) for row in self.f1_curve],
        }


# ---------------------------------------------------------------------------
# IoU


def box_iou(a: Sequence[float], b: Sequence[float]) -> float:
    """IoU of two (x, y, w, h) boxes by exact rectangle arithmetic.

    Areas use the same corner arithmetic as the intersection so identical
    boxes yield exactly 1.0 and the result never rounds above 1.
    """
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise DegenerateBox(f"boxes must have positive w/h, got {tuple(a)} and {tuple(b)}")
    ax1, ay1 = ax + aw, ay + ah
    bx1, by1 = bx + bw, by + bh
    ix = min(ax1, bx1) - max(ax, bx)
    iy = min(ay1, by1) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (ax1 - ax) * (ay1 - ay)
    area_b = (bx1 - bx) * (by1 - by)
    return inter / (area_a + area_b - inter)


def mask_iou(a, b, width: int, height: int) -> float:
    """IoU of two ring sets over their rasterized masks; 0 on empty union."""
    mask_a = raster.rasterize_rings(a, width, height)
    mask_b = raster.rasterize_rings(b, width, height)
    union = int(np.count_nonzero(mask_a | mask_b))
    if union == 0:
        return 0.0
    inter = int(np.count_nonzero(mask_a & mask_b))
    return inter / union


def _bbox_rings(bbox: Sequence[float]) -> tuple[tuple[float, ...], ...]:
    x, y, w, h = bbox
    return ((x, y, x + w, y, x + w, y + h, x, y + h),)


def _det_rings(det: Detection):
    return det.segmentation if det.segmentation else _bbox_rings(det.bbox)


def _gt_rings(gt: InstanceAnnotation):
    return gt.segmentation if gt.segmentation else _bbox_rings(gt.bbox)


def iou_matrix(
    dets: Sequence[Detection],
    gts: Sequence[InstanceAnnotation],
    mode: MatchMode = MatchMode.BOX,
    dims: tuple[int, int] | None = None,
) -> np.ndarray:
    """(n_det, n_gt) IoU matrix for one image.

    In mask mode an item without polygons falls back to its bbox rectangle;
    ``dims`` (image width, height) is required.
    """
    out = np.zeros((len(dets), len(gts)), dtype=np.float64)
    if not dets or not gts:
        return out
    if mode is MatchMode.BOX:
        for d, det in enumerate(dets):
            for g, gt in enumerate(gts):
                out[d, g] = box_iou(det.bbox, gt.bbox)
        return out
    if dims is None:
        raise MissingDims("mask-mode IoU needs image dimensions")
    w, h = dims
    det_masks = [raster.rasterize_rings(_det_rings(d), w, h) for d in dets]
    gt_masks = [raster.rasterize_rings(_gt_rings(g), w, h) for g in gts]
    for d, dm in enumerate(det_masks):
        d_area = int(np.count_nonzero(dm))
        for g, gm in enumerate(gt_masks):
            inter = int(np.count_nonzero(dm & gm))
            if inter == 0:
                continue
            union = d_area + int(np.count_nonzero(gm)) - inter
            out[d, g] = inter / union
    return out


# ---------------------------------------------------------------------------
# matching


def _check_single_image(dets: Sequence[Detection], gts: Sequence[InstanceAnnotation]) -> None:
    ids = {d.image_id for d in dets} | {g.image_id for g in gts}
    if len(ids) > 1:
        raise MixedImages(f"inputs span images {sorted(ids)}")


def _greedy_order(confidences: Sequence[float]) -> list[int]:
    return sorted(range(len(confidences)), key=lambda d: (-confidences[d], d))


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[InstanceAnnotation],
    iou_threshold: float,
    mode: MatchMode = MatchMode.BOX,
    dims: tuple[int, int] | None = None,
    precomputed_iou: np.ndarray | None = None,
) -> MatchResult:
    """Greedy one-to-one assignment for a single image (protocol above).

    ``precomputed_iou`` skips the IoU computation when the caller already
    holds the (n_det, n_gt) matrix for these inputs.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    _check_single_image(dets, gts)
    iou = precomputed_iou if precomputed_iou is not None else iou_matrix(dets, gts, mode, dims)

    gt_taken = np.zeros(len(gts), dtype=bool)
    pairs: list[tuple[int, int, float]] = []
    unmatched_d: list[int] = []
    for d in _greedy_order([det.confidence for det in dets]):
        row = np.where(gt_taken, -1.0, iou[d])
        g = int(np.argmax(row)) if len(gts) else -1
        if g >= 0 and row[g] >= iou_threshold:
            gt_taken[g] = True
            pairs.append((d, g, float(iou[d, g])))
        else:
            unmatched_d.append(d)
    unmatched_g = [g for g in range(len(gts)) if not gt_taken[g]]
    return MatchResult(tuple(sorted(pairs)), tuple(sorted(unmatched_d)), tuple(unmatched_g))


def cap_detections(
    dets: Sequence[Detection],
    max_per_image: int = DEFAULT_MAX_PER_IMAGE,
) -> list[Detection]:
    """Keep each image's max_per_image highest-confidence detections.

    Ties keep the earlier-submitted detection; survivors stay in input order.
    """
    if max_per_image < 0:
        raise ValueError(f"max_per_image must be >= 0, got {max_per_image}")
    by_image: dict[int, list[int]] = {}
    for i, det in enumerate(dets):
        by_image.setdefault(det.image_id, []).append(i)
    keep: set[int] = set()
    for indices in by_image.values():
        ranked = sorted(indices, key=lambda i: (-dets[i].confidence, i))
        keep.update(ranked[:max_per_image])
    return [det for i, det in enumerate(dets) if i in keep]


# ---------------------------------------------------------------------------
# precision / recall machinery


def _group_by_image(dets, gts):
    """-> {image_id: (det list, original det indices, gt list)} over all ids."""
    grouped: dict[int, tuple[list, list, list]] = {}
    for i, det in enumerate(dets):
        grouped.setdefault(det.image_id, ([], [], []))[0].append(det)
        grouped[det.image_id][1].append(i)
    for gt in gts:
        grouped.setdefault(gt.image_id, ([], [], []))[2].append(gt)
    return grouped


class _ImageEval:
    """One image's detections with a cached IoU matrix, matchable at any
    threshold without re-rasterizing."""

    def __init__(self, dets, det_indices, gts, mode, dims):
        self.dets = dets
        self.det_indices = det_indices
        self.gts = gts
        self.iou = iou_matrix(dets, gts, mode, dims)

    def tp_flags(self, iou_threshold: float) -> list[bool]:
        """is-matched flag per detection (input order)."""
        result = match_detections(
            self.dets, self.gts, iou_threshold, precomputed_iou=self.iou)
        matched = {d for d, _, _ in result.pairs}
        return [d in matched for d in range(len(self.dets))]


def _build_image_evals(dets, gts, mode, dims_by_image) -> list[_ImageEval]:
    evals = []
    for image_id, (img_dets, det_idx, img_gts) in sorted(_group_by_image(dets, gts).items()):
        img_dims = None
        if mode is MatchMode.MASK:
            if dims_by_image is None or image_id not in dims_by_image:
                raise MissingDims(f"mask-mode evaluation needs dimensions for image {image_id}")
            img_dims = dims_by_image[image_id]
        evals.append(_ImageEval(img_dets, det_idx, img_gts, mode, img_dims))
    return evals


def _ranked_flags(evals: Sequence[_ImageEval], iou_threshold: float) -> np.ndarray:
    """All detections' TP flags in global (confidence desc, index asc) order."""
    rows = []
    for ev in evals:
        flags = ev.tp_flags(iou_threshold)
        rows.extend(
            (-det.confidence, idx, flag)
            for det, idx, flag in zip(ev.dets, ev.det_indices, flags))
    rows.sort(key=lambda r: (r[0], r[1]))
    return np.array([r[2] for r in rows], dtype=bool)


def _interpolated_ap(tp_flags: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP from globally ranked TP flags."""
    if n_gt == 0:
        return 1.0 if len(tp_flags) == 0 else 0.0
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    precision = tp / (tp + fp)
    recall = tp / n_gt
    # running max of precision from the right = interpolated precision
    p_interp = np.maximum.accumulate(precision[::-1])[::-1]
    grid = np.array(CONFIDENCE_GRID)
    idx = np.searchsorted(recall, grid, side="left")
    valid = idx < len(recall)
    values = np.where(valid, p_interp[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(values.sum() / 101)


def average_precision(
    dets: Sequence[Detection],
    gts: Sequence[InstanceAnnotation],
    iou_threshold: float,
    mode: MatchMode = MatchMode.BOX,
    max_per_image: int | None = None,
    dims_by_image: Mapping[int, tuple[int, int]] | None = None,
) -> float:
    """Average precision at one IoU threshold over any number of images."""
    if max_per_image is not None:
        dets = cap_detections(dets, max_per_image)
    evals = _build_image_evals(dets, gts, mode, dims_by_image)
    return _interpolated_ap(_ranked_flags(evals, iou_threshold), len(gts))


def mean_average_precision(
    dets: Sequence[Detection],
    gts: Sequence[InstanceAnnotation],
    mode: MatchMode = MatchMode.BOX,
    dims_by_image: Mapping[int, tuple[int, int]] | None = None,
) -> EvalReport:
    """Full report: AP at each IoU in 0.50-0.95, their mean, and the
    F1-vs-confidence sweep at IoU 0.5."""
    evals = _build_image_evals(dets, gts, mode, dims_by_image)
    n_gt = len(gts)
    ap_per_iou = {
        t: _interpolated_ap(_ranked_flags(evals, t), n_gt) for t in IOU_THRESHOLDS
    }
    curve, optimal = _sweep_from_evals(evals, 0.5, n_gt)
    return EvalReport(
        ap_per_iou=ap_per_iou,
        ap50=ap_per_iou[0.50],
        ap75=ap_per_iou[0.75],
        map_50_95=float(np.mean(list(ap_per_iou.values()))),
        f1_curve=curve,
        optimal_threshold=optimal,
    )


def f1_confidence_sweep(
    dets: Sequence[Detection],
    gts: Sequence[InstanceAnnotation],
    iou_threshold: float,
    mode: MatchMode = MatchMode.BOX,
    dims_by_image: Mapping[int, tuple[int, int]] | None = None,
) -> tuple[tuple[tuple[float, float, float, float], ...], float]:
    """Micro P/R/F1 at each grid threshold t = 0.00, 0.01, ..., 1.00.

    Returns (curve, optimal_threshold); each curve row is (t, P, R, F1).
    optimal_threshold is the largest grid t attaining the maximum F1, so a
    flat maximum resolves to the most suppressive threshold.
    """
    evals = _build_image_evals(dets, gts, mode, dims_by_image)
    return _sweep_from_evals(evals, iou_threshold, len(gts))


def _sweep_from_evals(evals, iou_threshold, n_gt):
    confs: list[float] = []
    flags: list[bool] = []
    for ev in evals:
        tp = ev.tp_flags(iou_threshold)
        confs.extend(det.confidence for det in ev.dets)
        flags.extend(tp)
    conf_arr = np.array(confs, dtype=np.float64)
    flag_arr = np.array(flags, dtype=bool)

    curve = []
    best_f1, best_t = -1.0, 0.0
    for t in CONFIDENCE_GRID:
        kept = conf_arr >= t
        n_det = int(kept.sum())
        tp = int((kept & flag_arr).sum())
        precision = tp / n_det if n_det else 0.0
        recall = tp / n_gt if n_gt else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        curve.append((t, precision, recall, f1))
        if f1 >= best_f1:
            best_f1, best_t = f1, t
    return tuple(curve), best_t


# ---------------------------------------------------------------------------
# confusion matrix and ratios


def health_confusion(
    match: MatchResult,
    dets: Sequence[Detection],
    gts: Sequence[InstanceAnnotation],
    categories: Mapping[int, CategorySpec],
) -> HealthConfusion:
    """2x2 healthy/defective confusion over matched pairs only."""
    def health_of(category_id: int) -> Health:
        spec = categories.get(category_id)
        if spec is None:
            raise UnknownCategory(f"category id {category_id} not in lookup")
        return spec.health

    cells = {(Health.HEALTHY, Health.HEALTHY): 0,
             (Health.HEALTHY, Health.DEFECTIVE): 0,
             (Health.DEFECTIVE, Health.HEALTHY): 0,
             (Health.DEFECTIVE, Health.DEFECTIVE): 0}
    for d, g, _ in match.pairs:
        actual = health_of(gts[g].category_id)
        predicted = health_of(dets[d].category_id)
        cells[(actual, predicted)] += 1
    return HealthConfusion(
        true_healthy=cells[(Health.HEALTHY, Health.HEALTHY)],
        false_defective=cells[(Health.HEALTHY, Health.DEFECTIVE)],
        false_healthy=cells[(Health.DEFECTIVE, Health.HEALTHY)],
        true_defective=cells[(Health.DEFECTIVE, Health.DEFECTIVE)],
        unmatched_detections=len(match.unmatched_detections),
        unmatched_ground_truth=len(match.unmatched_ground_truth),
    )


def class_metrics(cm: HealthConfusion) -> ClassMetrics:
    """Per-class precision/recall/F1 from the 2x2 cells.

    Precision_healthy = TH/(TH+FH)   Recall_healthy = TH/(TH+FD)
    Precision_defective = TD/(TD+FD) Recall_defective = TD/(TD+FH)

    A 0/0 ratio is reported as 0 and named in ``degenerate``.
    """
    degenerate: list[str] = []

    def ratio(name: str, num: int, den: int) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    p_h = ratio("precision_healthy", cm.true_healthy, cm.true_healthy + cm.false_healthy)
    r_h = ratio("recall_healthy", cm.true_healthy, cm.true_healthy + cm.false_defective)
    p_d = ratio("precision_defective", cm.true_defective, cm.true_defective + cm.false_defective)
    r_d = ratio("recall_defective", cm.true_defective, cm.true_defective + cm.false_healthy)

    def f1(p: float, r: float) -> float:
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    return ClassMetrics(
        precision_healthy=p_h, recall_healthy=r_h,
        precision_defective=p_d, recall_defective=r_d,
        f1_healthy=f1(p_h, r_h), f1_defective=f1(p_d, r_d),
        degenerate=tuple(degenerate),
    )


def lift_percent(baseline_map: float, candidate_map: float) -> float:
    """Percent improvement over baseline, reported to 2 decimals."""
    if baseline_map <= 0:
        raise ZeroBaseline(f"baseline must be positive, got {baseline_map}")
    return round(100.0 * (candidate_map - baseline_map) / baseline_map, 2)

"""From-definitions reference implementations used only by the test suite.

Everything here favors obviousness over speed: per-pixel point-in-polygon
tests, O(n*m) matching loops, literal 101-point interpolation, and an
exhaustive integer search for the published confusion matrix.  The package
must agree with these, not the other way around.
"""

from __future__ import annotations

import math

import numpy as np


def point_in_rings(x: float, y: float, rings) -> bool:
    """Even-odd test: count edge crossings at or left of (x, y).

    Edges span the half-open vertical interval [min(y0, y1), max(y0, y1)).
    """
    crossings = 0
    for ring in rings:
        flat = list(ring)
        if flat and not hasattr(flat[0], "__len__"):
            pts = [(flat[k], flat[k + 1]) for k in range(0, len(flat), 2)]
        else:
            pts = [(p[0], p[1]) for p in flat]
        if len(pts) < 3:
            continue
        for k in range(len(pts)):
            x0, y0 = pts[k]
            x1, y1 = pts[(k + 1) % len(pts)]
            if y0 == y1:
                continue
            y_lo, y_hi = (y0, y1) if y0 < y1 else (y1, y0)
            if not (y_lo <= y < y_hi):
                continue
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if xc <= x:
                crossings += 1
    return crossings % 2 == 1


def rasterize_naive(rings, width: int, height: int) -> np.ndarray:
    """Per-pixel-center rasterization; the slow mirror of the scanline fill."""
    mask = np.zeros((height, width), dtype=bool)
    for j in range(height):
        for i in range(width):
            mask[j, i] = point_in_rings(i + 0.5, j + 0.5, rings)
    return mask


def rect_iou_arithmetic(a, b) -> float:
    """IoU of two (x, y, w, h) rectangles via interval arithmetic."""
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ix = max(0.0, min(ax0 + aw, bx0 + bw) - max(ax0, bx0))
    iy = max(0.0, min(ay0 + ah, by0 + bh) - max(ay0, by0))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


def greedy_match_naive(det_scores, iou, threshold: float):
    """Greedy detection-to-gt assignment from the matching definition.

    det_scores: confidence per detection (index order = submission order).
    iou: (n_det, n_gt) matrix.  Returns (det_to_gt, gt_to_det) index maps
    with -1 for unmatched entries.
    """
    n_det = len(det_scores)
    n_gt = iou.shape[1] if n_det else 0
    order = sorted(range(n_det), key=lambda d: (-det_scores[d], d))
    det_to_gt = [-1] * n_det
    gt_to_det = [-1] * n_gt
    for d in order:
        best_g, best_iou = -1, threshold
        for g in range(n_gt):
            if gt_to_det[g] != -1:
                continue
            v = iou[d, g]
            if v > best_iou or (v == best_iou and v >= threshold and best_g == -1):
                best_g, best_iou = g, v
        if best_g != -1 and iou[d, best_g] >= threshold:
            det_to_gt[d] = best_g
            gt_to_det[best_g] = d
    return det_to_gt, gt_to_det


def average_precision_naive(scored_flags, n_gt: int) -> float:
    """101-point interpolated AP from (confidence, is_tp) pairs.

    scored_flags: iterable of (confidence, is_tp) over all detections in the
    evaluation, any order.  n_gt: total ground-truth instances.
    """
    if n_gt == 0:
        return 0.0
    ranked = sorted(
        enumerate(scored_flags), key=lambda item: (-item[1][0], item[0]))
    precisions, recalls = [], []
    tp = fp = 0
    for _, (_, is_tp) in ranked:
        if is_tp:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gt)
    total = 0.0
    for i in range(101):
        r = i / 100
        best = 0.0
        for p, rec in zip(precisions, recalls):
            if rec >= r and p > best:
                best = p
        total += best
    return total / 101


def evaluate_image_naive(dets, gts, threshold: float, mode_iou) -> list[tuple[float, bool]]:
    """Match one image's detections and return (confidence, is_tp) pairs.

    dets: sequence with .score attributes (or (score,) tuples); mode_iou is a
    prebuilt (n_det, n_gt) matrix for whichever geometry is under test.
    """
    scores = [d if isinstance(d, (int, float)) else d.score for d in dets]
    det_to_gt, _ = greedy_match_naive(scores, mode_iou, threshold)
    return [(scores[d], det_to_gt[d] != -1) for d in range(len(scores))]


def map_naive(per_image, thresholds=None) -> float:
    """mean AP over IoU thresholds from per-image (scores, iou_matrix, n_gt).

    per_image: list of (scores, iou_matrix, n_gt) triples, one per image.
    """
    if thresholds is None:
        thresholds = [0.50 + 0.05 * k for k in range(10)]
    aps = []
    for t in thresholds:
        pairs = []
        n_gt_total = 0
        for scores, iou, n_gt in per_image:
            pairs.extend(evaluate_image_naive(scores, None, t, iou))
            n_gt_total += n_gt
        aps.append(average_precision_naive(pairs, n_gt_total))
    return float(np.mean(aps)) if aps else 0.0


def f1_sweep_naive(per_image_pairs, n_gt_total: int):
    """Best-F1 confidence threshold over the i/100 grid.

    per_image_pairs: flat list of (confidence, is_tp) pairs at IoU 0.5
    computed with the full detection set.  Uses greedy prefix stability: the
    detections retained at threshold t are matched identically to their
    matches in the full run.  Returns (best_threshold, best_f1).
    """
    best_t, best_f1 = 0.0, -1.0
    for i in range(101):
        t = i / 100
        kept = [(c, flag) for c, flag in per_image_pairs if c >= t]
        tp = sum(1 for _, flag in kept if flag)
        n_det = len(kept)
        precision = tp / n_det if n_det else 0.0
        recall = tp / n_gt_total if n_gt_total else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall > 0 else 0.0)
        if f1 >= best_f1:  # ties resolve to the largest threshold
            best_t, best_f1 = t, f1
    return best_t, best_f1


def binomial_interval(n: int, p: float, confidence: float = 0.99) -> tuple[int, int]:
    """Exact central Binomial(n, p) interval via integer-combinatoric CDF."""
    tail = (1.0 - confidence) / 2
    probs = [math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)]
    cdf = 0.0
    lo, hi = 0, n
    for k, q in enumerate(probs):
        cdf += q
        if cdf >= tail:
            lo = k
            break
    cdf = 0.0
    for k in range(n, -1, -1):
        cdf += probs[k]
        if cdf >= tail:
            hi = k
            break
    return lo, hi


def search_confusion_matrix(
    precision_healthy: float,
    recall_healthy: float,
    precision_defective: float,
    recall_defective: float,
    max_total: int,
    decimals: int = 4,
) -> tuple[int, int, int, int] | None:
    """Exhaustive integer search for (th, fd, fh, td) matching four ratios.

    Ratios are matched by round-to-`decimals` equality (e.g. 0.9589), with
    th + fd + fh + td <= max_total.  Iterates fh, derives candidate windows
    for the remaining cells from the rounding intervals, and verifies all
    four ratios exactly as stated.  Returns the first (smallest-total) hit.
    """
    def window(ratio: float, other: int) -> range:
        # x/(x + other) rounds to ratio  =>  x in a narrow interval;
        # widened by one on each side so banker's rounding can't clip a hit
        lo = ratio - 0.5 / 10**decimals
        hi = ratio + 0.5 / 10**decimals
        if hi >= 1.0 or other <= 0:
            return range(0, 0)
        x_lo = max(math.ceil(lo * other / (1 - lo)) - 1, 0) if lo > 0 else 0
        x_hi = math.floor(hi * other / (1 - hi)) + 1
        return range(x_lo, x_hi + 1)

    def rounds_to(num: int, den: int, ratio: float) -> bool:
        return den > 0 and round(num / den, decimals) == round(ratio, decimals)

    hits = []
    for fh in range(1, max_total):
        for td in window(recall_defective, fh):        # td/(td+fh) ~ R_d
            if td + fh > max_total:
                break
            for fd in window(1 - precision_defective, td):  # fd/(td+fd) ~ 1-P_d
                if td + fh + fd > max_total:
                    break
                for th in window(recall_healthy, fd):   # th/(th+fd) ~ R_h
                    total = th + fd + fh + td
                    if total > max_total:
                        break
                    if (rounds_to(th, th + fh, precision_healthy)
                            and rounds_to(th, th + fd, recall_healthy)
                            and rounds_to(td, td + fd, precision_defective)
                            and rounds_to(td, td + fh, recall_defective)):
                        hits.append((total, th, fd, fh, td))
        if hits:
            break
    if not hits:
        return None
    _, th, fd, fh, td = min(hits)
    return th, fd, fh, td


def shoelace_area(flat_ring) -> float:
    """Unsigned polygon area straight from the shoelace formula."""
    pts = [(flat_ring[k], flat_ring[k + 1]) for k in range(0, len(flat_ring), 2)]
    total = 0.0
    for k in range(len(pts)):
        x0, y0 = pts[k]
        x1, y1 = pts[(k + 1) % len(pts)]
        total += x0 * y1 - x1 * y0
    return abs(total) / 2.0

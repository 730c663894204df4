"""
Detection metrics: IoU, matching, AP, F1 sweeps, and lift
=========================================================

Walks the evaluation stack bottom-up on hand-sized inputs so every number
is checkable on paper.
"""

from arminspect import coco, metrics

# ---------------------------------------------------------------------------
# IoU on boxes and on polygon masks

a = (0.0, 0.0, 2.0, 2.0)
b = (1.0, 1.0, 2.0, 2.0)
print("box_iou of two 2x2 squares offset by (1,1):", metrics.box_iou(a, b))
# intersection 1, union 7 -> exactly 1/7

ring_a = ((0.0, 0.0, 2.0, 0.0, 2.0, 2.0, 0.0, 2.0),)
ring_b = ((1.0, 1.0, 3.0, 1.0, 3.0, 3.0, 1.0, 3.0),)
print("mask_iou of the same shapes rasterized:",
      metrics.mask_iou(ring_a, ring_b, 8, 8))

# ---------------------------------------------------------------------------
# greedy matching: confidence desc, submission order breaks ties,
# each detection takes its best still-unmatched ground truth

gts = [
    coco.InstanceAnnotation(
        annotation_id=k, image_id=1, category_id=1, bbox=(x, 10.0, 20.0, 20.0),
        segmentation=((x, 10.0, x + 20.0, 10.0, x + 20.0, 30.0, x, 30.0),),
        area=400.0)
    for k, x in ((1, 10.0), (2, 50.0), (3, 90.0))
]
dets = [
    metrics.Detection(image_id=1, category_id=1, bbox=(11.0, 10.0, 20.0, 20.0),
                      confidence=0.95),
    metrics.Detection(image_id=1, category_id=1, bbox=(52.0, 10.0, 20.0, 20.0),
                      confidence=0.80),
    metrics.Detection(image_id=1, category_id=1, bbox=(300.0, 300.0, 20.0, 20.0),
                      confidence=0.60),  # matches nothing
]
match = metrics.match_detections(dets, gts, iou_threshold=0.5)
print("\nmatched pairs (det, gt, iou):", match.pairs)
print("unmatched detections:", match.unmatched_detections)
print("unmatched ground truth:", match.unmatched_ground_truth)

# ---------------------------------------------------------------------------
# the full report: AP per IoU threshold, mAP, and the F1-vs-confidence sweep

report = metrics.mean_average_precision(dets, gts)
print(f"\nAP50 {report.ap50:.4f}  AP75 {report.ap75:.4f}  "
      f"mAP[.50:.95] {report.map_50_95:.4f}")
print(f"best F1 threshold on the sweep grid: {report.optimal_threshold:.2f}")
t, p, r, f1 = report.f1_curve[90]
print(f"sweep row at 0.90 confidence: precision {p:.3f} recall {r:.3f} f1 {f1:.3f}")

# ---------------------------------------------------------------------------
# health confusion uses matched pairs only, after the reporting policy:
# keep detections at confidence >= 0.9, at most 6 per image

categories = {c.category_id: c for c in coco.default_categories()}
kept = metrics.cap_detections([d for d in dets if d.confidence >= 0.9], 6)
match_kept = metrics.match_detections(kept, gts, 0.5)
cm = metrics.health_confusion(match_kept, kept, gts, categories)
print("\nconfusion over the 0.9-confidence survivors:", cm)
print("per-class ratios:", metrics.class_metrics(cm))

# ---------------------------------------------------------------------------
# lift: percentage improvement over a baseline mAP, reported to 2 decimals

baseline = 20.58
for candidate in (25.64, 27.22, 27.98, 34.36):
    print(f"lift {baseline} -> {candidate}: "
          f"{metrics.lift_percent(baseline, candidate)}%")

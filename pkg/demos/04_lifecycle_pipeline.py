"""
Image lifecycle: ingest, route, predict, verify, relabel
========================================================

Drives a small batch of rendered images through the full human-in-the-loop
pipeline and shows that the event log replays to the same state.

States: Incoming -> BatchPrediction -> Verification -> Verified
                 \\-> Labeling        Verification -> Staging -> Labeling
        every non-archived state   -> Archived
"""

import tempfile
from pathlib import Path

from arminspect import coco, synthgen
from arminspect.detector import DetectorHandle, OracleParams
from arminspect.experiments import load_dataset
from arminspect.metrics import match_detections
from arminspect.tracker import (
    Duplicate,
    LifecycleState,
    RoutingPolicy,
    Tracker,
    Verdict,
    VerificationDecision,
)

work = Path(tempfile.mkdtemp(prefix="lifecycle_demo_"))

# ---------------------------------------------------------------------------
# render a handful of images to play the part of a field-collection drop

cfg = synthgen.GenConfig(
    n_images=12, image_width=192, image_height=192,
    defect_mix={"none": 0.5, "split": 0.25, "break": 0.25},
    master_seed=11)
synthgen.generate_batch(cfg, work / "drop")
dataset = load_dataset(work / "drop")
gts_by_image = dataset.gts_by_image()
stem_to_id = dataset.stem_to_coco_id()
categories = dataset.categories

# ---------------------------------------------------------------------------
# ingest: content-addressed, duplicate bytes are refused

tracker = Tracker(work / "track")
stems = {}
for png in sorted((work / "drop").glob("*.png")):
    record = tracker.ingest_image(png.name, data=png.read_bytes())
    stems[record.image_id] = png.stem
print(f"ingested {tracker.census()['Incoming']} images")

try:
    first_png = sorted((work / "drop").glob("*.png"))[0]
    tracker.ingest_image("copy.png", data=first_png.read_bytes())
except Duplicate as exc:
    print(f"duplicate bytes refused, already tracked as {exc.existing_id}")

# ---------------------------------------------------------------------------
# routing: a salted hash of the image id sends a fixed fraction straight
# to human labeling; the rest go to batch prediction

policy = RoutingPolicy(labeling_fraction=0.25, salt="demo")
for record in tracker.records(LifecycleState.INCOMING):
    tracker.route_image(record.image_id, policy)
census = tracker.census()
print(f"routed: {census['BatchPrediction']} to prediction, "
      f"{census['Labeling']} to labeling")

# ---------------------------------------------------------------------------
# batch prediction with the oracle detector standing in for a trained model

handle = DetectorHandle.oracle(OracleParams(miss_rate=0.25, fp_per_image=0.5,
                                            seed=3))
predictions = {}
for index, record in enumerate(tracker.records(LifecycleState.BATCH_PREDICTION)):
    gts = gts_by_image[stem_to_id[stems[record.image_id]]]
    dets = handle.detect(record.image_id, 192, 192, gts=gts,
                         image_index=index, categories=categories)
    tracker.record_inference(record.image_id, dets, detector="oracle-v1")
    predictions[record.image_id] = dets
print(f"verification queue: {tracker.census()['Verification']} images")

# ---------------------------------------------------------------------------
# verification: an SME marks each prediction Correct or Incorrect; here a
# scripted reviewer accepts only images predicted perfectly at IoU 0.5

for record in tracker.records(LifecycleState.VERIFICATION):
    gts = gts_by_image[stem_to_id[stems[record.image_id]]]
    dets = predictions[record.image_id]
    match = match_detections(dets, gts, 0.5)
    perfect = len(match.pairs) == len(dets) == len(gts)
    tracker.apply_verdict(VerificationDecision(
        image_id=record.image_id,
        verdict=Verdict.CORRECT if perfect else Verdict.INCORRECT,
        reviewer="sme1"))
correct, total = tracker.verification_accuracy()
print(f"verdicts: {correct}/{total} correct "
      f"-> {tracker.census()['Staging']} staged for relabeling")

# ---------------------------------------------------------------------------
# staged images get promoted to labeling, labeled, and join the training pool

staged = [r.image_id for r in tracker.records(LifecycleState.STAGING)]
if staged:
    tracker.promote_staging(staged)
for record in tracker.records(LifecycleState.LABELING):
    gts = gts_by_image[stem_to_id[stems[record.image_id]]]
    fresh = [coco.InstanceAnnotation(
        annotation_id=k + 1, image_id=1, category_id=g.category_id,
        bbox=g.bbox, segmentation=g.segmentation, area=g.area)
        for k, g in enumerate(gts)]
    tracker.complete_labeling(record.image_id, fresh, actor="labeler1")
pool = tracker.training_pool_images()
print(f"training pool: {len(pool)} images "
      f"({sum(1 for p in pool if not p.healthy)} with defects)")

# ---------------------------------------------------------------------------
# the event log is the source of truth: reopening replays every chain

replay = Tracker(work / "track")
assert replay.census() == tracker.census()
some_id = pool[0].image_id if pool else staged[0]
print(f"\nhistory of {some_id}:")
for event in replay.image_history(some_id):
    print(f"  v{event.version_after}: {event.from_state.value} -> "
          f"{event.to_state.value}  ({event.reason})")
print("\ncensus after replay:",
      {k: v for k, v in replay.census().items() if v})

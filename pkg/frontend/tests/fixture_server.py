"""Fixture service for the webui end-to-end test.

Renders a small batch, ingests every image with geo tags, runs the oracle
detector so the verification queue is populated, decides two images up
front (one Correct, one Incorrect) so the map shows all three marker
states, then serves the API on a free port. Prints "PORT <n>" once ready
to bind; the node test drives everything else over HTTP.
"""

import socket
import tempfile
from pathlib import Path

import uvicorn

from arminspect import synthgen
from arminspect.detector import DetectorHandle, OracleParams
from arminspect.experiments import load_dataset
from arminspect.service import create_app
from arminspect.tracker import (
    LocalBlobStore,
    RoutingPolicy,
    Tracker,
    Verdict,
    VerificationDecision,
)


def build_fixture(work: Path) -> Tracker:
    cfg = synthgen.GenConfig(
        n_images=6, image_width=128, image_height=128,
        defect_mix={"none": 0.5, "split": 0.5}, master_seed=21)
    synthgen.generate_batch(cfg, work / "drop")
    dataset = load_dataset(work / "drop")
    gts_by_image = dataset.gts_by_image()
    stem_to_id = dataset.stem_to_coco_id()

    tracker = Tracker(work / "track", store=LocalBlobStore(work / "drop"))
    to_prediction = RoutingPolicy(labeling_fraction=0.0)
    handle = DetectorHandle.oracle(
        OracleParams(miss_rate=0.0, fp_per_image=0.0, box_jitter_sigma=0.5,
                     seed=1))

    ids = []
    for index, png in enumerate(sorted((work / "drop").glob("*.png"))):
        record = tracker.ingest_image(
            png.name, geo=(35.0 + index * 0.01, -120.0 - index * 0.01))
        tracker.route_image(record.image_id, to_prediction)
        gts = gts_by_image[stem_to_id[png.stem]]
        dets = handle.detect(record.image_id, 128, 128, gts=gts,
                             image_index=index, categories=dataset.categories)
        tracker.record_inference(record.image_id, dets, detector="oracle-v1")
        ids.append(record.image_id)

    tracker.apply_verdict(VerificationDecision(
        image_id=ids[0], verdict=Verdict.CORRECT, reviewer="fixture"))
    tracker.apply_verdict(VerificationDecision(
        image_id=ids[1], verdict=Verdict.INCORRECT, reviewer="fixture"))
    return tracker


def main():
    work = Path(tempfile.mkdtemp(prefix="webui_fixture_"))
    tracker = build_fixture(work)
    app = create_app(tracker)

    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    print(f"PORT {port}", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()

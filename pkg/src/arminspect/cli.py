"""Command-line front end for evaluation, generation, tracking, and serving.

Subcommands:
  eval        score a detections file against COCO ground truth
  generate    render a synthetic dataset from a config file
  ingest      register image files, or watch a directory for new ones
  route       send every Incoming image to prediction or labeling
  track       show one image's lifecycle, or the per-state census
  experiment  run a configured experiment, or compare persisted results
  qc          dataset-balance report for a manifest
  serve       start the REST service

The experiment config file is a JSON object:
  {"name": "Exp1", "real_train": 8, "synthetic_train": 8,
   "resolution_tier": "other", "seed": 7,
   "real_dataset": "pools/real", "synthetic_dataset": "pools/synth",
   "test_dataset": "pools/test", "results_dir": "results",
   "oracle": {"miss_rate": 0.1}}          # or "endpoint": "http://host:port"
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import coco, experiments, metrics, synthgen
from .detector import DetectorHandle, OracleParams
from .tracker import (
    Duplicate,
    LifecycleState,
    LocalBlobStore,
    RoutingPolicy,
    Tracker,
    TrackerError,
    UnknownImage,
)


class CliError(Exception):
    """User-facing failure; main() prints it and exits 2."""


def _read_json(path: str | Path):
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such file: {p}")
    try:
        return json.loads(p.read_text("utf-8"))
    except ValueError as exc:
        raise CliError(f"{p} is not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# eval


def _confusion_dict(cm: metrics.HealthConfusion) -> dict:
    return {
        "true_healthy": cm.true_healthy,
        "false_defective": cm.false_defective,
        "false_healthy": cm.false_healthy,
        "true_defective": cm.true_defective,
        "unmatched_detections": cm.unmatched_detections,
        "unmatched_ground_truth": cm.unmatched_ground_truth,
    }


def cmd_eval(args) -> int:
    gt_path = Path(args.gt)
    if not gt_path.exists():
        raise CliError(f"no such file: {gt_path}")
    try:
        aset = coco.parse_coco(gt_path.read_bytes())
    except coco.CocoError as exc:
        raise CliError(f"cannot parse {gt_path}: {exc}") from exc
    docs = _read_json(args.det)
    if not isinstance(docs, list):
        raise CliError(f"{args.det} must hold a JSON list of detections")
    try:
        dets = [metrics.Detection.from_dict(d) for d in docs]
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"bad detection record in {args.det}: {exc}") from exc

    mode = metrics.MatchMode(args.mode)
    dims = {img.image_id: (img.width, img.height) for img in aset.images}
    gts = list(aset.annotations)
    report = metrics.mean_average_precision(dets, gts, mode, dims)

    categories = {c.category_id: c for c in aset.categories}
    confident = [d for d in dets if d.confidence >= args.conf]
    capped = metrics.cap_detections(confident, args.max_per_image)
    by_image: dict[int, list[metrics.Detection]] = {}
    for d in capped:
        by_image.setdefault(d.image_id, []).append(d)
    gts_by_image: dict[int, list[coco.InstanceAnnotation]] = {}
    for g in gts:
        gts_by_image.setdefault(g.image_id, []).append(g)
    confusion = metrics.HealthConfusion()
    for image_id in sorted(set(by_image) | set(gts_by_image)):
        img_dets = by_image.get(image_id, [])
        img_gts = gts_by_image.get(image_id, [])
        match = metrics.match_detections(img_dets, img_gts, 0.5, mode,
                                         dims.get(image_id))
        confusion = confusion + metrics.health_confusion(
            match, img_dets, img_gts, categories)

    out_path = Path(args.out)
    payload = {
        "mode": mode.value,
        "confidence_threshold": args.conf,
        "max_per_image": args.max_per_image,
        "eval": report.to_dict(),
        "confusion": _confusion_dict(confusion),
        "class_metrics": dataclasses.asdict(metrics.class_metrics(confusion)),
    }
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    csv_path = out_path.with_name(out_path.stem + ".f1.csv")
    lines = ["confidence,precision,recall,f1"]
    lines += [f"{t:.2f},{p:.6f},{r:.6f},{f:.6f}" for t, p, r, f in report.f1_curve]
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    print(f"mAP@[.50:.95] ({mode.value}): {report.map_50_95:.4f}")
    print(f"AP50: {report.ap50:.4f}  AP75: {report.ap75:.4f}")
    print(f"optimal F1 threshold: {report.optimal_threshold:.2f}")
    print(f"report: {out_path}")
    print(f"f1 curve: {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    doc = _read_json(args.config)
    if not isinstance(doc, dict):
        raise CliError(f"{args.config} must hold a JSON object")
    if args.seed is not None:
        doc = dict(doc)
        doc["master_seed"] = args.seed
    try:
        cfg = synthgen.GenConfig.from_dict(doc)
    except synthgen.BadConfig as exc:
        raise CliError(f"bad generator config: {exc}") from exc
    try:
        manifest = synthgen.generate_batch(cfg, args.out, stem_prefix=args.prefix)
    except synthgen.SynthError as exc:
        raise CliError(str(exc)) from exc
    comp = manifest.composition
    print(f"wrote {cfg.n_images} images to {args.out}")
    print(f"healthy {comp.healthy_count}, defective {comp.defective_count}")
    print("annotations.json and manifest.json written alongside")
    return 0


# ---------------------------------------------------------------------------
# tracker commands


def _open_tracker(args) -> Tracker:
    store = LocalBlobStore(args.blobs) if getattr(args, "blobs", None) else None
    return Tracker(args.root, store=store)


def _ingest_one(tracker: Tracker, uri: str, provenance, data=None) -> None:
    try:
        record = tracker.ingest_image(uri, provenance=provenance, data=data)
        print(f"ingested {record.image_id} <- {uri}")
    except Duplicate as exc:
        print(f"duplicate {uri} (already tracked as {exc.existing_id})")
    except TrackerError as exc:
        print(f"skipped {uri}: {exc}", file=sys.stderr)


def cmd_ingest(args) -> int:
    provenance = experiments.Provenance(args.provenance)
    if args.watch:
        store = LocalBlobStore(args.watch)
        tracker = Tracker(args.root, store=store)
        batches = 0
        for fresh in store.watch(interval=args.interval):
            for uri in fresh:
                _ingest_one(tracker, uri, provenance)
            batches += 1
            if args.batches and batches >= args.batches:
                break
        return 0
    if not args.files:
        raise CliError("give image files to ingest, or --watch <dir>")
    tracker = _open_tracker(args)
    for name in args.files:
        path = Path(name)
        if not path.exists():
            print(f"skipped {name}: no such file", file=sys.stderr)
            continue
        _ingest_one(tracker, path.name, provenance, data=path.read_bytes())
    return 0


def cmd_route(args) -> int:
    tracker = _open_tracker(args)
    policy = RoutingPolicy(labeling_fraction=args.fraction, salt=args.salt)
    routed = {LifecycleState.BATCH_PREDICTION: 0, LifecycleState.LABELING: 0}
    for record in tracker.records(LifecycleState.INCOMING):
        moved = tracker.route_image(record.image_id, policy)
        routed[moved.state] += 1
        print(f"{record.image_id} -> {moved.state.value}")
    print(f"routed {sum(routed.values())}: "
          f"{routed[LifecycleState.BATCH_PREDICTION]} to BatchPrediction, "
          f"{routed[LifecycleState.LABELING]} to Labeling")
    return 0


def cmd_track_show(args) -> int:
    tracker = _open_tracker(args)
    try:
        record = tracker.get_record(args.image_id)
        history = tracker.image_history(args.image_id)
    except UnknownImage as exc:
        raise CliError(str(exc)) from exc
    print(json.dumps({
        "image_id": record.image_id, "uri": record.uri,
        "state": record.state.value, "state_version": record.state_version,
        "provenance": record.provenance.value,
        "resolution_tier": record.resolution_tier.value,
        "width": record.width, "height": record.height,
    }, indent=2))
    for event in history:
        print(f"  v{event.version_after}  {event.from_state.value} -> "
              f"{event.to_state.value}  at={event.at}  actor={event.actor}  "
              f"reason={event.reason}")
    return 0


def cmd_track_census(args) -> int:
    tracker = _open_tracker(args)
    counts = tracker.census()
    total = counts.pop("total")
    width = max(len(name) for name in counts)
    for name in counts:
        print(f"{name.ljust(width)}  {counts[name]}")
    print(f"{'total'.ljust(width)}  {total}")
    return 0


# ---------------------------------------------------------------------------
# experiments


def _detector_from_config(doc: dict) -> DetectorHandle:
    if "endpoint" in doc:
        return DetectorHandle.remote(doc["endpoint"],
                                     timeout=float(doc.get("timeout", 10.0)))
    oracle = dict(doc.get("oracle", {}))
    for key in ("tp_confidence", "fp_confidence"):
        if key in oracle:
            oracle[key] = tuple(oracle[key])
    try:
        return DetectorHandle.oracle(OracleParams(**oracle))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad oracle parameters: {exc}") from exc


def cmd_experiment_run(args) -> int:
    doc = _read_json(args.config)
    for key in ("name", "real_train", "synthetic_train", "test_dataset",
                "results_dir"):
        if key not in doc:
            raise CliError(f"experiment config is missing '{key}'")
    test_set = experiments.load_dataset(doc["test_dataset"])
    test_ids = frozenset(Path(img.file_name).stem for img in test_set.annotations.images)

    real_pool = []
    if doc.get("real_dataset"):
        real_pool = experiments.load_dataset(doc["real_dataset"]).pool_images(
            experiments.Provenance.REAL)
    synth_pool = []
    if doc.get("synthetic_dataset"):
        synth_pool = experiments.load_dataset(doc["synthetic_dataset"]).pool_images(
            experiments.Provenance.SYNTHETIC)

    try:
        cfg = experiments.ExperimentConfig(
            name=doc["name"],
            real_train=int(doc["real_train"]),
            synthetic_train=int(doc["synthetic_train"]),
            resolution_tier=experiments.ResolutionTier(
                doc.get("resolution_tier", "other")),
            detector=_detector_from_config(doc),
            test_manifest=doc["test_dataset"],
            seed=int(doc.get("seed", 0)))
        manifest = experiments.build_manifest(real_pool, synth_pool, cfg,
                                              test_ids=test_ids)
        result = experiments.run_experiment(cfg, manifest, test_set,
                                            doc["results_dir"])
    except experiments.ExperimentsError as exc:
        raise CliError(str(exc)) from exc
    print(f"{cfg.name}: mAP {result.map_value:.4f} "
          f"(box AP50 {result.eval.ap50:.4f}, mask mAP "
          f"{result.mask_eval.map_50_95:.4f})")
    print(f"report: {Path(doc['results_dir']) / cfg.name / 'report.json'}")
    return 0


def cmd_experiment_compare(args) -> int:
    results_dir = Path(args.results)
    names = sorted(p.parent.name for p in results_dir.glob("*/report.json"))
    if not names:
        raise CliError(f"no persisted experiment reports under {results_dir}")
    reports = {name: experiments.load_result(results_dir, name) for name in names}
    if args.baseline not in reports:
        raise CliError(f"baseline '{args.baseline}' not among {names}")
    base_map = reports[args.baseline]["result"]["map_value"]
    rows = []
    for name in names:
        r = reports[name]["result"]
        lift = None if name == args.baseline else metrics.lift_percent(
            base_map, r["map_value"])
        rows.append(experiments.ComparisonRow(
            name=name, real_train=r["real_train"],
            synthetic_train=r["synthetic_train"],
            resolution_tier=r["resolution_tier"],
            map_value=r["map_value"], lift=lift))
    table = experiments.ComparisonTable(baseline_name=args.baseline,
                                        rows=tuple(rows))
    print(table.to_text(), end="")
    if args.csv:
        csv_path = Path(args.csv)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(table.to_csv(), encoding="utf-8")
        print(f"csv: {args.csv}")
    return 0


def cmd_qc(args) -> int:
    manifest = experiments.read_manifest(args.manifest)
    ann_path = Path(args.annotations)
    if not ann_path.exists():
        raise CliError(f"no such file: {ann_path}")
    aset = coco.parse_coco(ann_path.read_bytes())
    names_by_id = {c.category_id: c.name for c in aset.categories}
    stems = {img.image_id: Path(img.file_name).stem for img in aset.images}
    by_stem: dict[str, list[str]] = {stem: [] for stem in stems.values()}
    for ann in aset.annotations:
        by_stem[stems[ann.image_id]].append(names_by_id[ann.category_id])
    try:
        report = experiments.qc_report(manifest, by_stem,
                                       defective_bounds=tuple(args.bounds))
    except experiments.ExperimentsError as exc:
        raise CliError(str(exc)) from exc
    print(json.dumps(report.to_dict(), indent=2))
    if report.flags:
        print(f"{len(report.flags)} balance flag(s) raised", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    from .service import ServiceConfig, serve_api

    serve_api(ServiceConfig(
        tracker_root=args.root, host=args.host, port=args.port,
        results_dir=args.results, blob_root=args.blobs,
        frontend_dist=args.frontend))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arminspect",
        description="crossarm inspection: evaluation, synthetic data, "
                    "lifecycle tracking, and the verification service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score detections against COCO ground truth")
    p.add_argument("--gt", required=True, help="COCO annotation file")
    p.add_argument("--det", required=True,
                   help="JSON list of {image_id, category_id, bbox, "
                        "segmentation?, score}")
    p.add_argument("--mode", choices=["box", "mask"], default="box")
    p.add_argument("--conf", type=float, default=0.9,
                   help="confidence floor for the confusion report")
    p.add_argument("--max-per-image", type=int, default=6)
    p.add_argument("--out", required=True, help="report output path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("generate", help="render a synthetic dataset")
    p.add_argument("--config", required=True, help="GenConfig JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's master_seed")
    p.add_argument("--prefix", default="img_", help="image file stem prefix")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("ingest", help="register images with the tracker")
    p.add_argument("files", nargs="*", help="image files to ingest")
    p.add_argument("--root", required=True, help="tracker data directory")
    p.add_argument("--watch", help="poll this directory for new files")
    p.add_argument("--interval", type=float, default=2.0,
                   help="watch poll interval in seconds")
    p.add_argument("--batches", type=int, default=0,
                   help="stop watching after this many change batches "
                        "(0 = run until interrupted)")
    p.add_argument("--provenance", choices=["Real", "Synthetic"], default="Real")
    p.add_argument("--blobs", help="blob store root for non-watch ingest")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("route", help="route Incoming images")
    p.add_argument("--root", required=True)
    p.add_argument("--fraction", type=float, required=True,
                   help="share sent straight to Labeling")
    p.add_argument("--salt", default="")
    p.set_defaults(fn=cmd_route)

    p = sub.add_parser("track", help="inspect lifecycle state")
    track_sub = p.add_subparsers(dest="track_command", required=True)
    ps = track_sub.add_parser("show", help="one image's record and history")
    ps.add_argument("image_id")
    ps.add_argument("--root", required=True)
    ps.set_defaults(fn=cmd_track_show)
    pc = track_sub.add_parser("census", help="record counts per state")
    pc.add_argument("--root", required=True)
    pc.set_defaults(fn=cmd_track_census)

    p = sub.add_parser("experiment", help="run or compare experiments")
    exp_sub = p.add_subparsers(dest="experiment_command", required=True)
    pr = exp_sub.add_parser("run", help="run one configured experiment")
    pr.add_argument("--config", required=True, help="experiment JSON file")
    pr.set_defaults(fn=cmd_experiment_run)
    pc = exp_sub.add_parser("compare", help="lift table over persisted results")
    pc.add_argument("--baseline", required=True)
    pc.add_argument("--results", default="results",
                    help="directory holding <name>/report.json")
    pc.add_argument("--csv", help="also write the table as CSV here")
    pc.set_defaults(fn=cmd_experiment_compare)

    p = sub.add_parser("qc", help="dataset balance report")
    p.add_argument("--manifest", required=True, help="manifest JSON file")
    p.add_argument("--annotations", required=True, help="COCO annotation file")
    p.add_argument("--bounds", type=float, nargs=2, default=[0.2, 0.8],
                   metavar=("LO", "HI"),
                   help="acceptable defective-fraction range")
    p.set_defaults(fn=cmd_qc)

    p = sub.add_parser("serve", help="start the REST service")
    p.add_argument("--root", required=True, help="tracker data directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--results", help="experiment results directory")
    p.add_argument("--blobs", help="image blob directory")
    p.add_argument("--frontend", help="built webui bundle directory")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrackerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

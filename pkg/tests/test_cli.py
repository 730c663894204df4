import io
import json

import pytest
from PIL import Image

from arminspect import coco, synthgen
from arminspect.cli import main
from arminspect.tracker import LifecycleState, Tracker

GEN_CONFIG = {
    "n_images": 6, "image_width": 160, "image_height": 160,
    "defect_mix": {"none": 0.5, "split": 0.5}, "master_seed": 31,
}


def png_bytes(color, dims=(40, 30)):
    buf = io.BytesIO()
    Image.new("RGB", dims, color).save(buf, format="PNG")
    return buf.getvalue()


def write_gen_config(tmp_path, name="gen.json", **overrides):
    doc = {**GEN_CONFIG, **overrides}
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestGenerate:
    def test_writes_dataset(self, tmp_path, capsys):
        cfg = write_gen_config(tmp_path)
        out = tmp_path / "data"
        code, stdout, _ = run(["generate", "--config", str(cfg),
                               "--out", str(out)], capsys)
        assert code == 0
        assert "wrote 6 images" in stdout
        assert sorted(p.name for p in out.glob("*.png")) == [
            f"img_{k:05d}.png" for k in range(6)]
        assert (out / "annotations.json").exists()
        assert (out / "manifest.json").exists()

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        cfg = write_gen_config(tmp_path)
        code, _, _ = run(["generate", "--config", str(cfg),
                          "--out", str(tmp_path / "a"), "--seed", "99"], capsys)
        assert code == 0
        direct = synthgen.generate_batch(
            synthgen.GenConfig.from_dict({**GEN_CONFIG, "master_seed": 99}),
            tmp_path / "b")
        assert (tmp_path / "a" / "annotations.json").read_bytes() == \
            (tmp_path / "b" / "annotations.json").read_bytes()
        del direct

    def test_prefix_changes_stems(self, tmp_path, capsys):
        cfg = write_gen_config(tmp_path, n_images=2)
        code, _, _ = run(["generate", "--config", str(cfg),
                          "--out", str(tmp_path / "p"), "--prefix", "test_"],
                         capsys)
        assert code == 0
        assert sorted(p.name for p in (tmp_path / "p").glob("*.png")) == [
            "test_00000.png", "test_00001.png"]

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = write_gen_config(tmp_path, defect_mix={"none": 0.7, "split": 0.7})
        code, _, stderr = run(["generate", "--config", str(cfg),
                               "--out", str(tmp_path / "x")], capsys)
        assert code == 2
        assert "error:" in stderr

    def test_missing_config_exits_2(self, tmp_path, capsys):
        code, _, stderr = run(["generate", "--config",
                               str(tmp_path / "nope.json"),
                               "--out", str(tmp_path / "x")], capsys)
        assert code == 2
        assert "no such file" in stderr


class TestEval:
    @pytest.fixture()
    def dataset(self, tmp_path):
        cfg = synthgen.GenConfig.from_dict({**GEN_CONFIG, "n_images": 4})
        synthgen.generate_batch(cfg, tmp_path / "data", write_images=False)
        return tmp_path / "data"

    def test_perfect_detections_score_one(self, dataset, tmp_path, capsys):
        aset = coco.parse_coco((dataset / "annotations.json").read_bytes())
        dets = [{
            "image_id": a.image_id, "category_id": a.category_id,
            "bbox": list(a.bbox), "segmentation": [list(r) for r in a.segmentation],
            "score": 0.95,
        } for a in aset.annotations]
        det_path = tmp_path / "dets.json"
        det_path.write_text(json.dumps(dets), encoding="utf-8")
        out = tmp_path / "report.json"
        code, stdout, _ = run(["eval", "--gt", str(dataset / "annotations.json"),
                               "--det", str(det_path), "--mode", "box",
                               "--out", str(out)], capsys)
        assert code == 0
        assert "mAP@[.50:.95] (box): 1.0000" in stdout
        report = json.loads(out.read_text("utf-8"))
        assert report["eval"]["map_50_95"] == 1.0
        assert report["confusion"]["false_healthy"] == 0
        assert report["mode"] == "box"
        csv_path = tmp_path / "report.f1.csv"
        lines = csv_path.read_text("utf-8").strip().split("\n")
        assert lines[0] == "confidence,precision,recall,f1"
        assert len(lines) == 102

    def test_mask_mode_runs(self, dataset, tmp_path, capsys):
        aset = coco.parse_coco((dataset / "annotations.json").read_bytes())
        dets = [{"image_id": a.image_id, "category_id": a.category_id,
                 "bbox": list(a.bbox),
                 "segmentation": [list(r) for r in a.segmentation],
                 "score": 0.95} for a in aset.annotations]
        det_path = tmp_path / "dets.json"
        det_path.write_text(json.dumps(dets), encoding="utf-8")
        out = tmp_path / "mask_report.json"
        code, stdout, _ = run(["eval", "--gt", str(dataset / "annotations.json"),
                               "--det", str(det_path), "--mode", "mask",
                               "--out", str(out)], capsys)
        assert code == 0
        assert json.loads(out.read_text("utf-8"))["eval"]["map_50_95"] == 1.0

    def test_out_directory_created_when_missing(self, dataset, tmp_path, capsys):
        aset = coco.parse_coco((dataset / "annotations.json").read_bytes())
        dets = [{"image_id": a.image_id, "category_id": a.category_id,
                 "bbox": list(a.bbox), "score": 0.9} for a in aset.annotations]
        det_path = tmp_path / "dets.json"
        det_path.write_text(json.dumps(dets), encoding="utf-8")
        out = tmp_path / "results" / "nested" / "report.json"
        code, _, _ = run(["eval", "--gt", str(dataset / "annotations.json"),
                          "--det", str(det_path), "--out", str(out)], capsys)
        assert code == 0
        assert out.exists()
        assert (out.parent / "report.f1.csv").exists()

    def test_bad_detections_file_exits_2(self, dataset, tmp_path, capsys):
        det_path = tmp_path / "dets.json"
        det_path.write_text(json.dumps({"not": "a list"}), encoding="utf-8")
        code, _, stderr = run(["eval", "--gt", str(dataset / "annotations.json"),
                               "--det", str(det_path),
                               "--out", str(tmp_path / "r.json")], capsys)
        assert code == 2
        assert "must hold a JSON list" in stderr


class TestIngestRouteTrack:
    def test_ingest_files_then_census(self, tmp_path, capsys):
        for k in range(3):
            (tmp_path / f"cam{k}.png").write_bytes(png_bytes((k, 0, 0)))
        root = tmp_path / "track"
        code, stdout, _ = run(
            ["ingest", "--root", str(root)]
            + [str(tmp_path / f"cam{k}.png") for k in range(3)], capsys)
        assert code == 0
        assert stdout.count("ingested ") == 3
        code, stdout, _ = run(["track", "census", "--root", str(root)], capsys)
        assert code == 0
        rows = dict(line.split() for line in stdout.strip().split("\n"))
        assert rows["Incoming"] == "3"
        assert rows["total"] == "3"

    def test_duplicate_file_reported_not_fatal(self, tmp_path, capsys):
        blob = tmp_path / "cam.png"
        blob.write_bytes(png_bytes((7, 7, 7)))
        root = tmp_path / "track"
        run(["ingest", "--root", str(root), str(blob)], capsys)
        code, stdout, _ = run(["ingest", "--root", str(root), str(blob)], capsys)
        assert code == 0
        assert "duplicate" in stdout

    def test_watch_ingests_preexisting_batch(self, tmp_path, capsys):
        incoming = tmp_path / "incoming"
        incoming.mkdir()
        for k in range(4):
            (incoming / f"w{k}.png").write_bytes(png_bytes((k, 9, 9)))
        root = tmp_path / "track"
        code, stdout, _ = run(["ingest", "--root", str(root),
                               "--watch", str(incoming),
                               "--interval", "0.01", "--batches", "1"], capsys)
        assert code == 0
        assert stdout.count("ingested ") == 4
        assert Tracker(root).census()["Incoming"] == 4

    def test_route_splits_incoming(self, tmp_path, capsys):
        root = tmp_path / "track"
        t = Tracker(root)
        for k in range(20):
            t.ingest_image(f"x{k}.png", data=png_bytes((k, 1, 2)))
        del t
        code, stdout, _ = run(["route", "--root", str(root),
                               "--fraction", "0.0"], capsys)
        assert code == 0
        assert "routed 20: 20 to BatchPrediction, 0 to Labeling" in stdout
        replay = Tracker(root)
        assert replay.census()["BatchPrediction"] == 20

    def test_track_show_prints_history(self, tmp_path, capsys):
        root = tmp_path / "track"
        t = Tracker(root)
        rec = t.ingest_image("a.png", data=png_bytes((3, 3, 3)))
        del t
        code, stdout, _ = run(["track", "show", rec.image_id,
                               "--root", str(root)], capsys)
        assert code == 0
        assert rec.image_id in stdout
        assert "Incoming -> Incoming" in stdout
        assert "reason=ingest" in stdout

    def test_track_show_unknown_exits_2(self, tmp_path, capsys):
        root = tmp_path / "track"
        Tracker(root)
        code, _, stderr = run(["track", "show", "ghost", "--root", str(root)],
                              capsys)
        assert code == 2
        assert "no record" in stderr


class TestExperimentAndQc:
    @pytest.fixture()
    def pools(self, tmp_path):
        base = {**GEN_CONFIG, "n_images": 8}
        synthgen.generate_batch(
            synthgen.GenConfig.from_dict({**base, "master_seed": 1}),
            tmp_path / "real", write_images=False, stem_prefix="real_")
        synthgen.generate_batch(
            synthgen.GenConfig.from_dict({**base, "master_seed": 2}),
            tmp_path / "synth", write_images=False, stem_prefix="synth_")
        synthgen.generate_batch(
            synthgen.GenConfig.from_dict({**base, "n_images": 4, "master_seed": 3}),
            tmp_path / "test", write_images=False, stem_prefix="test_")
        return tmp_path

    def experiment_doc(self, pools, name, synthetic, **extra):
        return {
            "name": name, "real_train": 6, "synthetic_train": synthetic,
            "resolution_tier": "other", "seed": 5,
            "real_dataset": str(pools / "real"),
            "synthetic_dataset": str(pools / "synth"),
            "test_dataset": str(pools / "test"),
            "results_dir": str(pools / "results"),
            "oracle": {"tp_confidence": [2000.0, 1.0]},
            **extra,
        }

    def test_run_then_compare(self, pools, capsys):
        for name, synth in (("Baseline", 0), ("Exp1", 6)):
            cfg_path = pools / f"{name}.json"
            cfg_path.write_text(json.dumps(
                self.experiment_doc(pools, name, synth)), encoding="utf-8")
            code, stdout, _ = run(["experiment", "run", "--config",
                                   str(cfg_path)], capsys)
            assert code == 0
            assert f"{name}: mAP 1.0000" in stdout
            assert (pools / "results" / name / "report.json").exists()

        csv_out = pools / "table.csv"
        code, stdout, _ = run(["experiment", "compare", "--baseline", "Baseline",
                               "--results", str(pools / "results"),
                               "--csv", str(csv_out)], capsys)
        assert code == 0
        assert "Experiment" in stdout and "% Increase" in stdout
        assert "N/A" in stdout
        lines = csv_out.read_text("utf-8").strip().split("\n")
        assert lines[0] == "experiment,real,synthetic,tier,map,lift_percent"
        assert lines[1].startswith("Baseline,6,0,")
        assert lines[2].startswith("Exp1,6,6,")
        assert lines[2].endswith("0.00")

    def test_compare_unknown_baseline_exits_2(self, pools, capsys):
        (pools / "results" / "Solo").mkdir(parents=True)
        (pools / "results" / "Solo" / "report.json").write_text(json.dumps({
            "config": {}, "result": {
                "config_name": "Solo", "real_train": 1, "synthetic_train": 0,
                "resolution_tier": "other", "map_value": 0.5}}), encoding="utf-8")
        code, _, stderr = run(["experiment", "compare", "--baseline", "Missing",
                               "--results", str(pools / "results")], capsys)
        assert code == 2
        assert "Missing" in stderr

    def test_insufficient_pool_exits_2(self, pools, capsys):
        doc = self.experiment_doc(pools, "Big", 500)
        cfg_path = pools / "big.json"
        cfg_path.write_text(json.dumps(doc), encoding="utf-8")
        code, _, stderr = run(["experiment", "run", "--config", str(cfg_path)],
                              capsys)
        assert code == 2
        assert "synthetic" in stderr

    def test_qc_report(self, pools, capsys):
        code, stdout, stderr = run(
            ["qc", "--manifest", str(pools / "real" / "manifest.json"),
             "--annotations", str(pools / "real" / "annotations.json")], capsys)
        assert code == 0
        report = json.loads(stdout)
        assert report["total_images"] == 8
        assert report["healthy_count"] + report["defective_count"] == 8

    def test_qc_missing_annotations_exits_2(self, pools, tmp_path, capsys):
        empty = coco.AnnotationSet(images=(), annotations=(),
                                   categories=coco.default_categories())
        ann_path = tmp_path / "empty.json"
        ann_path.write_bytes(coco.write_coco(empty))
        code, _, stderr = run(
            ["qc", "--manifest", str(pools / "real" / "manifest.json"),
             "--annotations", str(ann_path)], capsys)
        assert code == 2

"""Dataset manifests, quality-control reports, and the mixing-experiment
harness: build train sets from real/synthetic pools, run a detector over a
held-out test set, and compare mAP lift against a named baseline.

Published reference numbers are not reproducible here (they came from a
proprietary corpus and a trained model); the harness reproduces the
experiment structure and the lift arithmetic, with its own numbers produced
by the oracle detector.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import coco, metrics
from .detector import DetectorHandle
from .metrics import EvalReport, HealthConfusion, MatchMode

log = logging.getLogger(__name__)

DEFECTIVE_FRACTION_BOUNDS = (0.2, 0.8)


class ExperimentsError(Exception):
    """Base class for experiment failures."""


class InsufficientPool(ExperimentsError):
    def __init__(self, pool: str, requested: int, available: int):
        self.pool = pool
        self.requested = requested
        self.available = available
        super().__init__(
            f"{pool} pool has {available} image(s), {requested} requested")


class MissingAnnotations(ExperimentsError):
    """qc_report received a manifest image with no annotation entry."""


class UnknownBaseline(ExperimentsError):
    """compare_to_baseline could not find the named baseline result."""


class Provenance(str, Enum):
    REAL = "Real"
    SYNTHETIC = "Synthetic"


class ResolutionTier(str, Enum):
    R1K = "r1k"
    R2K = "r2k"
    R4K = "r4k"
    OTHER = "other"

    @classmethod
    def from_dims(cls, width: int, height: int) -> "ResolutionTier":
        long_side = max(width, height)
        return {1024: cls.R1K, 2048: cls.R2K, 4096: cls.R4K}.get(long_side, cls.OTHER)


class Split(str, Enum):
    TRAIN = "Train"
    VAL = "Val"
    TEST = "Test"


HEALTHY_CATEGORY = "crossarm_healthy"


@dataclass(frozen=True)
class PoolImage:
    """Selection metadata for one candidate image in a sampling pool."""

    image_id: str
    provenance: Provenance
    resolution_tier: ResolutionTier
    category_names: tuple[str, ...] = ()

    @property
    def healthy(self) -> bool:
        return all(name == HEALTHY_CATEGORY for name in self.category_names)


@dataclass(frozen=True)
class Composition:
    real_count: int = 0
    synthetic_count: int = 0
    per_category: Mapping[str, int] = field(default_factory=dict)
    healthy_count: int = 0
    defective_count: int = 0
    tier_histogram: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "per_category", dict(self.per_category))
        object.__setattr__(self, "tier_histogram", dict(self.tier_histogram))

    def to_dict(self) -> dict:
        return {
            "real_count": self.real_count,
            "synthetic_count": self.synthetic_count,
            "per_category": {k: self.per_category[k] for k in sorted(self.per_category)},
            "healthy_count": self.healthy_count,
            "defective_count": self.defective_count,
            "tier_histogram": {k: self.tier_histogram[k] for k in sorted(self.tier_histogram)},
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Composition":
        return cls(
            real_count=int(doc["real_count"]),
            synthetic_count=int(doc["synthetic_count"]),
            per_category=dict(doc["per_category"]),
            healthy_count=int(doc["healthy_count"]),
            defective_count=int(doc["defective_count"]),
            tier_histogram=dict(doc["tier_histogram"]),
        )


def compute_composition(images: Iterable[PoolImage]) -> Composition:
    real = synthetic = healthy = defective = 0
    per_category: dict[str, int] = {}
    tiers: dict[str, int] = {}
    for img in images:
        if img.provenance is Provenance.REAL:
            real += 1
        else:
            synthetic += 1
        if img.healthy:
            healthy += 1
        else:
            defective += 1
        for name in img.category_names:
            per_category[name] = per_category.get(name, 0) + 1
        tiers[img.resolution_tier.value] = tiers.get(img.resolution_tier.value, 0) + 1
    return Composition(real, synthetic, per_category, healthy, defective, tiers)


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple[tuple[str, Split], ...]
    composition: Composition

    def __post_init__(self):
        ids = [image_id for image_id, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise ExperimentsError(f"manifest '{self.name}' lists an image twice")
        object.__setattr__(
            self, "entries",
            tuple((str(i), Split(s)) for i, s in self.entries))

    def image_ids(self, split: Split | None = None) -> tuple[str, ...]:
        return tuple(i for i, s in self.entries if split is None or s is split)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "entries": [[image_id, split.value] for image_id, split in self.entries],
            "composition": self.composition.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DatasetManifest":
        return cls(
            name=str(doc["name"]),
            entries=tuple((e[0], Split(e[1])) for e in doc["entries"]),
            composition=Composition.from_dict(doc["composition"]),
        )


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    Path(path).write_bytes(
        (json.dumps(manifest.to_dict(), indent=2) + "\n").encode("utf-8"))


def read_manifest(path: str | Path) -> DatasetManifest:
    return DatasetManifest.from_dict(json.loads(Path(path).read_text("utf-8")))


@dataclass(frozen=True)
class Dataset:
    """A generated batch on disk: manifest + COCO annotations + rasters."""

    root: Path
    manifest: DatasetManifest
    annotations: coco.AnnotationSet

    @property
    def categories(self) -> Mapping[int, coco.CategorySpec]:
        return self.annotations.category_by_id()

    def stem_to_coco_id(self) -> dict[str, int]:
        return {Path(img.file_name).stem: img.image_id for img in self.annotations.images}

    def dims_by_image(self) -> dict[int, tuple[int, int]]:
        return {img.image_id: (img.width, img.height) for img in self.annotations.images}

    def gts_by_image(self) -> dict[int, list[coco.InstanceAnnotation]]:
        grouped: dict[int, list[coco.InstanceAnnotation]] = {
            img.image_id: [] for img in self.annotations.images}
        for ann in self.annotations.annotations:
            grouped[ann.image_id].append(ann)
        return grouped

    def pool_images(self, provenance: Provenance) -> list[PoolImage]:
        categories = self.categories
        gts = self.gts_by_image()
        out = []
        for img in self.annotations.images:
            names = tuple(categories[a.category_id].name for a in gts[img.image_id])
            out.append(PoolImage(
                image_id=Path(img.file_name).stem,
                provenance=provenance,
                resolution_tier=ResolutionTier.from_dims(img.width, img.height),
                category_names=names,
            ))
        return out


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    manifest = read_manifest(root / "manifest.json")
    annotations = coco.parse_coco((root / "annotations.json").read_bytes())
    return Dataset(root=root, manifest=manifest, annotations=annotations)


# ---------------------------------------------------------------------------
# experiment configuration and manifest construction


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    real_train: int
    synthetic_train: int
    resolution_tier: ResolutionTier
    detector: DetectorHandle
    test_manifest: str
    seed: int = 0

    def __post_init__(self):
        if self.real_train < 0 or self.synthetic_train < 0:
            raise ExperimentsError("image counts must be >= 0")
        if self.name == "Baseline" and self.synthetic_train != 0:
            raise ExperimentsError("the Baseline experiment takes no synthetic images")


_SAMPLE_TAG_REAL = 0
_SAMPLE_TAG_SYNTH = 1


def _sample_pool(pool: Sequence[PoolImage], count: int, label: str,
                 seed: int, tag: int, exclude: frozenset[str]) -> list[PoolImage]:
    eligible = sorted((p for p in pool if p.image_id not in exclude),
                      key=lambda p: p.image_id)
    if len(eligible) < count:
        raise InsufficientPool(label, count, len(eligible))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, tag))))
    order = rng.permutation(len(eligible))
    return [eligible[i] for i in order[:count]]


def build_manifest(
    real_pool: Sequence[PoolImage],
    synth_pool: Sequence[PoolImage],
    cfg: ExperimentConfig,
    test_ids: Iterable[str] = (),
) -> DatasetManifest:
    """Seeded sampling without replacement from each pool; test ids excluded.

    Deterministic in (pool contents, cfg.seed) regardless of pool ordering.
    """
    exclude = frozenset(test_ids)
    chosen = (_sample_pool(real_pool, cfg.real_train, "real", cfg.seed,
                           _SAMPLE_TAG_REAL, exclude)
              + _sample_pool(synth_pool, cfg.synthetic_train, "synthetic", cfg.seed,
                             _SAMPLE_TAG_SYNTH, exclude))
    entries = tuple((p.image_id, Split.TRAIN) for p in chosen)
    return DatasetManifest(
        name=cfg.name, entries=entries, composition=compute_composition(chosen))


# ---------------------------------------------------------------------------
# quality-control report


@dataclass(frozen=True)
class QcReport:
    total_images: int
    per_defect_counts: Mapping[str, int]
    per_defect_fractions: Mapping[str, float]
    healthy_count: int
    defective_count: int
    defective_fraction: float
    real_count: int
    synthetic_count: int
    per_split_counts: Mapping[str, int]
    flags: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "total_images": self.total_images,
            "per_defect_counts": dict(self.per_defect_counts),
            "per_defect_fractions": dict(self.per_defect_fractions),
            "healthy_count": self.healthy_count,
            "defective_count": self.defective_count,
            "defective_fraction": self.defective_fraction,
            "real_count": self.real_count,
            "synthetic_count": self.synthetic_count,
            "per_split_counts": dict(self.per_split_counts),
            "flags": list(self.flags),
        }


def qc_report(
    manifest: DatasetManifest,
    annotations: Mapping[str, Sequence[str]],
    defective_bounds: tuple[float, float] = DEFECTIVE_FRACTION_BOUNDS,
) -> QcReport:
    """Composition review of a manifest.

    ``annotations`` maps image id -> category names present on that image;
    every manifest image must have an entry (an empty tuple is a valid entry
    meaning "no instances").
    """
    defect_names = [name for name in coco.CATEGORY_VOCABULARY if name != HEALTHY_CATEGORY]
    per_defect = {name: 0 for name in defect_names}
    healthy = defective = 0
    per_split: dict[str, int] = {}
    for image_id, split in manifest.entries:
        if image_id not in annotations:
            raise MissingAnnotations(f"no annotations entry for image '{image_id}'")
        names = annotations[image_id]
        if any(n in per_defect for n in names):
            defective += 1
        else:
            healthy += 1
        for n in names:
            if n in per_defect:
                per_defect[n] += 1
        per_split[split.value] = per_split.get(split.value, 0) + 1

    total = len(manifest.entries)
    n_defect_instances = sum(per_defect.values())
    fractions = {
        name: (count / n_defect_instances if n_defect_instances else 0.0)
        for name, count in per_defect.items()
    }
    defective_fraction = defective / total if total else 0.0
    flags = []
    lo, hi = defective_bounds
    if total and not lo <= defective_fraction <= hi:
        flags.append(
            f"defective fraction {defective_fraction:.3f} outside [{lo}, {hi}]")
    return QcReport(
        total_images=total,
        per_defect_counts=per_defect,
        per_defect_fractions=fractions,
        healthy_count=healthy,
        defective_count=defective,
        defective_fraction=defective_fraction,
        real_count=manifest.composition.real_count,
        synthetic_count=manifest.composition.synthetic_count,
        per_split_counts=per_split,
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# experiment runs


CONFUSION_CONFIDENCE = 0.9
CONFUSION_IOU = 0.5


@dataclass(frozen=True)
class ExperimentResult:
    config_name: str
    real_train: int
    synthetic_train: int
    resolution_tier: ResolutionTier
    eval: EvalReport            # box-mode report (headline numbers)
    mask_eval: EvalReport
    map_value: float            # eval.map_50_95
    confusion: HealthConfusion
    class_metrics: metrics.ClassMetrics
    composition: Composition
    lift_vs_baseline: float | None = None

    def to_dict(self) -> dict:
        cm = self.confusion
        km = self.class_metrics
        return {
            "config_name": self.config_name,
            "real_train": self.real_train,
            "synthetic_train": self.synthetic_train,
            "resolution_tier": self.resolution_tier.value,
            "map_value": self.map_value,
            "lift_vs_baseline": self.lift_vs_baseline,
            "eval": self.eval.to_dict(),
            "mask_eval": self.mask_eval.to_dict(),
            "confusion": {
                "true_healthy": cm.true_healthy,
                "false_defective": cm.false_defective,
                "false_healthy": cm.false_healthy,
                "true_defective": cm.true_defective,
                "unmatched_detections": cm.unmatched_detections,
                "unmatched_ground_truth": cm.unmatched_ground_truth,
            },
            "class_metrics": {
                "precision_healthy": km.precision_healthy,
                "recall_healthy": km.recall_healthy,
                "precision_defective": km.precision_defective,
                "recall_defective": km.recall_defective,
                "f1_healthy": km.f1_healthy,
                "f1_defective": km.f1_defective,
                "degenerate": list(km.degenerate),
            },
            "composition": self.composition.to_dict(),
        }


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_detection_to_wire = metrics.Detection.to_dict
_detection_from_wire = metrics.Detection.from_dict


def _load_cached_detections(path: Path) -> dict[int, list[metrics.Detection]]:
    cached: dict[int, list[metrics.Detection]] = {}
    if not path.exists():
        return cached
    for line in path.read_text("utf-8").splitlines():
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            continue  # partial final line from an interrupted run
        cached[int(doc["image_id"])] = [_detection_from_wire(d) for d in doc["detections"]]
    return cached


def run_experiment(
    cfg: ExperimentConfig,
    train_manifest: DatasetManifest,
    test_set: Dataset,
    results_dir: str | Path,
) -> ExperimentResult:
    """Detector sweep over the test set with full evaluation.

    The headline map_value is box-mode mAP 0.50-0.95 over the raw detections;
    the detection cap (6/image) and the 0.9 confidence floor apply only to
    the confusion-matrix report.  Per-image detections are appended to
    ``detections.jsonl`` as they are produced, so an interrupted run resumes
    where it stopped; the final report write is atomic.
    """
    results_dir = Path(results_dir)
    exp_dir = results_dir / cfg.name
    exp_dir.mkdir(parents=True, exist_ok=True)
    det_cache_path = exp_dir / "detections.jsonl"
    cached = _load_cached_detections(det_cache_path)
    if det_cache_path.exists():
        # drop any torn final record before appending to the log
        _atomic_write(det_cache_path, "".join(
            json.dumps({"image_id": image_id,
                        "detections": [_detection_to_wire(d) for d in dets]}) + "\n"
            for image_id, dets in cached.items()).encode("utf-8"))

    gts_by_image = test_set.gts_by_image()
    dims = test_set.dims_by_image()
    categories = test_set.categories
    image_ids = sorted(gts_by_image)

    all_dets: list[metrics.Detection] = []
    all_gts: list[coco.InstanceAnnotation] = []
    with det_cache_path.open("a", encoding="utf-8") as cache:
        for image_index, image_id in enumerate(image_ids):
            gts = gts_by_image[image_id]
            all_gts.extend(gts)
            if image_id in cached:
                dets = cached[image_id]
            else:
                width, height = dims[image_id]
                dets = cfg.detector.detect(
                    image_id, width, height, gts=gts,
                    image_index=image_index, categories=categories)
                cache.write(json.dumps({
                    "image_id": image_id,
                    "detections": [_detection_to_wire(d) for d in dets],
                }) + "\n")
            all_dets.extend(dets)

    box_report = metrics.mean_average_precision(all_dets, all_gts, MatchMode.BOX, dims)
    mask_report = metrics.mean_average_precision(all_dets, all_gts, MatchMode.MASK, dims)

    confusion = HealthConfusion()
    capped = metrics.cap_detections(
        [d for d in all_dets if d.confidence >= CONFUSION_CONFIDENCE],
        metrics.DEFAULT_MAX_PER_IMAGE)
    capped_by_image: dict[int, list[metrics.Detection]] = {}
    for d in capped:
        capped_by_image.setdefault(d.image_id, []).append(d)
    for image_id in image_ids:
        gts = gts_by_image[image_id]
        dets = capped_by_image.get(image_id, [])
        match = metrics.match_detections(dets, gts, CONFUSION_IOU)
        confusion = confusion + metrics.health_confusion(match, dets, gts, categories)

    result = ExperimentResult(
        config_name=cfg.name,
        real_train=cfg.real_train,
        synthetic_train=cfg.synthetic_train,
        resolution_tier=cfg.resolution_tier,
        eval=box_report,
        mask_eval=mask_report,
        map_value=box_report.map_50_95,
        confusion=confusion,
        class_metrics=metrics.class_metrics(confusion),
        composition=train_manifest.composition,
        lift_vs_baseline=None,
    )
    payload = {"config": {
        "name": cfg.name, "real_train": cfg.real_train,
        "synthetic_train": cfg.synthetic_train,
        "resolution_tier": cfg.resolution_tier.value,
        "detector": cfg.detector.descriptor,
        "test_manifest": cfg.test_manifest, "seed": cfg.seed,
    }, "result": result.to_dict()}
    _atomic_write(exp_dir / "report.json",
                  (json.dumps(payload, indent=2) + "\n").encode("utf-8"))
    log.info("experiment %s: box mAP %.4f, mask mAP %.4f",
             cfg.name, box_report.map_50_95, mask_report.map_50_95)
    return result


def load_result(results_dir: str | Path, name: str) -> dict:
    path = Path(results_dir) / name / "report.json"
    if not path.exists():
        raise ExperimentsError(f"no persisted result for experiment '{name}'")
    return json.loads(path.read_text("utf-8"))


# ---------------------------------------------------------------------------
# comparison table


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    real_train: int
    synthetic_train: int
    resolution_tier: str
    map_value: float
    lift: float | None  # None on the baseline row


@dataclass(frozen=True)
class ComparisonTable:
    baseline_name: str
    rows: tuple[ComparisonRow, ...]

    def to_text(self) -> str:
        headers = ("Experiment", "Real", "Synthetic", "Tier", "mAP", "% Increase")
        cells = [headers]
        for r in self.rows:
            cells.append((
                r.name, str(r.real_train), str(r.synthetic_train),
                r.resolution_tier, f"{r.map_value:.2f}",
                "N/A" if r.lift is None else f"{r.lift:.2f}%",
            ))
        widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
        lines = []
        for row in cells:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["experiment,real,synthetic,tier,map,lift_percent"]
        for r in self.rows:
            lift = "N/A" if r.lift is None else f"{r.lift:.2f}"
            lines.append(f"{r.name},{r.real_train},{r.synthetic_train},"
                         f"{r.resolution_tier},{r.map_value:.4f},{lift}")
        return "\n".join(lines) + "\n"


def compare_to_baseline(
    results: Sequence[ExperimentResult],
    baseline_name: str,
) -> ComparisonTable:
    """Lift of every result against the named baseline's mAP."""
    baseline = next((r for r in results if r.config_name == baseline_name), None)
    if baseline is None:
        raise UnknownBaseline(
            f"baseline '{baseline_name}' not among results "
            f"{[r.config_name for r in results]}")
    rows = []
    for r in results:
        lift = None
        if r.config_name != baseline_name:
            lift = metrics.lift_percent(baseline.map_value, r.map_value)
        rows.append(ComparisonRow(
            name=r.config_name,
            real_train=r.real_train,
            synthetic_train=r.synthetic_train,
            resolution_tier=r.resolution_tier.value,
            map_value=r.map_value,
            lift=lift,
        ))
    return ComparisonTable(baseline_name=baseline_name, rows=tuple(rows))


def compare_map_values(
    pairs: Sequence[tuple[str, float]],
    baseline_name: str,
) -> ComparisonTable:
    """Comparison table straight from (name, mAP) pairs (no run artifacts)."""
    baseline = next((v for n, v in pairs if n == baseline_name), None)
    if baseline is None:
        raise UnknownBaseline(f"baseline '{baseline_name}' not among {[n for n, _ in pairs]}")
    rows = tuple(
        ComparisonRow(
            name=name, real_train=0, synthetic_train=0, resolution_tier="",
            map_value=value,
            lift=None if name == baseline_name else metrics.lift_percent(baseline, value),
        )
        for name, value in pairs
    )
    return ComparisonTable(baseline_name=baseline_name, rows=rows)

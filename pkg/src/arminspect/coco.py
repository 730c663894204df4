"""COCO-format annotation sets for crossarm inspection imagery.

Covers parsing, validation, normalization of raw labeling-platform exports
(relative -> absolute coordinates), and deterministic serialization.  Health
and defect semantics ride on the category names, which use the fixed
vocabulary ``crossarm_healthy`` / ``crossarm_split`` / ``crossarm_break`` /
``crossarm_decay``.

Serialized documents are JSON with a fixed key order:

* top level: ``images``, ``annotations``, ``categories``
* image: ``id``, ``file_name``, ``width``, ``height``
* annotation: ``id``, ``image_id``, ``category_id``, ``bbox``,
  ``segmentation``, ``area``, ``iscrowd``
* category: ``id``, ``name``, ``supercategory``

so identical sets always serialize to byte-identical output.

Annotation ``area`` is defined as the covered-pixel count of the polygon
rings at image resolution (see :mod:`arminspect.raster`); annotations with
no polygon carry their bbox area instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from . import raster

SUPERCATEGORY = "crossarm"
RELATIVE_TOLERANCE = 1e-6


class Health(str, Enum):
    HEALTHY = "Healthy"
    DEFECTIVE = "Defective"


class DefectType(str, Enum):
    SPLIT = "Split"
    BREAK = "Break"
    DECAY = "Decay"


#: category name -> (health, defect type) for the fixed label vocabulary
CATEGORY_VOCABULARY: dict[str, tuple[Health, DefectType | None]] = {
    "crossarm_healthy": (Health.HEALTHY, None),
    "crossarm_split": (Health.DEFECTIVE, DefectType.SPLIT),
    "crossarm_break": (Health.DEFECTIVE, DefectType.BREAK),
    "crossarm_decay": (Health.DEFECTIVE, DefectType.DECAY),
}


class CocoError(Exception):
    """Base class for annotation-set failures."""


class MalformedDocument(CocoError):
    """Input is not parseable as a COCO document."""


class MissingField(CocoError):
    def __init__(self, field_name: str, record: str, index: int | None = None):
        self.field_name = field_name
        self.record = record
        self.index = index
        where = record if index is None else f"{record}[{index}]"
        super().__init__(f"missing field '{field_name}' in {where}")


class InvariantViolation(CocoError):
    """Set fails an AnnotationSet invariant (duplicate ids, bad refs, ...)."""


class DanglingReference(InvariantViolation):
    """Annotation references an image or category that does not exist."""


class MissingDims(CocoError):
    """normalize_labels received an image with no dimensions entry."""


class OutOfRange(CocoError):
    """Relative coordinate outside [0, 1] beyond tolerance."""


@dataclass(frozen=True)
class CategorySpec:
    category_id: int
    name: str
    health: Health
    defect_type: DefectType | None = None

    def __post_init__(self):
        if self.category_id <= 0:
            raise InvariantViolation(f"category_id must be positive, got {self.category_id}")
        if (self.defect_type is not None) != (self.health is Health.DEFECTIVE):
            raise InvariantViolation(
                f"category '{self.name}': defect_type must be present exactly when health is Defective"
            )
        expected = CATEGORY_VOCABULARY.get(self.name)
        if expected is None:
            raise InvariantViolation(
                f"unknown category name '{self.name}'; expected one of {sorted(CATEGORY_VOCABULARY)}"
            )
        if expected != (self.health, self.defect_type):
            raise InvariantViolation(
                f"category '{self.name}' is inconsistent with ({self.health.value}, {self.defect_type})"
            )

    @classmethod
    def from_name(cls, category_id: int, name: str) -> "CategorySpec":
        if name not in CATEGORY_VOCABULARY:
            raise MalformedDocument(
                f"unknown category name '{name}'; expected one of {sorted(CATEGORY_VOCABULARY)}"
            )
        health, defect = CATEGORY_VOCABULARY[name]
        return cls(category_id=category_id, name=name, health=health, defect_type=defect)


def default_categories() -> tuple[CategorySpec, ...]:
    """The full vocabulary with ids 1..4, in vocabulary order."""
    return tuple(
        CategorySpec.from_name(i + 1, name) for i, name in enumerate(CATEGORY_VOCABULARY)
    )


@dataclass(frozen=True)
class ImageEntry:
    image_id: int
    file_name: str
    width: int
    height: int

    def __post_init__(self):
        if self.image_id <= 0:
            raise InvariantViolation(f"image_id must be positive, got {self.image_id}")
        if self.width <= 0 or self.height <= 0:
            raise InvariantViolation(
                f"image {self.image_id}: dimensions must be positive, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class InstanceAnnotation:
    annotation_id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    segmentation: tuple[tuple[float, ...], ...] = ()
    area: float = 0.0
    iscrowd: int = 0

    def __post_init__(self):
        for name, value in (("annotation_id", self.annotation_id),
                            ("image_id", self.image_id),
                            ("category_id", self.category_id)):
            if value <= 0:
                raise InvariantViolation(f"{name} must be positive, got {value}")
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if len(self.bbox) != 4:
            raise InvariantViolation(f"bbox must have 4 entries, got {len(self.bbox)}")
        if self.bbox[2] <= 0 or self.bbox[3] <= 0:
            raise InvariantViolation(
                f"annotation {self.annotation_id}: bbox w/h must be positive, got {self.bbox}"
            )
        rings = []
        for ring in self.segmentation:
            flat = tuple(float(v) for v in ring)
            if len(flat) < 6 or len(flat) % 2 != 0:
                raise InvariantViolation(
                    f"annotation {self.annotation_id}: polygon ring needs >=3 (x, y) pairs"
                )
            rings.append(flat)
        object.__setattr__(self, "segmentation", tuple(rings))
        object.__setattr__(self, "area", float(self.area))
        if self.iscrowd != 0:
            raise InvariantViolation("crowd annotations (iscrowd=1) are unsupported")


@dataclass(frozen=True)
class AnnotationSet:
    images: tuple[ImageEntry, ...] = ()
    annotations: tuple[InstanceAnnotation, ...] = ()
    categories: tuple[CategorySpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "categories", tuple(self.categories))

    def image_by_id(self) -> dict[int, ImageEntry]:
        return {img.image_id: img for img in self.images}

    def category_by_id(self) -> dict[int, CategorySpec]:
        return {cat.category_id: cat for cat in self.categories}

    def annotations_for(self, image_id: int) -> tuple[InstanceAnnotation, ...]:
        return tuple(a for a in self.annotations if a.image_id == image_id)


def check_references(aset: AnnotationSet) -> None:
    """Raise unless ids are unique and all cross-references resolve."""
    seen_img: set[int] = set()
    for img in aset.images:
        if img.image_id in seen_img:
            raise InvariantViolation(f"duplicate image id {img.image_id}")
        seen_img.add(img.image_id)
    seen_cat: set[int] = set()
    for cat in aset.categories:
        if cat.category_id in seen_cat:
            raise InvariantViolation(f"duplicate category id {cat.category_id}")
        seen_cat.add(cat.category_id)
    seen_ann: set[int] = set()
    for ann in aset.annotations:
        if ann.annotation_id in seen_ann:
            raise InvariantViolation(f"duplicate annotation id {ann.annotation_id}")
        seen_ann.add(ann.annotation_id)
        if ann.image_id not in seen_img:
            raise DanglingReference(
                f"annotation {ann.annotation_id} references unknown image {ann.image_id}"
            )
        if ann.category_id not in seen_cat:
            raise DanglingReference(
                f"annotation {ann.annotation_id} references unknown category {ann.category_id}"
            )


# ---------------------------------------------------------------------------
# parse / write


def parse_coco(data: bytes | str) -> AnnotationSet:
    """Parse a COCO document into a validated :class:`AnnotationSet`."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"document is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedDocument(f"top level must be an object, got {type(doc).__name__}")
    for key in ("images", "annotations", "categories"):
        if key not in doc:
            raise MissingField(key, "document")
        if not isinstance(doc[key], list):
            raise MalformedDocument(f"'{key}' must be a list")

    images = []
    for i, rec in enumerate(doc["images"]):
        _require(rec, ("id", "file_name", "width", "height"), "images", i)
        try:
            images.append(ImageEntry(
                image_id=_as_int(rec["id"], "images", i, "id"),
                file_name=str(rec["file_name"]),
                width=_as_int(rec["width"], "images", i, "width"),
                height=_as_int(rec["height"], "images", i, "height"),
            ))
        except InvariantViolation as exc:
            raise MalformedDocument(f"images[{i}]: {exc}") from exc

    categories = []
    for i, rec in enumerate(doc["categories"]):
        _require(rec, ("id", "name"), "categories", i)
        categories.append(CategorySpec.from_name(
            _as_int(rec["id"], "categories", i, "id"), str(rec["name"])))

    annotations = []
    for i, rec in enumerate(doc["annotations"]):
        _require(rec, ("id", "image_id", "category_id", "bbox", "area", "iscrowd"), "annotations", i)
        bbox = rec["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise MalformedDocument(f"annotations[{i}]: bbox must be a 4-element list")
        seg = rec.get("segmentation", [])
        if not isinstance(seg, list) or any(not isinstance(r, list) for r in seg):
            raise MalformedDocument(
                f"annotations[{i}]: segmentation must be a list of flat polygon rings"
            )
        try:
            annotations.append(InstanceAnnotation(
                annotation_id=_as_int(rec["id"], "annotations", i, "id"),
                image_id=_as_int(rec["image_id"], "annotations", i, "image_id"),
                category_id=_as_int(rec["category_id"], "annotations", i, "category_id"),
                bbox=tuple(float(v) for v in bbox),
                segmentation=tuple(tuple(float(v) for v in ring) for ring in seg),
                area=float(rec["area"]),
                iscrowd=int(rec["iscrowd"]),
            ))
        except (TypeError, ValueError) as exc:
            raise MalformedDocument(f"annotations[{i}]: {exc}") from exc

    aset = AnnotationSet(tuple(images), tuple(annotations), tuple(categories))
    check_references(aset)
    return aset


def write_coco(aset: AnnotationSet) -> bytes:
    """Serialize a valid set; output reparses to an equal set, byte-stably."""
    check_references(aset)
    doc = {
        "images": [
            {"id": img.image_id, "file_name": img.file_name,
             "width": img.width, "height": img.height}
            for img in aset.images
        ],
        "annotations": [
            {"id": ann.annotation_id, "image_id": ann.image_id,
             "category_id": ann.category_id, "bbox": list(ann.bbox),
             "segmentation": [list(ring) for ring in ann.segmentation],
             "area": ann.area, "iscrowd": ann.iscrowd}
            for ann in aset.annotations
        ],
        "categories": [
            {"id": cat.category_id, "name": cat.name, "supercategory": SUPERCATEGORY}
            for cat in aset.categories
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def _require(rec, fields: Iterable[str], record: str, index: int) -> None:
    if not isinstance(rec, dict):
        raise MalformedDocument(f"{record}[{index}] must be an object")
    for f in fields:
        if f not in rec:
            raise MissingField(f, record, index)


def _as_int(value, record: str, index: int, field_name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedDocument(f"{record}[{index}].{field_name} must be an integer, got {value!r}")
    return value


# ---------------------------------------------------------------------------
# raw label normalization


@dataclass(frozen=True)
class RawAnnotation:
    """One labeling-platform export record, possibly in relative coordinates."""

    annotation_id: int
    image_id: int
    category_id: int
    coords: str  # "relative" | "absolute"
    bbox: tuple[float, float, float, float] | None = None
    segmentation: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.coords not in ("relative", "absolute"):
            raise InvariantViolation(f"coords flag must be relative/absolute, got {self.coords!r}")
        if self.bbox is None and not self.segmentation:
            raise InvariantViolation(
                f"raw annotation {self.annotation_id} needs a bbox or at least one polygon"
            )
        if self.bbox is not None:
            object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        object.__setattr__(
            self, "segmentation",
            tuple(tuple(float(v) for v in ring) for ring in self.segmentation),
        )


@dataclass(frozen=True)
class RawLabelSet:
    images: tuple[tuple[int, str], ...]  # (image_id, file_name)
    annotations: tuple[RawAnnotation, ...] = ()
    categories: tuple[CategorySpec, ...] = field(default_factory=default_categories)


def normalize_labels(raw: RawLabelSet, dims: Mapping[int, tuple[int, int]]) -> AnnotationSet:
    """Convert a raw label export into an absolute-pixel AnnotationSet.

    Relative coordinates are scaled by the image dimensions from ``dims``;
    bboxes are recomputed from polygons wherever polygons exist, and areas
    are always recomputed (covered pixels for polygons, w*h otherwise).
    """
    images = []
    for image_id, file_name in raw.images:
        if image_id not in dims:
            raise MissingDims(f"no dimensions for image {image_id}")
        w, h = dims[image_id]
        images.append(ImageEntry(image_id=image_id, file_name=file_name, width=w, height=h))

    annotations = []
    for ann in raw.annotations:
        if ann.image_id not in dims:
            raise MissingDims(f"no dimensions for image {ann.image_id} (annotation {ann.annotation_id})")
        w, h = dims[ann.image_id]
        if ann.coords == "relative":
            rings = tuple(_scale_ring(ring, w, h, ann.annotation_id) for ring in ann.segmentation)
            bbox = None
            if ann.bbox is not None:
                bx, by, bw, bh = (_rel(v, ann.annotation_id) for v in ann.bbox)
                bbox = (bx * w, by * h, bw * w, bh * h)
        else:
            rings = ann.segmentation
            bbox = ann.bbox
        if rings:
            bbox = raster.rings_bbox(rings)
            area = raster.pixel_area(rings, w, h)
        else:
            area = bbox[2] * bbox[3]
        annotations.append(InstanceAnnotation(
            annotation_id=ann.annotation_id,
            image_id=ann.image_id,
            category_id=ann.category_id,
            bbox=bbox,
            segmentation=rings,
            area=area,
        ))

    aset = AnnotationSet(tuple(images), tuple(annotations), raw.categories)
    check_references(aset)
    return aset


def _rel(v: float, annotation_id: int) -> float:
    if not -RELATIVE_TOLERANCE <= v <= 1.0 + RELATIVE_TOLERANCE:
        raise OutOfRange(
            f"annotation {annotation_id}: relative coordinate {v} outside [0, 1]"
        )
    return min(max(v, 0.0), 1.0)


def _scale_ring(ring: Sequence[float], w: int, h: int, annotation_id: int) -> tuple[float, ...]:
    out = []
    for k, v in enumerate(ring):
        scale = w if k % 2 == 0 else h
        out.append(_rel(v, annotation_id) * scale)
    return tuple(out)


# ---------------------------------------------------------------------------
# validation report

BBOX_SLACK_PX = 1.0
AREA_RELATIVE_TOL = 0.02


@dataclass(frozen=True)
class Finding:
    kind: str  # bbox_tightness | vertex_bounds | area_mismatch | duplicate_id
    subject_id: int
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def is_clean(self) -> bool:
        return not self.findings

    def by_kind(self, kind: str) -> tuple[Finding, ...]:
        return tuple(f for f in self.findings if f.kind == kind)

    def summary(self) -> str:
        if self.is_clean:
            return "clean: no findings"
        lines = [f"{len(self.findings)} finding(s):"]
        lines += [f"  [{f.kind}] #{f.subject_id}: {f.message}" for f in self.findings]
        return "\n".join(lines)


def validate_annotations(aset: AnnotationSet) -> ValidationReport:
    """Geometry and uniqueness review; findings are data, not errors."""
    findings: list[Finding] = []

    for kind, ids in (("image", [i.image_id for i in aset.images]),
                      ("category", [c.category_id for c in aset.categories]),
                      ("annotation", [a.annotation_id for a in aset.annotations])):
        seen: dict[int, int] = {}
        for i in ids:
            seen[i] = seen.get(i, 0) + 1
        for i, n in seen.items():
            if n > 1:
                findings.append(Finding(
                    "duplicate_id", i, f"{kind} id {i} appears {n} times"))

    image_dims = {img.image_id: (img.width, img.height) for img in aset.images}
    for ann in aset.annotations:
        dims = image_dims.get(ann.image_id)
        if dims is None:
            continue  # unresolved reference; caught by check_references
        w, h = dims
        if ann.segmentation:
            pts_oob = []
            for ring in ann.segmentation:
                arr = raster.ring_array(ring)
                bad = (arr[:, 0] < 0) | (arr[:, 0] > w) | (arr[:, 1] < 0) | (arr[:, 1] > h)
                pts_oob.extend(arr[bad].tolist())
            if pts_oob:
                findings.append(Finding(
                    "vertex_bounds", ann.annotation_id,
                    f"{len(pts_oob)} vertex(es) outside [0,{w}]x[0,{h}], first {pts_oob[0]}"))
            tx, ty, tw, th = raster.rings_bbox(ann.segmentation)
            bx, by, bw, bh = ann.bbox
            gaps = (abs(bx - tx), abs(by - ty),
                    abs((bx + bw) - (tx + tw)), abs((by + bh) - (ty + th)))
            if max(gaps) > BBOX_SLACK_PX:
                findings.append(Finding(
                    "bbox_tightness", ann.annotation_id,
                    f"bbox edge off polygon extent by {max(gaps):.2f}px (>{BBOX_SLACK_PX})"))
            expected = raster.pixel_area(ann.segmentation, w, h)
        else:
            expected = ann.bbox[2] * ann.bbox[3]
        tol = max(AREA_RELATIVE_TOL * expected, 0.5)
        if abs(ann.area - expected) > tol:
            findings.append(Finding(
                "area_mismatch", ann.annotation_id,
                f"stored area {ann.area:.1f} vs recomputed {expected:.1f}"))

    return ValidationReport(tuple(findings))

"""Procedural generator of labeled synthetic crossarm scenes.

A canonical pole-and-crossarm model is projected through a parametric
perspective camera and painted flat-shaded into an id buffer; annotations
come from the exact projected polygons, so every instance's COCO polygon
rasterizes to precisely the pixels it was painted with.  Scene parameters
(camera, lighting, pose, defect, distractors, palette) are drawn from
independent counter-based PRNG streams keyed by (master_seed, image index,
dimension tag), so adding or reconfiguring one randomization dimension
never perturbs the draws of another.

Rendered instances carry an odd green channel; everything else in the
frame keeps green even.  Together with per-instance distinct colors this
lets a reader recover each instance's pixel set from the PNG alone.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from PIL import Image

from . import raster
from .coco import (
    AnnotationSet,
    DefectType,
    ImageEntry,
    InstanceAnnotation,
    default_categories,
    write_coco,
)
from .experiments import (
    Composition,
    DatasetManifest,
    PoolImage,
    Provenance,
    ResolutionTier,
    Split,
    compute_composition,
    write_manifest,
)

log = logging.getLogger(__name__)

# canonical model, in meters
ARM_LENGTH = 2.4
ARM_THICKNESS = 0.3
ARM_HEIGHT = 8.8
POLE_HEIGHT = 10.0
POLE_WIDTH = 0.3

FOCAL_FACTOR = 2.5          # focal length in pixels = FOCAL_FACTOR * image_height

# defect scaling laws (linear in severity, constants chosen for legibility
# at the default render scale)
SPLIT_MAX_LEN_FRAC = 0.8    # crack length at severity 1, fraction of arm length
SPLIT_BAND_FRAC = 0.22      # crack vertical amplitude, fraction of arm thickness
BREAK_MAX_GAP_FRAC = 0.3    # gap width at severity 1, fraction of arm length
BREAK_MIN_SEGMENT = 0.08    # both stubs keep at least this fraction of the arm
DECAY_MAX_AREA_FRAC = 0.3   # blotch area at severity 1, fraction of arm footprint
DECAY_BAND_FRAC = 0.38      # blotch vertical half-extent, fraction of thickness
EDGE_MARGIN_U = 0.02        # defects stay off the arm end faces

MAX_DISTRACTORS = 50

# per-dimension stream tags (the third SeedSequence word)
_STREAM_CAMERA = 0
_STREAM_LIGHTING = 1
_STREAM_POSE = 2
_STREAM_DEFECT = 3
_STREAM_DISTRACTOR = 4
_STREAM_PALETTE = 5

# id-buffer layout: 0 background, 1..99 annotated instances, 100 pole,
# 200+k distractors
_ID_POLE = 100
_ID_DISTRACTOR_BASE = 200

_ARM_BASE_RGB = (168, 124, 76)
_POLE_BASE_RGB = (96, 64, 40)
_DEFECT_RGB = {
    DefectType.SPLIT: (52, 36, 26),
    DefectType.DECAY: (98, 90, 44),
    DefectType.BREAK: (52, 36, 26),  # unused: break gaps are not painted
}
_SKY_TOP_RGB = (121, 168, 222)
_SKY_BOTTOM_RGB = (208, 214, 206)

# fixed irregularity tables; constants rather than draws so defect shape is
# a pure function of (type, severity, location)
_SPLIT_TOP = (
    (0.00, 0.30), (0.12, 0.55), (0.25, 0.35), (0.40, 0.60),
    (0.55, 0.40), (0.70, 0.58), (0.85, 0.33), (1.00, 0.50),
)
_SPLIT_BOTTOM = (
    (1.00, -0.30), (0.85, -0.55), (0.68, -0.38), (0.52, -0.60),
    (0.38, -0.35), (0.22, -0.52), (0.10, -0.40), (0.00, -0.50),
)
_DECAY_RADII = (1.00, 0.72, 0.90, 0.60, 0.84, 0.68, 0.96,
                0.58, 0.78, 0.88, 0.64, 0.92, 0.70, 0.82)


def _unit_star_area(radii: Sequence[float]) -> float:
    n = len(radii)
    total = 0.0
    for k in range(n):
        r0, r1 = radii[k], radii[(k + 1) % n]
        total += r0 * r1
    return 0.5 * total * math.sin(2.0 * math.pi / n)


_DECAY_UNIT_AREA = _unit_star_area(_DECAY_RADII)


class SynthError(Exception):
    """Base class for scene-generation failures."""


class BadConfig(SynthError):
    """GenConfig (or a sampling request against it) is invalid."""


class BadSeverity(SynthError):
    """Defect severity or location outside [0, 1]."""


class IoFailure(SynthError):
    """A batch output file could not be written."""


_MIX_KEYS: tuple[Optional[DefectType], ...] = (
    None, DefectType.SPLIT, DefectType.BREAK, DefectType.DECAY)
_MIX_NAMES = {"none": None, "healthy": None,
              "split": DefectType.SPLIT,
              "break": DefectType.BREAK,
              "decay": DefectType.DECAY}


def _coerce_mix_key(key) -> Optional[DefectType]:
    if key is None or isinstance(key, DefectType):
        return key
    if isinstance(key, str) and key.lower() in _MIX_NAMES:
        return _MIX_NAMES[key.lower()]
    raise BadConfig(f"unknown defect_mix key {key!r}; expected one of none/split/break/decay")


def _check_range(name: str, rng: tuple[float, float],
                 lo_bound: float, hi_bound: float) -> tuple[float, float]:
    lo, hi = float(rng[0]), float(rng[1])
    if lo > hi:
        raise BadConfig(f"{name} is inverted: {rng}")
    if lo < lo_bound or hi > hi_bound:
        raise BadConfig(f"{name} must lie within [{lo_bound}, {hi_bound}], got {rng}")
    return lo, hi


@dataclass(frozen=True)
class GenConfig:
    n_images: int
    image_width: int = 512
    image_height: int = 512
    defect_mix: Mapping[Optional[DefectType], float] = field(
        default_factory=lambda: {k: 0.25 for k in _MIX_KEYS})
    max_distractors: int = 6
    azimuth_range: tuple[float, float] = (0.0, 360.0)
    elevation_range: tuple[float, float] = (10.0, 80.0)
    distance_range: tuple[float, float] = (8.0, 16.0)
    sun_elevation_range: tuple[float, float] = (15.0, 75.0)
    intensity_range: tuple[float, float] = (0.2, 1.0)
    master_seed: int = 0

    def __post_init__(self):
        if self.n_images < 0:
            raise BadConfig(f"n_images must be >= 0, got {self.n_images}")
        if self.image_width < 32 or self.image_height < 32:
            raise BadConfig(
                f"image size must be at least 32x32, got "
                f"{self.image_width}x{self.image_height}")
        mix: dict[Optional[DefectType], float] = {}
        for key, prob in dict(self.defect_mix).items():
            prob = float(prob)
            if prob < 0:
                raise BadConfig(f"defect_mix probability for {key!r} is negative")
            mix[_coerce_mix_key(key)] = prob
        if abs(sum(mix.values()) - 1.0) > 1e-9:
            raise BadConfig(
                f"defect_mix probabilities must sum to 1, got {sum(mix.values())!r}")
        object.__setattr__(self, "defect_mix", mix)
        if not 0 <= self.max_distractors <= MAX_DISTRACTORS:
            raise BadConfig(
                f"max_distractors must lie in [0, {MAX_DISTRACTORS}], "
                f"got {self.max_distractors}")
        object.__setattr__(self, "azimuth_range",
                           _check_range("azimuth_range", self.azimuth_range, 0.0, 360.0))
        object.__setattr__(self, "elevation_range",
                           _check_range("elevation_range", self.elevation_range, 0.0, 85.0))
        # below ~7 units the arm can outgrow the frame and labels would clip
        object.__setattr__(self, "distance_range",
                           _check_range("distance_range", self.distance_range, 7.0, 64.0))
        object.__setattr__(self, "sun_elevation_range",
                           _check_range("sun_elevation_range", self.sun_elevation_range,
                                        0.0, 90.0))
        object.__setattr__(self, "intensity_range",
                           _check_range("intensity_range", self.intensity_range, 0.2, 1.0))
        if not 0 <= self.master_seed < 2 ** 64:
            raise BadConfig(f"master_seed must be a 64-bit integer, got {self.master_seed}")

    def to_dict(self) -> dict:
        mix = {}
        for key in _MIX_KEYS:
            if key in self.defect_mix:
                mix["none" if key is None else key.value.lower()] = self.defect_mix[key]
        return {
            "n_images": self.n_images,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "defect_mix": mix,
            "max_distractors": self.max_distractors,
            "azimuth_range": list(self.azimuth_range),
            "elevation_range": list(self.elevation_range),
            "distance_range": list(self.distance_range),
            "sun_elevation_range": list(self.sun_elevation_range),
            "intensity_range": list(self.intensity_range),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GenConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise BadConfig(f"unknown config keys: {sorted(unknown)}")
        if "n_images" not in doc:
            raise BadConfig("config is missing n_images")
        kwargs = dict(doc)
        for key in ("azimuth_range", "elevation_range", "distance_range",
                    "sun_elevation_range", "intensity_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise BadConfig(f"invalid config: {exc}") from exc


@dataclass(frozen=True)
class SceneSpec:
    """Every random choice behind one image; rendering adds nothing."""

    seed: int
    index: int
    camera: tuple[float, float, float]          # azimuth deg, elevation deg, distance
    lighting: tuple[float, float]               # sun elevation deg, intensity
    pose: tuple[float, float, float, float]     # place fx, place fy, roll deg, arm yaw offset deg
    defect: Optional[tuple[DefectType, float, float]]  # type, severity, location
    distractors: tuple[tuple[int, tuple[float, float], float, tuple[int, int, int]], ...]
    palette: tuple[tuple[int, int, int], tuple[int, int, int]]  # arm, pole base RGB


def _stream(master_seed: int, index: int, tag: int) -> np.random.Generator:
    seq = np.random.SeedSequence((master_seed, index, tag))
    return np.random.Generator(np.random.Philox(seq))


def sample_scene(master_seed: int, index: int, cfg: GenConfig) -> SceneSpec:
    """Draw one SceneSpec; deterministic in (master_seed, index, cfg)."""
    if not 0 <= index < cfg.n_images:
        raise BadConfig(
            f"scene index {index} outside [0, {cfg.n_images}) for this config")

    rng = _stream(master_seed, index, _STREAM_CAMERA)
    camera = (
        float(rng.uniform(*cfg.azimuth_range)),
        float(rng.uniform(*cfg.elevation_range)),
        float(rng.uniform(*cfg.distance_range)),
    )

    rng = _stream(master_seed, index, _STREAM_LIGHTING)
    lighting = (
        float(rng.uniform(*cfg.sun_elevation_range)),
        float(rng.uniform(*cfg.intensity_range)),
    )

    rng = _stream(master_seed, index, _STREAM_POSE)
    place = rng.random(2)
    pose = (
        float(place[0]),
        float(place[1]),
        float(rng.uniform(-8.0, 8.0)),
        float(rng.uniform(20.0, 160.0)),
    )

    rng = _stream(master_seed, index, _STREAM_DEFECT)
    u = float(rng.random())
    severity = 0.3 + 0.7 * float(rng.random())
    location = 0.15 + 0.7 * float(rng.random())
    kind: Optional[DefectType] = None
    acc = 0.0
    chosen = False
    for key in _MIX_KEYS:
        prob = cfg.defect_mix.get(key, 0.0)
        acc += prob
        if not chosen and u < acc and prob > 0:
            kind = key
            chosen = True
    if not chosen:  # float slop at u ~ 1.0: fall back to the last nonzero bin
        for key in reversed(_MIX_KEYS):
            if cfg.defect_mix.get(key, 0.0) > 0:
                kind = key
                break
    defect = None if kind is None else (kind, severity, location)

    rng = _stream(master_seed, index, _STREAM_DISTRACTOR)
    count = int(rng.integers(0, cfg.max_distractors + 1))
    distractors = []
    for _ in range(count):
        shape = int(rng.integers(0, 3))
        fx, fy = rng.random(2)
        size = 0.02 + 0.10 * float(rng.random())
        color = tuple(int(c) for c in rng.integers(40, 216, size=3))
        distractors.append((shape, (float(fx), float(fy)), size, color))

    rng = _stream(master_seed, index, _STREAM_PALETTE)
    jitter = rng.integers(-14, 15, size=6)
    arm_rgb = tuple(int(np.clip(b + j, 0, 255))
                    for b, j in zip(_ARM_BASE_RGB, jitter[:3]))
    pole_rgb = tuple(int(np.clip(b + j, 0, 255))
                     for b, j in zip(_POLE_BASE_RGB, jitter[3:]))

    return SceneSpec(
        seed=master_seed,
        index=index,
        camera=camera,
        lighting=lighting,
        pose=pose,
        defect=defect,
        distractors=tuple(distractors),
        palette=(arm_rgb, pole_rgb),
    )


# ---------------------------------------------------------------------------
# defect geometry


@dataclass(frozen=True)
class ArmGeometry:
    """Crossarm footprint in arm-local metric coordinates.

    x runs along the arm axis in [0, length]; y across it in [0, thickness].
    ``segments`` lists the intact spans of the axis as (u0, u1) fractions.
    """

    length: float = ARM_LENGTH
    thickness: float = ARM_THICKNESS
    segments: tuple[tuple[float, float], ...] = ((0.0, 1.0),)


def inject_defect(
    arm: ArmGeometry,
    defect: Optional[tuple[DefectType, float, float]],
) -> tuple[ArmGeometry, tuple[float, ...]]:
    """Apply one defect to the arm footprint.

    Returns the (possibly re-segmented) geometry and the defect region as a
    flat [x0, y0, x1, y1, ...] polygon in arm-local metric coordinates; the
    polygon is empty for severity 0 or no defect.  Scaling is linear in
    severity: crack length for Split, gap width for Break, blotch area for
    Decay.  The region's center follows ``location`` but is clamped so the
    region stays on the arm (and, for Break, so both stubs survive).
    """
    if defect is None:
        return arm, ()
    kind, severity, location = defect
    if not 0.0 <= severity <= 1.0:
        raise BadSeverity(f"severity must lie in [0, 1], got {severity}")
    if not 0.0 <= location <= 1.0:
        raise BadSeverity(f"location must lie in [0, 1], got {location}")
    if severity == 0.0:
        return arm, ()

    length, thickness = arm.length, arm.thickness
    if kind is DefectType.SPLIT:
        span = severity * SPLIT_MAX_LEN_FRAC
        half = span / 2.0
        center = min(max(location, half + EDGE_MARGIN_U), 1.0 - half - EDGE_MARGIN_U)
        u0 = center - half
        points = []
        for t, off in _SPLIT_TOP + _SPLIT_BOTTOM:
            points.append((u0 + t * span) * length)
            points.append((0.5 + off * SPLIT_BAND_FRAC) * thickness)
        return arm, tuple(points)

    if kind is DefectType.BREAK:
        gap = severity * BREAK_MAX_GAP_FRAC
        half = gap / 2.0
        center = min(max(location, half + BREAK_MIN_SEGMENT),
                     1.0 - half - BREAK_MIN_SEGMENT)
        left, right = center - half, center + half
        broken = dataclasses.replace(arm, segments=((0.0, left), (right, 1.0)))
        ring = (left * length, 0.0, right * length, 0.0,
                right * length, thickness, left * length, thickness)
        return broken, ring

    if kind is DefectType.DECAY:
        rv = DECAY_BAND_FRAC * thickness
        target_area = severity * DECAY_MAX_AREA_FRAC * length * thickness
        ru = target_area / (_DECAY_UNIT_AREA * rv)
        margin = EDGE_MARGIN_U * length
        cx = min(max(location * length, ru + margin), length - ru - margin)
        cy = 0.5 * thickness
        n = len(_DECAY_RADII)
        points = []
        for k, rho in enumerate(_DECAY_RADII):
            theta = 2.0 * math.pi * k / n
            points.append(cx + ru * rho * math.cos(theta))
            points.append(cy + rv * rho * math.sin(theta))
        return arm, tuple(points)

    raise BadSeverity(f"unknown defect type {kind!r}")


# ---------------------------------------------------------------------------
# projection and painting


def _camera_frame(azimuth_deg: float, elevation_deg: float, distance: float):
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    target = np.array([0.0, 0.0, ARM_HEIGHT])
    eye = target + distance * np.array(
        [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    fwd = target - eye
    fwd /= np.linalg.norm(fwd)
    right = np.cross(fwd, np.array([0.0, 0.0, 1.0]))
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    return eye, right, up, fwd


def _project(points: np.ndarray, eye, right, up, fwd,
             focal: float, cx: float, cy: float) -> np.ndarray:
    rel = np.asarray(points, dtype=float) - eye
    depth = rel @ fwd
    return np.stack([focal * (rel @ right) / depth + cx,
                     cy - focal * (rel @ up) / depth], axis=1)


def _rotate_2d(points: np.ndarray, center: np.ndarray, deg: float) -> np.ndarray:
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    rel = points - center
    return np.stack([rel[:, 0] * c - rel[:, 1] * s,
                     rel[:, 0] * s + rel[:, 1] * c], axis=1) + center


def _distractor_ring(shape: int, fx: float, fy: float, size: float,
                     width: int, height: int) -> np.ndarray:
    cx, cy = fx * width, fy * height
    r = size * min(width, height)
    if shape == 0:
        angles = np.arange(8) * (2.0 * math.pi / 8.0)
    elif shape == 1:
        angles = np.array([0.5, 0.5 + 2.0 / 3.0, 0.5 + 4.0 / 3.0]) * math.pi
    else:
        angles = np.arange(4) * (math.pi / 2.0)
    return np.stack([cx + r * np.cos(angles), cy + r * np.sin(angles)], axis=1)


@dataclass(eq=False)
class RenderedScene:
    image: np.ndarray                              # uint8 (height, width, 3)
    annotations: tuple[InstanceAnnotation, ...]
    scene: SceneSpec
    colors: dict[int, tuple[int, int, int]]        # annotation_id -> rendered RGB


def _category_ids() -> dict[str, int]:
    return {c.name: c.category_id for c in default_categories()}


def render_scene(spec: SceneSpec, cfg: GenConfig) -> RenderedScene:
    """Paint the scene into an id buffer and derive exact annotations.

    Painter's order: background, distractors, pole, arm, defect region.
    Annotated polygons are the projected geometry itself; for Split/Decay
    the arm polygon carries the defect ring as an even-odd hole, so the
    annotation rasterizes to exactly the arm pixels left visible.  A defect
    whose projection covers no pixel centers is dropped (nothing rendered,
    nothing annotated) and the arm is annotated as healthy only when there
    is no defect region at all.
    """
    width, height = cfg.image_width, cfg.image_height
    focal = FOCAL_FACTOR * height
    half_w, half_h = width / 2.0, height / 2.0
    azimuth, elevation, distance = spec.camera
    eye, right, up, fwd = _camera_frame(azimuth, elevation, distance)

    place_fx, place_fy, roll_deg, yaw_offset = spec.pose
    yaw = math.radians(azimuth + yaw_offset)
    axis = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    normal = np.cross(fwd, axis)
    normal /= np.linalg.norm(normal)
    arm_center = np.array([0.0, 0.0, ARM_HEIGHT])

    def arm_point(u: float, v: float) -> np.ndarray:
        return (arm_center + (u - 0.5) * ARM_LENGTH * axis
                + (v - 0.5) * ARM_THICKNESS * normal)

    geometry, defect_local = inject_defect(ArmGeometry(), spec.defect)

    segment_quads = []
    for u0, u1 in geometry.segments:
        if u1 - u0 <= 0:
            continue
        segment_quads.append(np.array([
            arm_point(u0, 0.0), arm_point(u1, 0.0),
            arm_point(u1, 1.0), arm_point(u0, 1.0)]))

    defect_points = np.empty((0, 3))
    if defect_local:
        local = np.asarray(defect_local, dtype=float).reshape(-1, 2)
        defect_points = np.array([
            arm_point(x / ARM_LENGTH, y / ARM_THICKNESS) for x, y in local])

    pole_normal = np.cross(fwd, np.array([0.0, 0.0, 1.0]))
    pole_normal /= np.linalg.norm(pole_normal)
    pole_quad = np.array([
        (0.0 - 0.5) * POLE_WIDTH * pole_normal,
        (1.0 - 0.5) * POLE_WIDTH * pole_normal,
        np.array([0.0, 0.0, POLE_HEIGHT]) + 0.5 * POLE_WIDTH * pole_normal,
        np.array([0.0, 0.0, POLE_HEIGHT]) - 0.5 * POLE_WIDTH * pole_normal,
    ])

    def proj(points: np.ndarray) -> np.ndarray:
        return _project(points, eye, right, up, fwd, focal, half_w, half_h)

    quads_2d = [proj(q) for q in segment_quads]
    defect_2d = proj(defect_points) if len(defect_points) else np.empty((0, 2))
    pole_2d = proj(pole_quad)
    center_2d = proj(arm_center.reshape(1, 3))[0]

    quads_2d = [_rotate_2d(q, center_2d, roll_deg) for q in quads_2d]
    if len(defect_2d):
        defect_2d = _rotate_2d(defect_2d, center_2d, roll_deg)
    pole_2d = _rotate_2d(pole_2d, center_2d, roll_deg)

    # translate so every annotated vertex lands inside the frame with margin
    annotated = np.concatenate(quads_2d + ([defect_2d] if len(defect_2d) else []))
    margin = max(2.0, 0.02 * min(width, height))
    lo = annotated.min(axis=0)
    hi = annotated.max(axis=0)
    shift = np.empty(2)
    for k, (frac, size) in enumerate(((place_fx, width), (place_fy, height))):
        low = margin - lo[k]
        high = (size - margin) - hi[k]
        shift[k] = (low + high) / 2.0 if high < low else low + frac * (high - low)
    quads_2d = [q + shift for q in quads_2d]
    if len(defect_2d):
        defect_2d = defect_2d + shift
    pole_2d = pole_2d + shift

    # paint the id buffer back-to-front
    idbuf = np.zeros((height, width), dtype=np.int32)

    def paint(ring: np.ndarray, idval: int) -> None:
        mask = raster.rasterize_rings([ring], width, height)
        idbuf[mask] = idval

    for k, (shape, (fx, fy), size, _color) in enumerate(spec.distractors):
        paint(_distractor_ring(shape, fx, fy, size, width, height),
              _ID_DISTRACTOR_BASE + k)
    paint(pole_2d, _ID_POLE)

    kind = spec.defect[0] if spec.defect else None
    has_region = len(defect_2d) > 0
    category_ids = _category_ids()

    instances: list[tuple[int, tuple[tuple[float, ...], ...], int]] = []
    if kind is DefectType.BREAK and has_region:
        for n, quad in enumerate(quads_2d, start=1):
            paint(quad, n)
            instances.append((n, (raster.flatten_ring(quad),),
                              category_ids["crossarm_break"]))
    elif kind is not None and has_region:
        paint(quads_2d[0], 1)
        paint(defect_2d, 2)
        name = f"crossarm_{kind.value.lower()}"
        instances.append((1, (raster.flatten_ring(quads_2d[0]),
                              raster.flatten_ring(defect_2d)), category_ids[name]))
        instances.append((2, (raster.flatten_ring(defect_2d),), category_ids[name]))
    else:
        paint(quads_2d[0], 1)
        instances.append((1, (raster.flatten_ring(quads_2d[0]),),
                          category_ids["crossarm_healthy"]))

    annotations = []
    kept_ids = []
    for paint_id, rings, category_id in instances:
        covered = raster.pixel_area(rings, width, height)
        if covered == 0.0:
            continue
        annotations.append(InstanceAnnotation(
            annotation_id=paint_id,
            image_id=spec.index + 1,
            category_id=category_id,
            bbox=raster.rings_bbox(rings),
            segmentation=rings,
            area=covered,
        ))
        kept_ids.append(paint_id)

    # compose the RGB frame: flat fills modulated by lighting intensity,
    # instance pixels forced to odd green, everything else to even green
    _sun_elevation, intensity = spec.lighting
    gain = 0.55 + 0.45 * intensity

    def lit(rgb: Iterable[int]) -> np.ndarray:
        return np.clip(np.round(np.asarray(tuple(rgb), dtype=float) * gain),
                       0, 255).astype(np.uint8)

    rows = np.linspace(0.0, 1.0, height)[:, None]
    sky = (1.0 - rows) * lit(_SKY_TOP_RGB) + rows * lit(_SKY_BOTTOM_RGB)
    image = np.broadcast_to(
        np.round(sky).astype(np.uint8)[:, None, :], (height, width, 3)).copy()
    image[:, :, 1] &= 0xFE

    def fill(idval: int, rgb: np.ndarray, odd: bool) -> tuple[int, int, int]:
        r, g, b = (int(v) for v in rgb)
        g = (g | 1) if odd else (g & 0xFE)
        image[idbuf == idval] = (r, g, b)
        return (r, g, b)

    for k, (_shape, _pos, _size, color) in enumerate(spec.distractors):
        fill(_ID_DISTRACTOR_BASE + k, lit(color), odd=False)
    fill(_ID_POLE, lit(spec.palette[1]), odd=False)

    instance_rgb: dict[int, tuple[int, int, int]] = {}
    for paint_id, _rings, _cat in instances:
        if paint_id not in kept_ids:
            continue
        base = lit(_DEFECT_RGB[kind]) if (kind is not None and kind is not DefectType.BREAK
                                          and paint_id == 2) else lit(spec.palette[0])
        rgb = fill(paint_id, base, odd=True)
        while rgb in instance_rgb.values():
            rgb = (rgb[0], (rgb[1] + 2) % 256, rgb[2])
            image[idbuf == paint_id] = rgb
        instance_rgb[paint_id] = rgb

    colors = {paint_id: instance_rgb[paint_id] for paint_id in kept_ids}
    return RenderedScene(image=image, annotations=tuple(annotations),
                         scene=spec, colors=colors)


# ---------------------------------------------------------------------------
# batch generation


def generate_batch(cfg: GenConfig, out_dir: str | Path,
                   write_images: bool = True,
                   stem_prefix: str = "img_") -> DatasetManifest:
    """Render cfg.n_images scenes into ``out_dir``.

    Writes <prefix><index>.png per scene plus annotations.json (COCO) and
    manifest.json; returns the manifest.  Fully reproducible: the same cfg
    yields byte-identical outputs.  ``write_images=False`` skips the PNG
    files for label-only workloads; annotations and manifest are unchanged.
    ``stem_prefix`` keeps image ids distinct when several batches feed one
    experiment (real pool, synthetic pool, held-out test set).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from exc

    categories = default_categories()
    by_id = {c.category_id: c.name for c in categories}
    images: list[ImageEntry] = []
    annotations: list[InstanceAnnotation] = []
    pool: list[PoolImage] = []
    entries: list[tuple[str, Split]] = []
    next_annotation_id = 1

    for index in range(cfg.n_images):
        spec = sample_scene(cfg.master_seed, index, cfg)
        scene = render_scene(spec, cfg)
        stem = f"{stem_prefix}{index:05d}"
        file_name = stem + ".png"
        if write_images:
            try:
                Image.fromarray(scene.image).save(out / file_name, format="PNG")
            except OSError as exc:
                raise IoFailure(f"cannot write {file_name}: {exc}") from exc
        images.append(ImageEntry(image_id=index + 1, file_name=file_name,
                                 width=cfg.image_width, height=cfg.image_height))
        names = []
        for ann in scene.annotations:
            annotations.append(dataclasses.replace(ann, annotation_id=next_annotation_id))
            next_annotation_id += 1
            names.append(by_id[ann.category_id])
        pool.append(PoolImage(
            image_id=stem,
            provenance=Provenance.SYNTHETIC,
            resolution_tier=ResolutionTier.from_dims(cfg.image_width, cfg.image_height),
            category_names=tuple(names),
        ))
        entries.append((stem, Split.TRAIN))

    aset = AnnotationSet(images=tuple(images), annotations=tuple(annotations),
                         categories=categories)
    manifest = DatasetManifest(
        name=out.name,
        entries=tuple(entries),
        composition=compute_composition(pool) if pool else Composition(),
    )
    try:
        (out / "annotations.json").write_bytes(write_coco(aset))
        write_manifest(manifest, out / "manifest.json")
    except OSError as exc:
        raise IoFailure(f"cannot write batch metadata under {out}: {exc}") from exc
    log.info("generated %d scene(s) under %s", cfg.n_images, out)
    return manifest

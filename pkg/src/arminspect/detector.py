"""Pluggable detector fronts: a seeded oracle and a remote-service client.

The oracle detector perturbs ground truth with configured error rates so the
pipeline and metrics can be exercised without a trained model.  Every random
dimension (miss, jitter, health flip, confidences, false positives) draws
from its own counter-based Philox stream keyed by (seed, image_index,
dimension tag), so changing one rate never reshuffles the draws of another,
and raising miss_rate drops a superset of the ground truths dropped at any
lower rate.

The remote client speaks a small HTTP protocol:

    POST /detect
    {"image_id": ..., "width": ..., "height": ..., "pixels": "<base64 PNG>"}
    200 -> {"detections": [{"bbox": [x, y, w, h], "score": s,
                            "category_id": c, "segmentation": [[...]]?}]}
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import httpx
import numpy as np

from .coco import CategorySpec, Health, InstanceAnnotation, default_categories
from .metrics import Detection, box_iou

# stream tags: one independent Philox stream per randomization dimension
_TAG_MISS = 0
_TAG_JITTER = 1
_TAG_FLIP = 2
_TAG_TP_CONF = 3
_TAG_FP = 4
_TAG_FP_CONF = 5

FP_MAX_GT_IOU = 0.3
FP_PLACEMENT_RETRIES = 20
FP_AREA_FRACTION = (0.005, 0.05)


class DetectorError(Exception):
    """Base class for detector failures."""


class BadParams(DetectorError):
    """Oracle parameters outside their documented ranges."""


class Timeout(DetectorError):
    """Remote call exceeded its deadline."""


class ProtocolError(DetectorError):
    """Remote response malformed; message names the offending field."""


class RemoteFailure(DetectorError):
    """Remote returned a non-success status; body attached."""

    def __init__(self, message: str, status_code: int | None = None, body: str = ""):
        super().__init__(message)
        self.status_code = status_code
        self.body = body


@dataclass(frozen=True)
class OracleParams:
    miss_rate: float = 0.0
    fp_per_image: float = 0.0
    box_jitter_sigma: float = 0.0
    health_flip_rate: float = 0.0
    tp_confidence: tuple[float, float] = (9.0, 1.0)  # Beta, mean 0.9
    fp_confidence: tuple[float, float] = (3.0, 7.0)  # Beta, mean 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("miss_rate", "health_flip_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise BadParams(f"{name} must be in [0, 1], got {v}")
        if self.fp_per_image < 0:
            raise BadParams(f"fp_per_image must be >= 0, got {self.fp_per_image}")
        if self.box_jitter_sigma < 0:
            raise BadParams(f"box_jitter_sigma must be >= 0, got {self.box_jitter_sigma}")
        for name in ("tp_confidence", "fp_confidence"):
            a, b = getattr(self, name)
            if a <= 0 or b <= 0:
                raise BadParams(f"{name} Beta parameters must be > 0, got ({a}, {b})")
        if not 0 <= self.seed < 2**64:
            raise BadParams(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def _stream(seed: int, image_index: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, image_index, tag))))


def _category_lookup(categories) -> Mapping[int, CategorySpec]:
    if categories is None:
        return {c.category_id: c for c in default_categories()}
    return categories


def oracle_detect(
    gts: Sequence[InstanceAnnotation],
    dims: tuple[int, int],
    params: OracleParams,
    image_index: int,
    categories: Mapping[int, CategorySpec] | None = None,
) -> list[Detection]:
    """Ground truth perturbed into plausible detections, deterministically.

    Per-gt draw vectors are generated for every ground truth before any rate
    decision is applied, so outputs couple monotonically across rate grids:
    the survivors at miss_rate 0.3 are a subset of the survivors at 0.1, with
    identical geometry and confidence.
    """
    width, height = dims
    if width <= 0 or height <= 0:
        raise BadParams(f"image dimensions must be positive, got {dims}")
    categories = _category_lookup(categories)
    n = len(gts)

    miss_u = _stream(params.seed, image_index, _TAG_MISS).random(n)
    jitter = _stream(params.seed, image_index, _TAG_JITTER).standard_normal((n, 4))
    flip = _stream(params.seed, image_index, _TAG_FLIP).random((n, 2))
    tp_a, tp_b = params.tp_confidence
    tp_conf = _stream(params.seed, image_index, _TAG_TP_CONF).beta(tp_a, tp_b, n)

    healthy_ids = sorted(c.category_id for c in categories.values()
                         if c.health is Health.HEALTHY)
    defect_ids = sorted(c.category_id for c in categories.values()
                        if c.health is Health.DEFECTIVE)

    detections: list[Detection] = []
    for i, gt in enumerate(gts):
        if miss_u[i] < params.miss_rate:
            continue
        x, y, w, h = gt.bbox
        dx, dy, dw, dh = jitter[i] * params.box_jitter_sigma
        new_w = min(max(w + dw, 1.0), width)
        new_h = min(max(h + dh, 1.0), height)
        new_x = min(max(x + dx, 0.0), width - new_w)
        new_y = min(max(y + dy, 0.0), height - new_h)

        category_id = gt.category_id
        if flip[i, 0] < params.health_flip_rate:
            spec = categories.get(category_id)
            if spec is None:
                raise BadParams(f"gt category {category_id} missing from category lookup")
            if spec.health is Health.HEALTHY:
                if defect_ids:
                    category_id = defect_ids[int(flip[i, 1] * len(defect_ids)) % len(defect_ids)]
            elif healthy_ids:
                category_id = healthy_ids[0]

        detections.append(Detection(
            image_id=gt.image_id,
            category_id=category_id,
            bbox=(new_x, new_y, new_w, new_h),
            confidence=float(tp_conf[i]),
            segmentation=_transform_rings(gt.segmentation, gt.bbox, (new_x, new_y, new_w, new_h)),
        ))

    detections.extend(_false_positives(gts, dims, params, image_index))
    return detections


def _transform_rings(rings, old_bbox, new_bbox):
    """Map polygon rings through the bbox change (shift + scale)."""
    if not rings:
        return ()
    ox, oy, ow, oh = old_bbox
    nx, ny, nw, nh = new_bbox
    sx, sy = nw / ow, nh / oh
    out = []
    for ring in rings:
        pts = list(ring)
        mapped = []
        for k in range(0, len(pts), 2):
            mapped.append(nx + (pts[k] - ox) * sx)
            mapped.append(ny + (pts[k + 1] - oy) * sy)
        out.append(tuple(mapped))
    return tuple(out)


def _false_positives(gts, dims, params, image_index) -> list[Detection]:
    width, height = dims
    rng = _stream(params.seed, image_index, _TAG_FP)
    count = int(rng.poisson(params.fp_per_image)) if params.fp_per_image > 0 else 0
    if count == 0:
        return []
    fa, fb = params.fp_confidence
    confidences = _stream(params.seed, image_index, _TAG_FP_CONF).beta(fa, fb, count)
    image_id = gts[0].image_id if gts else 0
    out = []
    for k in range(count):
        bbox, forced = _place_fp_box(rng, gts, width, height)
        out.append(Detection(
            image_id=image_id or 1,
            category_id=1,
            bbox=bbox,
            confidence=float(confidences[k]),
            tags=("forced_overlap",) if forced else (),
        ))
    return out


def _place_fp_box(rng, gts, width, height):
    """Uniform random box, resampled away from ground truth when possible.

    Area is 0.5%-5% of the image; a box overlapping any gt above IoU 0.3 is
    resampled up to 20 times, after which it is kept and flagged.
    """
    lo, hi = FP_AREA_FRACTION
    bbox = None
    for _ in range(FP_PLACEMENT_RETRIES + 1):
        area = rng.uniform(lo, hi) * width * height
        aspect = rng.uniform(0.5, 2.0)
        w = min(max(float(np.sqrt(area * aspect)), 1.0), width)
        h = min(max(area / w, 1.0), height)
        x = rng.uniform(0.0, width - w)
        y = rng.uniform(0.0, height - h)
        bbox = (x, y, w, h)
        if all(box_iou(bbox, gt.bbox) <= FP_MAX_GT_IOU for gt in gts):
            return bbox, False
    return bbox, True


# ---------------------------------------------------------------------------
# remote client


def make_client(timeout: float, max_in_flight: int = 8) -> httpx.Client:
    """HTTP client with a bounded connection pool for concurrent callers."""
    return httpx.Client(
        timeout=timeout,
        limits=httpx.Limits(max_connections=max_in_flight,
                            max_keepalive_connections=max_in_flight),
    )


def remote_detect(
    image_id: int,
    width: int,
    height: int,
    png_bytes: bytes,
    endpoint: str,
    timeout: float = 10.0,
    client: httpx.Client | None = None,
) -> list[Detection]:
    """POST the image to a model service and parse its detections."""
    body = {
        "image_id": image_id,
        "width": width,
        "height": height,
        "pixels": base64.b64encode(png_bytes).decode("ascii"),
    }
    url = endpoint.rstrip("/") + "/detect"
    own_client = client is None
    if own_client:
        client = make_client(timeout)
    try:
        try:
            response = client.post(url, json=body, timeout=timeout)
        except httpx.TimeoutException as exc:
            raise Timeout(f"no response from {url} within {timeout}s: {exc}") from exc
        except httpx.TransportError as exc:
            raise RemoteFailure(f"transport failure calling {url}: {exc}") from exc
        if response.status_code != 200:
            raise RemoteFailure(
                f"detector service returned {response.status_code}",
                status_code=response.status_code,
                body=response.text[:2000],
            )
        return _parse_detections(response.text, image_id)
    finally:
        if own_client:
            client.close()


def _parse_detections(text: str, image_id: int) -> list[Detection]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"response is not JSON: {exc}") from exc
    if not isinstance(doc, dict) or "detections" not in doc:
        raise ProtocolError("response missing field 'detections'")
    raw = doc["detections"]
    if not isinstance(raw, list):
        raise ProtocolError("field 'detections' must be a list")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ProtocolError(f"detections[{i}] must be an object")
        for field_name in ("bbox", "score", "category_id"):
            if field_name not in item:
                raise ProtocolError(f"detections[{i}] missing field '{field_name}'")
        bbox = item["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise ProtocolError(f"detections[{i}].bbox must be a 4-element list")
        score = item["score"]
        if not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise ProtocolError(f"detections[{i}].score must be in [0, 1], got {score!r}")
        if bbox[2] <= 0 or bbox[3] <= 0:
            raise ProtocolError(f"detections[{i}].bbox must have positive w/h, got {bbox}")
        seg = item.get("segmentation", [])
        if not isinstance(seg, list) or any(not isinstance(r, list) for r in seg):
            raise ProtocolError(f"detections[{i}].segmentation must be a list of rings")
        out.append(Detection(
            image_id=image_id,
            category_id=int(item["category_id"]),
            bbox=tuple(float(v) for v in bbox),
            confidence=float(score),
            segmentation=tuple(tuple(float(v) for v in ring) for ring in seg),
        ))
    return out


# ---------------------------------------------------------------------------
# handle


@dataclass(frozen=True)
class DetectorHandle:
    """Configuration for one detector, oracle or remote, with a descriptor
    string for reports and logs."""

    kind: str  # "oracle" | "remote"
    descriptor: str
    oracle_params: OracleParams | None = None
    endpoint: str | None = None
    timeout: float = 10.0

    def __post_init__(self):
        if self.kind == "oracle":
            if self.oracle_params is None or self.endpoint is not None:
                raise BadParams("oracle handle needs oracle_params and no endpoint")
        elif self.kind == "remote":
            if self.endpoint is None or self.oracle_params is not None:
                raise BadParams("remote handle needs an endpoint and no oracle_params")
        else:
            raise BadParams(f"unknown detector kind {self.kind!r}")

    @classmethod
    def oracle(cls, params: OracleParams) -> "DetectorHandle":
        desc = (f"oracle(miss={params.miss_rate}, fp={params.fp_per_image}, "
                f"sigma={params.box_jitter_sigma}, flip={params.health_flip_rate}, "
                f"seed={params.seed})")
        return cls(kind="oracle", descriptor=desc, oracle_params=params)

    @classmethod
    def remote(cls, endpoint: str, timeout: float = 10.0) -> "DetectorHandle":
        return cls(kind="remote", descriptor=f"remote({endpoint})",
                   endpoint=endpoint, timeout=timeout)

    def detect(
        self,
        image_id: int,
        width: int,
        height: int,
        gts: Sequence[InstanceAnnotation] | None = None,
        png_bytes: bytes | None = None,
        image_index: int = 0,
        categories: Mapping[int, CategorySpec] | None = None,
        client: httpx.Client | None = None,
    ) -> list[Detection]:
        if self.kind == "oracle":
            if gts is None:
                raise BadParams("oracle detection needs ground-truth annotations")
            return oracle_detect(gts, (width, height), self.oracle_params,
                                 image_index, categories)
        if png_bytes is None:
            raise BadParams("remote detection needs encoded image bytes")
        return remote_detect(image_id, width, height, png_bytes,
                             self.endpoint, self.timeout, client=client)

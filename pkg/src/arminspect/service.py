"""REST layer over the lifecycle tracker and experiment results.

The app is a thin adapter: every mutation delegates to a Tracker operation
and maps its exceptions to structured error bodies `{code, message, detail}`
with stable machine-readable codes.  Mutating endpoints honor an
Idempotency-Key header; replaying a key returns the recorded outcome
without touching the tracker again.
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import coco, metrics
from .experiments import ExperimentsError, load_result
from .tracker import (
    Duplicate,
    DuplicateDecision,
    EmptyBatch,
    IllegalState,
    ImageRecord,
    LifecycleState,
    LocalBlobStore,
    Tracker,
    TrackerError,
    TransitionEvent,
    UnknownImage,
    UnreadableBlob,
    Verdict,
    VerificationDecision,
    VersionConflict,
)

DEFAULT_PAGE_SIZE = 50
MAX_PAGE_SIZE = 500


class ServiceError(Exception):
    """Base class for server startup failures."""


class BindFailure(ServiceError):
    """The configured address could not be bound."""


@dataclass
class ServiceConfig:
    tracker_root: str
    host: str = "127.0.0.1"
    port: int = 8000
    results_dir: Optional[str] = None
    blob_root: Optional[str] = None
    frontend_dist: Optional[str] = None


class _ApiError(Exception):
    """Internal carrier for a structured error response."""

    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail
        super().__init__(message)


_TRACKER_ERROR_MAP: tuple[tuple[type, int, str], ...] = (
    (UnknownImage, 404, "UNKNOWN_IMAGE"),
    (DuplicateDecision, 409, "DUPLICATE_DECISION"),
    (VersionConflict, 409, "VERSION_CONFLICT"),
    (IllegalState, 409, "ILLEGAL_STATE"),
    (EmptyBatch, 400, "EMPTY_BATCH"),
    (Duplicate, 409, "DUPLICATE_IMAGE"),
    (UnreadableBlob, 404, "UNREADABLE_BLOB"),
)


def _to_api_error(exc: TrackerError) -> _ApiError:
    for klass, status, code in _TRACKER_ERROR_MAP:
        if isinstance(exc, klass):
            return _ApiError(status, code, str(exc))
    return _ApiError(500, "TRACKER_ERROR", str(exc))


class VerdictBody(BaseModel):
    verdict: str
    reviewer: str
    notes: str = ""


class PromoteBody(BaseModel):
    image_ids: list[str] = []


@dataclass
class _IdempotencyCache:
    """Recorded outcomes keyed by Idempotency-Key header value."""

    outcomes: dict[str, tuple[int, dict]] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def get(self, key: Optional[str]) -> Optional[tuple[int, dict]]:
        if key is None:
            return None
        with self.lock:
            return self.outcomes.get(key)

    def put(self, key: Optional[str], status: int, body: dict) -> None:
        if key is None:
            return
        with self.lock:
            self.outcomes[key] = (status, body)


# ---------------------------------------------------------------------------
# wire shapes


def record_wire(record: ImageRecord) -> dict:
    return {
        "image_id": record.image_id,
        "uri": record.uri,
        "sha256": record.sha256,
        "width": record.width,
        "height": record.height,
        "provenance": record.provenance.value,
        "resolution_tier": record.resolution_tier.value,
        "geo": list(record.geo) if record.geo else None,
        "state": record.state.value,
        "state_version": record.state_version,
    }


def event_wire(event: TransitionEvent) -> dict:
    return event.to_wire()


def decision_wire(decision: VerificationDecision) -> dict:
    return {
        "verdict": decision.verdict.value,
        "reviewer": decision.reviewer,
        "notes": decision.notes,
        "at": decision.at,
    }


def _detection_summary(dets) -> dict:
    names_by_id = {c.category_id: c.name for c in coco.default_categories()}
    confidences = [d.confidence for d in dets]
    return {
        "count": len(dets),
        "min_confidence": min(confidences) if confidences else None,
        "max_confidence": max(confidences) if confidences else None,
        "categories": sorted({
            names_by_id.get(d.category_id, str(d.category_id)) for d in dets}),
    }


def _latest_decision(tracker: Tracker, image_id: str) -> Optional[dict]:
    decisions = tracker.decisions_for(image_id)
    return decision_wire(decisions[-1]) if decisions else None


# ---------------------------------------------------------------------------
# app factory


def create_app(
    tracker: Tracker,
    results_dir: Optional[str | Path] = None,
    frontend_dist: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="crossarm inspection service")
    idempotency = _IdempotencyCache()
    results_path = Path(results_dir) if results_dir else None

    @app.exception_handler(_ApiError)
    async def handle_api_error(_request: Request, exc: _ApiError):
        return JSONResponse(status_code=exc.status, content={
            "code": exc.code, "message": exc.message, "detail": exc.detail})

    @app.exception_handler(RequestValidationError)
    async def handle_validation(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={
            "code": "BAD_REQUEST", "message": "request body failed validation",
            "detail": json.dumps(exc.errors(), default=str)})

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrackerError as exc:
            raise _to_api_error(exc) from exc

    # -- images ----------------------------------------------------------

    @app.get("/api/images")
    def list_images(state: Optional[str] = None, page: int = 1,
                    page_size: int = DEFAULT_PAGE_SIZE):
        if page < 1:
            raise _ApiError(400, "BAD_REQUEST", "page must be >= 1")
        if not 1 <= page_size <= MAX_PAGE_SIZE:
            raise _ApiError(400, "BAD_REQUEST",
                            f"page_size must be in [1, {MAX_PAGE_SIZE}]")
        state_filter = None
        if state:
            try:
                state_filter = LifecycleState(state)
            except ValueError:
                raise _ApiError(400, "BAD_REQUEST", f"unknown state '{state}'",
                                detail=", ".join(s.value for s in LifecycleState))
        rows = tracker.records(state_filter)
        start = (page - 1) * page_size
        return {
            "items": [record_wire(r) for r in rows[start:start + page_size]],
            "page": page,
            "page_size": page_size,
            "total": len(rows),
        }

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        record = guard(tracker.get_record, image_id)
        detector_name, dets = guard(tracker.detections_for, image_id)
        return {
            "record": record_wire(record),
            "detections": {
                "detector": detector_name,
                "items": [d.to_dict() for d in dets],
            },
            "verdict": guard(_latest_decision, tracker, image_id),
        }

    @app.get("/api/images/{image_id}/history")
    def get_history(image_id: str):
        events = guard(tracker.image_history, image_id)
        return {"events": [event_wire(e) for e in events]}

    @app.get("/api/images/{image_id}/file")
    def get_file(image_id: str):
        record = guard(tracker.get_record, image_id)
        if tracker.store is None:
            raise _ApiError(404, "UNREADABLE_BLOB",
                            "service has no blob store configured")
        data = guard(tracker.store.read, record.uri)
        return Response(content=data, media_type="image/png")

    # -- verification ------------------------------------------------------

    @app.get("/api/verification/queue")
    def verification_queue():
        items = []
        for record in tracker.records(LifecycleState.VERIFICATION):
            _, dets = tracker.detections_for(record.image_id)
            entered = next(
                (e.at for e in reversed(tracker.image_history(record.image_id))
                 if e.to_state is LifecycleState.VERIFICATION), None)
            items.append({
                "image_id": record.image_id,
                "thumbnail": f"/api/images/{record.image_id}/file",
                "detections": _detection_summary(dets),
                "entered_verification_at": entered,
            })
        return {"items": items}

    @app.post("/api/verification/{image_id}")
    def post_verdict(image_id: str, body: VerdictBody, request: Request):
        key = request.headers.get("Idempotency-Key")
        replay = idempotency.get(key)
        if replay is not None:
            status, payload = replay
            return JSONResponse(status_code=status, content=payload)
        try:
            verdict = Verdict(body.verdict.capitalize())
        except ValueError:
            raise _ApiError(400, "BAD_REQUEST",
                            f"verdict must be 'correct' or 'incorrect', "
                            f"got '{body.verdict}'")
        decision = VerificationDecision(
            image_id=image_id, verdict=verdict, reviewer=body.reviewer,
            notes=body.notes)
        try:
            record = tracker.apply_verdict(decision)
        except TrackerError as exc:
            err = _to_api_error(exc)
            idempotency.put(key, err.status, {
                "code": err.code, "message": err.message, "detail": err.detail})
            raise err from exc
        payload = {
            "record": record_wire(record),
            "verdict": _latest_decision(tracker, image_id),
        }
        idempotency.put(key, 200, payload)
        return payload

    # -- staging -----------------------------------------------------------

    @app.post("/api/staging/promote")
    def promote(body: PromoteBody, request: Request):
        key = request.headers.get("Idempotency-Key")
        replay = idempotency.get(key)
        if replay is not None:
            status, payload = replay
            return JSONResponse(status_code=status, content=payload)
        try:
            records = tracker.promote_staging(body.image_ids)
        except TrackerError as exc:
            err = _to_api_error(exc)
            idempotency.put(key, err.status, {
                "code": err.code, "message": err.message, "detail": err.detail})
            raise err from exc
        payload = {"records": [record_wire(r) for r in records]}
        idempotency.put(key, 200, payload)
        return payload

    # -- map ----------------------------------------------------------------

    @app.get("/api/map")
    def map_markers():
        markers = []
        for record in tracker.records():
            if record.geo is None:
                continue
            decision = _latest_decision(tracker, record.image_id)
            markers.append({
                "image_id": record.image_id,
                "lat": record.geo[0],
                "lon": record.geo[1],
                "state": record.state.value,
                "verdict": decision["verdict"] if decision else None,
            })
        return markers

    # -- experiments ---------------------------------------------------------

    def _experiment_names() -> list[str]:
        if results_path is None or not results_path.exists():
            return []
        return sorted(p.parent.name for p in results_path.glob("*/report.json"))

    def _load_report(name: str) -> dict:
        try:
            return load_result(results_path, name)
        except ExperimentsError as exc:
            raise _ApiError(404, "UNKNOWN_EXPERIMENT", str(exc)) from exc

    @app.get("/api/experiments")
    def list_experiments():
        summaries = []
        for name in _experiment_names():
            doc = _load_report(name)
            result = doc.get("result", {})
            summaries.append({
                "name": name,
                "real_train": result.get("real_train"),
                "synthetic_train": result.get("synthetic_train"),
                "resolution_tier": result.get("resolution_tier"),
                "map_value": result.get("map_value"),
                "lift_vs_baseline": result.get("lift_vs_baseline"),
            })
        return {"items": summaries}

    @app.get("/api/experiments/{name}")
    def get_experiment(name: str):
        if results_path is None:
            raise _ApiError(404, "UNKNOWN_EXPERIMENT",
                            "service has no results directory configured")
        doc = _load_report(name)
        result = doc.get("result", {})
        lift = result.get("lift_vs_baseline")
        if lift is None and name != "Baseline" and "Baseline" in _experiment_names():
            base = _load_report("Baseline").get("result", {})
            if base.get("map_value"):
                lift = metrics.lift_percent(base["map_value"], result["map_value"])
        row = {
            "name": name,
            "real_train": result.get("real_train"),
            "synthetic_train": result.get("synthetic_train"),
            "resolution_tier": result.get("resolution_tier"),
            "map_value": result.get("map_value"),
            "lift_percent": lift,
        }
        return {"name": name, "config": doc.get("config"), "row": row,
                "result": result}

    # -- metrics --------------------------------------------------------------

    @app.get("/api/metrics/summary")
    def metrics_summary():
        census = tracker.census()
        correct, total = tracker.verification_accuracy()
        return {
            "census": census,
            "verification_accuracy": {
                "correct": correct,
                "total": total,
                "accuracy": (correct / total) if total else None,
            },
        }

    if frontend_dist is not None and Path(frontend_dist).exists():
        app.mount("/", StaticFiles(directory=str(frontend_dist), html=True),
                  name="webui")

    return app


def serve_api(config: ServiceConfig):
    """Build the tracker from disk and serve until interrupted.

    Raises CorruptLog before binding when the event log is unreadable, and
    BindFailure when the address is taken or unbindable.
    """
    import uvicorn

    store = LocalBlobStore(config.blob_root) if config.blob_root else None
    tracker = Tracker(config.tracker_root, store=store)
    app = create_app(tracker, results_dir=config.results_dir,
                     frontend_dist=config.frontend_dist)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as exc:
        raise BindFailure(
            f"cannot bind {config.host}:{config.port}: {exc}") from exc
    finally:
        probe.close()
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")

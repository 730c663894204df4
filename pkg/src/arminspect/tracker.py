"""Event-sourced image lifecycle tracking.

Every image moves through a fixed state graph (Incoming, BatchPrediction,
Verification, Verified, Staging, Labeling, TrainingPool, plus Archived from
anywhere) and every transition is an appended event; the newline-delimited
event log is the source of truth and the in-memory index is rebuilt from it
on startup.  All transitions go through a compare-and-set on the record's
state_version, so concurrent writers cannot double-apply a step.

Record metadata, detections, verification decisions, and ground-truth
labels live in sidecar JSONL files next to the event log.  A torn final
line in any file (a crash mid-append) is dropped on recovery; a malformed
interior line refuses startup, naming the file and line.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from PIL import Image, UnidentifiedImageError

from . import coco
from .experiments import PoolImage, Provenance, ResolutionTier
from .metrics import Detection

log = logging.getLogger(__name__)

EVENTS_FILE = "events.jsonl"
RECORDS_FILE = "records.jsonl"
DETECTIONS_FILE = "detections.jsonl"
DECISIONS_FILE = "decisions.jsonl"
LABELS_FILE = "labels.jsonl"

ROUTING_MODULUS = 10 ** 6
DEFAULT_WATCH_INTERVAL = 2.0


class TrackerError(Exception):
    """Base class for lifecycle failures."""


class UnreadableBlob(TrackerError):
    """The blob store could not produce usable image bytes."""


class Duplicate(TrackerError):
    """These bytes are already tracked; carries the existing image id."""

    def __init__(self, existing_id: str):
        self.existing_id = existing_id
        super().__init__(f"content already tracked as {existing_id}")


class UnknownImage(TrackerError):
    """No record with the given image id."""


class IllegalState(TrackerError):
    """The requested transition is not an edge of the lifecycle graph."""


class VersionConflict(TrackerError):
    """Compare-and-set failed: the record moved under the caller."""

    def __init__(self, image_id: str, expected: int, actual: int):
        self.image_id = image_id
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{image_id}: expected version {expected}, record is at {actual}")


class DuplicateDecision(TrackerError):
    """A verdict was already applied during this Verification visit."""


class EmptyBatch(TrackerError):
    """promote_staging was called with no image ids."""


class InvalidAnnotations(TrackerError):
    """Submitted labels failed validation; the report rides along."""

    def __init__(self, message: str, report: Optional[coco.ValidationReport] = None):
        self.report = report
        super().__init__(message)


class CorruptLog(TrackerError):
    """A persisted log line (other than a torn final line) is unreadable."""

    def __init__(self, file_name: str, line_number: int, detail: str):
        self.file_name = file_name
        self.line_number = line_number
        super().__init__(f"{file_name} line {line_number}: {detail}")


class LifecycleState(str, Enum):
    INCOMING = "Incoming"
    BATCH_PREDICTION = "BatchPrediction"
    VERIFICATION = "Verification"
    VERIFIED = "Verified"
    STAGING = "Staging"
    LABELING = "Labeling"
    TRAINING_POOL = "TrainingPool"
    ARCHIVED = "Archived"


_EDGES: dict[LifecycleState, frozenset[LifecycleState]] = {
    LifecycleState.INCOMING: frozenset(
        {LifecycleState.BATCH_PREDICTION, LifecycleState.LABELING}),
    LifecycleState.BATCH_PREDICTION: frozenset({LifecycleState.VERIFICATION}),
    LifecycleState.VERIFICATION: frozenset(
        {LifecycleState.VERIFIED, LifecycleState.STAGING}),
    LifecycleState.STAGING: frozenset({LifecycleState.LABELING}),
    LifecycleState.LABELING: frozenset({LifecycleState.TRAINING_POOL}),
    LifecycleState.VERIFIED: frozenset(),
    LifecycleState.TRAINING_POOL: frozenset(),
    LifecycleState.ARCHIVED: frozenset(),
}


def legal_transition(src: LifecycleState, dst: LifecycleState) -> bool:
    """True when src -> dst is an edge of the lifecycle graph."""
    if dst is LifecycleState.ARCHIVED:
        return src is not LifecycleState.ARCHIVED
    return dst in _EDGES[src]


class Verdict(str, Enum):
    CORRECT = "Correct"
    INCORRECT = "Incorrect"


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    uri: str
    sha256: str
    width: int
    height: int
    provenance: Provenance
    resolution_tier: ResolutionTier
    geo: Optional[tuple[float, float]]
    state: LifecycleState
    state_version: int


@dataclass(frozen=True)
class TransitionEvent:
    image_id: str
    from_state: LifecycleState
    to_state: LifecycleState
    at: int                 # UTC milliseconds
    actor: str
    reason: str
    version_after: int

    def to_wire(self) -> dict:
        return {
            "image_id": self.image_id,
            "from": self.from_state.value,
            "to": self.to_state.value,
            "at": self.at,
            "actor": self.actor,
            "reason": self.reason,
            "version_after": self.version_after,
        }

    @classmethod
    def from_wire(cls, doc: Mapping) -> "TransitionEvent":
        return cls(
            image_id=str(doc["image_id"]),
            from_state=LifecycleState(doc["from"]),
            to_state=LifecycleState(doc["to"]),
            at=int(doc["at"]),
            actor=str(doc["actor"]),
            reason=str(doc["reason"]),
            version_after=int(doc["version_after"]),
        )


@dataclass(frozen=True)
class VerificationDecision:
    image_id: str
    verdict: Verdict
    reviewer: str
    notes: str = ""
    at: int = 0


@dataclass(frozen=True)
class RoutingPolicy:
    labeling_fraction: float
    salt: str = ""
    override: Optional[LifecycleState] = None

    def __post_init__(self):
        if not 0.0 <= self.labeling_fraction <= 1.0:
            raise ValueError(
                f"labeling_fraction must be in [0, 1], got {self.labeling_fraction}")
        if self.override is not None and self.override not in (
                LifecycleState.BATCH_PREDICTION, LifecycleState.LABELING):
            raise ValueError(f"override must route to BatchPrediction or Labeling, "
                             f"got {self.override}")


def routing_target(image_id: str, policy: RoutingPolicy) -> LifecycleState:
    """Deterministic routing: hash the id with the salt, compare to p."""
    if policy.override is not None:
        return policy.override
    digest = hashlib.blake2b((image_id + policy.salt).encode("utf-8"),
                             digest_size=8).digest()
    bucket = int.from_bytes(digest, "big") % ROUTING_MODULUS
    if bucket / ROUTING_MODULUS < policy.labeling_fraction:
        return LifecycleState.LABELING
    return LifecycleState.BATCH_PREDICTION


# ---------------------------------------------------------------------------
# blob store


class LocalBlobStore:
    """Minimal read/list/watch over a local directory.

    URIs are paths relative to the store root.  ``watch`` polls for files
    that were not present on the previous sweep and yields them in batches;
    it never re-reports a path.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def read(self, uri: str) -> bytes:
        try:
            return (self.root / uri).read_bytes()
        except OSError as exc:
            raise UnreadableBlob(f"cannot read blob '{uri}': {exc}") from exc

    def list(self, prefix: str = "") -> list[str]:
        base = self.root / prefix if prefix else self.root
        if not base.exists():
            return []
        return sorted(
            str(p.relative_to(self.root))
            for p in base.rglob("*") if p.is_file())

    def watch(self, prefix: str = "", interval: float = DEFAULT_WATCH_INTERVAL,
              stop: Optional[threading.Event] = None) -> Iterator[list[str]]:
        seen: set[str] = set()
        while stop is None or not stop.is_set():
            current = self.list(prefix)
            fresh = [uri for uri in current if uri not in seen]
            seen.update(fresh)
            if fresh:
                yield fresh
            if stop is not None and stop.wait(interval):
                break
            if stop is None:
                time.sleep(interval)


# ---------------------------------------------------------------------------
# log-file helpers


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    """(line_number, record) pairs; a torn final line is dropped.

    Any other undecodable line raises CorruptLog.
    """
    if not path.exists():
        return []
    rows: list[tuple[int, dict]] = []
    lines = path.read_text("utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for i, line in enumerate(lines, start=1):
        try:
            doc = json.loads(line)
            if not isinstance(doc, dict):
                raise ValueError("expected an object")
        except ValueError as exc:
            if i == len(lines):
                log.warning("dropping torn final line of %s", path.name)
                break
            raise CorruptLog(path.name, i, f"unreadable record: {exc}") from exc
        rows.append((i, doc))
    return rows


def _rewrite(path: Path, rows: Iterable[dict]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for doc in rows:
            fh.write(json.dumps(doc) + "\n")
    tmp.replace(path)


class Tracker:
    """The lifecycle state machine with durable event sourcing.

    A single process-wide lock serializes writes; per-image CAS on
    state_version rejects stale writers instead of blocking them.
    """

    def __init__(self, root: str | Path, store: Optional[LocalBlobStore] = None,
                 clock: Optional[Callable[[], int]] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.store = store
        self._clock = clock or (lambda: int(time.time() * 1000))
        self._lock = threading.RLock()
        self._records: dict[str, ImageRecord] = {}
        self._events: dict[str, list[TransitionEvent]] = {}
        self._sha_live: dict[str, str] = {}
        self._detections: dict[str, tuple[str, tuple[Detection, ...]]] = {}
        self._decisions: dict[str, list[VerificationDecision]] = {}
        self._decided_visit: dict[str, int] = {}
        self._labels: dict[str, tuple[coco.InstanceAnnotation, ...]] = {}
        self._recover()

    # -- persistence ------------------------------------------------------

    def _path(self, name: str) -> Path:
        return self.root / name

    def _append(self, name: str, doc: dict) -> None:
        with self._path(name).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(doc) + "\n")

    def _recover(self) -> None:
        records_rows = _read_jsonl(self._path(RECORDS_FILE))
        events_rows = _read_jsonl(self._path(EVENTS_FILE))
        detection_rows = _read_jsonl(self._path(DETECTIONS_FILE))
        decision_rows = _read_jsonl(self._path(DECISIONS_FILE))
        label_rows = _read_jsonl(self._path(LABELS_FILE))

        meta: dict[str, dict] = {}
        for line_no, doc in records_rows:
            try:
                meta[str(doc["image_id"])] = doc
            except KeyError as exc:
                raise CorruptLog(RECORDS_FILE, line_no, f"missing {exc}") from exc

        chains: dict[str, list[TransitionEvent]] = {}
        for line_no, doc in events_rows:
            try:
                event = TransitionEvent.from_wire(doc)
            except (KeyError, ValueError) as exc:
                raise CorruptLog(EVENTS_FILE, line_no, f"bad event: {exc}") from exc
            chain = chains.setdefault(event.image_id, [])
            if not chain:
                if not (event.from_state is LifecycleState.INCOMING
                        and event.to_state is LifecycleState.INCOMING
                        and event.version_after == 0):
                    raise CorruptLog(EVENTS_FILE, line_no,
                                     f"{event.image_id}: first event is not a creation event")
            else:
                prev = chain[-1]
                if event.from_state is not prev.to_state:
                    raise CorruptLog(
                        EVENTS_FILE, line_no,
                        f"{event.image_id}: chain broken ({prev.to_state.value} "
                        f"then from={event.from_state.value})")
                if event.version_after != prev.version_after + 1:
                    raise CorruptLog(
                        EVENTS_FILE, line_no,
                        f"{event.image_id}: version jumped {prev.version_after} -> "
                        f"{event.version_after}")
                if not legal_transition(event.from_state, event.to_state):
                    raise CorruptLog(
                        EVENTS_FILE, line_no,
                        f"{event.image_id}: illegal edge {event.from_state.value} -> "
                        f"{event.to_state.value}")
            if event.image_id not in meta:
                raise CorruptLog(EVENTS_FILE, line_no,
                                 f"event for unknown image {event.image_id}")
            chain.append(event)

        # records without a creation event never finished ingesting: drop
        for image_id, chain in chains.items():
            doc = meta[image_id]
            record = ImageRecord(
                image_id=image_id,
                uri=str(doc["uri"]),
                sha256=str(doc["sha256"]),
                width=int(doc["width"]),
                height=int(doc["height"]),
                provenance=Provenance(doc["provenance"]),
                resolution_tier=ResolutionTier(doc["resolution_tier"]),
                geo=tuple(doc["geo"]) if doc.get("geo") else None,
                state=chain[-1].to_state,
                state_version=chain[-1].version_after,
            )
            self._records[image_id] = record
            self._events[image_id] = chain
            if record.state is not LifecycleState.ARCHIVED:
                self._sha_live[record.sha256] = image_id

        for _line_no, doc in detection_rows:
            image_id = str(doc["image_id"])
            if image_id in self._records:
                self._detections[image_id] = (
                    str(doc.get("detector", "")),
                    tuple(Detection.from_dict(d) for d in doc["detections"]))
        for _line_no, doc in decision_rows:
            image_id = str(doc["image_id"])
            if image_id not in self._records:
                continue
            decision = VerificationDecision(
                image_id=image_id, verdict=Verdict(doc["verdict"]),
                reviewer=str(doc["reviewer"]), notes=str(doc.get("notes", "")),
                at=int(doc["at"]))
            self._decisions.setdefault(image_id, []).append(decision)
            self._decided_visit[image_id] = int(doc["visit_version"])
        for _line_no, doc in label_rows:
            image_id = str(doc["image_id"])
            if image_id in self._records:
                self._labels[image_id] = tuple(
                    _annotation_from_wire(a) for a in doc["annotations"])

        # compact away any torn final lines so future appends start clean
        for name, rows in ((RECORDS_FILE, records_rows), (EVENTS_FILE, events_rows),
                           (DETECTIONS_FILE, detection_rows),
                           (DECISIONS_FILE, decision_rows), (LABELS_FILE, label_rows)):
            path = self._path(name)
            if path.exists():
                text = path.read_text("utf-8")
                complete = text.endswith("\n") or text == ""
                if not complete or text.count("\n") != len(rows):
                    _rewrite(path, (doc for _n, doc in rows))

    # -- internal transition machinery -------------------------------------

    def _require_record(self, image_id: str) -> ImageRecord:
        record = self._records.get(image_id)
        if record is None:
            raise UnknownImage(f"no record for image '{image_id}'")
        return record

    def _check_cas(self, record: ImageRecord, expected_version: Optional[int]) -> None:
        if expected_version is not None and expected_version != record.state_version:
            raise VersionConflict(record.image_id, expected_version,
                                  record.state_version)

    def _transition(self, record: ImageRecord, to_state: LifecycleState,
                    actor: str, reason: str) -> ImageRecord:
        """Append one event and move the record.  Caller holds the lock and
        has already settled CAS and legality preconditions."""
        if not legal_transition(record.state, to_state):
            raise IllegalState(
                f"{record.image_id}: no edge {record.state.value} -> {to_state.value}")
        event = TransitionEvent(
            image_id=record.image_id, from_state=record.state, to_state=to_state,
            at=self._clock(), actor=actor, reason=reason,
            version_after=record.state_version + 1)
        self._append(EVENTS_FILE, event.to_wire())
        updated = replace(record, state=to_state, state_version=event.version_after)
        self._records[record.image_id] = updated
        self._events[record.image_id].append(event)
        if to_state is LifecycleState.ARCHIVED:
            self._sha_live.pop(record.sha256, None)
        return updated

    # -- operations ---------------------------------------------------------

    def ingest_image(
        self,
        uri: str,
        provenance: Provenance = Provenance.REAL,
        geo: Optional[tuple[float, float]] = None,
        dims: Optional[tuple[int, int]] = None,
        data: Optional[bytes] = None,
    ) -> ImageRecord:
        """Register a blob as a tracked image in Incoming.

        Bytes come from ``data`` or, when omitted, from the blob store.
        Identical bytes raise Duplicate carrying the existing id.
        """
        if data is None:
            if self.store is None:
                raise UnreadableBlob(
                    f"no blob store configured and no bytes supplied for '{uri}'")
            data = self.store.read(uri)
        digest = hashlib.sha256(data).hexdigest()
        if dims is None:
            try:
                with Image.open(io.BytesIO(data)) as img:
                    dims = img.size
            except (UnidentifiedImageError, OSError) as exc:
                raise UnreadableBlob(f"'{uri}' does not decode as an image: {exc}") from exc
        width, height = int(dims[0]), int(dims[1])

        with self._lock:
            existing = self._sha_live.get(digest)
            if existing is not None:
                raise Duplicate(existing)
            at = self._clock()
            image_id = f"{at:013d}-{digest[:12]}"
            while image_id in self._records:
                # same bytes re-ingested within one clock tick (only possible
                # after archiving); advance the stamp until the id is free
                at += 1
                image_id = f"{at:013d}-{digest[:12]}"
            record = ImageRecord(
                image_id=image_id, uri=uri, sha256=digest,
                width=width, height=height, provenance=provenance,
                resolution_tier=ResolutionTier.from_dims(width, height),
                geo=geo, state=LifecycleState.INCOMING, state_version=0)
            self._append(RECORDS_FILE, {
                "image_id": image_id, "uri": uri, "sha256": digest,
                "width": width, "height": height,
                "provenance": provenance.value,
                "resolution_tier": record.resolution_tier.value,
                "geo": list(geo) if geo else None,
            })
            event = TransitionEvent(
                image_id=image_id, from_state=LifecycleState.INCOMING,
                to_state=LifecycleState.INCOMING, at=at, actor="system",
                reason="ingest", version_after=0)
            self._append(EVENTS_FILE, event.to_wire())
            self._records[image_id] = record
            self._events[image_id] = [event]
            self._sha_live[digest] = image_id
            return record

    def route_image(self, image_id: str, policy: RoutingPolicy,
                    expected_version: Optional[int] = None,
                    actor: str = "system") -> ImageRecord:
        with self._lock:
            record = self._require_record(image_id)
            self._check_cas(record, expected_version)
            if record.state is not LifecycleState.INCOMING:
                raise IllegalState(
                    f"{image_id}: routing requires Incoming, found {record.state.value}")
            target = routing_target(image_id, policy)
            reason = ("route override" if policy.override is not None
                      else f"route p={policy.labeling_fraction}")
            return self._transition(record, target, actor, reason)

    def record_inference(self, image_id: str, detections: Sequence[Detection],
                         detector: str, expected_version: Optional[int] = None,
                         actor: str = "system") -> ImageRecord:
        with self._lock:
            record = self._require_record(image_id)
            self._check_cas(record, expected_version)
            if record.state is not LifecycleState.BATCH_PREDICTION:
                raise IllegalState(
                    f"{image_id}: inference requires BatchPrediction, "
                    f"found {record.state.value}")
            self._append(DETECTIONS_FILE, {
                "image_id": image_id,
                "detector": detector,
                "at": self._clock(),
                "detections": [d.to_dict() for d in detections],
            })
            self._detections[image_id] = (detector, tuple(detections))
            return self._transition(record, LifecycleState.VERIFICATION, actor,
                                    f"inference {detector}")

    def apply_verdict(self, decision: VerificationDecision,
                      expected_version: Optional[int] = None) -> ImageRecord:
        with self._lock:
            record = self._require_record(decision.image_id)
            visit = self._current_verification_visit(decision.image_id)
            if visit is not None and self._decided_visit.get(decision.image_id) == visit:
                raise DuplicateDecision(
                    f"{decision.image_id}: this Verification visit already has a verdict")
            self._check_cas(record, expected_version)
            if record.state is not LifecycleState.VERIFICATION:
                raise IllegalState(
                    f"{decision.image_id}: verdict requires Verification, "
                    f"found {record.state.value}")
            target = (LifecycleState.VERIFIED if decision.verdict is Verdict.CORRECT
                      else LifecycleState.STAGING)
            updated = self._transition(record, target, decision.reviewer,
                                       f"verdict {decision.verdict.value}")
            stamped = replace(decision, at=decision.at or self._clock())
            self._append(DECISIONS_FILE, {
                "image_id": decision.image_id,
                "verdict": decision.verdict.value,
                "reviewer": decision.reviewer,
                "notes": decision.notes,
                "at": stamped.at,
                "visit_version": record.state_version,
            })
            self._decisions.setdefault(decision.image_id, []).append(stamped)
            self._decided_visit[decision.image_id] = record.state_version
            return updated

    def _current_verification_visit(self, image_id: str) -> Optional[int]:
        """version_after of the latest entry into Verification, if any."""
        for event in reversed(self._events.get(image_id, [])):
            if event.to_state is LifecycleState.VERIFICATION:
                return event.version_after
        return None

    def promote_staging(self, image_ids: Sequence[str],
                        actor: str = "system") -> list[ImageRecord]:
        """Move a batch from Staging to Labeling, all-or-nothing."""
        if not image_ids:
            raise EmptyBatch("promote_staging needs at least one image id")
        with self._lock:
            records = []
            for image_id in image_ids:
                record = self._require_record(image_id)
                if record.state is not LifecycleState.STAGING:
                    raise IllegalState(
                        f"{image_id}: promotion requires Staging, "
                        f"found {record.state.value}; batch not applied")
                records.append(record)
            return [
                self._transition(record, LifecycleState.LABELING, actor, "promote")
                for record in records
            ]

    def complete_labeling(self, image_id: str,
                          annotations: Sequence[coco.InstanceAnnotation],
                          actor: str = "labeler",
                          expected_version: Optional[int] = None) -> ImageRecord:
        with self._lock:
            record = self._require_record(image_id)
            self._check_cas(record, expected_version)
            if record.state is not LifecycleState.LABELING:
                raise IllegalState(
                    f"{image_id}: labeling completion requires Labeling, "
                    f"found {record.state.value}")
            normalized = _renumber_for_validation(annotations, record)
            aset = _validation_set(normalized, record)
            try:
                coco.check_references(aset)
            except coco.CocoError as exc:
                raise InvalidAnnotations(
                    f"{image_id}: submitted labels do not form a valid set: {exc}"
                ) from exc
            report = coco.validate_annotations(aset)
            if not report.is_clean:
                raise InvalidAnnotations(
                    f"{image_id}: submitted labels failed validation: "
                    f"{report.summary()}", report)
            self._append(LABELS_FILE, {
                "image_id": image_id,
                "annotations": [_annotation_to_wire(a) for a in normalized],
            })
            self._labels[image_id] = tuple(normalized)
            return self._transition(record, LifecycleState.TRAINING_POOL, actor,
                                    "labeled")

    def archive_image(self, image_id: str, reason: str = "archive",
                      actor: str = "system",
                      expected_version: Optional[int] = None) -> ImageRecord:
        """The any-state escape hatch; archived digests may be re-ingested."""
        with self._lock:
            record = self._require_record(image_id)
            self._check_cas(record, expected_version)
            if record.state is LifecycleState.ARCHIVED:
                raise IllegalState(f"{image_id} is already Archived")
            return self._transition(record, LifecycleState.ARCHIVED, actor, reason)

    # -- queries ------------------------------------------------------------

    def get_record(self, image_id: str) -> ImageRecord:
        with self._lock:
            return self._require_record(image_id)

    def image_history(self, image_id: str) -> tuple[TransitionEvent, ...]:
        with self._lock:
            self._require_record(image_id)
            return tuple(self._events[image_id])

    def records(self, state: Optional[LifecycleState] = None) -> list[ImageRecord]:
        with self._lock:
            rows = sorted(self._records.values(), key=lambda r: r.image_id)
            if state is None:
                return rows
            return [r for r in rows if r.state is state]

    def census(self) -> dict[str, int]:
        """Per-state record counts plus the total."""
        with self._lock:
            counts = {state.value: 0 for state in LifecycleState}
            for record in self._records.values():
                counts[record.state.value] += 1
            counts["total"] = len(self._records)
            return counts

    def detections_for(self, image_id: str) -> tuple[str, tuple[Detection, ...]]:
        with self._lock:
            self._require_record(image_id)
            return self._detections.get(image_id, ("", ()))

    def decisions_for(self, image_id: str) -> tuple[VerificationDecision, ...]:
        with self._lock:
            self._require_record(image_id)
            return tuple(self._decisions.get(image_id, ()))

    def labels_for(self, image_id: str) -> tuple[coco.InstanceAnnotation, ...]:
        with self._lock:
            self._require_record(image_id)
            return self._labels.get(image_id, ())

    def verification_accuracy(self) -> tuple[int, int]:
        """(correct verdicts, total verdicts) across all decisions."""
        with self._lock:
            total = correct = 0
            for decisions in self._decisions.values():
                for decision in decisions:
                    total += 1
                    if decision.verdict is Verdict.CORRECT:
                        correct += 1
            return correct, total

    def training_pool_images(self) -> list[PoolImage]:
        """TrainingPool records as sampling-pool entries for experiments."""
        names_by_id = {c.category_id: c.name for c in coco.default_categories()}
        with self._lock:
            out = []
            for record in self.records(LifecycleState.TRAINING_POOL):
                labels = self._labels.get(record.image_id, ())
                out.append(PoolImage(
                    image_id=record.image_id,
                    provenance=record.provenance,
                    resolution_tier=record.resolution_tier,
                    category_names=tuple(names_by_id[a.category_id] for a in labels),
                ))
            return out

    def verify_conservation(self) -> None:
        """Census must partition the record set; raises TrackerError if not."""
        with self._lock:
            counts = self.census()
            total = counts.pop("total")
            if sum(counts.values()) != total:
                raise TrackerError(
                    f"conservation violated: per-state sum {sum(counts.values())} "
                    f"!= total {total}")


# ---------------------------------------------------------------------------
# annotation plumbing


def _annotation_to_wire(ann: coco.InstanceAnnotation) -> dict:
    return {
        "id": ann.annotation_id,
        "category_id": ann.category_id,
        "bbox": list(ann.bbox),
        "segmentation": [list(r) for r in ann.segmentation],
        "area": ann.area,
    }


def _annotation_from_wire(doc: Mapping) -> coco.InstanceAnnotation:
    return coco.InstanceAnnotation(
        annotation_id=int(doc["id"]),
        image_id=1,
        category_id=int(doc["category_id"]),
        bbox=tuple(doc["bbox"]),
        segmentation=tuple(tuple(r) for r in doc.get("segmentation", ())),
        area=float(doc.get("area", 0.0)),
    )


def _renumber_for_validation(
    annotations: Sequence[coco.InstanceAnnotation],
    record: ImageRecord,
) -> list[coco.InstanceAnnotation]:
    """Rewrite ids so labels for one tracked image form a standalone set."""
    out = []
    for n, ann in enumerate(annotations, start=1):
        try:
            out.append(replace(ann, annotation_id=n, image_id=1))
        except coco.CocoError as exc:
            raise InvalidAnnotations(
                f"{record.image_id}: annotation {n} is malformed: {exc}") from exc
    return out


def _validation_set(annotations: Sequence[coco.InstanceAnnotation],
                    record: ImageRecord) -> coco.AnnotationSet:
    entry = coco.ImageEntry(image_id=1, file_name=record.uri or "image.png",
                            width=record.width, height=record.height)
    return coco.AnnotationSet(
        images=(entry,),
        annotations=tuple(annotations),
        categories=coco.default_categories(),
    )

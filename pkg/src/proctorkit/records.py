"""Frame-record schema and newline-delimited session stream IO.

One line of a session file is one JSON object with exactly the fields
``session_id, frame_index, timestamp_ms, face_landmarks, face_count,
live_embedding, hands, detections, label``.  Landmarks travel as arrays
of ``[x, y, z]`` triples in normalized image coordinates, detections as
``{class_id, confidence, bbox, camera}`` objects with ``bbox`` given as
``[x_min, y_min, x_max, y_max]``.

Records are immutable after construction (backing arrays are frozen) and
may be shared freely across threads.  A reader is single-threaded per
session; distinct sessions can be read in parallel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import MalformedRecord, OrderViolation, SchemaViolation

FACE_LANDMARK_COUNT = 468
HAND_LANDMARK_COUNT = 21
EMBEDDING_DIM = 512
EMBEDDING_NORM_TOL = 1e-6

OBJECT_CLASSES = ("cell_phone", "chits", "closed_book", "headphone", "sheet", "watch")
CAMERAS = ("face_cam", "hand_cam")

_RECORD_FIELDS = (
    "session_id",
    "frame_index",
    "timestamp_ms",
    "face_landmarks",
    "face_count",
    "live_embedding",
    "hands",
    "detections",
    "label",
)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """A fixed-size set of (x, y, z) landmarks, kind 'face468' or 'hand21'."""

    points: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "points", _freeze(self.points))
        pts = self.points
        if self.kind == "face468":
            expected = FACE_LANDMARK_COUNT
        elif self.kind == "hand21":
            expected = HAND_LANDMARK_COUNT
        else:
            raise SchemaViolation(f"unknown landmark kind {self.kind!r}")
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise SchemaViolation(f"{self.kind} landmarks must be Nx3, got {pts.shape}")
        if pts.shape[0] != expected:
            raise SchemaViolation(
                f"{self.kind} requires {expected} points, got {pts.shape[0]}"
            )
        if not np.isfinite(pts).all():
            raise SchemaViolation(f"{self.kind} landmarks contain non-finite values")
        xy = pts[:, :2]
        if (xy < 0.0).any() or (xy > 1.0).any():
            raise SchemaViolation(f"{self.kind} landmark x/y outside [0, 1]")

    def __eq__(self, other):
        return (
            isinstance(other, LandmarkSet)
            and self.kind == other.kind
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True)
class DetectionRecord:
    """One prohibited-item detection from either camera feed."""

    class_id: str
    confidence: float
    bbox: tuple[float, float, float, float]
    camera: str

    def __post_init__(self):
        if self.class_id not in OBJECT_CLASSES:
            raise SchemaViolation(f"unknown detection class {self.class_id!r}")
        if self.camera not in CAMERAS:
            raise SchemaViolation(f"unknown camera {self.camera!r}")
        object.__setattr__(self, "confidence", float(self.confidence))
        object.__setattr__(self, "bbox", tuple(float(v) for v in self.bbox))
        if not (math.isfinite(self.confidence) and 0.0 <= self.confidence <= 1.0):
            raise SchemaViolation(f"confidence {self.confidence!r} outside [0, 1]")
        b = self.bbox
        if len(b) != 4 or not all(math.isfinite(v) for v in b):
            raise SchemaViolation(f"bbox must be 4 finite floats, got {b!r}")
        x_min, y_min, x_max, y_max = b
        if not (x_min < x_max and y_min < y_max):
            raise SchemaViolation(f"bbox corners inverted or degenerate: {b}")
        if min(b) < 0.0 or max(b) > 1.0:
            raise SchemaViolation(f"bbox outside normalized [0, 1] range: {b}")


@dataclass(frozen=True, eq=False)
class FrameRecord:
    """One frame's raw perception payload across both cameras."""

    session_id: str
    frame_index: int
    timestamp_ms: int
    face_landmarks: Optional[LandmarkSet]
    face_count: int
    live_embedding: Optional[np.ndarray]
    hands: tuple[LandmarkSet, ...]
    detections: tuple[DetectionRecord, ...]
    label: Optional[bool]

    def __post_init__(self):
        if not isinstance(self.session_id, str) or not self.session_id:
            raise SchemaViolation("session_id must be a non-empty string")
        for name in ("frame_index", "timestamp_ms", "face_count"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise SchemaViolation(f"{name} must be a nonnegative integer, got {v!r}")
        if self.face_landmarks is not None and self.face_landmarks.kind != "face468":
            raise SchemaViolation("face_landmarks must be of kind face468")
        object.__setattr__(self, "hands", tuple(self.hands))
        object.__setattr__(self, "detections", tuple(self.detections))
        for h in self.hands:
            if h.kind != "hand21":
                raise SchemaViolation("hand landmark sets must be of kind hand21")
        if self.label is not None and not isinstance(self.label, bool):
            raise SchemaViolation(f"label must be boolean or absent, got {self.label!r}")
        emb = self.live_embedding
        if emb is not None:
            emb = _freeze(emb)
            object.__setattr__(self, "live_embedding", emb)
            if emb.ndim != 1 or emb.shape[0] != EMBEDDING_DIM:
                raise SchemaViolation(
                    f"embedding must have {EMBEDDING_DIM} entries, got shape {emb.shape}"
                )
            if not np.isfinite(emb).all():
                raise SchemaViolation("embedding contains non-finite values")
            norm = float(np.linalg.norm(emb))
            if abs(norm - 1.0) > EMBEDDING_NORM_TOL:
                raise SchemaViolation(f"embedding L2 norm {norm} is not 1 +/- {EMBEDDING_NORM_TOL}")

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented
        if (self.session_id, self.frame_index, self.timestamp_ms, self.face_count,
                self.label) != (other.session_id, other.frame_index, other.timestamp_ms,
                                other.face_count, other.label):
            return False
        if (self.face_landmarks is None) != (other.face_landmarks is None):
            return False
        if self.face_landmarks is not None and self.face_landmarks != other.face_landmarks:
            return False
        if (self.live_embedding is None) != (other.live_embedding is None):
            return False
        if self.live_embedding is not None and not np.array_equal(
                self.live_embedding, other.live_embedding):
            return False
        return self.hands == other.hands and self.detections == other.detections


@dataclass
class SessionStream:
    """Ordered frame records of one session plus capture-rate metadata."""

    session_id: str
    records: Iterable[FrameRecord]
    frame_rate_hz: float = 10.0

    def __iter__(self) -> Iterator[FrameRecord]:
        return iter(self.records)


def _landmarks_from_payload(payload, kind: str) -> LandmarkSet:
    try:
        arr = np.asarray(payload, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"landmark payload is not numeric: {exc}") from exc
    return LandmarkSet(points=arr, kind=kind)


def _detection_from_payload(payload) -> DetectionRecord:
    if not isinstance(payload, dict):
        raise MalformedRecord(f"detection entry must be an object, got {type(payload)}")
    try:
        return DetectionRecord(
            class_id=payload["class_id"],
            confidence=float(payload["confidence"]),
            bbox=tuple(float(v) for v in payload["bbox"]),
            camera=payload["camera"],
        )
    except KeyError as exc:
        raise MalformedRecord(f"detection missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"detection field not numeric: {exc}") from exc


def parse_frame_record(line: str) -> FrameRecord:
    """Parse one serialized line into a validated FrameRecord."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedRecord("record line must be a JSON object")
    missing = [k for k in _RECORD_FIELDS if k not in obj]
    if missing:
        raise MalformedRecord(f"record missing fields: {missing}")
    extra = [k for k in obj if k not in _RECORD_FIELDS]
    if extra:
        raise SchemaViolation(f"record has unknown fields: {extra}")

    face = obj["face_landmarks"]
    face_lm = None if face is None else _landmarks_from_payload(face, "face468")
    emb = obj["live_embedding"]
    emb_arr = None if emb is None else np.asarray(emb, dtype=np.float64)
    hands = tuple(_landmarks_from_payload(h, "hand21") for h in obj["hands"])
    detections = tuple(_detection_from_payload(d) for d in obj["detections"])
    label = obj["label"]

    try:
        frame_index = int(obj["frame_index"])
        timestamp_ms = int(obj["timestamp_ms"])
        face_count = int(obj["face_count"])
    except (TypeError, ValueError) as exc:
        raise MalformedRecord(f"integer field not parseable: {exc}") from exc

    return FrameRecord(
        session_id=obj["session_id"],
        frame_index=frame_index,
        timestamp_ms=timestamp_ms,
        face_landmarks=face_lm,
        face_count=face_count,
        live_embedding=emb_arr,
        hands=hands,
        detections=detections,
        label=label,
    )


def serialize_frame_record(record: FrameRecord) -> str:
    """Render a record as one JSON line; inverse of parse_frame_record."""
    obj = {
        "session_id": record.session_id,
        "frame_index": record.frame_index,
        "timestamp_ms": record.timestamp_ms,
        "face_landmarks": None
        if record.face_landmarks is None
        else record.face_landmarks.points.tolist(),
        "face_count": record.face_count,
        "live_embedding": None
        if record.live_embedding is None
        else record.live_embedding.tolist(),
        "hands": [h.points.tolist() for h in record.hands],
        "detections": [
            {
                "class_id": d.class_id,
                "confidence": d.confidence,
                "bbox": list(d.bbox),
                "camera": d.camera,
            }
            for d in record.detections
        ],
        "label": record.label,
    }
    return json.dumps(obj, separators=(",", ":"))


def _ordered(records: Iterable[FrameRecord], origin: str) -> Iterator[FrameRecord]:
    last = None
    for rec in records:
        if last is not None and rec.frame_index <= last:
            raise OrderViolation(
                f"{origin}: frame_index {rec.frame_index} after {last} "
                "(must be strictly increasing)"
            )
        last = rec.frame_index
        yield rec


def read_session(path, frame_rate_hz: float = 10.0) -> SessionStream:
    """Open a session file for ordered streaming.

    Records are parsed lazily while iterating; an out-of-order frame_index
    raises OrderViolation at the offending record rather than being sorted
    away.  Missing files surface as the usual OSError family.
    """
    path = str(path)

    def gen() -> Iterator[FrameRecord]:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield parse_frame_record(line)

    # session_id is not known until the first record; carry the filename stem.
    import os

    session_id = os.path.splitext(os.path.basename(path))[0]
    return SessionStream(
        session_id=session_id,
        records=_ordered(gen(), origin=path),
        frame_rate_hz=frame_rate_hz,
    )


def write_session(stream: SessionStream, path) -> int:
    """Write all records of a stream to a newline-delimited file.

    Returns the number of records written.
    """
    n = 0
    with open(str(path), "w", encoding="utf-8") as fh:
        for rec in stream:
            fh.write(serialize_frame_record(rec))
            fh.write("\n")
            n += 1
    return n

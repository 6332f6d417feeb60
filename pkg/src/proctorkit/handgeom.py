"""Hand-item interaction features.

Each hand is summarized by the center of the axis-aligned hull of its 21
landmarks; each detection by its bbox center.  Per item class the report
keeps the minimum hand-to-item center distance, normalized by the frame
diagonal (sqrt(2) in normalized coordinates) so features are resolution
independent.  Distances pair hands with hand_cam detections only; both
cameras contribute presence confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaViolation
from .records import DetectionRecord, LandmarkSet, OBJECT_CLASSES

_DIAG = math.sqrt(2.0)


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise SchemaViolation(
                f"bbox corners inverted or degenerate: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if min(self.x_min, self.y_min) < 0.0 or max(self.x_max, self.y_max) > 1.0:
            raise SchemaViolation("bbox outside normalized [0, 1] range")


def bbox_center(b: BBox) -> tuple[float, float]:
    return (0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max))


def euclidean_distance(p1, p2) -> float:
    return math.hypot(p2[0] - p1[0], p2[1] - p1[1])


@dataclass(frozen=True)
class HandObservation:
    """One hand: landmarks, their hull bbox, and the hull center."""

    landmarks: LandmarkSet
    bbox: BBox
    center: tuple[float, float]

    @classmethod
    def from_landmarks(cls, landmarks: LandmarkSet) -> "HandObservation":
        xy = landmarks.points[:, :2]
        x_min, y_min = (float(v) for v in xy.min(axis=0))
        x_max, y_max = (float(v) for v in xy.max(axis=0))
        # landmark jitter can collapse the hull to a line; pad minimally
        eps = 1e-9
        if x_max - x_min < eps:
            x_min, x_max = max(0.0, x_min - eps), min(1.0, x_max + eps)
        if y_max - y_min < eps:
            y_min, y_max = max(0.0, y_min - eps), min(1.0, y_max + eps)
        box = BBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)
        return cls(landmarks=landmarks, bbox=box, center=bbox_center(box))


@dataclass(frozen=True)
class InteractionReport:
    per_class_confidence: tuple[float, ...]
    per_class_min_distance: tuple[Optional[float], ...]
    global_min_distance: Optional[float]
    num_hands: int
    num_items: int


def min_class_distances(hands: Sequence[LandmarkSet],
                        detections: Sequence[DetectionRecord]) -> InteractionReport:
    """Interaction report for one frame's hands and detections."""
    observations = [HandObservation.from_landmarks(h) for h in hands]
    conf = [0.0] * len(OBJECT_CLASSES)
    dist: list[Optional[float]] = [None] * len(OBJECT_CLASSES)
    for det in detections:
        ci = OBJECT_CLASSES.index(det.class_id)
        conf[ci] = max(conf[ci], det.confidence)
        if det.camera != "hand_cam" or not observations:
            continue
        center = (0.5 * (det.bbox[0] + det.bbox[2]), 0.5 * (det.bbox[1] + det.bbox[3]))
        d = min(euclidean_distance(o.center, center) for o in observations) / _DIAG
        if dist[ci] is None or d < dist[ci]:
            dist[ci] = d
    present = [d for d in dist if d is not None]
    return InteractionReport(
        per_class_confidence=tuple(conf),
        per_class_min_distance=tuple(dist),
        global_min_distance=min(present) if present else None,
        num_hands=len(observations),
        num_items=len(detections),
    )

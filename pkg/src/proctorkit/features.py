"""Fused per-frame feature vector, preprocessing, and window machinery.

The 27-entry schema fuses the face readings with the interaction report:

    face_count, identity_similarity,
    pitch, yaw, roll, radial, pose_zone,
    iris_ratio_left, iris_ratio_right, gaze_code,
    mouth_area_norm, mouth_state,
    conf_<class> x 6, dist_<class> x 6,
    global_min_distance, num_hands, num_items

Categorical entries are encoded ordinally (pose_zone, mouth_state) or
signed (gaze_code: -1 left, 0 center, +1 right).  Missing readings are
NaN; imputation replaces them with training-column means and the scaler
standardizes to zero mean and unit population variance (constant columns
scale by 1 and come out as zeros).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    AllMissingFeature,
    EmptyInput,
    MissingLabel,
    SchemaMismatch,
)
from .facegeom import FaceGeometryReport, GAZE_LEFT, GAZE_RIGHT
from .handgeom import InteractionReport
from .records import OBJECT_CLASSES

SCHEMA_VERSION = 1

FEATURE_NAMES: tuple[str, ...] = (
    "face_count",
    "identity_similarity",
    "pitch",
    "yaw",
    "roll",
    "radial",
    "pose_zone",
    "iris_ratio_left",
    "iris_ratio_right",
    "gaze_code",
    "mouth_area_norm",
    "mouth_state",
    *(f"conf_{c}" for c in OBJECT_CLASSES),
    *(f"dist_{c}" for c in OBJECT_CLASSES),
    "global_min_distance",
    "num_hands",
    "num_items",
)

N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 27


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...] = FEATURE_NAMES
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise SchemaMismatch("feature names must be unique")


DEFAULT_SCHEMA = FeatureSchema()

_GAZE_CODE = {GAZE_LEFT: -1.0, GAZE_RIGHT: 1.0}


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    frame_index: int
    label: Optional[bool] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (N_FEATURES,):
            raise SchemaMismatch(f"expected {N_FEATURES} values, got shape {v.shape}")
        object.__setattr__(self, "values", v)


def assemble(face: FaceGeometryReport, hand: InteractionReport,
             schema: FeatureSchema = DEFAULT_SCHEMA,
             frame_index: int = 0, label: Optional[bool] = None) -> FeatureVector:
    """Build the fused vector for one frame from its two analysis reports."""
    if schema.names != FEATURE_NAMES:
        raise SchemaMismatch("unknown feature schema")
    v = np.full(N_FEATURES, np.nan)
    v[0] = float(face.face_count)
    if face.identity is not None:
        v[1] = face.identity.similarity
    if face.pose is not None:
        v[2] = face.pose.pitch
        v[3] = face.pose.yaw
        v[4] = face.pose.roll
        v[5] = face.pose.radial
        v[6] = float(face.pose.zone)
    if face.gaze is not None:
        v[7] = face.gaze.ratio_left
        v[8] = face.gaze.ratio_right
        v[9] = _GAZE_CODE.get(face.gaze.gaze_class, 0.0)
    if face.mouth is not None:
        v[10] = face.mouth.area_norm
        v[11] = float(face.mouth.state)
    for i, conf in enumerate(hand.per_class_confidence):
        v[12 + i] = conf
    for i, dist in enumerate(hand.per_class_min_distance):
        if dist is not None:
            v[18 + i] = dist
    if hand.global_min_distance is not None:
        v[24] = hand.global_min_distance
    v[25] = float(hand.num_hands)
    v[26] = float(hand.num_items)
    return FeatureVector(values=v, frame_index=frame_index, label=label)


# ---------------------------------------------------------------------------
# imputation and scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImputerState:
    means: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class ScalerState:
    means: np.ndarray
    stds: np.ndarray


def _as_matrix(rows) -> np.ndarray:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return X


def fit_imputer(rows) -> ImputerState:
    X = _as_matrix(rows)
    if X.size == 0:
        raise EmptyInput("imputer fit needs at least one row")
    present = ~np.isnan(X)
    counts = present.sum(axis=0)
    empty = np.where(counts == 0)[0]
    if empty.size:
        names = [FEATURE_NAMES[i] if X.shape[1] == N_FEATURES else str(i) for i in empty]
        raise AllMissingFeature(f"no observed values for features: {names}")
    sums = np.where(present, X, 0.0).sum(axis=0)
    return ImputerState(means=sums / counts, counts=counts)


def apply_imputer(state: ImputerState, rows) -> np.ndarray:
    X = _as_matrix(rows).copy()
    if X.shape[1] != state.means.shape[0]:
        raise SchemaMismatch(
            f"row width {X.shape[1]} != imputer width {state.means.shape[0]}"
        )
    mask = np.isnan(X)
    X[mask] = np.broadcast_to(state.means, X.shape)[mask]
    return X[0] if np.asarray(rows).ndim == 1 else X


def fit_scaler(rows) -> ScalerState:
    X = _as_matrix(rows)
    if X.size == 0:
        raise EmptyInput("scaler fit needs at least one row")
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population std, matching the unit-variance contract
    stds = np.where(stds > 0.0, stds, 1.0)
    return ScalerState(means=means, stds=stds)


def apply_scaler(state: ScalerState, rows) -> np.ndarray:
    X = _as_matrix(rows)
    if X.shape[1] != state.means.shape[0]:
        raise SchemaMismatch(
            f"row width {X.shape[1]} != scaler width {state.means.shape[0]}"
        )
    out = (X - state.means) / state.stds
    return out[0] if np.asarray(rows).ndim == 1 else out


@dataclass(frozen=True)
class Preprocessor:
    """Frozen imputation + standardization state shared by both models."""

    imputer: ImputerState
    scaler: ScalerState
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def fit(cls, rows) -> "Preprocessor":
        imputer = fit_imputer(rows)
        filled = apply_imputer(imputer, rows)
        return cls(imputer=imputer, scaler=fit_scaler(filled))

    def transform(self, rows) -> np.ndarray:
        return apply_scaler(self.scaler, apply_imputer(self.imputer, rows))

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "feature_names": list(FEATURE_NAMES),
            "imputer_means": self.imputer.means.tolist(),
            "imputer_counts": self.imputer.counts.tolist(),
            "scaler_means": self.scaler.means.tolist(),
            "scaler_stds": self.scaler.stds.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Preprocessor":
        if obj.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatch(
                f"preprocessing state schema_version {obj.get('schema_version')} "
                f"!= {SCHEMA_VERSION}"
            )
        return cls(
            imputer=ImputerState(
                means=np.asarray(obj["imputer_means"], dtype=np.float64),
                counts=np.asarray(obj["imputer_counts"], dtype=np.int64),
            ),
            scaler=ScalerState(
                means=np.asarray(obj["scaler_means"], dtype=np.float64),
                stds=np.asarray(obj["scaler_stds"], dtype=np.float64),
            ),
        )

    def save(self, path) -> None:
        with open(str(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Preprocessor":
        with open(str(path), "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# windows and sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledSequence:
    """w consecutive feature rows targeting the label of the frame after them."""

    matrix: np.ndarray
    target: bool


def build_sequences(vectors: Sequence[FeatureVector], w: int) -> list[LabeledSequence]:
    """Sliding windows of length w; window i targets vector i + w's label."""
    if w <= 0:
        raise EmptyInput(f"window size must be positive, got {w}")
    n = len(vectors)
    for fv in vectors:
        if fv.label is None:
            raise MissingLabel(f"frame {fv.frame_index} has no label")
    out = []
    if n > w:
        stack = np.stack([fv.values for fv in vectors])
        for i in range(n - w):
            out.append(LabeledSequence(matrix=stack[i:i + w], target=bool(vectors[i + w].label)))
    return out


def sequence_arrays(X: np.ndarray, labels: np.ndarray, w: int):
    """Vectorized build_sequences on a (n, F) matrix; returns (n-w, w, F), (n-w,)."""
    n = X.shape[0]
    if n <= w:
        return np.empty((0, w, X.shape[1])), np.empty(0, dtype=bool)
    windows = np.lib.stride_tricks.sliding_window_view(X, (w, X.shape[1]))[:-1, 0]
    return np.ascontiguousarray(windows), labels[w:].astype(bool)


class WindowBuffer:
    """FIFO buffer of the most recent w feature rows."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise EmptyInput(f"window capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._rows: list[np.ndarray] = []

    def push(self, row: np.ndarray) -> None:
        self._rows.append(np.asarray(row, dtype=np.float64))
        if len(self._rows) > self.capacity:
            self._rows.pop(0)

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def full(self) -> bool:
        return len(self._rows) == self.capacity

    def as_matrix(self) -> np.ndarray:
        return np.stack(self._rows)


# ---------------------------------------------------------------------------
# feature file IO (one CSV per session)
# ---------------------------------------------------------------------------

def write_feature_csv(path, vectors: Iterable[FeatureVector]) -> int:
    """Write frame_index, the 27 features, and label; missing values as nan."""
    n = 0
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write("frame_index," + ",".join(FEATURE_NAMES) + ",label\n")
        for fv in vectors:
            cells = [str(fv.frame_index)]
            cells += [repr(float(x)) for x in fv.values]
            cells.append("" if fv.label is None else str(int(fv.label)))
            fh.write(",".join(cells) + "\n")
            n += 1
    return n


def read_feature_csv(path) -> list[FeatureVector]:
    with open(str(path), "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["frame_index", *FEATURE_NAMES, "label"]
        if header != expected:
            raise SchemaMismatch(f"feature file header mismatch in {path}")
        out = []
        for line in fh:
            cells = line.rstrip("\n").split(",")
            values = np.array([float(c) for c in cells[1:1 + N_FEATURES]])
            label_cell = cells[1 + N_FEATURES]
            out.append(
                FeatureVector(
                    values=values,
                    frame_index=int(cells[0]),
                    label=None if label_cell == "" else bool(int(label_cell)),
                )
            )
    return out

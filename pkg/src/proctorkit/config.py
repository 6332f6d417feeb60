"""Pipeline configuration: camera model, canonical face points, landmark
index mapping, and classification thresholds.

All values have embedded defaults and can be overridden from a JSON config
file (see load_config).  The canonical 3D face model is the widely used
six-point set in arbitrary model units; the landmark indices follow the
common 468-point dense-mesh topology.  That topology carries no dedicated
iris points, so the iris center is approximated by the midpoint of the
upper and lower lid landmarks of each eye.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import SchemaViolation


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model in pixels."""

    fx: float = 640.0
    fy: float = 640.0
    cx: float = 320.0
    cy: float = 240.0
    image_w: int = 640
    image_h: int = 480

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise SchemaViolation("focal lengths must be positive")
        if not (0 < self.cx < self.image_w and 0 < self.cy < self.image_h):
            raise SchemaViolation("principal point must lie inside the image")


# Six-point rigid face model (nose, chin, eye outer corners, mouth corners),
# arbitrary units.  Signs: +x subject-left in image, +y down after projection.
DEFAULT_MODEL_POINTS = (
    ("nose_tip", (0.0, 0.0, 0.0)),
    ("chin", (0.0, -330.0, -65.0)),
    ("right_eye_outer", (-225.0, 170.0, -135.0)),
    ("left_eye_outer", (225.0, 170.0, -135.0)),
    ("mouth_right", (-150.0, -150.0, -125.0)),
    ("mouth_left", (150.0, -150.0, -125.0)),
)

# Dense-mesh indices corresponding to the model points above.
DEFAULT_MODEL_INDICES = (1, 152, 33, 263, 61, 291)


@dataclass(frozen=True)
class CanonicalFaceModel:
    """Named 3D model points paired with their dense-mesh landmark indices."""

    names: tuple[str, ...] = tuple(n for n, _ in DEFAULT_MODEL_POINTS)
    points: tuple[tuple[float, float, float], ...] = tuple(p for _, p in DEFAULT_MODEL_POINTS)
    landmark_indices: tuple[int, ...] = DEFAULT_MODEL_INDICES

    def __post_init__(self):
        if not (len(self.names) == len(self.points) == len(self.landmark_indices)):
            raise SchemaViolation("model names/points/indices lengths differ")
        if len(self.points) < 6:
            raise SchemaViolation("canonical face model needs at least 6 points")
        pts = np.asarray(self.points, dtype=np.float64)
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 3:
            raise SchemaViolation("canonical model points are coplanar-degenerate")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


@dataclass(frozen=True)
class LandmarkMap:
    """Dense-mesh indices consumed by the geometric feature extractors.

    Eyes: (outer corner, inner corner, upper lid mid, lower lid mid).
    The lid midpoints average to the iris-center proxy.
    """

    right_eye: tuple[int, int, int, int] = (33, 133, 159, 145)
    left_eye: tuple[int, int, int, int] = (263, 362, 386, 374)
    interocular: tuple[int, int] = (33, 263)
    inner_lip_ring: tuple[int, ...] = (
        78, 95, 88, 178, 87, 14, 317, 402, 318, 324,
        308, 415, 310, 311, 312, 13, 82, 81, 80, 191,
    )


@dataclass(frozen=True)
class SolverSettings:
    """Damped Gauss-Newton settings for the head-pose solve."""

    max_iter: int = 100
    step_tol: float = 1e-8
    init_rvec: tuple[float, float, float] = (0.0, 0.0, 0.0)
    init_t: tuple[float, float, float] = (0.0, 0.0, 1000.0)
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    # Retry from coarse alternative orientations when the first solve lands
    # in a poor local minimum (reprojection rmse above this bound, px).
    multistart_rmse_px: float = 2.5


@dataclass(frozen=True)
class Thresholds:
    """Classification thresholds for pose zones, gaze, mouth and identity."""

    pose_zone_deg: tuple[float, float] = (15.0, 30.0)
    gaze_bounds: tuple[float, float] = (0.35, 0.65)
    mouth_area: tuple[float, float] = (0.02, 0.06)
    identity_cosine: float = 0.55


@dataclass(frozen=True)
class PipelineConfig:
    """Bundle of everything the per-frame feature extractor needs."""

    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    face_model: CanonicalFaceModel = field(default_factory=CanonicalFaceModel)
    landmark_map: LandmarkMap = field(default_factory=LandmarkMap)
    solver: SolverSettings = field(default_factory=SolverSettings)
    thresholds: Thresholds = field(default_factory=Thresholds)
    window: int = 15


def _tupled(obj):
    if isinstance(obj, list):
        return tuple(_tupled(v) for v in obj)
    return obj


def load_config(path) -> PipelineConfig:
    """Load a PipelineConfig from JSON; absent keys keep their defaults."""
    with open(str(path), "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    kwargs = {}
    sections = {
        "intrinsics": CameraIntrinsics,
        "face_model": CanonicalFaceModel,
        "landmark_map": LandmarkMap,
        "solver": SolverSettings,
        "thresholds": Thresholds,
    }
    for key, cls in sections.items():
        if key in raw:
            section = {k: _tupled(v) for k, v in raw[key].items()}
            kwargs[key] = cls(**section)
    if "window" in raw:
        kwargs["window"] = int(raw["window"])
    return PipelineConfig(**kwargs)


def save_config(cfg: PipelineConfig, path) -> None:
    """Persist a PipelineConfig as JSON."""
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")

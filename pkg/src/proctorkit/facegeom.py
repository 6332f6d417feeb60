"""Per-frame face analyses: head pose zone, gaze ratio, mouth opening,
identity match, and the single-face check.

All functions are pure; analyze_face_frame wires them together for one
FrameRecord.  Gaze left/right refers to image-space direction: the ratio
approaches 0 as the iris proxy nears the image-right eye corner and 1 near
the image-left corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import PipelineConfig
from .errors import DegenerateEye, DimensionMismatch, NotNormalized, TooFewPoints
from .pnp import euler_angles, solve_head_pose
from .records import FrameRecord

ZONE_WHITE, ZONE_YELLOW, ZONE_RED = 0, 1, 2
MOUTH_CLOSED, MOUTH_PARTIAL, MOUTH_OPEN = 0, 1, 2
GAZE_LEFT, GAZE_CENTER, GAZE_RIGHT = "left", "center", "right"


@dataclass(frozen=True)
class HeadPose:
    pitch: float
    yaw: float
    roll: float
    radial: float
    zone: int
    reproj_rmse: float
    converged: bool


@dataclass(frozen=True)
class GazeReading:
    ratio_left: float
    ratio_right: float
    gaze_class: str


@dataclass(frozen=True)
class MouthReading:
    area_norm: float
    state: int


@dataclass(frozen=True)
class IdentityReading:
    similarity: float
    match: bool
    threshold_used: float


@dataclass(frozen=True)
class FaceGeometryReport:
    face_count: int
    pose: Optional[HeadPose]
    gaze: Optional[GazeReading]
    mouth: Optional[MouthReading]
    identity: Optional[IdentityReading]
    single_face_ok: bool


def radial_deviation(pitch: float, yaw: float, roll: float) -> float:
    """Root-sum-square magnitude of the three pose angles."""
    return math.sqrt(pitch * pitch + yaw * yaw + roll * roll)


def classify_pose_zone(radial: float, thresholds: tuple[float, float] = (15.0, 30.0)) -> int:
    white_max, yellow_max = thresholds
    if radial <= white_max:
        return ZONE_WHITE
    if radial <= yellow_max:
        return ZONE_YELLOW
    return ZONE_RED


def iris_ratio(c, p_left, p_right) -> float:
    """Position of the iris center between the eye corners, clamped to [0, 1]."""
    c = np.asarray(c, dtype=np.float64)
    pl = np.asarray(p_left, dtype=np.float64)
    pr = np.asarray(p_right, dtype=np.float64)
    span = float(np.linalg.norm(pl - pr))
    if span < 1e-9:
        raise DegenerateEye("eye corner points coincide")
    ratio = float(np.linalg.norm(c - pr)) / span
    return min(1.0, max(0.0, ratio))


def classify_gaze(ratio_left: float, ratio_right: float,
                  bounds: tuple[float, float] = (0.35, 0.65)) -> str:
    m = 0.5 * (ratio_left + ratio_right)
    lower, upper = bounds
    if m < lower:
        return GAZE_RIGHT
    if m > upper:
        return GAZE_LEFT
    return GAZE_CENTER


def mouth_area(polygon) -> float:
    """Absolute polygon area by the shoelace sum with wraparound."""
    pts = np.asarray(polygon, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise TooFewPoints(f"polygon needs >= 3 2D points, got shape {pts.shape}")
    x = pts[:, 0]
    y = pts[:, 1]
    s = float(np.sum(x * np.roll(y, -1) - y * np.roll(x, -1)))
    return 0.5 * abs(s)


def classify_mouth(area_norm: float, thresholds: tuple[float, float] = (0.02, 0.06)) -> int:
    closed_max, partial_max = thresholds
    if area_norm < closed_max:
        return MOUTH_CLOSED
    if area_norm < partial_max:
        return MOUTH_PARTIAL
    return MOUTH_OPEN


def verify_identity(live, reference, threshold: float = 0.55) -> IdentityReading:
    """Cosine similarity of two L2-normalized embeddings against a threshold."""
    a = np.asarray(live, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    for name, v in (("live", a), ("reference", b)):
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise NotNormalized(f"{name} embedding has L2 norm {norm}, expected 1")
    sim = float(a @ b)
    return IdentityReading(similarity=sim, match=sim >= threshold, threshold_used=threshold)


def _eye_reading(px_pts: np.ndarray, eye_indices: tuple[int, int, int, int]) -> float:
    outer, inner, lid_top, lid_bot = eye_indices
    corners = px_pts[[outer, inner]]
    # image-space roles: p_left is the smaller-x corner
    if corners[0, 0] <= corners[1, 0]:
        p_left, p_right = corners[0], corners[1]
    else:
        p_left, p_right = corners[1], corners[0]
    center = 0.5 * (px_pts[lid_top] + px_pts[lid_bot])
    return iris_ratio(center, p_left, p_right)


def analyze_face_frame(record: FrameRecord, cfg: PipelineConfig,
                       reference_embedding=None) -> FaceGeometryReport:
    """Run every face analysis available for one frame.

    face_count = 0 (or no landmark payload) yields a report with all
    optional readings missing; the single-face flag is independent of the
    analyses and simply records whether exactly one face was seen.
    """
    pose = gaze = mouth = identity = None
    if record.face_count >= 1 and record.face_landmarks is not None:
        try:
            pts = record.face_landmarks.points
            xy = pts[:, :2].copy()
            thresholds = cfg.thresholds

            # head pose from the mapped subset, in pixel coordinates
            scale = np.array([cfg.intrinsics.image_w, cfg.intrinsics.image_h], dtype=np.float64)
            px = xy * scale
            pts2d = px[list(cfg.face_model.landmark_indices)]
            fit = solve_head_pose(pts2d, cfg.face_model, cfg.intrinsics, cfg.solver)
            pitch, yaw, roll = euler_angles(fit.rotation)
            radial = radial_deviation(pitch, yaw, roll)
            pose = HeadPose(
                pitch=pitch, yaw=yaw, roll=roll, radial=radial,
                zone=classify_pose_zone(radial, thresholds.pose_zone_deg),
                reproj_rmse=fit.reproj_rmse, converged=fit.converged,
            )

            lm = cfg.landmark_map
            ratio_right = _eye_reading(xy, lm.right_eye)
            ratio_left = _eye_reading(xy, lm.left_eye)
            gaze = GazeReading(
                ratio_left=ratio_left, ratio_right=ratio_right,
                gaze_class=classify_gaze(ratio_left, ratio_right, thresholds.gaze_bounds),
            )

            d_io = float(np.linalg.norm(xy[lm.interocular[0]] - xy[lm.interocular[1]]))
            area = mouth_area(xy[list(lm.inner_lip_ring)])
            area_norm = area / (d_io * d_io) if d_io > 1e-9 else 0.0
            mouth = MouthReading(
                area_norm=area_norm,
                state=classify_mouth(area_norm, thresholds.mouth_area),
            )

            if record.live_embedding is not None and reference_embedding is not None:
                identity = verify_identity(
                    record.live_embedding, reference_embedding, thresholds.identity_cosine
                )
        except Exception as exc:
            raise type(exc)(
                f"session {record.session_id} frame {record.frame_index}: {exc}"
            ) from exc

    return FaceGeometryReport(
        face_count=record.face_count,
        pose=pose,
        gaze=gaze,
        mouth=mouth,
        identity=identity,
        single_face_ok=record.face_count == 1,
    )

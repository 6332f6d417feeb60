"""Head pose from 2D-3D point correspondences.

The solve minimizes summed squared pixel reprojection error under a
pinhole model with a damped Gauss-Newton (Levenberg-Marquardt) loop over
axis-angle rotation plus translation.  The default start is the resting
orientation; because the reprojection cost has distant local minima for
large combined rotations, the solver escalates through a small fixed
ladder of coarse alternative orientations whenever the first fit keeps an
implausibly large residual, and returns the best iterate found either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .config import CameraIntrinsics, CanonicalFaceModel, SolverSettings
from .errors import DegenerateInput, NonFiniteInput, NotARotation


def rotation_xyz(pitch_deg: float, yaw_deg: float, roll_deg: float) -> np.ndarray:
    """Rotation matrix Rz(roll) @ Ry(yaw) @ Rx(pitch), angles in degrees."""
    a = math.radians(pitch_deg)
    b = math.radians(yaw_deg)
    c = math.radians(roll_deg)
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    Ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    Rz = np.array([[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]])
    return Rz @ Ry @ Rx


def rodrigues(rvec: np.ndarray) -> np.ndarray:
    """Axis-angle vector to rotation matrix."""
    return kernels._rodrigues_np(np.asarray(rvec, dtype=np.float64))


def axis_angle(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle vector (inverse of rodrigues)."""
    tr = float(np.trace(R))
    theta = math.acos(min(1.0, max(-1.0, (tr - 1.0) / 2.0)))
    if theta < 1e-12:
        return np.zeros(3)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return axis / (2.0 * math.sin(theta)) * theta


def project_points(R: np.ndarray, t: np.ndarray, pts3: np.ndarray,
                   intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of 3D model points to pixel coordinates."""
    p = np.asarray(pts3, dtype=np.float64) @ np.asarray(R).T + np.asarray(t, dtype=np.float64)
    u = intrinsics.fx * p[:, 0] / p[:, 2] + intrinsics.cx
    v = intrinsics.fy * p[:, 1] / p[:, 2] + intrinsics.cy
    return np.column_stack((u, v))


def euler_angles(R: np.ndarray) -> tuple[float, float, float]:
    """Tait-Bryan (pitch, yaw, roll) in degrees from R = Rz·Ry·Rx.

    Angles fall in (-180, 180]; at the gimbal singularity |yaw| = 90 the
    decomposition fixes roll = 0.
    """
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        raise NotARotation(f"expected finite 3x3 matrix, got shape {R.shape}")
    if not np.allclose(R @ R.T, np.eye(3), atol=1e-6) or np.linalg.det(R) < 0.0:
        raise NotARotation("matrix is not orthonormal with determinant +1")
    s = -R[2, 0]
    if abs(s) >= 1.0 - 1e-12:
        yaw = math.copysign(90.0, s)
        roll = 0.0
        if s > 0:
            pitch = math.degrees(math.atan2(R[0, 1], R[0, 2]))
        else:
            pitch = math.degrees(math.atan2(-R[0, 1], -R[0, 2]))
    else:
        yaw = math.degrees(math.asin(s))
        pitch = math.degrees(math.atan2(R[2, 1], R[2, 2]))
        roll = math.degrees(math.atan2(R[1, 0], R[0, 0]))
    return pitch, yaw, roll


@dataclass(frozen=True)
class PoseFit:
    """Result of a head pose solve."""

    rotation: np.ndarray
    translation: np.ndarray
    reproj_rmse: float
    converged: bool


# Euler triples for multistart retries, coarse enough to cover the basin
# structure of the six-point face target.
_RETRY_EULER = (
    (40.0, 0.0, 0.0), (-40.0, 0.0, 0.0),
    (0.0, 40.0, 0.0), (0.0, -40.0, 0.0),
    (0.0, 0.0, 45.0), (0.0, 0.0, -45.0),
) + tuple(
    (p, y, r)
    for p in (-40.0, 40.0)
    for y in (-40.0, 40.0)
    for r in (-45.0, 45.0)
)


def _lm_from(params0: np.ndarray, pts3: np.ndarray, obs: np.ndarray,
             intr: CameraIntrinsics, cfg: SolverSettings):
    fx, fy, cx, cy = intr.fx, intr.fy, intr.cx, intr.cy
    params = params0.copy()
    lam = cfg.damping_init
    res, J = kernels.pnp_step(params, pts3, obs, fx, fy, cx, cy)
    cost = float(res @ res)
    converged = False
    eye6 = np.eye(6)
    for _ in range(cfg.max_iter):
        g = J.T @ res
        H = J.T @ J
        try:
            step = np.linalg.solve(H + lam * eye6, -g)
        except np.linalg.LinAlgError:
            lam = min(lam * cfg.damping_up, 1e12)
            continue
        cand = params + step
        res_c, J_c = kernels.pnp_step(cand, pts3, obs, fx, fy, cx, cy)
        cost_c = float(res_c @ res_c)
        if cost_c < cost:
            params, res, J, cost = cand, res_c, J_c, cost_c
            lam = max(lam / cfg.damping_down, 1e-12)
            if float(np.linalg.norm(step)) < cfg.step_tol:
                converged = True
                break
        else:
            lam = min(lam * cfg.damping_up, 1e12)
            if lam >= 1e12:
                break
    rmse = math.sqrt(cost / res.size)
    return params, rmse, converged


def solve_head_pose(points2d: np.ndarray, model: CanonicalFaceModel,
                    intrinsics: CameraIntrinsics,
                    cfg: SolverSettings = SolverSettings()) -> PoseFit:
    """Fit rotation and translation mapping model points onto pixel points."""
    obs = np.ascontiguousarray(points2d, dtype=np.float64)
    pts3 = np.ascontiguousarray(model.as_array())
    if obs.ndim != 2 or obs.shape[1] != 2 or obs.shape[0] != pts3.shape[0]:
        raise DegenerateInput(
            f"need one 2D point per model point, got {obs.shape} vs {pts3.shape[0]}"
        )
    if obs.shape[0] < 4:
        raise DegenerateInput(f"pose solve needs at least 4 points, got {obs.shape[0]}")
    if not np.isfinite(obs).all():
        raise NonFiniteInput("2D points contain NaN or inf")

    init = np.concatenate([np.asarray(cfg.init_rvec, dtype=np.float64),
                           np.asarray(cfg.init_t, dtype=np.float64)])
    best = _lm_from(init, pts3, obs, intrinsics, cfg)
    if best[1] > cfg.multistart_rmse_px:
        t0 = np.asarray(cfg.init_t, dtype=np.float64)
        for euler in _RETRY_EULER:
            rvec = axis_angle(rotation_xyz(*euler))
            cand = _lm_from(np.concatenate([rvec, t0]), pts3, obs, intrinsics, cfg)
            if cand[1] < best[1]:
                best = cand
            if best[1] <= cfg.multistart_rmse_px:
                break
    params, rmse, converged = best
    return PoseFit(
        rotation=rodrigues(params[:3]),
        translation=params[3:6].copy(),
        reproj_rmse=rmse,
        converged=converged,
    )

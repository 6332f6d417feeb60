"""Deterministic synthetic exam sessions with ground-truth labels.

Generation works backward from feature semantics: landmarks, boxes and
embeddings are placed so that the geometry modules recover the scripted
pose, gaze ratio, mouth area, identity similarity and hand-item
distances.  That makes the generator an end-to-end oracle for the
extraction pipeline, not just a data source.

Behaviors and their characteristic, verifiable feature ranges (holding
for at least ~90% of each behavior's frames; jitter and scripted noise
cause the exceptions):

    normal      radial deviation <= 15 (white zone), gaze center, mouth
                closed, no items except rare spurious detections; brief
                innocuous "twitches" (head flick, mouth open, gaze dart)
                that stay labeled 0
    look_away   yaw ramps past the red-zone bound and holds (radial > 15)
    phone_use   cell_phone detection whose center converges to the hand
                center (confidence present despite dropout)
    talking     inner-lip polygon area oscillating above the open bound
    impostor    live embedding similarity well below the identity bound
    notes_peek  chits/sheet detections, intermittent hand proximity,
                sustained downward pitch

A frame is labeled 1 iff it belongs to a non-normal segment.  Everything
is bitwise deterministic given the script seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import PipelineConfig
from .errors import ScriptTooShort, SchemaViolation
from .pnp import project_points, rotation_xyz
from .records import (
    DetectionRecord,
    FrameRecord,
    LandmarkSet,
    SessionStream,
)

BEHAVIORS = ("normal", "look_away", "phone_use", "talking", "impostor", "notes_peek")

REFERENCE_EMBEDDING_SEED = 7321
_ROUND_DP = 6  # landmark serialization precision, far below jitter scale


@dataclass(frozen=True)
class BehaviorSegment:
    behavior: str
    duration_frames: int

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise SchemaViolation(f"unknown behavior {self.behavior!r}")
        if self.duration_frames < 1:
            raise SchemaViolation("segment duration must be >= 1 frame")


@dataclass(frozen=True)
class ScenarioScript:
    session_id: str
    segments: tuple[BehaviorSegment, ...]
    frame_rate_hz: float = 10.0
    landmark_jitter: float = 0.002
    detection_dropout: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def total_frames(self) -> int:
        return sum(s.duration_frames for s in self.segments)


def reference_embedding(seed: int = REFERENCE_EMBEDDING_SEED) -> np.ndarray:
    """The registered examinee's identity vector, unit norm."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=512)
    return v / np.linalg.norm(v)


def _embedding_at_similarity(rng, ref: np.ndarray, sim: float) -> np.ndarray:
    """Unit vector whose cosine against ref equals sim (up to fp)."""
    sim = float(np.clip(sim, -0.999999, 0.999999))
    w = rng.normal(size=ref.size)
    w -= (w @ ref) * ref
    w /= np.linalg.norm(w)
    v = sim * ref + math.sqrt(1.0 - sim * sim) * w
    return v / np.linalg.norm(v)


# fixed filler cloud for the unmapped dense-mesh slots (not read downstream)
_FILLER = np.random.default_rng(424242).uniform(-0.5, 0.5, (468, 3))

# fixed 21-point hand silhouette
_HAND_TEMPLATE = np.random.default_rng(212121).uniform(-1.0, 1.0, (21, 3))


@dataclass
class _FrameSpec:
    """Scripted per-frame targets handed to the landmark placer."""

    pitch: float = 0.0
    yaw: float = 0.0
    roll: float = 0.0
    gaze_ratio: float = 0.5
    mouth_area_norm: float = 0.008
    similarity: float = 0.97
    face_count: int = 1
    hands: list = field(default_factory=list)          # hand centers
    detections: list = field(default_factory=list)     # (class_id, conf, center, half, camera)


class _SessionBuilder:
    def __init__(self, script: ScenarioScript, cfg: PipelineConfig, ref: np.ndarray):
        self.script = script
        self.cfg = cfg
        self.ref = ref
        self.rng = np.random.default_rng(script.seed)
        self.intr = cfg.intrinsics
        self.model_pts = cfg.face_model.as_array()
        self.scale = np.array([self.intr.image_w, self.intr.image_h], dtype=np.float64)
        self.hand_pos = np.array([0.5, 0.62])

    # -- placement pieces -------------------------------------------------

    def _face_landmarks(self, spec: _FrameSpec) -> np.ndarray:
        lm_map = self.cfg.landmark_map
        R = rotation_xyz(spec.pitch, spec.yaw, spec.roll)
        t = np.array([0.0, 0.0, 1100.0])
        px6 = project_points(R, t, self.model_pts, self.intr)
        norm6 = px6 / self.scale

        right_outer = norm6[2]
        left_outer = norm6[3]
        d_io = float(np.linalg.norm(left_outer - right_outer))
        axis = (left_outer - right_outer) / d_io
        perp = np.array([-axis[1], axis[0]])

        center = norm6.mean(axis=0)
        pts = np.empty((468, 3))
        pts[:, :2] = center + _FILLER[:, :2] * (1.6 * d_io)
        pts[:, 2] = _FILLER[:, 2] * 0.05

        for row, idx in enumerate(self.cfg.face_model.landmark_indices):
            pts[idx, :2] = norm6[row]

        def place_eye(indices, outer_xy, inward_sign):
            outer, inner, lid_top, lid_bot = indices
            inner_xy = outer_xy + inward_sign * 0.28 * d_io * axis
            pts[inner, :2] = inner_xy
            corners = (outer_xy, inner_xy)
            if corners[0][0] <= corners[1][0]:
                p_left, p_right = corners[0], corners[1]
            else:
                p_left, p_right = corners[1], corners[0]
            c = p_right + spec.gaze_ratio * (p_left - p_right)
            pts[lid_top, :2] = c - 0.025 * d_io * perp
            pts[lid_bot, :2] = c + 0.025 * d_io * perp

        place_eye(lm_map.right_eye, right_outer, +1.0)
        place_eye(lm_map.left_eye, left_outer, -1.0)

        ring = lm_map.inner_lip_ring
        n_ring = len(ring)
        mouth_c = 0.5 * (norm6[4] + norm6[5])
        a = 0.22 * d_io
        area = spec.mouth_area_norm * d_io * d_io
        b = area / (0.5 * n_ring * math.sin(2.0 * math.pi / n_ring) * a)
        phis = 2.0 * math.pi * np.arange(n_ring) / n_ring
        ring_xy = (
            mouth_c
            + np.outer(a * np.cos(phis), axis)
            + np.outer(b * np.sin(phis), perp)
        )
        for j, idx in enumerate(ring):
            pts[idx, :2] = ring_xy[j]

        pts[:, :2] += self.rng.normal(0.0, self.script.landmark_jitter, (468, 2))
        np.clip(pts[:, :2], 0.0, 1.0, out=pts[:, :2])
        return np.round(pts, _ROUND_DP)

    def _hand_landmarks(self, center: np.ndarray) -> np.ndarray:
        pts = np.empty((21, 3))
        pts[:, :2] = center + _HAND_TEMPLATE[:, :2] * 0.05
        pts[:, 2] = _HAND_TEMPLATE[:, 2] * 0.02
        pts[:, :2] += self.rng.normal(0.0, self.script.landmark_jitter, (21, 2))
        np.clip(pts[:, :2], 0.0, 1.0, out=pts[:, :2])
        return np.round(pts, _ROUND_DP)

    def _detection(self, class_id, conf, center, half, camera) -> Optional[DetectionRecord]:
        if self.rng.random() < self.script.detection_dropout:
            return None
        hw, hh = half
        cx = float(np.clip(center[0], hw + 1e-4, 1.0 - hw - 1e-4))
        cy = float(np.clip(center[1], hh + 1e-4, 1.0 - hh - 1e-4))
        bbox = (
            round(cx - hw, _ROUND_DP), round(cy - hh, _ROUND_DP),
            round(cx + hw, _ROUND_DP), round(cy + hh, _ROUND_DP),
        )
        return DetectionRecord(
            class_id=class_id, confidence=round(float(conf), 4),
            bbox=bbox, camera=camera,
        )

    def _wander_hand(self, sigma: float = 0.01) -> np.ndarray:
        self.hand_pos = np.clip(
            self.hand_pos + self.rng.normal(0.0, sigma, 2), 0.2, 0.8
        )
        return self.hand_pos.copy()

    # -- per-behavior frame specs -----------------------------------------

    def _start_twitch(self, state: dict) -> None:
        """Arm a 1-2 frame burst whose single-frame signature matches one of
        the cheating behaviors; only duration and context tell them apart."""
        rng = self.rng
        state["twitch"] = int(rng.integers(1, 3))
        kind = ("head", "mouth", "gaze", "object", "identity")[int(rng.integers(0, 5))]
        state["twitch_kind"] = kind
        if kind == "head":
            if rng.random() < 0.6:  # sideways glance, matching the look-away plateau
                state["twitch_axis"] = "yaw"
                state["twitch_val"] = float(rng.choice((-1, 1)) * rng.uniform(33.0, 55.0))
            else:  # downward glance, matching phone/notes pitch
                state["twitch_axis"] = "pitch"
                state["twitch_val"] = -float(rng.uniform(12.0, 30.0))
        elif kind == "mouth":
            state["twitch_val"] = 0.045 + 0.045 * abs(math.sin(rng.uniform(0.0, math.pi)))
        elif kind == "gaze":
            state["twitch_val"] = float(
                rng.uniform(0.14, 0.26) if rng.random() < 0.5 else rng.uniform(0.74, 0.86)
            )
        elif kind == "object":
            d = rng.normal(size=2)
            if rng.random() < 0.6:
                cls = "cell_phone"
                conf = float(rng.uniform(0.55, 0.95))
                dist = float(rng.uniform(0.015, 0.05))
            else:
                cls = "chits" if rng.random() < 0.5 else "sheet"
                conf = float(rng.uniform(0.45, 0.85))
                dist = float(rng.uniform(0.06, 0.18))
            state["twitch_obj"] = (cls, conf, dist, d / np.linalg.norm(d))
        else:
            state["twitch_val"] = float(rng.uniform(0.27, 0.47))

    def _spec_normal(self, i: int, state: dict) -> _FrameSpec:
        rng = self.rng
        spec = _FrameSpec()
        if state.get("twitch", 0) == 0 and rng.random() < 0.035:
            self._start_twitch(state)
        twitch_kind = None
        if state.get("twitch", 0) > 0:
            state["twitch"] -= 1
            twitch_kind = state["twitch_kind"]

        spec.pitch = float(np.clip(rng.normal(0.0, 2.5), -8.0, 8.0))
        spec.yaw = float(np.clip(rng.normal(0.0, 2.5), -8.0, 8.0))
        spec.roll = float(np.clip(rng.normal(0.0, 2.0), -6.0, 6.0))
        spec.gaze_ratio = float(np.clip(rng.normal(0.5, 0.03), 0.42, 0.58))
        spec.mouth_area_norm = float(np.clip(0.006 + abs(rng.normal(0.0, 0.004)), 0.001, 0.018))
        spec.similarity = float(np.clip(rng.normal(0.97, 0.008), 0.9, 0.999))

        if twitch_kind == "head":
            spec.yaw = state["twitch_val"] + rng.normal(0.0, 2.5)
            spec.pitch = rng.normal(0.0, 3.0)
            spec.gaze_ratio = (0.8 if state["twitch_val"] < 0 else 0.2) + rng.normal(0.0, 0.03)
        elif twitch_kind == "mouth":
            spec.mouth_area_norm = float(np.clip(state["twitch_val"] + rng.normal(0.0, 0.005), 0.03, 0.14))
        elif twitch_kind == "gaze":
            spec.gaze_ratio = state["twitch_val"] + rng.normal(0.0, 0.02)
        elif twitch_kind == "identity":
            spec.similarity = float(np.clip(state["twitch_val"] + rng.normal(0.0, 0.02), 0.1, 0.55))

        hand = self._wander_hand()
        spec.hands = [hand]
        if twitch_kind == "object":
            cls, conf, dist, direction = state["twitch_obj"]
            center = hand + direction * (dist + abs(rng.normal(0.0, 0.01)))
            spec.detections.append((cls, conf, center, (0.05, 0.035), "hand_cam"))
        if rng.random() < 0.012:  # spurious background detection, far from hand
            cls = ("watch", "closed_book", "chits", "headphone")[int(rng.integers(0, 4))]
            direction = rng.normal(size=2)
            direction /= np.linalg.norm(direction)
            pos = np.clip(hand + direction * 0.45, 0.08, 0.92)
            spec.detections.append(
                (cls, rng.uniform(0.3, 0.55), pos, (0.04, 0.04), "hand_cam")
            )
        return spec

    def _spec_look_away(self, i: int, state: dict) -> _FrameSpec:
        rng = self.rng
        if "target" not in state:
            state["target"] = float(rng.choice((-1, 1)) * rng.uniform(35.0, 55.0))
        ramp = min(1.0, i / 8.0)
        spec = _FrameSpec()
        spec.yaw = ramp * state["target"] + rng.normal(0.0, 2.5)
        spec.pitch = rng.normal(0.0, 3.0)
        spec.roll = rng.normal(0.0, 2.0)
        spec.gaze_ratio = 0.8 if state["target"] < 0 else 0.2
        spec.gaze_ratio += rng.normal(0.0, 0.03)
        spec.mouth_area_norm = float(np.clip(0.006 + abs(rng.normal(0.0, 0.004)), 0.001, 0.018))
        spec.similarity = float(np.clip(rng.normal(0.97, 0.008), 0.9, 0.999))
        spec.hands = [self._wander_hand()]
        return spec

    def _spec_phone_use(self, i: int, state: dict) -> _FrameSpec:
        rng = self.rng
        spec = _FrameSpec()
        spec.pitch = -(10.0 + 8.0 * abs(math.sin(0.15 * i))) + rng.normal(0.0, 2.0)
        spec.yaw = rng.normal(0.0, 3.0)
        spec.roll = rng.normal(0.0, 2.0)
        spec.gaze_ratio = float(np.clip(rng.normal(0.5, 0.04), 0.38, 0.62))
        spec.mouth_area_norm = float(np.clip(0.006 + abs(rng.normal(0.0, 0.004)), 0.001, 0.018))
        spec.similarity = float(np.clip(rng.normal(0.97, 0.008), 0.9, 0.999))
        hand = self._wander_hand(sigma=0.006)
        spec.hands = [hand]
        dist = 0.3 * (0.8 ** i) + 0.015 + abs(rng.normal(0.0, 0.01))
        if "phone_dir" not in state:
            d = rng.normal(size=2)
            state["phone_dir"] = d / np.linalg.norm(d)
        center = hand + state["phone_dir"] * dist
        spec.detections.append(
            ("cell_phone", rng.uniform(0.55, 0.95), center, (0.05, 0.035), "hand_cam")
        )
        if rng.random() < 0.1:
            spec.detections.append(
                ("cell_phone", rng.uniform(0.4, 0.7), np.array([0.5, 0.75]), (0.04, 0.03), "face_cam")
            )
        return spec

    def _spec_talking(self, i: int, state: dict) -> _FrameSpec:
        rng = self.rng
        if "phase" not in state:
            state["phase"] = float(rng.uniform(0.0, math.pi))
        spec = _FrameSpec()
        spec.pitch = float(np.clip(rng.normal(0.0, 2.5), -8.0, 8.0))
        spec.yaw = float(np.clip(rng.normal(0.0, 2.5), -8.0, 8.0))
        spec.roll = float(np.clip(rng.normal(0.0, 2.0), -6.0, 6.0))
        spec.gaze_ratio = float(np.clip(rng.normal(0.5, 0.03), 0.42, 0.58))
        area = 0.045 + 0.045 * abs(math.sin(0.7 * i + state["phase"])) + rng.normal(0.0, 0.005)
        spec.mouth_area_norm = float(np.clip(area, 0.03, 0.14))
        spec.similarity = float(np.clip(rng.normal(0.97, 0.008), 0.9, 0.999))
        spec.hands = [self._wander_hand()]
        return spec

    def _spec_impostor(self, i: int, state: dict) -> _FrameSpec:
        rng = self.rng
        spec = self._spec_normal(i, state)
        spec.similarity = float(np.clip(rng.uniform(0.25, 0.45) + rng.normal(0.0, 0.02), 0.1, 0.5))
        return spec

    def _spec_notes_peek(self, i: int, state: dict) -> _FrameSpec:
        rng = self.rng
        if "note_pos" not in state:
            state["note_pos"] = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)])
            state["note_cls"] = "chits" if rng.random() < 0.5 else "sheet"
        spec = _FrameSpec()
        spec.pitch = -(18.0 + 10.0 * abs(math.sin(0.11 * i))) + rng.normal(0.0, 2.5)
        spec.yaw = rng.normal(0.0, 4.0)
        spec.roll = rng.normal(0.0, 2.0)
        spec.gaze_ratio = float(np.clip(rng.normal(0.5, 0.04), 0.38, 0.62))
        spec.mouth_area_norm = float(np.clip(0.006 + abs(rng.normal(0.0, 0.004)), 0.001, 0.018))
        spec.similarity = float(np.clip(rng.normal(0.97, 0.008), 0.9, 0.999))
        note = state["note_pos"]
        reach = 0.08 + 0.1 * abs(math.sin(0.2 * i)) + abs(rng.normal(0.0, 0.01))
        if "reach_dir" not in state:
            d = rng.normal(size=2)
            state["reach_dir"] = d / np.linalg.norm(d)
        hand = np.clip(note + state["reach_dir"] * reach, 0.1, 0.9)
        self.hand_pos = hand
        spec.hands = [hand]
        spec.detections.append(
            (state["note_cls"], rng.uniform(0.45, 0.85), note, (0.06, 0.045), "hand_cam")
        )
        if rng.random() < 0.3:
            other = "sheet" if state["note_cls"] == "chits" else "chits"
            spec.detections.append(
                (other, rng.uniform(0.35, 0.7), note + np.array([0.12, 0.05]), (0.05, 0.04), "hand_cam")
            )
        return spec

    # -- assembly ----------------------------------------------------------

    def build(self) -> list[FrameRecord]:
        script = self.script
        makers = {
            "normal": self._spec_normal,
            "look_away": self._spec_look_away,
            "phone_use": self._spec_phone_use,
            "talking": self._spec_talking,
            "impostor": self._spec_impostor,
            "notes_peek": self._spec_notes_peek,
        }
        frames: list[FrameRecord] = []
        index = 0
        for segment in script.segments:
            state: dict = {}
            for i in range(segment.duration_frames):
                spec = makers[segment.behavior](i, state)
                label = segment.behavior != "normal"

                roll_face = self.rng.random()
                if roll_face < 0.01:
                    spec.face_count = 0
                elif roll_face < 0.015:
                    spec.face_count = 2

                if spec.face_count >= 1:
                    face_lm = LandmarkSet(points=self._face_landmarks(spec), kind="face468")
                    emb = _embedding_at_similarity(self.rng, self.ref, spec.similarity)
                else:
                    face_lm = None
                    emb = None

                hands = []
                if self.rng.random() >= 0.01:  # rare tracking dropout
                    hands = [
                        LandmarkSet(points=self._hand_landmarks(np.asarray(c)), kind="hand21")
                        for c in spec.hands
                    ]

                detections = []
                for det in spec.detections:
                    built = self._detection(*det)
                    if built is not None:
                        detections.append(built)

                frames.append(
                    FrameRecord(
                        session_id=script.session_id,
                        frame_index=index,
                        timestamp_ms=int(round(1000.0 * index / script.frame_rate_hz)),
                        face_landmarks=face_lm,
                        face_count=spec.face_count,
                        live_embedding=emb,
                        hands=tuple(hands),
                        detections=tuple(detections),
                        label=label,
                    )
                )
                index += 1
        return frames


def generate_session(script: ScenarioScript, cfg: Optional[PipelineConfig] = None,
                     ref: Optional[np.ndarray] = None,
                     min_frames: int = 16) -> SessionStream:
    """Materialize one scripted session as an ordered record stream."""
    if script.total_frames < min_frames:
        raise ScriptTooShort(
            f"script has {script.total_frames} frames, need >= {min_frames}"
        )
    cfg = cfg or PipelineConfig()
    ref = ref if ref is not None else reference_embedding()
    frames = _SessionBuilder(script, cfg, ref).build()
    return SessionStream(
        session_id=script.session_id,
        records=frames,
        frame_rate_hz=script.frame_rate_hz,
    )


# ---------------------------------------------------------------------------
# the fixed benchmark suite
# ---------------------------------------------------------------------------

def _seg(behavior: str, n: int) -> BehaviorSegment:
    return BehaviorSegment(behavior=behavior, duration_frames=n)


def default_benchmark() -> tuple[list[ScenarioScript], list[ScenarioScript]]:
    """Ten fixed-seed scripted sessions split 8:2 (80:20 by duration).

    Roughly one third of each session is cheating; all six behaviors occur
    in both splits combined, and noise levels vary across sessions.
    """
    plans = [
        # (segments, jitter, dropout)
        ([_seg("normal", 140), _seg("look_away", 70), _seg("normal", 120),
          _seg("phone_use", 110), _seg("normal", 160)], 0.002, 0.05),
        ([_seg("normal", 160), _seg("talking", 90), _seg("normal", 130),
          _seg("impostor", 80), _seg("normal", 140)], 0.0015, 0.04),
        ([_seg("normal", 130), _seg("notes_peek", 100), _seg("normal", 150),
          _seg("phone_use", 90), _seg("normal", 130)], 0.0025, 0.06),
        ([_seg("normal", 180), _seg("look_away", 60), _seg("normal", 120),
          _seg("talking", 80), _seg("normal", 160)], 0.002, 0.05),
        ([_seg("normal", 150), _seg("phone_use", 120), _seg("normal", 140),
          _seg("notes_peek", 80), _seg("normal", 110)], 0.003, 0.08),
        ([_seg("normal", 170), _seg("impostor", 90), _seg("normal", 130),
          _seg("look_away", 70), _seg("normal", 140)], 0.0015, 0.03),
        ([_seg("normal", 140), _seg("talking", 100), _seg("normal", 120),
          _seg("phone_use", 100), _seg("normal", 140)], 0.002, 0.05),
        ([_seg("normal", 160), _seg("notes_peek", 90), _seg("normal", 130),
          _seg("impostor", 70), _seg("normal", 150)], 0.0025, 0.06),
        # test sessions
        ([_seg("normal", 150), _seg("phone_use", 110), _seg("normal", 130),
          _seg("look_away", 80), _seg("normal", 80), _seg("talking", 50)], 0.002, 0.05),
        ([_seg("normal", 140), _seg("impostor", 90), _seg("normal", 120),
          _seg("notes_peek", 100), _seg("normal", 90), _seg("phone_use", 60)], 0.0025, 0.06),
    ]
    scripts = [
        ScenarioScript(
            session_id=f"bench-{i:02d}",
            segments=tuple(segs),
            frame_rate_hz=10.0,
            landmark_jitter=jitter,
            detection_dropout=dropout,
            seed=1000 + i,
        )
        for i, (segs, jitter, dropout) in enumerate(plans)
    ]
    return scripts[:8], scripts[8:]

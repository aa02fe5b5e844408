"""Synthetic walking sequences with exact ground truth.

The walker lays down a steady-state gait: the pelvis advances at constant
speed along the heading, each foot alternates between a stance phase (ground
position exactly constant) and a cycloidal swing that advances one stride
(two step lengths) with zero velocity at lift-off and touchdown.  Landings
happen every step time T; after each landing both feet stay planted for the
double-support fraction of T.

The sequence starts mid-swing before the first in-sequence landing and ends
mid-swing after the last one, so every landing is an interior maximum of the
inter-ankle distance signal, and the noiseless signal attains the configured
step length exactly during each double-support plateau.

All joint positions are generated through the same kinematic tree the
optimizer fits (legs via closed-form two-bone inverse kinematics, trunk rigid,
arms and head on phase-locked sinusoids), so the ground-truth pose parameters
reproduce the noiseless frames through forward kinematics exactly.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kinematics as kin
from .errors import InconsistentSpec
from .kinematics import CANONICAL_TREE, PoseParams
from .skeleton import (
    AnatomyProfile,
    CameraModel,
    JointId,
    Point2D,
    Point3D,
    SkeletonFrame2D,
    SkeletonFrame3D,
    SkeletonSequence,
    derive_anatomy,
    project,
)

_SPEED_TOL = 1e-9
_REACH_MARGIN = 0.98


@dataclass(frozen=True)
class WalkerSpec:
    """Construction parameters for one synthetic walk.

    Exactly two of (speed_m_s, cadence_steps_min, step_length_m) may be given,
    in which case the third is derived; giving all three requires them to
    satisfy speed = step_length * cadence / 60 to within 1e-9.
    """

    subject_height_m: float = 1.72
    speed_m_s: Optional[float] = None
    cadence_steps_min: Optional[float] = None
    step_length_m: Optional[float] = None
    distance_m: float = 4.0
    fps: float = 30.0
    double_support: float = 0.2
    sigma3d_m: float = 0.0
    sigma2d_px: float = 0.0
    dropout: float = 0.0
    seed: int = 0
    heading_deg: float = 0.0     # 0 walks away from the camera (+z), 180 toward
    start_x_m: float = 0.0
    start_z_m: float = 4.0

    def __post_init__(self) -> None:
        given = [
            v is not None
            for v in (self.speed_m_s, self.cadence_steps_min, self.step_length_m)
        ]
        if sum(given) < 2:
            raise InconsistentSpec(
                "need at least two of speed, cadence, step length"
            )
        if sum(given) == 3:
            implied = self.step_length_m * self.cadence_steps_min / 60.0  # type: ignore[operator]
            if abs(self.speed_m_s - implied) > _SPEED_TOL * max(1.0, abs(implied)):  # type: ignore[arg-type]
                raise InconsistentSpec(
                    f"speed {self.speed_m_s} != step length x cadence / 60 = {implied}"
                )
        else:
            if self.speed_m_s is None:
                object.__setattr__(
                    self,
                    "speed_m_s",
                    self.step_length_m * self.cadence_steps_min / 60.0,  # type: ignore[operator]
                )
            elif self.step_length_m is None:
                object.__setattr__(
                    self,
                    "step_length_m",
                    60.0 * self.speed_m_s / self.cadence_steps_min,  # type: ignore[operator]
                )
            else:
                object.__setattr__(
                    self,
                    "cadence_steps_min",
                    60.0 * self.speed_m_s / self.step_length_m,  # type: ignore[operator]
                )
        if self.fps < 10:
            raise ValueError(f"fps must be at least 10, got {self.fps}")
        if not 0.0 <= self.double_support <= 0.4:
            raise ValueError(
                f"double-support fraction {self.double_support} outside [0, 0.4]"
            )
        for name in ("speed_m_s", "cadence_steps_min", "step_length_m", "distance_m"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.sigma3d_m < 0 or self.sigma2d_px < 0 or not 0 <= self.dropout <= 1:
            raise ValueError("noise levels must be non-negative, dropout in [0, 1]")

    @property
    def step_time_s(self) -> float:
        return 60.0 / self.cadence_steps_min  # type: ignore[operator]


@dataclass(frozen=True)
class StepTruth:
    foot: str          # "left" or "right"
    time_s: float      # landing instant
    position_m: float  # contact point along the heading


@dataclass(frozen=True)
class GroundTruth:
    """Exact values the pipeline is later measured against."""

    speed_m_s: float
    cadence_steps_min: float
    step_length_m: float
    step_time_s: float
    n_steps: int
    duration_s: float
    heading: tuple[float, float, float]
    schedule: tuple[StepTruth, ...]
    anatomy: AnatomyProfile = field(repr=False)
    params: PoseParams = field(repr=False)
    spec: WalkerSpec = field(repr=False)


def _cycloid(u: np.ndarray) -> np.ndarray:
    """Monotone 0->1 with zero first derivative at both ends."""
    return u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)


def _knee_point(hip, ankle, l1, l2, forward):
    """Two-bone inverse kinematics: knee position bending toward `forward`."""
    d = ankle - hip
    n = float(np.linalg.norm(d))
    dhat = d / n
    a = (l1 * l1 - l2 * l2 + n * n) / (2.0 * n)
    r2 = l1 * l1 - a * a
    if r2 <= 0:
        raise ValueError("leg cannot reach the requested foot position")
    bend = forward - np.dot(forward, dhat) * dhat
    bn = float(np.linalg.norm(bend))
    if bn < 1e-9:
        raise ValueError("degenerate knee bend direction")
    return hip + a * dhat + math.sqrt(r2) * (bend / bn)


def generate(spec: WalkerSpec, camera: Optional[CameraModel] = None):
    """Synthesize one walk.

    Returns (sequence, truth): a two-stream SkeletonSequence (2D frames are
    exact pinhole projections of the 3D frames before any noise) and the
    GroundTruth it was built from.  Identical specs produce identical output.
    """
    if camera is None:
        camera = CameraModel.default()
    anatomy = derive_anatomy(spec.subject_height_m)
    tree = CANONICAL_TREE
    lengths = kin.lengths_vector(anatomy)

    sl = float(spec.step_length_m)       # type: ignore[arg-type]
    v = float(spec.speed_m_s)            # type: ignore[arg-type]
    T = spec.step_time_s
    ds = spec.double_support
    n_steps = max(2, round(spec.distance_m / sl))

    l1 = anatomy.length(JointId.LEFT_KNEE)
    l2 = anatomy.length(JointId.LEFT_ANKLE)
    y_ankle = anatomy.length(JointId.LEFT_HEEL)
    w_hip = anatomy.length(JointId.LEFT_HIP)
    # Worst hip-to-ankle horizontal split.  During stance it peaks at
    # sl*(0.5+ds) right before lift-off; early in swing the cycloid lags the
    # pelvis, and the split bottoms out where the cycloid velocity matches
    # the pelvis velocity: 1 - cos(2*pi*u) = (1-ds)/2.
    u_star = math.acos((1.0 + ds) / 2.0) / (2.0 * math.pi)
    g_star = (
        2.0 * float(_cycloid(np.array(u_star)))
        - ds - 0.5 - u_star * (1.0 - ds)
    )
    max_split = sl * max(0.5 + ds, abs(g_star))
    vert2 = (_REACH_MARGIN * (l1 + l2)) ** 2 - max_split**2 - w_hip**2
    if vert2 <= 0:
        raise ValueError(
            f"step length {sl} m is not reachable at height {spec.subject_height_m} m"
        )
    h_pelvis = y_ankle + math.sqrt(vert2)
    clearance = 0.04 * spec.subject_height_m

    theta = math.radians(spec.heading_deg)
    heading = np.array([math.sin(theta), 0.0, math.cos(theta)])
    lateral = np.cross(np.array([0.0, 1.0, 0.0]), heading)  # subject's right
    origin = np.array([spec.start_x_m, 0.0, spec.start_z_m])
    yhat = np.array([0.0, 1.0, 0.0])

    # Landing k (k = 1..n_steps) happens at t_k at along-track position k*sl.
    # Odd landings belong to the right foot.  The sequence starts and ends
    # mid-swing so each landing is an interior extremum of the ankle signal.
    t1 = 0.5 * (1.0 - ds) * T
    t_land = lambda k: t1 + (k - 1) * T
    t_end = t_land(n_steps) + ds * T + 0.5 * (1.0 - ds) * T
    n_frames = int(math.floor(t_end * spec.fps)) + 1
    times = np.arange(n_frames) / spec.fps

    def ankle_track(parity: int, t: float):
        """(along, height) of one foot's ankle; parity 1 = right foot."""
        k_last = int(math.floor((t - t_land(parity)) / (2.0 * T))) * 2 + parity
        lift = t_land(k_last + 1) + ds * T
        if t <= lift:
            return k_last * sl, y_ankle
        u = (t - lift) / ((1.0 - ds) * T)
        along = k_last * sl + 2.0 * sl * float(_cycloid(np.array(u)))
        height = y_ankle + clearance * (1.0 - math.cos(2.0 * math.pi * u)) / 2.0
        return along, height

    # Trunk orientation: yaw aligning rest-pose forward (+z) to the heading.
    yaw = np.array(
        [
            [math.cos(theta), 0.0, math.sin(theta)],
            [0.0, 1.0, 0.0],
            [-math.sin(theta), 0.0, math.cos(theta)],
        ]
    )

    stride_T = 2.0 * T
    arm_amp = 0.25
    nod_amp = 0.03

    J = tree.n_joints
    pos = np.zeros((n_frames, J, 3))
    xhat = np.array([1.0, 0.0, 0.0])

    for i, t in enumerate(times):
        along_pelvis = v * (t - t1) + 0.5 * sl
        pelvis = origin + heading * along_pelvis + yhat * h_pelvis
        phase = 2.0 * math.pi * (t - t1) / stride_T

        def put(j: JointId, p: np.ndarray) -> None:
            pos[i, j.value] = p

        put(JointId.PELVIS, pelvis)
        spine = pelvis + yhat * lengths[JointId.SPINE.value]
        mid = spine + yhat * lengths[JointId.MID_SPINE.value]
        neck = mid + yhat * lengths[JointId.NECK.value]
        put(JointId.SPINE, spine)
        put(JointId.MID_SPINE, mid)
        put(JointId.NECK, neck)

        # Head and shoulders ride a small nod applied to the whole neck frame.
        nod = kin.so3_exp(np.array([nod_amp * math.sin(phase), 0.0, 0.0]))
        frame_rot = yaw @ nod
        put(JointId.HEAD, neck + frame_rot @ (tree.rest_dirs[JointId.HEAD.value]
                                              * lengths[JointId.HEAD.value]))
        for side, sh, el, wr in (
            ("left", JointId.LEFT_SHOULDER, JointId.LEFT_ELBOW, JointId.LEFT_WRIST),
            ("right", JointId.RIGHT_SHOULDER, JointId.RIGHT_ELBOW, JointId.RIGHT_WRIST),
        ):
            shoulder = neck + frame_rot @ (tree.rest_dirs[sh.value] * lengths[sh.value])
            put(sh, shoulder)
            swing = arm_amp * math.sin(phase) * (1.0 if side == "left" else -1.0)
            arm_rot = yaw @ kin.so3_exp(swing * xhat)
            elbow = shoulder + arm_rot @ (tree.rest_dirs[el.value] * lengths[el.value])
            wrist = elbow + arm_rot @ (tree.rest_dirs[wr.value] * lengths[wr.value])
            put(el, elbow)
            put(wr, wrist)

        for parity, hip_j, knee_j, ankle_j, heel_j, toe_j in (
            (0, JointId.LEFT_HIP, JointId.LEFT_KNEE, JointId.LEFT_ANKLE,
             JointId.LEFT_HEEL, JointId.LEFT_FOOT_TIP),
            (1, JointId.RIGHT_HIP, JointId.RIGHT_KNEE, JointId.RIGHT_ANKLE,
             JointId.RIGHT_HEEL, JointId.RIGHT_FOOT_TIP),
        ):
            side_sign = -1.0 if parity == 0 else 1.0  # left hip on subject's left
            hip = pelvis + side_sign * w_hip * lateral
            put(hip_j, hip)
            along, height = ankle_track(parity, float(t))
            ankle = origin + heading * along + yhat * height
            put(ankle_j, ankle)
            put(knee_j, _knee_point(hip, ankle, l1, l2, heading))
            put(heel_j, ankle - yhat * lengths[heel_j.value])
            put(toe_j, ankle + heading * lengths[toe_j.value])

    params = kin.fit_params_to_positions(tree, pos)
    model = kin.forward_kinematics(tree, lengths, params)
    err = float(np.max(np.abs(model - pos)))
    if err > 1e-9:
        raise RuntimeError(f"walker pose fit drifted by {err} m")

    # Emit the constructed positions, not the reconstruction: planted-foot
    # frames then repeat bit-identical samples, so the distance signal's
    # double-support plateaus are exact ties rather than ulp-level wiggle.
    frames_3d = tuple(
        SkeletonFrame3D(
            index=i,
            time_s=float(times[i]),
            joints={j: Point3D(*pos[i, j.value]) for j in JointId},
        )
        for i in range(n_frames)
    )
    frames_2d = tuple(project(fr, camera) for fr in frames_3d)
    seq = SkeletonSequence(
        fps=spec.fps,
        frames_2d=frames_2d,
        frames_3d=frames_3d,
        subject_height_m=spec.subject_height_m,
        source="synthetic",
    )
    if spec.sigma3d_m > 0 or spec.sigma2d_px > 0 or spec.dropout > 0:
        seq = inject_noise(
            seq,
            sigma3d_m=spec.sigma3d_m,
            sigma2d_px=spec.sigma2d_px,
            dropout=spec.dropout,
            seed=spec.seed,
        )

    schedule = tuple(
        StepTruth(
            foot="right" if k % 2 else "left",
            time_s=float(t_land(k)),
            position_m=float(k * sl),
        )
        for k in range(1, n_steps + 1)
    )
    truth = GroundTruth(
        speed_m_s=v,
        cadence_steps_min=float(spec.cadence_steps_min),  # type: ignore[arg-type]
        step_length_m=sl,
        step_time_s=T,
        n_steps=n_steps,
        duration_s=float(t_end),
        heading=tuple(float(h) for h in heading),  # type: ignore[assignment]
        schedule=schedule,
        anatomy=anatomy,
        params=params,
        spec=spec,
    )
    return seq, truth


def inject_noise(
    seq: SkeletonSequence,
    sigma3d_m: float = 0.0,
    sigma2d_px: float = 0.0,
    dropout: float = 0.0,
    seed: int = 0,
) -> SkeletonSequence:
    """Seeded isotropic Gaussian noise per joint per frame.

    3D joints are perturbed with sigma3d_m per axis, 2D joints with sigma2d_px
    per axis; dropout removes 2D joints independently with the given
    probability.  The same seed always produces the same byte-for-byte result.
    """
    rng = np.random.default_rng(seed)
    frames_3d = seq.frames_3d
    frames_2d = seq.frames_2d

    new_3d = frames_3d
    if frames_3d is not None:
        F = len(frames_3d)
        noise = rng.normal(0.0, sigma3d_m, size=(F, len(JointId), 3))
        out = []
        for f, fr in enumerate(frames_3d):
            joints = {
                j: Point3D(
                    p.x + noise[f, j.value, 0],
                    p.y + noise[f, j.value, 1],
                    p.z + noise[f, j.value, 2],
                )
                for j, p in fr.joints.items()
            }
            out.append(SkeletonFrame3D(index=fr.index, time_s=fr.time_s, joints=joints))
        new_3d = tuple(out)

    new_2d = frames_2d
    if frames_2d is not None:
        F = len(frames_2d)
        noise2 = rng.normal(0.0, sigma2d_px, size=(F, len(JointId), 2))
        keep = rng.random(size=(F, len(JointId))) >= dropout
        out2 = []
        for f, fr in enumerate(frames_2d):
            joints2 = {
                j: Point2D(
                    p.x + noise2[f, j.value, 0],
                    p.y + noise2[f, j.value, 1],
                    p.confidence,
                )
                for j, p in fr.joints.items()
                if keep[f, j.value]
            }
            out2.append(
                SkeletonFrame2D(index=fr.index, time_s=fr.time_s, joints=joints2)
            )
        new_2d = tuple(out2)

    return replace(seq, frames_2d=new_2d, frames_3d=new_3d)

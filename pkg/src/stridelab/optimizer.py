"""Anatomically constrained sequence optimization.

Fits a fixed-bone-length kinematic skeleton to noisy per-frame 2D and 3D
detections by minimizing

    E = w_ik * E_ik + w_proj * E_proj + w_smooth * E_smooth + w_depth * E_depth

where E_ik sums squared distances between model joints and detected 3D
joints, E_proj sums confidence-weighted squared pixel errors between
projected model joints and detected 2D joints, E_smooth sums squared second
temporal differences of all model joint positions, and E_depth sums squared
first temporal differences of the root depth.

The solver is damped Gauss-Newton over the whole sequence at once: a step is
accepted only when it strictly decreases the energy, otherwise the damping is
increased and the step recomputed.  Rotations advance by left-multiplied
increments and are re-centred every iteration, so the parameterization never
sits near its angle-pi singularity.
"""

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import kinematics as kin
from .errors import DegenerateInput, FrameCountMismatch, MissingModality
from .kinematics import CANONICAL_TREE, KinematicTree, PoseParams
from .skeleton import (
    AnatomyProfile,
    CameraModel,
    JointId,
    Point3D,
    SkeletonFrame3D,
    SkeletonSequence,
)

_MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class EnergyConfig:
    """Energy weights and solver knobs.  Every knob is an explicit field.

    w_proj=None resolves to 1/fx^2 for the camera in use, which weighs squared
    pixel residuals like squared metric residuals at unit depth.
    """

    w_ik: float = 1.0
    w_proj: Optional[float] = None
    w_smooth: float = 0.1
    w_depth: float = 0.1
    max_iterations: int = 80
    tolerance: float = 1e-9
    init_damping: float = 1e-3
    damping_increase: float = 5.0
    damping_decrease: float = 3.0
    max_damping: float = 1e14

    def resolved_w_proj(self, camera: CameraModel) -> float:
        return 1.0 / (camera.fx * camera.fx) if self.w_proj is None else self.w_proj


@dataclass(frozen=True)
class OptimizedSequence:
    """Optimizer output: anatomically consistent frames plus diagnostics."""

    frames: tuple[SkeletonFrame3D, ...]
    fps: float
    camera_distance_m: tuple[float, ...]
    final_energy: float
    energy_breakdown: Mapping[str, float]
    energy_history: tuple[float, ...]
    iterations: int
    converged: bool
    params: PoseParams = field(repr=False)
    source: str = ""


def pack_sequence(seq: SkeletonSequence, tree: KinematicTree = CANONICAL_TREE):
    """Sequence -> dense target arrays (3D targets/mask, 2D targets/confidence)."""
    if seq.frames_3d is None or seq.frames_2d is None:
        raise MissingModality("optimization requires both a 2D and a 3D stream")
    F = len(seq.frames_3d)
    J = tree.n_joints
    y3 = np.zeros((F, J, 3))
    m3 = np.zeros((F, J), dtype=bool)
    y2 = np.zeros((F, J, 2))
    conf = np.zeros((F, J))
    for f, fr in enumerate(seq.frames_3d):
        for j, p in fr.joints.items():
            y3[f, j.value] = (p.x, p.y, p.z)
            m3[f, j.value] = True
    for f, fr in enumerate(seq.frames_2d):
        for j, p in fr.joints.items():
            y2[f, j.value] = (p.x, p.y)
            conf[f, j.value] = p.confidence
    empty = ~(m3.any(axis=1) | (conf > 0).any(axis=1))
    if empty.any():
        raise DegenerateInput(
            f"frame(s) {np.flatnonzero(empty).tolist()} carry no joints in either stream"
        )
    return y3, m3, y2, conf


class EnergyProblem:
    """The energy, its gradient, and the Gauss-Newton solver for one sequence.

    Generic over the kinematic tree so small synthetic trees can exercise the
    same code paths the 21-joint skeleton uses.
    """

    def __init__(
        self,
        tree: KinematicTree,
        lengths: np.ndarray,
        y3: np.ndarray,
        m3: np.ndarray,
        y2: np.ndarray,
        conf: np.ndarray,
        camera: CameraModel,
        w_ik: float,
        w_proj: float,
        w_smooth: float,
        w_depth: float,
    ) -> None:
        self.tree = tree
        self.lengths = np.asarray(lengths, dtype=np.float64)
        self.y3 = y3
        self.m3 = m3.astype(np.float64)
        self.y2 = y2
        self.conf = conf
        self.camera = camera
        self.w_ik = w_ik
        self.w_proj = w_proj
        self.w_smooth = w_smooth
        self.w_depth = w_depth
        self.F = y3.shape[0]
        # Second-difference operator over frames and its normal matrix, used
        # by both the smoothness energy and its Gauss-Newton blocks.
        F = self.F
        if F >= 3:
            D = np.zeros((F - 2, F))
            idx = np.arange(F - 2)
            D[idx, idx] = 1.0
            D[idx, idx + 1] = -2.0
            D[idx, idx + 2] = 1.0
        else:
            D = np.zeros((0, F))
        M = D.T @ D
        self._m_diag0 = np.diag(M).copy()
        self._m_diag1 = np.diag(M, 1).copy()
        self._m_diag2 = np.diag(M, 2).copy()

    # -- energy ---------------------------------------------------------

    def energy_terms(self, X: np.ndarray) -> Optional[dict[str, float]]:
        """Weighted term values for joint positions X, or None when a joint
        sits at non-positive depth (the step is then rejected outright)."""
        cam = self.camera
        e_ik = float(np.sum(self.m3[..., None] * (X - self.y3) ** 2))
        active = self.conf > 0
        if np.any(X[active][:, 2] < _MIN_DEPTH):
            return None
        z = np.where(active, X[..., 2], 1.0)
        u = cam.fx * X[..., 0] / z + cam.cx
        v = cam.fy * X[..., 1] / z + cam.cy
        du = u - self.y2[..., 0]
        dv = v - self.y2[..., 1]
        e_proj = float(np.sum(self.conf * (du * du + dv * dv)))
        if self.F >= 3:
            dd = X[2:] - 2.0 * X[1:-1] + X[:-2]
            e_smooth = float(np.sum(dd * dd))
        else:
            e_smooth = 0.0
        tz = X[:, 0, 2]
        e_depth = float(np.sum(np.diff(tz) ** 2)) if self.F >= 2 else 0.0
        return {
            "ik": self.w_ik * e_ik,
            "proj": self.w_proj * e_proj,
            "smooth": self.w_smooth * e_smooth,
            "depth": self.w_depth * e_depth,
        }

    def energy_from_params(self, params: PoseParams) -> tuple[float, dict[str, float]]:
        X = kin.forward_kinematics(self.tree, self.lengths, params)
        terms = self.energy_terms(X)
        if terms is None:
            return math.inf, {}
        return sum(terms.values()), terms

    # -- gradient ---------------------------------------------------------

    def _de_dx(self, X: np.ndarray) -> np.ndarray:
        """dE/dX for the position-dependent terms (ik, proj, smooth): (F, J, 3)."""
        cam = self.camera
        g = 2.0 * self.w_ik * self.m3[..., None] * (X - self.y3)
        active = self.conf > 0
        z = np.where(active, X[..., 2], 1.0)
        u = cam.fx * X[..., 0] / z + cam.cx
        v = cam.fy * X[..., 1] / z + cam.cy
        du = self.conf * (u - self.y2[..., 0])
        dv = self.conf * (v - self.y2[..., 1])
        gp = np.zeros_like(X)
        gp[..., 0] = du * cam.fx / z
        gp[..., 1] = dv * cam.fy / z
        gp[..., 2] = -(du * cam.fx * X[..., 0] + dv * cam.fy * X[..., 1]) / (z * z)
        g += 2.0 * self.w_proj * gp
        if self.F >= 3:
            dd = X[2:] - 2.0 * X[1:-1] + X[:-2]
            gs = np.zeros_like(X)
            gs[2:] += dd
            gs[1:-1] -= 2.0 * dd
            gs[:-2] += dd
            g += 2.0 * self.w_smooth * gs
        return g

    def gradient(self, params: PoseParams) -> np.ndarray:
        """Analytic dE/dparams in PoseParams.as_vector() layout: (F * P,)."""
        X, G = kin.forward_kinematics(self.tree, self.lengths, params, with_globals=True)
        jpos = kin.position_jacobian(self.tree, X, G, rotations=params.rotations)
        g = np.einsum("fja,fjap->fp", self._de_dx(X), jpos)
        if self.F >= 2:
            tz = params.translations[:, 2]
            dz = np.diff(tz)
            gd = np.zeros(self.F)
            gd[1:] += dz
            gd[:-1] -= dz
            g[:, 2] += 2.0 * self.w_depth * gd
        return g.reshape(-1)

    # -- Gauss-Newton solver ----------------------------------------------

    def _normal_blocks(self, X, G):
        """J^T J as banded (F, P, P) blocks and J^T r, at the current point,
        with respect to left-multiplied rotation increments."""
        tree = self.tree
        F, P = self.F, tree.params_per_frame
        cam = self.camera
        jpos = kin.position_jacobian(tree, X, G)  # (F, J, 3, P)
        flat = jpos.reshape(F, -1, P)             # (F, 3J, P)

        d_ik = self.m3[..., None] * (X - self.y3)
        wflat = (jpos * self.m3[..., None, None]).reshape(F, -1, P)
        diag = self.w_ik * (wflat.transpose(0, 2, 1) @ flat)
        jtr = self.w_ik * (flat.transpose(0, 2, 1) @ d_ik.reshape(F, -1, 1))[..., 0]

        active = self.conf > 0
        z = np.where(active, X[..., 2], 1.0)
        u = cam.fx * X[..., 0] / z + cam.cx
        v = cam.fy * X[..., 1] / z + cam.cy
        # dpi/dX rows for u and v.
        dpi = np.zeros(X.shape[:2] + (2, 3))
        dpi[..., 0, 0] = cam.fx / z
        dpi[..., 0, 2] = -cam.fx * X[..., 0] / (z * z)
        dpi[..., 1, 1] = cam.fy / z
        dpi[..., 1, 2] = -cam.fy * X[..., 1] / (z * z)
        pj = dpi @ jpos                            # (F, J, 2, P)
        resid2 = np.stack([u - self.y2[..., 0], v - self.y2[..., 1]], axis=-1)
        pjflat = pj.reshape(F, -1, P)
        pjw = (pj * self.conf[..., None, None]).reshape(F, -1, P)
        diag += self.w_proj * (pjw.transpose(0, 2, 1) @ pjflat)
        jtr += self.w_proj * (
            pjw.transpose(0, 2, 1) @ resid2.reshape(F, -1, 1)
        )[..., 0]

        # Smoothness: J^T J couples frames g and h through the scalar matrix
        # M = D^T D (pentadiagonal) times S_gh = sum_j jpos[g]^T jpos[h].
        off1 = np.zeros((max(F - 1, 0), P, P))
        off2 = np.zeros((max(F - 2, 0), P, P))
        if F >= 3:
            s0 = flat.transpose(0, 2, 1) @ flat
            s1 = flat[:-1].transpose(0, 2, 1) @ flat[1:]
            s2 = flat[:-2].transpose(0, 2, 1) @ flat[2:]
            diag += self.w_smooth * self._m_diag0[:, None, None] * s0
            off1 += self.w_smooth * self._m_diag1[:, None, None] * s1
            off2 += self.w_smooth * self._m_diag2[:, None, None] * s2
            dd = X[2:] - 2.0 * X[1:-1] + X[:-2]
            w = np.zeros_like(X)
            w[2:] += dd
            w[1:-1] -= 2.0 * dd
            w[:-2] += dd
            jtr += self.w_smooth * (
                flat.transpose(0, 2, 1) @ w.reshape(F, -1, 1)
            )[..., 0]

        if F >= 2:
            tz = X[:, 0, 2]
            dz = np.diff(tz)
            gd = np.zeros(F)
            gd[1:] += dz
            gd[:-1] -= dz
            jtr[:, 2] += self.w_depth * gd
            dcount = np.zeros(F)
            dcount[1:] += 1.0
            dcount[:-1] += 1.0
            diag[:, 2, 2] += self.w_depth * dcount
            off1[:, 2, 2] += -self.w_depth

        return diag, off1, off2, jtr

    @staticmethod
    def _assemble(diag, off1, off2) -> scipy.sparse.csc_matrix:
        F, P, _ = diag.shape
        rows, cols, vals = [], [], []
        base = np.arange(P)
        rg = np.repeat(base, P)
        cg = np.tile(base, P)
        for blocks, shift in ((diag, 0), (off1, 1), (off2, 2)):
            n = blocks.shape[0]
            if n == 0:
                continue
            frame = np.arange(n) * P
            r = (frame[:, None] + rg[None, :]).reshape(-1)
            c = (frame[:, None] + cg[None, :] + shift * P).reshape(-1)
            v = blocks.reshape(n, -1).reshape(-1)
            rows.append(r)
            cols.append(c)
            vals.append(v)
            if shift:
                rows.append(c)
                cols.append(r)
                vals.append(v)
        mat = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(F * P, F * P),
        )
        return mat.tocsc()

    def solve(self, init: PoseParams, cfg: EnergyConfig):
        """Damped Gauss-Newton from init.  Returns (params, info dict)."""
        tree = self.tree
        F, P = self.F, tree.params_per_frame
        t = init.translations.copy()
        rot = kin.so3_exp(init.rotations)  # local rotation matrices, (F, NR, 3, 3)

        X, G = kin.fk_from_matrices(tree, self.lengths, t, rot)
        terms = self.energy_terms(X)
        if terms is None:
            raise DegenerateInput("initial pose projects a joint at non-positive depth")
        energy = sum(terms.values())
        history = [energy]
        lam = cfg.init_damping
        converged = False
        iterations = 0

        for _ in range(cfg.max_iterations):
            diag, off1, off2, jtr = self._normal_blocks(X, G)
            g = jtr.reshape(-1)
            d0 = np.diagonal(diag, axis1=1, axis2=2).reshape(-1)
            if d0.max() == 0.0:
                converged = True
                break
            # Multiplicative (Marquardt) damping keeps steps invariant under a
            # uniform rescaling of all four weights; the relative floor guards
            # parameters with no residual influence.
            damp_base = np.maximum(d0, 1e-12 * d0.max())
            H0 = self._assemble(diag, off1, off2)

            accepted = False
            while lam <= cfg.max_damping:
                H = H0 + scipy.sparse.diags(lam * damp_base)
                try:
                    delta = scipy.sparse.linalg.spsolve(H, -g)
                except RuntimeError:
                    lam *= cfg.damping_increase
                    continue
                if not np.all(np.isfinite(delta)):
                    lam *= cfg.damping_increase
                    continue
                step = delta.reshape(F, P)
                t_new = t + step[:, :3]
                inc = kin.so3_exp(step[:, 3:].reshape(F, tree.n_rotations, 3))
                rot_new = inc @ rot
                X_new, G_new = kin.fk_from_matrices(tree, self.lengths, t_new, rot_new)
                terms_new = self.energy_terms(X_new)
                if terms_new is not None:
                    energy_new = sum(terms_new.values())
                    if energy_new < energy:
                        decrease = energy - energy_new
                        t, rot = t_new, rot_new
                        X, G = X_new, G_new
                        energy, terms = energy_new, terms_new
                        history.append(energy)
                        lam = max(lam / cfg.damping_decrease, 1e-12)
                        accepted = True
                        iterations += 1
                        if decrease <= cfg.tolerance:
                            converged = True
                        break
                    if abs(energy_new - energy) <= cfg.tolerance:
                        # Flat to within tolerance: already at a minimum.
                        converged = True
                        accepted = True
                        iterations += 1
                        break
                lam *= cfg.damping_increase
            else:
                # Damping exhausted without an acceptable step.
                break
            if converged or not accepted:
                break

        params = PoseParams(translations=t, rotations=kin.so3_log(rot))
        info = {
            "energy": energy,
            "terms": terms,
            "history": tuple(history),
            "iterations": iterations,
            "converged": converged,
        }
        return params, info


def _problem_for(
    seq: SkeletonSequence,
    anatomy: AnatomyProfile,
    camera: CameraModel,
    cfg: EnergyConfig,
) -> EnergyProblem:
    y3, m3, y2, conf = pack_sequence(seq)
    return EnergyProblem(
        CANONICAL_TREE,
        kin.lengths_vector(anatomy),
        y3,
        m3,
        y2,
        conf,
        camera,
        w_ik=cfg.w_ik,
        w_proj=cfg.resolved_w_proj(camera),
        w_smooth=cfg.w_smooth,
        w_depth=cfg.w_depth,
    )


def _check_params(params: PoseParams, n_frames: int) -> None:
    if params.n_frames != n_frames:
        raise FrameCountMismatch(
            f"params cover {params.n_frames} frames, sequence has {n_frames}"
        )


def energy(
    params: PoseParams,
    seq: SkeletonSequence,
    anatomy: AnatomyProfile,
    camera: Optional[CameraModel] = None,
    cfg: EnergyConfig = EnergyConfig(),
) -> float:
    """Total energy of a candidate pose parameterization."""
    prob = _problem_for(seq, anatomy, camera or CameraModel.default(), cfg)
    _check_params(params, prob.F)
    total, _ = prob.energy_from_params(params)
    return total


def energy_breakdown(
    params: PoseParams,
    seq: SkeletonSequence,
    anatomy: AnatomyProfile,
    camera: Optional[CameraModel] = None,
    cfg: EnergyConfig = EnergyConfig(),
) -> dict[str, float]:
    """Weighted per-term energies: keys ik, proj, smooth, depth."""
    prob = _problem_for(seq, anatomy, camera or CameraModel.default(), cfg)
    _check_params(params, prob.F)
    _, terms = prob.energy_from_params(params)
    return terms


def energy_gradient(
    params: PoseParams,
    seq: SkeletonSequence,
    anatomy: AnatomyProfile,
    camera: Optional[CameraModel] = None,
    cfg: EnergyConfig = EnergyConfig(),
) -> np.ndarray:
    """Analytic gradient of the energy in PoseParams.as_vector() layout."""
    prob = _problem_for(seq, anatomy, camera or CameraModel.default(), cfg)
    _check_params(params, prob.F)
    return prob.gradient(params)


def initial_params(
    seq: SkeletonSequence,
    anatomy: AnatomyProfile,
    tree: KinematicTree = CANONICAL_TREE,
) -> PoseParams:
    """Initialization: root from detected pelvis, rotations from closed-form
    alignment of detected bone directions; gaps filled by interpolation."""
    y3, m3, _, _ = pack_sequence(seq, tree)
    F, J, _ = y3.shape
    pos = y3.copy()
    obs = m3.copy()

    frame_idx = np.arange(F, dtype=np.float64)
    root_obs = obs[:, 0]
    if not root_obs.any():
        # No pelvis anywhere: fall back to the per-frame centroid of whatever
        # 3D joints exist, then interpolate the truly empty frames.
        counts = obs.sum(axis=1)
        root_obs = counts > 0
        with np.errstate(invalid="ignore"):
            pos[:, 0] = np.where(
                root_obs[:, None],
                np.nansum(np.where(obs[..., None], pos, np.nan), axis=1)
                / np.maximum(counts, 1)[:, None],
                0.0,
            )
    for axis in range(3):
        pos[:, 0, axis] = np.interp(
            frame_idx, frame_idx[root_obs], pos[root_obs, 0, axis]
        )
    obs[:, 0] = True

    lengths = kin.lengths_vector(anatomy) if tree is CANONICAL_TREE else None
    for j in range(1, J):
        seen = obs[:, j]
        if seen.any():
            for axis in range(3):
                pos[:, j, axis] = np.interp(frame_idx, frame_idx[seen], pos[seen, j, axis])
        else:
            # Never observed: hang the joint off its parent in rest direction.
            p = tree.parents[j]
            step = tree.rest_dirs[j] * (lengths[j] if lengths is not None else 0.0)
            pos[:, j] = pos[:, p] + step
    return kin.fit_params_to_positions(tree, pos)


def optimize(
    seq: SkeletonSequence,
    anatomy: AnatomyProfile,
    camera: Optional[CameraModel] = None,
    cfg: EnergyConfig = EnergyConfig(),
    init: Optional[PoseParams] = None,
) -> OptimizedSequence:
    """Fit the skeleton to a two-stream sequence.

    Never raises on failure to converge: the best parameters found are
    returned with converged=False when the iteration cap is hit first.
    """
    camera = camera or CameraModel.default()
    prob = _problem_for(seq, anatomy, camera, cfg)
    if init is None:
        init = initial_params(seq, anatomy)
    _check_params(init, prob.F)
    params, info = prob.solve(init, cfg)

    X = kin.forward_kinematics(CANONICAL_TREE, kin.lengths_vector(anatomy), params)
    assert seq.frames_3d is not None
    frames = tuple(
        SkeletonFrame3D(
            index=fr.index,
            time_s=fr.time_s,
            joints={j: Point3D(*X[f, j.value]) for j in JointId},
        )
        for f, fr in enumerate(seq.frames_3d)
    )
    distances = tuple(float(d) for d in np.linalg.norm(params.translations, axis=1))
    return OptimizedSequence(
        frames=frames,
        fps=seq.fps,
        camera_distance_m=distances,
        final_energy=info["energy"],
        energy_breakdown=dict(info["terms"]),
        energy_history=info["history"],
        iterations=info["iterations"],
        converged=info["converged"],
        params=params,
        source=seq.source,
    )

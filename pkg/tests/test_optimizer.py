"""Energy model and solver.

Two oracles anchor this file: a direct summation of the four residual terms
(independent of the vectorized implementation) and central finite
differences for the gradient.
"""

import numpy as np
import pytest

from stridelab import (
    CameraModel,
    StrideLabError,
    EnergyConfig,
    JointId,
    Point2D,
    Point3D,
    SkeletonFrame2D,
    SkeletonFrame3D,
    SkeletonSequence,
    derive_anatomy,
    energy,
    energy_breakdown,
    energy_gradient,
    initial_params,
    optimize,
    project,
)
from stridelab.kinematics import (
    CANONICAL_TREE,
    PoseParams,
    forward_kinematics,
    lengths_vector,
)

ANATOMY = derive_anatomy(1.72)
LENGTHS = lengths_vector(ANATOMY)
CAMERA = CameraModel.default()


def _params(rng, n_frames, spread=0.3):
    nr = CANONICAL_TREE.n_rotations
    return PoseParams(
        translations=rng.normal(0.0, 0.2, (n_frames, 3)) + [0, 0, 4.0],
        rotations=rng.normal(0.0, spread, (n_frames, nr, 3)),
    )


def _sequence_from_params(params, fps=30.0, jitter3d=0.0, rng=None):
    """Build a two-stream sequence whose 3D/2D observations come from FK."""
    X = forward_kinematics(CANONICAL_TREE, LENGTHS, params)
    if jitter3d:
        X = X + rng.normal(0.0, jitter3d, X.shape)
    frames_3d = []
    frames_2d = []
    for f in range(X.shape[0]):
        joints = {j: Point3D(*X[f, j.value]) for j in JointId}
        fr3 = SkeletonFrame3D(index=f, time_s=f / fps, joints=joints)
        frames_3d.append(fr3)
        frames_2d.append(project(fr3, CAMERA))
    return SkeletonSequence(
        fps=fps,
        frames_2d=tuple(frames_2d),
        frames_3d=tuple(frames_3d),
        subject_height_m=1.72,
    )


def _energy_oracle(params, seq, cfg):
    """Direct per-term summation, written independently of the solver."""
    X = forward_kinematics(CANONICAL_TREE, LENGTHS, params)
    w_proj = cfg.resolved_w_proj(CAMERA)
    total = 0.0
    for f, fr in enumerate(seq.frames_3d):
        for j, p in fr.joints.items():
            d = X[f, j.value] - np.array(p)
            total += cfg.w_ik * float(d @ d)
    for f, fr in enumerate(seq.frames_2d):
        for j, p in fr.joints.items():
            x, y, z = X[f, j.value]
            u = CAMERA.fx * x / z + CAMERA.cx
            v = CAMERA.fy * y / z + CAMERA.cy
            total += w_proj * p.confidence * ((u - p.x) ** 2 + (v - p.y) ** 2)
    F = X.shape[0]
    if F >= 3:
        dd = X[2:] - 2.0 * X[1:-1] + X[:-2]
        total += cfg.w_smooth * float(np.sum(dd * dd))
    if F >= 2:
        tz = params.translations[:, 2]
        total += cfg.w_depth * float(np.sum(np.diff(tz) ** 2))
    return total


def test_energy_matches_direct_summation():
    rng = np.random.default_rng(5)
    params = _params(rng, 3)
    seq = _sequence_from_params(params)
    probe = _params(rng, 3)
    cfg = EnergyConfig(w_ik=0.7, w_proj=2e-6, w_smooth=0.3, w_depth=0.05)
    got = energy(probe, seq, ANATOMY, CAMERA, cfg=cfg)
    want = _energy_oracle(probe, seq, cfg)
    assert got == pytest.approx(want, rel=1e-9)


def test_energy_zero_at_exact_data():
    rng = np.random.default_rng(1)
    params = _params(rng, 1)
    seq = _sequence_from_params(params)
    cfg = EnergyConfig(w_smooth=0.0, w_depth=0.0)
    assert energy(params, seq, ANATOMY, CAMERA, cfg=cfg) < 1e-16


def test_breakdown_sums_to_energy():
    rng = np.random.default_rng(9)
    params = _params(rng, 4)
    seq = _sequence_from_params(params)
    probe = _params(rng, 4)
    terms = energy_breakdown(probe, seq, ANATOMY, CAMERA)
    assert set(terms) == {"ik", "proj", "smooth", "depth"}
    total = energy(probe, seq, ANATOMY, CAMERA)
    assert sum(terms.values()) == pytest.approx(total, rel=1e-12)
    assert all(v >= 0 for v in terms.values())


def test_energy_linear_in_weights():
    rng = np.random.default_rng(2)
    params = _params(rng, 2)
    seq = _sequence_from_params(params)
    probe = _params(rng, 2)
    base = EnergyConfig(w_ik=1.0, w_proj=1e-6, w_smooth=0.1, w_depth=0.1)
    double = EnergyConfig(w_ik=2.0, w_proj=2e-6, w_smooth=0.2, w_depth=0.2)
    e1 = energy(probe, seq, ANATOMY, CAMERA, cfg=base)
    e2 = energy(probe, seq, ANATOMY, CAMERA, cfg=double)
    assert e2 == pytest.approx(2 * e1, rel=1e-12)


def _fd_gradient(params, seq, cfg, h=1e-6):
    """Central finite differences in PoseParams.as_vector() layout."""
    nr = CANONICAL_TREE.n_rotations
    flat = params.as_vector()
    g = np.empty_like(flat)
    for i in range(flat.size):
        up = flat.copy()
        up[i] += h
        dn = flat.copy()
        dn[i] -= h
        g[i] = (
            energy(PoseParams.from_vector(up, nr), seq, ANATOMY, CAMERA, cfg=cfg)
            - energy(PoseParams.from_vector(dn, nr), seq, ANATOMY, CAMERA, cfg=cfg)
        ) / (2 * h)
    return g


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = _params(rng, 2)
    seq = _sequence_from_params(params)
    probe = _params(rng, 2)
    cfg = EnergyConfig()
    got = energy_gradient(probe, seq, ANATOMY, CAMERA, cfg=cfg)
    want = _fd_gradient(probe, seq, cfg)
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-4


def test_optimize_monotone_and_converged(fitted_clean):
    hist = fitted_clean.energy_history
    assert len(hist) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert fitted_clean.converged


def test_optimize_preserves_bone_lengths(fitted_clean, clean_walk):
    _, truth = clean_walk
    frames = fitted_clean.frames
    for fr in frames[:: max(1, len(frames) // 8)]:
        for child, parent in enumerate(CANONICAL_TREE.parents):
            if parent < 0:
                continue
            a = np.array(fr.joints[JointId(child)])
            b = np.array(fr.joints[JointId(parent)])
            want = truth.anatomy.length(JointId(child))
            assert abs(np.linalg.norm(a - b) - want) < 1e-6


def test_optimize_is_deterministic():
    rng = np.random.default_rng(17)
    params = _params(rng, 3, spread=0.15)
    seq = _sequence_from_params(params, jitter3d=0.01, rng=rng)
    first = optimize(seq, ANATOMY, CAMERA)
    second = optimize(seq, ANATOMY, CAMERA)
    assert first.final_energy == second.final_energy
    assert first.iterations == second.iterations
    a = np.array([[p for j in JointId for p in fr.joints[j]] for fr in first.frames])
    b = np.array([[p for j in JointId for p in fr.joints[j]] for fr in second.frames])
    assert np.array_equal(a, b)


def test_optimize_denoises(noisy_walk, clean_walk, fitted_noisy):
    """Fitting noisy observations should land closer to the clean positions
    than the observations themselves are."""
    noisy_seq, _ = noisy_walk
    clean_seq, _ = clean_walk

    def stack(frames):
        return np.array(
            [[fr.joints[j] for j in JointId] for fr in frames], dtype=float
        )

    clean = stack(clean_seq.frames_3d)
    noisy = stack(noisy_seq.frames_3d)
    fit = stack(fitted_noisy.frames)
    rmse_in = np.sqrt(np.mean((noisy - clean) ** 2))
    rmse_out = np.sqrt(np.mean((fit - clean) ** 2))
    assert rmse_out < 0.8 * rmse_in


def test_initial_params_reconstruct_clean_walk(clean_walk):
    seq, truth = clean_walk
    init = initial_params(seq, truth.anatomy)
    X = forward_kinematics(
        CANONICAL_TREE, lengths_vector(truth.anatomy), init
    )
    obs = np.array(
        [[fr.joints[j] for j in JointId] for fr in seq.frames_3d], dtype=float
    )
    assert np.max(np.abs(X - obs)) < 1e-6


def test_camera_distance_tracks_root(fitted_clean):
    d = np.array(fitted_clean.camera_distance_m)
    assert d.shape == (len(fitted_clean.frames),)
    roots = np.array(
        [fitted_clean.frames[i].joints[JointId.PELVIS] for i in range(len(d))]
    )
    assert np.allclose(d, np.linalg.norm(roots, axis=1), atol=1e-9)


def test_wrong_param_shape_rejected(clean_walk):
    seq, truth = clean_walk
    bad = PoseParams(
        translations=np.zeros((3, 3)) + [0, 0, 4],
        rotations=np.zeros((3, CANONICAL_TREE.n_rotations, 3)),
    )
    with pytest.raises(StrideLabError):
        energy(bad, seq, truth.anatomy)

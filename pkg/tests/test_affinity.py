"""Pose-to-track and cross-view affinity scores."""

import math

import numpy as np
import pytest

from mvtrack3d import affinity, geometry
from mvtrack3d.affinity import (
    PRESETS,
    AffinityConfig,
    Pose2D,
    body_aware_affinity,
    epipolar_joint_affinity,
    epipolar_pose_affinity,
    joint_affinity,
    pose_track_affinity,
    preset,
)
from mvtrack3d.errors import ConfigError, InvalidInterval, NoValidJoints
from mvtrack3d.schema import SYNTH14
from mvtrack3d.tracker import JointFlag, Skeleton3D

from helpers import (
    look_at_camera,
    points_near_origin,
    random_ring_rig,
    reference_pose_score,
)

N = SYNTH14.n_joints


def make_pose(cam, uv, t, conf=0.9, frame=-1, cfg=None):
    joints = np.column_stack([uv, np.full(len(uv), conf)])
    return Pose2D.from_detection(cam.cam_id, t, joints,
                                 cfg or AffinityConfig(), camera=cam,
                                 frame=frame)


def make_skeleton(joints, t):
    return Skeleton3D(t, np.asarray(joints, float),
                      np.zeros(len(joints), np.uint8))


# -- single-joint affinity ----------------------------------------------


def test_joint_affinity_half_tolerance_value():
    cfg = AffinityConfig(alpha_2d=70.0, lambda_a=3.0)
    # displacement of 1.4 px against a 70 px/s tolerance over 40 ms
    got = joint_affinity((101.4, 50.0), (100.0, 50.0), 0.04, cfg)
    assert got == pytest.approx(0.5 * math.exp(-0.12), abs=1e-12)
    assert got == pytest.approx(0.4435, abs=5e-5)


def test_joint_affinity_zero_displacement_is_pure_decay():
    cfg = AffinityConfig(alpha_2d=70.0, lambda_a=3.0)
    got = joint_affinity((100.0, 50.0), (100.0, 50.0), 0.04, cfg)
    assert got == pytest.approx(math.exp(-3.0 * 0.04), abs=1e-15)


def test_joint_affinity_zero_at_tolerance_negative_beyond():
    cfg = AffinityConfig(alpha_2d=4.0, lambda_a=1.0)
    # tolerance 4 px/s * 0.25 s = 1 px exactly
    assert joint_affinity((1.0, 0.0), (0.0, 0.0), 0.25, cfg) == 0.0
    assert joint_affinity((2.5, 0.0), (0.0, 0.0), 0.25, cfg) < 0.0


def test_joint_affinity_monotone_in_displacement(rng):
    cfg = AffinityConfig(alpha_2d=60.0, lambda_a=3.0)
    dt = float(rng.uniform(0.04, 0.4))
    vals = [joint_affinity((d, 0.0), (0.0, 0.0), dt, cfg)
            for d in np.linspace(0.0, 200.0, 50)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_joint_affinity_staleness_clamp():
    cfg = AffinityConfig(alpha_2d=60.0, lambda_a=3.0, max_dt=0.1)
    clamped = joint_affinity((3.0, 0.0), (0.0, 0.0), 5.0, cfg)
    assert clamped == joint_affinity((3.0, 0.0), (0.0, 0.0), 0.1, cfg)


def test_joint_affinity_rejects_non_positive_dt():
    cfg = AffinityConfig()
    for dt in (0.0, -0.04):
        with pytest.raises(InvalidInterval):
            joint_affinity((0.0, 0.0), (0.0, 0.0), dt, cfg)


# -- pose-to-track scores ------------------------------------------------


def exact_projection_setup(rng, dt=0.04):
    cam = random_ring_rig(rng, n_cams=1)[0]
    pts = points_near_origin(rng, N)
    skel = make_skeleton(pts, 0.0)
    uv = np.stack([geometry.project(p, cam) for p in pts])
    return cam, skel, uv, dt


def test_pose_track_affinity_exact_projection(rng):
    cam, skel, uv, dt = exact_projection_setup(rng)
    pose = make_pose(cam, uv, dt)
    cfg = AffinityConfig(alpha_2d=60.0, lambda_a=3.0, epsilon=10)
    expected = math.exp(-3.0 * 0.04)
    assert pose_track_affinity(pose, skel, cam, cfg) == pytest.approx(
        expected, abs=1e-12)
    assert body_aware_affinity(pose, skel, cam, cfg) == pytest.approx(
        expected, abs=1e-12)


def test_part_aware_needs_epsilon_positive_joints(rng):
    cam, skel, uv, dt = exact_projection_setup(rng)
    uv = uv.copy()
    uv[4] += 500.0  # one joint far outside tolerance
    pose = make_pose(cam, uv, dt)
    all_joints = AffinityConfig(alpha_2d=60.0, epsilon=N)
    most_joints = AffinityConfig(alpha_2d=60.0, epsilon=N - 1)
    assert pose_track_affinity(pose, skel, cam, all_joints) == 0.0
    assert pose_track_affinity(pose, skel, cam, most_joints) > 0.0


def test_part_aware_ignores_outlier_joints_baseline_does_not(rng):
    # thirteen joints displaced to affinity 0.8, one to affinity -10,
    # with tolerance alpha_2d * dt = 1 px and no time decay
    cam = look_at_camera(0, [6.0, 0.0, 3.0], [0.0, 0.0, 1.0], fps=4.0)
    pts = points_near_origin(rng, N)
    skel = make_skeleton(pts, 0.0)
    uv = np.stack([geometry.project(p, cam) for p in pts])
    uv[:13, 0] += 0.2
    uv[13, 0] += 11.0
    pose = make_pose(cam, uv, 0.25)
    cfg = AffinityConfig(alpha_2d=4.0, lambda_a=0.0, epsilon=10)
    part = pose_track_affinity(pose, skel, cam, cfg)
    body = body_aware_affinity(pose, skel, cam, cfg)
    assert part == pytest.approx(0.8, abs=1e-9)
    assert body == pytest.approx((13 * 0.8 - 10.0) / 14.0, abs=1e-9)
    assert body == pytest.approx(0.0286, abs=5e-5)


def test_part_aware_dominates_baseline_when_positive(rng):
    for _ in range(100):
        cam = random_ring_rig(rng, n_cams=1)[0]
        pts = points_near_origin(rng, N)
        skel = make_skeleton(pts, 0.0)
        uv = np.stack([geometry.project(p, cam) for p in pts])
        scale = rng.uniform(0.5, 40.0)
        uv = uv + rng.normal(0.0, scale, size=uv.shape)
        pose = make_pose(cam, uv, 0.04)
        cfg = AffinityConfig(alpha_2d=60.0, lambda_a=3.0,
                             epsilon=int(rng.integers(1, N + 1)))
        part = pose_track_affinity(pose, skel, cam, cfg)
        body = body_aware_affinity(pose, skel, cam, cfg)
        if part > 0.0:
            assert part >= body - 1e-12


def test_pose_scores_match_reference_implementation(rng):
    for _ in range(200):
        cam = random_ring_rig(rng, n_cams=1)[0]
        pts = points_near_origin(rng, N)
        t_pose = float(rng.uniform(0.04, 0.12))
        skel = make_skeleton(pts, 0.0)
        # random joint validity on both sides, random displacement scales
        flags = np.where(rng.random(N) < 0.2, JointFlag.MISSING,
                         JointFlag.TRIANGULATED).astype(np.uint8)
        skel = Skeleton3D(0.0, skel.joints, flags)
        uv = np.stack([geometry.project(p, cam) for p in pts])
        uv = uv + rng.normal(0.0, rng.uniform(0.5, 30.0), size=uv.shape)
        conf = np.where(rng.random(N) < 0.2, 0.01, 0.9)
        pose = Pose2D.from_detection(
            cam.cam_id, t_pose, np.column_stack([uv, conf]),
            AffinityConfig(), camera=cam)
        if not pose.valid.any():
            continue
        cfg = AffinityConfig(alpha_2d=float(rng.uniform(20, 90)),
                             lambda_a=float(rng.uniform(0, 5)),
                             epsilon=int(rng.integers(0, N + 1)))
        for part_aware, fn in ((True, pose_track_affinity),
                               (False, body_aware_affinity)):
            expected = reference_pose_score(
                cam, skel.joints, skel.flags != JointFlag.MISSING, t_pose,
                pose.uv, pose.valid, cfg.alpha_2d, cfg.lambda_a,
                cfg.epsilon, part_aware)
            assert fn(pose, skel, cam, cfg) == pytest.approx(
                expected, abs=1e-10)


def test_pose_score_requires_full_frame_interval(rng):
    cam, skel, uv, _ = exact_projection_setup(rng)
    pose = make_pose(cam, uv, 0.01)  # less than 1/25 s after the skeleton
    with pytest.raises(InvalidInterval):
        pose_track_affinity(pose, skel, cam, AffinityConfig())


def test_pose_score_requires_valid_joints(rng):
    cam, skel, uv, dt = exact_projection_setup(rng)
    pose = make_pose(cam, uv, dt, conf=0.0)
    with pytest.raises(NoValidJoints):
        pose_track_affinity(pose, skel, cam, AffinityConfig())


# -- epipolar affinity ---------------------------------------------------


def test_epipolar_joint_affinity_exact_correspondence(rng):
    cams = random_ring_rig(rng, n_cams=2)
    cfg = AffinityConfig(alpha_epi=30.0)
    p = points_near_origin(rng, 1)[0]
    a = geometry.project(p, cams[0])
    b = geometry.project(p, cams[1])
    assert epipolar_joint_affinity(a, b, cams[0], cams[1], cfg) == (
        pytest.approx(1.0, abs=1e-9))


def test_epipolar_joint_affinity_matches_line_distance_form(rng):
    cams = random_ring_rig(rng, n_cams=2)
    cfg = AffinityConfig(alpha_epi=30.0)
    for _ in range(50):
        a = rng.uniform(0, [cams[0].width, cams[0].height])
        b = rng.uniform(0, [cams[1].width, cams[1].height])
        d_ab = geometry.point_line_distance_2d(
            b, geometry.epipolar_line(a, cams[0], cams[1]))
        d_ba = geometry.point_line_distance_2d(
            a, geometry.epipolar_line(b, cams[1], cams[0]))
        expected = 1.0 - (d_ab + d_ba) / (2.0 * cfg.alpha_epi)
        assert epipolar_joint_affinity(a, b, cams[0], cams[1], cfg) == (
            pytest.approx(expected, abs=1e-9))


def test_epipolar_joint_affinity_symmetric(rng):
    cams = random_ring_rig(rng, n_cams=2)
    cfg = AffinityConfig(alpha_epi=30.0)
    for _ in range(50):
        a = rng.uniform(0, [cams[0].width, cams[0].height])
        b = rng.uniform(0, [cams[1].width, cams[1].height])
        lhs = epipolar_joint_affinity(a, b, cams[0], cams[1], cfg)
        rhs = epipolar_joint_affinity(b, a, cams[1], cams[0], cfg)
        assert abs(lhs - rhs) <= 1e-9


def test_epipolar_joint_affinity_neutral_at_epipole(rng):
    cams = random_ring_rig(rng, n_cams=2)
    cfg = AffinityConfig(alpha_epi=30.0)
    epipole = geometry.project(cams[1].o, cams[0])
    other = rng.uniform(0, [cams[1].width, cams[1].height])
    assert epipolar_joint_affinity(epipole, other, cams[0], cams[1], cfg) == 0.0


def test_epipolar_pose_affinity_counts_mutually_valid_joints(rng):
    cams = random_ring_rig(rng, n_cams=2)
    cfg = AffinityConfig(alpha_epi=30.0)
    pts = points_near_origin(rng, N)
    uv_a = np.stack([geometry.project(p, cams[0]) for p in pts])
    uv_b = np.stack([geometry.project(p, cams[1]) for p in pts])
    pose_a = make_pose(cams[0], uv_a, 0.0)
    pose_b = make_pose(cams[1], uv_b, 0.0)
    got = epipolar_pose_affinity(pose_a, pose_b, cams[0], cams[1], cfg)
    assert got == pytest.approx(float(N), abs=1e-6)

    conf = np.full(N, 0.9)
    conf[:4] = 0.0
    partial = Pose2D.from_detection(
        cams[1].cam_id, 0.0, np.column_stack([uv_b, conf]), cfg,
        camera=cams[1])
    got = epipolar_pose_affinity(pose_a, partial, cams[0], cams[1], cfg)
    assert got == pytest.approx(float(N - 4), abs=1e-6)

    blank = Pose2D.from_detection(
        cams[1].cam_id, 0.0,
        np.column_stack([uv_b, np.zeros(N)]), cfg, camera=cams[1])
    assert epipolar_pose_affinity(pose_a, blank, cams[0], cams[1], cfg) == 0.0


def test_epipolar_pose_affinity_rejects_mixed_joint_counts(rng):
    cams = random_ring_rig(rng, n_cams=2)
    cfg = AffinityConfig()
    short = make_pose(cams[0], np.zeros((5, 2)) + 300.0, 0.0)
    full = make_pose(cams[1], np.zeros((N, 2)) + 300.0, 0.0)
    with pytest.raises(ValueError):
        epipolar_pose_affinity(short, full, cams[0], cams[1], cfg)


def test_epipolar_pose_affinity_prefers_true_pairing(clean_scene):
    cfg = AffinityConfig(alpha_epi=30.0)
    scene = clean_scene
    cams = scene.cameras
    bundle = scene.bundles[0]
    poses_a = bundle.poses[cams[0].cam_id]
    poses_b = bundle.poses[cams[1].cam_id]
    for i, pa in enumerate(poses_a):
        actor = scene.actor_of[(0, cams[0].cam_id, i)]
        scores = [epipolar_pose_affinity(pa, pb, cams[0], cams[1], cfg)
                  for pb in poses_b]
        best = int(np.argmax(scores))
        assert scene.actor_of[(0, cams[1].cam_id, best)] == actor


# -- configuration and pose construction ---------------------------------


def test_presets_match_documented_table():
    assert (PRESETS["campus"].alpha_2d, PRESETS["campus"].alpha_epi,
            PRESETS["campus"].tau, PRESETS["campus"].epsilon,
            PRESETS["campus"].lambda_a) == (30.0, 15.0, 3, 14, 3.0)
    assert (PRESETS["shelf"].alpha_2d, PRESETS["shelf"].alpha_epi,
            PRESETS["shelf"].tau, PRESETS["shelf"].epsilon,
            PRESETS["shelf"].lambda_a) == (70.0, 60.0, 3, 10, 3.0)
    assert (PRESETS["panoptic"].alpha_2d, PRESETS["panoptic"].alpha_epi,
            PRESETS["panoptic"].tau, PRESETS["panoptic"].epsilon,
            PRESETS["panoptic"].lambda_a) == (60.0, 30.0, 3, 10, 3.0)
    assert preset("campus") is PRESETS["campus"]
    with pytest.raises(ConfigError):
        preset("warehouse")


def test_affinity_config_validation():
    with pytest.raises(ConfigError):
        AffinityConfig(alpha_2d=0.0)
    with pytest.raises(ConfigError):
        AffinityConfig(tau=0)
    with pytest.raises(ConfigError):
        AffinityConfig(tau=2.5)
    with pytest.raises(ConfigError):
        AffinityConfig(epsilon=-1)
    with pytest.raises(ConfigError):
        AffinityConfig(lambda_a=-0.1)
    with pytest.raises(ConfigError):
        AffinityConfig(conf_floor=1.0)
    with pytest.raises(ConfigError):
        AffinityConfig(max_dt=0.0)
    with pytest.raises(ConfigError):
        AffinityConfig(epsilon="ten")
    with pytest.raises(ConfigError):
        AffinityConfig().with_overrides(alpha="typo")
    assert AffinityConfig().with_overrides(alpha_2d=45.0).alpha_2d == 45.0


def test_pose_from_detection_validity_rules():
    cam = look_at_camera(0, [5.0, 0.0, 2.0], [0.0, 0.0, 1.0])
    cfg = AffinityConfig(conf_floor=0.1, image_margin=10.0)
    joints = np.array([
        [400.0, 300.0, 0.10],       # exactly at the floor: valid
        [400.0, 300.0, 0.09],       # below the floor
        [np.nan, 300.0, 0.9],       # non-finite coordinate
        [-10.0, 300.0, 0.9],        # on the margin: valid
        [-10.5, 300.0, 0.9],        # outside the margin
        [810.0, 610.0, 0.9],        # on the far margin: valid
        [400.0, 610.5, 0.9],        # below the far margin
    ])
    pose = Pose2D.from_detection(0, 0.0, joints, cfg, camera=cam)
    assert pose.valid.tolist() == [True, False, False, True, False, True,
                                   False]
    no_cam = Pose2D.from_detection(0, 0.0, joints, cfg)
    assert no_cam.valid.tolist() == [True, False, False, True, True, True,
                                     True]
    with pytest.raises(ValueError):
        Pose2D.from_detection(0, 0.0, np.zeros((4, 2)), cfg)

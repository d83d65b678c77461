"""Shared test utilities.

Everything here is implemented independently of the library internals it
is used to check: camera construction, an exhaustive assignment search, a
from-scratch pose scorer, a weighted linear triangulator, and a
limb-correctness scorer. Tests compare library output against these.
"""

import numpy as np

from mvtrack3d.evaluation import match_actors
from mvtrack3d.fileio import TrackFrame
from mvtrack3d.geometry import CameraCalibration, CameraRig
from mvtrack3d.tracker import PoseTracker


def look_at_camera(cam_id, position, target, focal=700.0, width=800,
                   height=600, fps=25.0):
    """Pinhole camera at `position` aimed at `target`, +v pointing down."""
    pos = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - pos
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    if abs(fwd @ up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    intr = np.array([
        [focal, 0.0, width / 2.0],
        [0.0, focal, height / 2.0],
        [0.0, 0.0, 1.0],
    ])
    return CameraCalibration(cam_id, intr, rot, pos, width, height, fps)


def random_ring_rig(rng, n_cams=3, fps=25.0):
    """Cameras spread around a randomized ring, all aimed near the origin."""
    base = rng.uniform(0.0, 2.0 * np.pi)
    radius = rng.uniform(4.0, 9.0)
    cams = []
    for i in range(n_cams):
        ang = base + 2.0 * np.pi * i / n_cams + rng.normal(0.0, 0.1)
        pos = np.array([radius * np.cos(ang), radius * np.sin(ang),
                        rng.uniform(2.0, 5.0)])
        target = np.array([0.0, 0.0, 1.0]) + rng.normal(0.0, 0.2, size=3)
        cams.append(look_at_camera(i, pos, target,
                                   focal=rng.uniform(500.0, 900.0), fps=fps))
    return cams


def points_near_origin(rng, count):
    """World points inside the volume every ring camera faces."""
    return rng.uniform([-1.5, -1.5, 0.2], [1.5, 1.5, 1.9], size=(count, 3))


def homogeneous_project(camera, points):
    """Projection through the raw 3x4 matrix; returns (uv (N,2), depth (N,))."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    cam_pts = (camera.R @ (pts - camera.o).T).T
    depth = cam_pts[:, 2]
    hom = (camera.K @ cam_pts.T).T
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = hom[:, :2] / hom[:, 2:3]
    return uv, depth


def exhaustive_assignment_total(values, gate=0.0):
    """Best achievable total over every partial injective assignment that
    uses only entries strictly above the gate. Dynamic program over column
    subsets; equivalent to enumerating all permutation sub-selections."""
    arr = np.asarray(values, dtype=np.float64)
    rows, cols = arr.shape
    size = 1 << cols
    neg = float("-inf")
    dp = [neg] * size
    dp[0] = 0.0
    for r in range(rows):
        row = arr[r].tolist()
        new = dp[:]
        for mask in range(size):
            base = dp[mask]
            if base == neg:
                continue
            for c in range(cols):
                bit = 1 << c
                if mask & bit or row[c] <= gate:
                    continue
                total = base + row[c]
                if total > new[mask | bit]:
                    new[mask | bit] = total
        dp = new
    return max(dp)


def reference_pose_score(camera, skel_joints, skel_valid, dt, pose_uv,
                         pose_valid, alpha_2d, lam, eps_count, part_aware):
    """From-scratch pose-to-skeleton score with the same contract as the
    library: joints count only when valid on both sides and in front of
    the camera; part-aware averages the strictly positive affinities and
    needs at least eps_count of them, the baseline averages everything."""
    uv, depth = homogeneous_project(camera, skel_joints)
    ok = np.asarray(skel_valid, bool) & np.asarray(pose_valid, bool) & (depth > 0.0)
    if not ok.any():
        return 0.0
    d = np.linalg.norm(np.asarray(pose_uv, float) - uv, axis=1)
    aff = (1.0 - d / (alpha_2d * dt)) * np.exp(-lam * dt)
    if part_aware:
        pos = ok & (aff > 0.0)
        if pos.sum() >= max(eps_count, 1):
            return float(aff[pos].mean())
        return 0.0
    return float(aff[ok].mean())


def weighted_dlt(cameras, uvs, weights):
    """Independent conditioned homogeneous least-squares triangulation."""
    rows = []
    for cam, uv, w in zip(cameras, uvs, weights):
        cond = np.array([
            [2.0 / cam.width, 0.0, -1.0],
            [0.0, 2.0 / cam.height, -1.0],
            [0.0, 0.0, 1.0],
        ])
        pn = cond @ cam.projection_matrix
        un = uv[0] * (2.0 / cam.width) - 1.0
        vn = uv[1] * (2.0 / cam.height) - 1.0
        rows.append(w * (un * pn[2] - pn[0]))
        rows.append(w * (vn * pn[2] - pn[1]))
    _, _, vt = np.linalg.svd(np.stack(rows))
    x = vt[-1]
    return x[:3] / x[3]


def reference_pcp_counts(pred_frames, gt_frames, schema):
    """Recompute per-(actor, part) limb correctness counts from scratch.

    Matching mirrors the documented rule: greedily pair the globally
    closest (ground-truth actor, prediction) by mean joint distance, ties
    to the smaller ids; sort-then-sweep realizes the same greedy order.
    """
    preds = {f.frame: f for f in pred_frames}
    counts = {}

    def bump(actor, part, ok):
        c, t = counts.setdefault(actor, {}).setdefault(part, (0, 0))
        counts[actor][part] = (c + int(ok), t + 1)

    for gtf in gt_frames:
        pf = preds.get(gtf.frame)
        actors = pf.actors if pf is not None else {}
        masks = getattr(gtf, "masks", None) or {}
        gids = sorted(gtf.actors)
        pids = sorted(actors)
        pairs = []
        for gi, g in enumerate(gids):
            gt_j = np.asarray(gtf.actors[g], dtype=np.float64)
            sel = np.asarray(masks[g], bool) if g in masks else None
            for pi, p in enumerate(pids):
                d = np.linalg.norm(np.asarray(actors[p], np.float64) - gt_j,
                                   axis=1)
                mean = d[sel].mean() if sel is not None else d.mean()
                pairs.append((mean, gi, pi))
        pairs.sort()
        used_g, used_p = set(), set()
        match = {}
        for _, gi, pi in pairs:
            if gi in used_g or pi in used_p:
                continue
            used_g.add(gi)
            used_p.add(pi)
            match[gids[gi]] = pids[pi]
        for g in gids:
            gt_j = np.asarray(gtf.actors[g], dtype=np.float64)
            mask = masks.get(g)
            pred_j = None
            if g in match:
                pred_j = np.asarray(actors[match[g]], dtype=np.float64)
            for part, a, b in schema.limbs:
                if mask is not None and not (mask[a] and mask[b]):
                    continue
                if pred_j is None:
                    bump(g, part, False)
                    continue
                length = np.linalg.norm(gt_j[a] - gt_j[b])
                da = np.linalg.norm(pred_j[a] - gt_j[a])
                db = np.linalg.norm(pred_j[b] - gt_j[b])
                bump(g, part, 0.5 * (da + db) <= 0.5 * length)
    return counts


def run_tracker(scene, tracker_config, max_frames=None):
    """Drive a tracker over a synthetic scene, collecting output frames."""
    tracker = PoseTracker(CameraRig(scene.cameras), tracker_config)
    frames = []
    for bundle in scene.bundles:
        if max_frames is not None and bundle.frame >= max_frames:
            break
        out = tracker.step(bundle)
        frames.append(TrackFrame(
            frame=bundle.frame,
            time_s=bundle.time_s,
            actors={tid: sk.joints.copy() for tid, sk in out},
            flags={tid: sk.flags.copy() for tid, sk in out},
        ))
    return frames, tracker


def count_identity_switches(pred_frames, gt_frames, schema):
    """Times any ground-truth actor's matched track id changes between
    consecutive frames where it is matched at all."""
    preds = {f.frame: f for f in pred_frames}
    last = {}
    switches = 0
    for gtf in gt_frames:
        pf = preds.get(gtf.frame)
        if pf is None:
            continue
        matches = match_actors(pf.actors, gtf.actors, schema)
        for actor, tid in matches.items():
            if actor in last and last[actor] != tid:
                switches += 1
            last[actor] = tid
    return switches


def mean_triangulated_error(pred_frames, gt_frames, schema, flag_value=0):
    """Mean 3D distance between triangulated joints of matched tracks and
    the ground truth they track."""
    preds = {f.frame: f for f in pred_frames}
    total = 0.0
    count = 0
    for gtf in gt_frames:
        pf = preds.get(gtf.frame)
        if pf is None:
            continue
        matches = match_actors(pf.actors, gtf.actors, schema)
        for actor, tid in matches.items():
            sel = pf.flags[tid] == flag_value
            if not sel.any():
                continue
            d = np.linalg.norm(pf.actors[tid][sel] - gtf.actors[actor][sel],
                               axis=1)
            total += float(d.sum())
            count += int(sel.sum())
    return total / count if count else float("nan")

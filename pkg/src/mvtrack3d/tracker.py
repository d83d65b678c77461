"""Online multi-person 3D skeleton tracking across calibrated cameras.

Each frame: match every camera's detections to live tracks with the
part-aware affinity, rebuild each matched track from its freshest pose
per camera (filtered, time-weighted triangulation), then cluster the
leftover detections across cameras to spawn new tracks.

Staleness entering the affinity tolerance and the triangulation weights
is measured in frame intervals, so alpha_2d and lambda_a act per frame
of staleness here. At 25 fps the preset tolerances would otherwise be
smaller than detector noise and nothing could ever match.
"""

from __future__ import annotations

import time as _time
from collections import deque
from dataclasses import dataclass, field, fields, replace
from enum import IntEnum

import numpy as np

from . import assignment, kernels
from .affinity import AffinityConfig, Pose2D
from .errors import (
    ConfigError,
    NonMonotonicTime,
    NoRecentObservations,
    ValidationError,
)
from .geometry import CameraRig


class JointFlag(IntEnum):
    TRIANGULATED = kernels.FLAG_TRIANGULATED
    PREDICTED = kernels.FLAG_PREDICTED
    MISSING = kernels.FLAG_MISSING


FLAG_CHARS = {
    int(JointFlag.TRIANGULATED): "T",
    int(JointFlag.PREDICTED): "P",
    int(JointFlag.MISSING): "M",
}
CHAR_FLAGS = {v: k for k, v in FLAG_CHARS.items()}


@dataclass
class Skeleton3D:
    """A 3D skeleton at one instant: (N,3) joints and per-joint flags."""

    time_s: float
    joints: np.ndarray
    flags: np.ndarray

    def __post_init__(self):
        self.joints = np.ascontiguousarray(self.joints, dtype=np.float64)
        self.flags = np.ascontiguousarray(self.flags, dtype=np.uint8)
        if self.joints.ndim != 2 or self.joints.shape[1] != 3:
            raise ValidationError(f"joints must be (N,3), got {self.joints.shape}")
        if self.flags.shape != (self.joints.shape[0],):
            raise ValidationError("flags must align with joints")

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]

    def copy(self) -> "Skeleton3D":
        return Skeleton3D(self.time_s, self.joints.copy(), self.flags.copy())


@dataclass
class FrameBundle:
    """All detections of one frame, grouped per camera id."""

    frame: int
    time_s: float
    poses: dict

    def all_poses(self):
        for cam_id in self.poses:
            for pose in self.poses[cam_id]:
                yield cam_id, pose


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker behavior knobs on top of the affinity thresholds.

    miss_limit defaults to twice the reconstruction window: a track is
    retired after that many consecutive frames without a new 2D match.
    """

    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    part_aware: bool = True
    joints_filter: bool = True
    smoothing: bool = True
    smooth_window: int = 5
    smooth_sigma: float = 1.0
    miss_limit: int | None = None
    project_predicted: bool = False

    def __post_init__(self):
        if self.smooth_window < 1:
            raise ConfigError("smooth_window must be at least 1")
        if self.smooth_sigma <= 0:
            raise ConfigError("smooth_sigma must be positive")
        if self.miss_limit is not None and self.miss_limit < 0:
            raise ConfigError("miss_limit must be non-negative")

    @property
    def effective_miss_limit(self) -> int:
        if self.miss_limit is not None:
            return self.miss_limit
        return 2 * self.affinity.tau

    def with_overrides(self, **kwargs) -> "TrackerConfig":
        own = {f.name for f in fields(self) if f.name != "affinity"}
        tracker_kwargs = {k: v for k, v in kwargs.items() if k in own}
        affinity_kwargs = {k: v for k, v in kwargs.items() if k not in own}
        cfg = replace(self, **tracker_kwargs) if tracker_kwargs else self
        if affinity_kwargs:
            cfg = replace(cfg, affinity=cfg.affinity.with_overrides(**affinity_kwargs))
        return cfg


class Track:
    """State of one tracked person."""

    def __init__(self, track_id: int, skeleton: Skeleton3D, poses: dict,
                 frame: int, window: int):
        self.track_id = track_id
        self.skeleton = skeleton
        self.velocity = np.zeros_like(skeleton.joints)
        self.last_poses = dict(poses)
        self.misses = 0
        self.created_frame = frame
        self.history = deque(maxlen=window)
        self.history.append((skeleton.time_s, skeleton.joints.copy()))

    def predict(self, t: float) -> np.ndarray:
        """Constant-velocity extrapolation of the smoothed joints to time t."""
        return self.skeleton.joints + self.velocity * (t - self.skeleton.time_s)

    def predicted_skeleton(self, t: float) -> Skeleton3D:
        flags = np.full(self.skeleton.n_joints, JointFlag.PREDICTED, dtype=np.uint8)
        return Skeleton3D(t, self.predict(t), flags)

    def advance(self, raw: Skeleton3D, config: TrackerConfig, fps: float) -> Skeleton3D:
        """Fold a freshly reconstructed skeleton into the track state."""
        self.history.append((raw.time_s, raw.joints.copy()))
        if config.smoothing and len(self.history) > 1:
            times = np.array([h[0] for h in self.history])
            stack = np.ascontiguousarray(np.stack([h[1] for h in self.history]))
            smoothed = kernels.causal_gaussian_smooth(
                times, stack, config.smooth_sigma, fps, raw.time_s
            )
        else:
            smoothed = raw.joints.copy()
        prev_t = self.skeleton.time_s
        prev_joints = self.skeleton.joints
        dt = raw.time_s - prev_t
        if dt > 0:
            self.velocity = (smoothed - prev_joints) / dt
        self.skeleton = Skeleton3D(raw.time_s, smoothed, raw.flags.copy())
        return self.skeleton


class PoseTracker:
    """Stateful frame-by-frame tracker over one calibrated rig."""

    def __init__(self, rig, config: TrackerConfig | None = None):
        self.rig = rig if isinstance(rig, CameraRig) else CameraRig(rig)
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self._next_id = 1
        self._last_time = -np.inf
        self._last_frame: int | None = None
        self.frames_processed = 0
        self.stage_seconds = {"associate": 0.0, "reconstruct": 0.0, "initialize": 0.0}

    # -- association -------------------------------------------------

    def _associate(self, bundle: FrameBundle):
        """Per-camera bipartite matching of detections to live tracks.

        Updates each matched track's freshest pose for that camera and
        returns ({cam_id: unmatched poses}, {track ids matched this frame}).
        """
        cfg = self.config
        aff = cfg.affinity
        fps = self.rig.fps
        unmatched = {}
        matched_ids = set()
        tracks = self.tracks
        for ci, cam in enumerate(self.rig.cameras):
            poses = bundle.poses.get(cam.cam_id) or []
            if not poses:
                continue
            if not tracks:
                unmatched[cam.cam_id] = list(poses)
                continue
            cam_t = poses[0].time_s
            # staleness in frame intervals, never below one frame
            dts = np.array(
                [max((cam_t - tr.skeleton.time_s) * fps, 1.0) for tr in tracks]
            )
            if aff.max_dt is not None:
                dts = np.minimum(dts, aff.max_dt * fps)
            if cfg.project_predicted:
                pts = np.stack([tr.predict(cam_t) for tr in tracks])
            else:
                pts = np.stack([tr.skeleton.joints for tr in tracks])
            track_pts = np.ascontiguousarray(pts)
            track_valid = np.ascontiguousarray(
                np.stack([tr.skeleton.flags != JointFlag.MISSING for tr in tracks])
            )
            pose_uv = np.ascontiguousarray(np.stack([p.uv for p in poses]))
            pose_valid = np.ascontiguousarray(np.stack([p.valid for p in poses]))
            scores = kernels.score_pose_pairs(
                track_pts, track_valid, dts, cam.K, cam.R, cam.o,
                pose_uv, pose_valid,
                aff.alpha_2d, aff.lambda_a, aff.epsilon, cfg.part_aware,
            )
            match = assignment.solve(scores, 0.0)
            for ti, pi in match.pairs:
                tracks[ti].last_poses[cam.cam_id] = poses[pi]
                matched_ids.add(tracks[ti].track_id)
            unmatched[cam.cam_id] = [poses[pi] for pi in match.unmatched_cols]
        return unmatched, matched_ids

    # -- reconstruction ----------------------------------------------

    def _recent_poses(self, track: Track, bundle: FrameBundle):
        """Freshest matched pose per camera still inside the window."""
        tau = self.config.affinity.tau
        recent = {}
        for cam_id, pose in track.last_poses.items():
            if pose.frame >= 0:
                age = bundle.frame - pose.frame
                if 0 <= age < tau:
                    recent[cam_id] = pose
            else:
                age_s = bundle.time_s - pose.time_s
                if 0 <= age_s < tau / self.rig.fps:
                    recent[cam_id] = pose
        return recent

    def reconstruct(self, track: Track, bundle: FrameBundle) -> Skeleton3D:
        """Triangulate a track from its recent poses and advance its state."""
        recent = self._recent_poses(track, bundle)
        if not recent:
            raise NoRecentObservations(
                f"track {track.track_id} has no pose within the window"
            )
        cfg = self.config
        t = bundle.time_s
        rig = self.rig
        n_cams = len(rig)
        n_joints = track.skeleton.n_joints
        obs_uv = np.zeros((n_cams, n_joints, 2))
        obs_valid = np.zeros((n_cams, n_joints), dtype=bool)
        weights = np.zeros(n_cams)
        for cam_id, pose in recent.items():
            ci = rig.index_of[cam_id]
            obs_uv[ci] = pose.uv
            obs_valid[ci] = pose.valid
            age_frames = max(t - pose.time_s, 0.0) * rig.fps
            weights[ci] = np.exp(-cfg.affinity.lambda_a * age_frames)
        pred = track.predict(t)
        joints, flags = kernels.reconstruct_joints(
            np.ascontiguousarray(obs_uv), np.ascontiguousarray(obs_valid),
            weights, np.ascontiguousarray(pred),
            rig.f_table, rig.origins, rig.krinv_table, rig.pn_table,
            rig.su, rig.sv, cfg.affinity.alpha_epi, cfg.joints_filter,
        )
        raw = Skeleton3D(t, joints, flags)
        return track.advance(raw, cfg, rig.fps)

    # -- initialization ----------------------------------------------

    def _cluster_unmatched(self, unmatched: dict):
        """Greedy cross-view clustering of unmatched poses, camera by camera."""
        aff = self.config.affinity
        rig = self.rig
        clusters: list[list] = []
        for ci, cam in enumerate(rig.cameras):
            cands = unmatched.get(cam.cam_id) or []
            if not cands:
                continue
            if not clusters:
                clusters = [[(ci, p)] for p in cands]
                continue
            scores = np.empty((len(clusters), len(cands)))
            for k, cluster in enumerate(clusters):
                for l, cand in enumerate(cands):
                    best = -np.inf
                    for cj, member in cluster:
                        s = kernels.epipolar_pose_score(
                            member.uv, member.valid, cand.uv, cand.valid,
                            rig.f_table[cj, ci], rig.f_table[ci, cj],
                            aff.alpha_epi,
                        )
                        if s > best:
                            best = s
                    scores[k, l] = best
            match = assignment.solve(scores, 0.0)
            for k, l in match.pairs:
                clusters[k].append((ci, cands[l]))
            for l in match.unmatched_cols:
                clusters.append([(ci, cands[l])])
        return clusters

    def _init_skeleton(self, cluster, t: float) -> Skeleton3D | None:
        """Triangulate a cross-view cluster into a first skeleton.

        Joints with fewer than two consistent views are placed on a
        single view's ray at the skeleton centroid depth, or at the
        centroid itself, and flagged predicted. Returns None when not a
        single joint triangulates.
        """
        cfg = self.config
        rig = self.rig
        n_joints = cluster[0][1].n_joints
        joints = np.zeros((n_joints, 3))
        flags = np.full(n_joints, JointFlag.PREDICTED, dtype=np.uint8)
        fallback_obs: dict[int, tuple] = {}
        for n in range(n_joints):
            obs = [(ci, pose.uv[n]) for ci, pose in cluster if pose.valid[n]]
            if not obs:
                continue
            if len(obs) >= 2 and cfg.joints_filter:
                uvs = np.ascontiguousarray([uv for _, uv in obs])
                cam_idx = np.array([ci for ci, _ in obs], dtype=np.int64)
                keep = kernels.filter_init_mask(
                    uvs, cam_idx, rig.f_table, cfg.affinity.alpha_epi
                )
                obs = [ob for ob, k in zip(obs, keep) if k]
            if len(obs) >= 2:
                uvn = np.empty((len(obs), 2))
                pm = np.empty((len(obs), 3, 4))
                for i, (ci, uv) in enumerate(obs):
                    uvn[i, 0] = uv[0] * rig.su[ci] - 1.0
                    uvn[i, 1] = uv[1] * rig.sv[ci] - 1.0
                    pm[i] = rig.pn_table[ci]
                xyz, status = kernels.triangulate_normalized(uvn, pm, np.ones(len(obs)))
                if status == 0:
                    joints[n] = xyz
                    flags[n] = JointFlag.TRIANGULATED
                    continue
            if obs:
                fallback_obs[n] = obs[0]
            else:
                ci, pose = cluster[0]
                if pose.valid[n]:
                    fallback_obs[n] = (ci, pose.uv[n])
        tri = flags == JointFlag.TRIANGULATED
        if not tri.any():
            return None
        centroid = joints[tri].mean(axis=0)
        for n in range(n_joints):
            if tri[n]:
                continue
            hit = fallback_obs.get(n)
            if hit is None:
                joints[n] = centroid
                continue
            ci, uv = hit
            direction = kernels.back_project_dir(uv[0], uv[1], rig.krinv_table[ci])
            depth = float(np.dot(centroid - rig.origins[ci], direction))
            if depth <= 0:
                joints[n] = centroid
            else:
                joints[n] = rig.origins[ci] + depth * direction
        return Skeleton3D(t, joints, flags)

    def initialize(self, unmatched: dict, bundle: FrameBundle) -> list:
        """Spawn tracks from cross-view clusters of unmatched poses."""
        new_tracks = []
        for cluster in self._cluster_unmatched(unmatched):
            if len(cluster) < 2:
                continue
            skeleton = self._init_skeleton(cluster, bundle.time_s)
            if skeleton is None:
                continue
            poses = {self.rig.cameras[ci].cam_id: pose for ci, pose in cluster}
            track = Track(self._next_id, skeleton, poses, bundle.frame,
                          self.config.smooth_window)
            self._next_id += 1
            new_tracks.append(track)
        return new_tracks

    # -- main loop ---------------------------------------------------

    def step(self, bundle: FrameBundle):
        """Process one frame, returns [(track_id, Skeleton3D)] for live tracks."""
        if bundle.time_s <= self._last_time:
            raise NonMonotonicTime(
                f"bundle at {bundle.time_s} is not after {self._last_time}"
            )
        if self._last_frame is not None and bundle.frame <= self._last_frame:
            raise NonMonotonicTime(
                f"frame {bundle.frame} is not after {self._last_frame}"
            )
        t0 = _time.perf_counter()
        unmatched, matched_ids = self._associate(bundle)
        t1 = _time.perf_counter()
        emissions = {}
        for track in self.tracks:
            if self._recent_poses(track, bundle):
                emissions[track.track_id] = self.reconstruct(track, bundle)
            else:
                emissions[track.track_id] = track.predicted_skeleton(bundle.time_s)
            if track.track_id in matched_ids:
                track.misses = 0
            else:
                track.misses += 1
        t2 = _time.perf_counter()
        new_tracks = self.initialize(unmatched, bundle)
        t3 = _time.perf_counter()
        limit = self.config.effective_miss_limit
        self.tracks = [tr for tr in self.tracks if tr.misses <= limit]
        self.tracks.extend(new_tracks)
        for track in new_tracks:
            emissions[track.track_id] = track.skeleton
        self.stage_seconds["associate"] += t1 - t0
        self.stage_seconds["reconstruct"] += t2 - t1
        self.stage_seconds["initialize"] += t3 - t2
        self.frames_processed += 1
        self._last_time = bundle.time_s
        self._last_frame = bundle.frame
        return [(tr.track_id, emissions[tr.track_id]) for tr in self.tracks]

    @property
    def stage_means_ms(self) -> dict:
        n = max(self.frames_processed, 1)
        return {k: 1e3 * v / n for k, v in self.stage_seconds.items()}

"""Line-delimited JSON file formats for calibration, detections, tracks,
ground truth, and synthetic corruption labels.

Every file starts with a header record carrying the format name, a format
version, and (for joint-bearing formats) the joint schema name. One
self-describing JSON object per line after that; matrices row-major;
meters for world coordinates, pixels for image coordinates, seconds for
time. Floats serialize through repr so a write/load cycle is exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .affinity import AffinityConfig, Pose2D
from .errors import NonMonotonicFrames, ParseError, ValidationError
from .geometry import CameraCalibration
from .tracker import CHAR_FLAGS, FLAG_CHARS, FrameBundle, Skeleton3D

FORMAT_VERSION = 1

CALIBRATION_FORMAT = "mvtrack3d/calibration"
DETECTIONS_FORMAT = "mvtrack3d/detections"
TRACKS_FORMAT = "mvtrack3d/tracks"
GROUND_TRUTH_FORMAT = "mvtrack3d/ground_truth"
CORRUPTION_FORMAT = "mvtrack3d/corruption"


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=np.float64).ravel()]


def _parse_line(line: str, lineno: int, path: str) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(record, dict):
        raise ParseError(f"{path}:{lineno}: expected an object record")
    return record


def _require(record: dict, key: str, lineno: int, path: str):
    if key not in record:
        raise ParseError(f"{path}:{lineno}: missing field '{key}'")
    return record[key]


def _read_records(path: str) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            yield lineno, _parse_line(line, lineno, path)


def _check_header(record: dict, expected: str, lineno: int, path: str) -> dict:
    fmt = record.get("format")
    if fmt != expected:
        raise ParseError(
            f"{path}:{lineno}: expected {expected} header, found {fmt!r}"
        )
    version = record.get("format_version")
    if version != FORMAT_VERSION:
        raise ParseError(
            f"{path}:{lineno}: unsupported format_version {version!r}"
        )
    return record


# -- calibration ------------------------------------------------------


def save_calibration(cameras: Sequence[CameraCalibration], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"format": CALIBRATION_FORMAT,
                         "format_version": FORMAT_VERSION}) + "\n")
        for cam in cameras:
            fh.write(_dumps({
                "id": int(cam.cam_id),
                "K": _floats(cam.K),
                "R": _floats(cam.R),
                "o": _floats(cam.o),
                "width": int(cam.width),
                "height": int(cam.height),
                "fps": float(cam.fps),
            }) + "\n")


def load_calibration(path: str) -> list[CameraCalibration]:
    """Read a calibration file; rotation orthonormality is re-validated."""
    cameras: list[CameraCalibration] = []
    records = _read_records(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(f"{path}: empty file, expected header record")
    _check_header(header, CALIBRATION_FORMAT, lineno, path)
    for lineno, rec in records:
        k = _require(rec, "K", lineno, path)
        r = _require(rec, "R", lineno, path)
        o = _require(rec, "o", lineno, path)
        if len(k) != 9 or len(r) != 9 or len(o) != 3:
            raise ParseError(f"{path}:{lineno}: K/R/o must have 9/9/3 entries")
        try:
            cameras.append(CameraCalibration(
                cam_id=int(_require(rec, "id", lineno, path)),
                K=np.array(k, dtype=np.float64).reshape(3, 3),
                R=np.array(r, dtype=np.float64).reshape(3, 3),
                o=np.array(o, dtype=np.float64),
                width=int(_require(rec, "width", lineno, path)),
                height=int(_require(rec, "height", lineno, path)),
                fps=float(_require(rec, "fps", lineno, path)),
            ))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    return cameras


# -- detections -------------------------------------------------------


def write_detections(records: Iterable[tuple[int, float, int, np.ndarray]],
                     path: str, schema_name: str, n_joints: int) -> None:
    """Write (frame, time_s, camera id, (P,N,3) pose array) records."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"format": DETECTIONS_FORMAT,
                         "format_version": FORMAT_VERSION,
                         "schema": schema_name,
                         "n_joints": int(n_joints)}) + "\n")
        for frame, time_s, cam_id, poses in records:
            arr = np.asarray(poses, dtype=np.float64)
            fh.write(_dumps({
                "frame": int(frame),
                "camera": int(cam_id),
                "time_s": float(time_s),
                "poses": [[[float(v) for v in joint] for joint in pose]
                          for pose in arr],
            }) + "\n")


def read_detections_header(path: str) -> dict:
    """Return the header record of a detections file."""
    records = _read_records(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(f"{path}: empty file, expected header record")
    return _check_header(header, DETECTIONS_FORMAT, lineno, path)


def load_detections(path: str,
                    config: AffinityConfig | None = None,
                    cameras: Sequence[CameraCalibration] | None = None,
                    ) -> Iterator[FrameBundle]:
    """Stream FrameBundles from a detections file.

    Joint validity is recomputed from confidences (and image bounds when
    cameras are given), so a file written from synth poses parses back to
    the same masks. Frames must be non-decreasing.
    """
    cfg = config if config is not None else AffinityConfig()
    cam_by_id = {c.cam_id: c for c in cameras} if cameras is not None else {}
    records = _read_records(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(f"{path}: empty file, expected header record")
    _check_header(header, DETECTIONS_FORMAT, lineno, path)
    n_joints = int(header.get("n_joints", 0))

    current: FrameBundle | None = None
    last_frame = None
    for lineno, rec in records:
        frame = int(_require(rec, "frame", lineno, path))
        cam_id = int(_require(rec, "camera", lineno, path))
        time_s = float(_require(rec, "time_s", lineno, path))
        poses = _require(rec, "poses", lineno, path)
        if last_frame is not None and frame < last_frame:
            raise NonMonotonicFrames(
                f"{path}:{lineno}: frame {frame} after frame {last_frame}"
            )
        last_frame = frame
        if current is not None and frame != current.frame:
            yield current
            current = None
        if current is None:
            current = FrameBundle(frame=frame, time_s=time_s, poses={})
        elif time_s > current.time_s:
            current.time_s = time_s
        pose_list = current.poses.setdefault(cam_id, [])
        for pose in poses:
            arr = np.asarray(pose, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 3 or (
                    n_joints and arr.shape[0] != n_joints):
                raise ParseError(
                    f"{path}:{lineno}: pose shape {arr.shape} does not match "
                    f"{n_joints} joints x (u, v, conf)"
                )
            pose_list.append(Pose2D.from_detection(
                cam_id, time_s, arr, cfg,
                camera=cam_by_id.get(cam_id), frame=frame,
            ))
    if current is not None:
        yield current


# -- tracks -----------------------------------------------------------


class TrackWriter:
    """Streaming tracks-file writer; one record per frame, flushed as written."""

    def __init__(self, path: str, schema_name: str, n_joints: int):
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(_dumps({"format": TRACKS_FORMAT,
                               "format_version": FORMAT_VERSION,
                               "schema": schema_name,
                               "n_joints": int(n_joints)}) + "\n")
        self._fh.flush()

    def write(self, frame: int, time_s: float,
              skeletons: Sequence[tuple[int, Skeleton3D]]) -> None:
        tracks = []
        for track_id, skel in skeletons:
            joints = []
            for j in range(skel.joints.shape[0]):
                x, y, z = skel.joints[j]
                joints.append([float(x), float(y), float(z),
                               FLAG_CHARS[int(skel.flags[j])]])
            tracks.append({"id": int(track_id), "joints": joints})
        self._fh.write(_dumps({"frame": int(frame),
                               "time_s": float(time_s),
                               "tracks": tracks}) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TrackWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class TrackFrame:
    frame: int
    time_s: float
    actors: dict[int, np.ndarray]
    flags: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class TrackFile:
    schema: str
    n_joints: int
    frames: list[TrackFrame]


def load_tracks(path: str) -> TrackFile:
    records = _read_records(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(f"{path}: empty file, expected header record")
    _check_header(header, TRACKS_FORMAT, lineno, path)
    schema = str(header.get("schema", ""))
    n_joints = int(header.get("n_joints", 0))
    frames: list[TrackFrame] = []
    for lineno, rec in records:
        frame = int(_require(rec, "frame", lineno, path))
        time_s = float(_require(rec, "time_s", lineno, path))
        actors: dict[int, np.ndarray] = {}
        flags: dict[int, np.ndarray] = {}
        for entry in _require(rec, "tracks", lineno, path):
            tid = int(entry["id"])
            rows = entry["joints"]
            if n_joints and len(rows) != n_joints:
                raise ParseError(
                    f"{path}:{lineno}: track {tid} has {len(rows)} joints, "
                    f"header says {n_joints}"
                )
            joints = np.empty((len(rows), 3), dtype=np.float64)
            codes = np.empty(len(rows), dtype=np.uint8)
            for j, row in enumerate(rows):
                if len(row) != 4 or row[3] not in CHAR_FLAGS:
                    raise ParseError(
                        f"{path}:{lineno}: joint row must be [X,Y,Z,flag]"
                    )
                joints[j] = (float(row[0]), float(row[1]), float(row[2]))
                codes[j] = CHAR_FLAGS[row[3]]
            actors[tid] = joints
            flags[tid] = codes
        frames.append(TrackFrame(frame, time_s, actors, flags))
    return TrackFile(schema, n_joints, frames)


# -- ground truth -----------------------------------------------------


@dataclass
class GroundTruthFrame:
    frame: int
    actors: dict[int, np.ndarray]
    masks: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass
class GroundTruthFile:
    schema: str
    n_joints: int
    frames: list[GroundTruthFrame]


def save_ground_truth(frames: Iterable[GroundTruthFrame], path: str,
                      schema_name: str, n_joints: int) -> None:
    last = None
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"format": GROUND_TRUTH_FORMAT,
                         "format_version": FORMAT_VERSION,
                         "schema": schema_name,
                         "n_joints": int(n_joints)}) + "\n")
        for gt in frames:
            if last is not None and gt.frame <= last:
                raise ValidationError(
                    f"ground-truth frames must increase: {gt.frame} after {last}"
                )
            last = gt.frame
            actors = []
            for aid in gt.actors:
                entry = {"id": int(aid),
                         "joints": [[float(v) for v in row]
                                    for row in np.asarray(gt.actors[aid])]}
                if aid in gt.masks:
                    entry["mask"] = [bool(v) for v in gt.masks[aid]]
                actors.append(entry)
            fh.write(_dumps({"frame": int(gt.frame), "actors": actors}) + "\n")


def load_ground_truth(path: str) -> GroundTruthFile:
    records = _read_records(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(f"{path}: empty file, expected header record")
    _check_header(header, GROUND_TRUTH_FORMAT, lineno, path)
    schema = str(header.get("schema", ""))
    n_joints = int(header.get("n_joints", 0))
    frames: list[GroundTruthFrame] = []
    last = None
    for lineno, rec in records:
        frame = int(_require(rec, "frame", lineno, path))
        if last is not None and frame <= last:
            raise NonMonotonicFrames(
                f"{path}:{lineno}: frame {frame} after frame {last}"
            )
        last = frame
        actors: dict[int, np.ndarray] = {}
        masks: dict[int, np.ndarray] = {}
        for entry in _require(rec, "actors", lineno, path):
            aid = int(entry["id"])
            joints = np.asarray(entry["joints"], dtype=np.float64)
            if joints.ndim != 2 or joints.shape[1] != 3 or (
                    n_joints and joints.shape[0] != n_joints):
                raise ParseError(
                    f"{path}:{lineno}: actor {aid} joints shape "
                    f"{joints.shape} does not match header"
                )
            actors[aid] = joints
            if "mask" in entry:
                masks[aid] = np.asarray(entry["mask"], dtype=bool)
        frames.append(GroundTruthFrame(frame, actors, masks))
    return GroundTruthFile(schema, n_joints, frames)


# -- corruption sidecar -----------------------------------------------


def write_corruption(records: Iterable[dict], path: str,
                     schema_name: str) -> None:
    """Write per-joint corruption labels {frame, camera, pose, joint, class}."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dumps({"format": CORRUPTION_FORMAT,
                         "format_version": FORMAT_VERSION,
                         "schema": schema_name}) + "\n")
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def load_corruption(path: str) -> list[dict]:
    records = _read_records(path)
    try:
        lineno, header = next(records)
    except StopIteration:
        raise ParseError(f"{path}: empty file, expected header record")
    _check_header(header, CORRUPTION_FORMAT, lineno, path)
    out = []
    for lineno, rec in records:
        for key in ("frame", "camera", "pose", "joint", "class"):
            _require(rec, key, lineno, path)
        out.append(rec)
    return out


def load_config_file(path: str) -> dict:
    """Read a JSON object of configuration overrides."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    return data

"""Domain model for wrist-sensor assessment sessions.

A session holds one participant's recordings for 11 assessment tasks, each
captured on both arms by two sensors (accelerometer in m/s^2, gyroscope in
rad/s) over three axes. Three tasks run for 20 s and are cut into two 10 s
halves during normalization, yielding 14 task slots and 168 channels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

LABELS = ("PD", "DD", "HC")
ARMS = ("left", "right")
SENSORS = ("accelerometer", "gyroscope")
AXES = ("x", "y", "z")

N_RAW_TASKS = 11
DEFAULT_LONG_TASKS = frozenset({1, 2, 3})
SEGMENT_SECONDS = 10.0


class SessionError(ValueError):
    """Schema or invariant violation in a session file or session object."""


class ChannelKey(NamedTuple):
    """Address of one post-split channel.

    Tuple ordering is the canonical channel order: task_id, then
    left < right, accelerometer < gyroscope, x < y < z.
    """

    task_id: int
    arm: str
    sensor: str
    axis: str

    def name(self) -> str:
        return f"t{self.task_id:02d}_{self.arm}_{self.sensor}_{self.axis}"


@dataclass(frozen=True)
class TaskManifest:
    """Which raw tasks were recorded for 20 s, and how raw ids map to task slots.

    Raw tasks are numbered 1..11. Each 20 s task contributes two consecutive
    post-split task ids; 10 s tasks contribute one. The resulting map is a
    bijection onto 1..n_split_tasks (14 with the default three long tasks).
    """

    long_task_ids: frozenset = DEFAULT_LONG_TASKS

    def __post_init__(self):
        ids = frozenset(int(t) for t in self.long_task_ids)
        if not ids <= set(range(1, N_RAW_TASKS + 1)):
            raise SessionError(f"long task ids must lie in 1..{N_RAW_TASKS}, got {sorted(ids)}")
        object.__setattr__(self, "long_task_ids", ids)

    @property
    def n_split_tasks(self) -> int:
        return N_RAW_TASKS + len(self.long_task_ids)

    def split_map(self) -> dict[int, tuple[int, ...]]:
        """Raw task id -> post-split task id(s), assigned in raw-id order."""
        mapping = {}
        nxt = 1
        for raw in range(1, N_RAW_TASKS + 1):
            if raw in self.long_task_ids:
                mapping[raw] = (nxt, nxt + 1)
                nxt += 2
            else:
                mapping[raw] = (nxt,)
                nxt += 1
        return mapping

    def group_of(self, split_task_id: int) -> int:
        """Raw task id that produced the given post-split task id."""
        for raw, split_ids in self.split_map().items():
            if split_task_id in split_ids:
                return raw
        raise SessionError(f"post-split task id {split_task_id} outside 1..{self.n_split_tasks}")

    def to_dict(self) -> dict:
        return {"long_task_ids": sorted(self.long_task_ids)}

    @classmethod
    def from_dict(cls, obj: dict) -> "TaskManifest":
        return cls(long_task_ids=frozenset(obj["long_task_ids"]))


@dataclass(frozen=True)
class RawRecording:
    """One raw channel as recorded: pre-split, 10 s or 20 s long."""

    raw_task_id: int
    arm: str
    sensor: str
    axis: str
    samples: np.ndarray

    @property
    def key(self) -> tuple:
        return (self.raw_task_id, self.arm, self.sensor, self.axis)


@dataclass(frozen=True)
class RecordingSession:
    """One participant's labeled recordings.

    Immutable; `channels` is populated by split_long_records and maps each of
    the post-split ChannelKeys to a 10 s sample vector of equal length.
    """

    participant_id: str
    label: str
    handedness: str
    sampling_rate_hz: float
    raw_recordings: tuple = ()
    channels: dict | None = None

    @property
    def is_split(self) -> bool:
        return self.channels is not None

    def channel_keys(self) -> list[ChannelKey]:
        if self.channels is None:
            raise SessionError("session not normalized; call split_long_records first")
        return sorted(self.channels)


def expected_raw_keys() -> list[tuple]:
    return [
        (task, arm, sensor, axis)
        for task in range(1, N_RAW_TASKS + 1)
        for arm in ARMS
        for sensor in SENSORS
        for axis in AXES
    ]


def expected_channel_keys(manifest: TaskManifest) -> list[ChannelKey]:
    """The full post-split key set in canonical order (168 for the default manifest)."""
    return [
        ChannelKey(task, arm, sensor, axis)
        for task in range(1, manifest.n_split_tasks + 1)
        for arm in ARMS
        for sensor in SENSORS
        for axis in AXES
    ]


def samples_per_channel(sampling_rate_hz: float) -> int:
    return round(SEGMENT_SECONDS * sampling_rate_hz)


def _require(condition: bool, message: str):
    if not condition:
        raise SessionError(message)


def session_from_dict(obj: dict, *, source: str = "<session>") -> RecordingSession:
    """Validate a parsed session document and build the raw (unsplit) session."""
    for fieldname in ("participant_id", "label", "handedness", "sampling_rate_hz", "recordings"):
        _require(fieldname in obj, f"{source}: missing field '{fieldname}'")
    label = obj["label"]
    handedness = obj["handedness"]
    _require(label in LABELS, f"{source}: unknown label {label!r}; expected one of {LABELS}")
    _require(
        handedness in ARMS, f"{source}: unknown handedness {handedness!r}; expected one of {ARMS}"
    )
    fs = obj["sampling_rate_hz"]
    _require(
        isinstance(fs, (int, float)) and math.isfinite(fs) and fs > 0,
        f"{source}: sampling_rate_hz must be a positive number, got {fs!r}",
    )
    _require(isinstance(obj["recordings"], list), f"{source}: 'recordings' must be a list")

    seen = {}
    recordings = []
    for rec in obj["recordings"]:
        for fieldname in ("task_id", "arm", "sensor", "axis", "samples"):
            _require(fieldname in rec, f"{source}: recording missing field '{fieldname}'")
        key = (rec["task_id"], rec["arm"], rec["sensor"], rec["axis"])
        _require(
            isinstance(rec["task_id"], int) and 1 <= rec["task_id"] <= N_RAW_TASKS,
            f"{source}: unknown task id {rec['task_id']!r} in recording {key}",
        )
        _require(rec["arm"] in ARMS, f"{source}: unknown arm in recording {key}")
        _require(rec["sensor"] in SENSORS, f"{source}: unknown sensor in recording {key}")
        _require(rec["axis"] in AXES, f"{source}: unknown axis in recording {key}")
        _require(key not in seen, f"{source}: duplicate channel {key}")
        seen[key] = True
        if "sampling_rate_hz" in rec:
            _require(
                rec["sampling_rate_hz"] == fs,
                f"{source}: inconsistent sampling rate in recording {key}: "
                f"{rec['sampling_rate_hz']!r} != session rate {fs!r}",
            )
        samples = np.asarray(rec["samples"], dtype=np.float64)
        _require(samples.ndim == 1 and samples.size > 0, f"{source}: empty samples in {key}")
        _require(bool(np.isfinite(samples).all()), f"{source}: non-finite samples in {key}")
        samples.setflags(write=False)
        recordings.append(
            RawRecording(rec["task_id"], rec["arm"], rec["sensor"], rec["axis"], samples)
        )

    missing = [k for k in expected_raw_keys() if k not in seen]
    if missing:
        task, arm, sensor, axis = missing[0]
        raise SessionError(
            f"{source}: missing recording (task={task}, arm={arm}, sensor={sensor}, "
            f"axis={axis}); {len(missing)} channel(s) absent in total"
        )

    recordings.sort(key=lambda r: r.key)
    return RecordingSession(
        participant_id=str(obj["participant_id"]),
        label=label,
        handedness=handedness,
        sampling_rate_hz=float(fs),
        raw_recordings=tuple(recordings),
    )


def session_to_dict(session: RecordingSession) -> dict:
    """Inverse of session_from_dict; emits the raw (pre-split) schema."""
    if not session.raw_recordings:
        raise SessionError("session has no raw recordings to serialize")
    return {
        "participant_id": session.participant_id,
        "label": session.label,
        "handedness": session.handedness,
        "sampling_rate_hz": session.sampling_rate_hz,
        "recordings": [
            {
                "task_id": rec.raw_task_id,
                "arm": rec.arm,
                "sensor": rec.sensor,
                "axis": rec.axis,
                "samples": [float(x) for x in rec.samples],
            }
            for rec in sorted(session.raw_recordings, key=lambda r: r.key)
        ],
    }


def load_session(path, manifest: TaskManifest | None = None) -> RecordingSession:
    """Load and validate one session file. The result is raw (not yet split)."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SessionError(f"{path}: not valid JSON: {exc}") from exc
    return session_from_dict(obj, source=str(path))


def save_session(session: RecordingSession, path) -> None:
    Path(path).write_text(
        json.dumps(session_to_dict(session), sort_keys=True, separators=(",", ":")),
        encoding="utf-8",
    )


def split_long_records(session: RecordingSession, manifest: TaskManifest) -> RecordingSession:
    """Normalize a session: cut 20 s records in half, trim everything to 10 s.

    A long record of L >= 2*n10 samples (n10 = round(10*fs)) yields
    samples[0:n10] and samples[n10:2*n10]; surplus beyond 2*n10 is dropped
    from the end. Short records are trimmed to n10 samples. Idempotent on
    already-split sessions.
    """
    if session.is_split:
        return session
    n10 = samples_per_channel(session.sampling_rate_hz)
    split_map = manifest.split_map()
    channels = {}
    for rec in session.raw_recordings:
        targets = split_map[rec.raw_task_id]
        need = n10 * len(targets)
        if rec.samples.size < need:
            raise SessionError(
                f"{session.participant_id}: recording {rec.key} too short for its declared "
                f"duration: {rec.samples.size} samples < {need} required"
            )
        for part, task_id in enumerate(targets):
            chunk = rec.samples[part * n10 : (part + 1) * n10]
            channels[ChannelKey(task_id, rec.arm, rec.sensor, rec.axis)] = chunk
    expected = set(expected_channel_keys(manifest))
    if set(channels) != expected:
        raise SessionError(
            f"{session.participant_id}: post-split channel set incomplete "
            f"({len(channels)} of {len(expected)})"
        )
    return RecordingSession(
        participant_id=session.participant_id,
        label=session.label,
        handedness=session.handedness,
        sampling_rate_hz=session.sampling_rate_hz,
        raw_recordings=session.raw_recordings,
        channels=channels,
    )


def channel_count(session: RecordingSession) -> int:
    if session.channels is None:
        raise SessionError("session not normalized; call split_long_records first")
    return len(session.channels)


def filter_channels(
    session: RecordingSession, *, arm: str | None = None, sensor: str | None = None
) -> RecordingSession:
    """Restrict a normalized session to one arm and/or one sensor."""
    if session.channels is None:
        raise SessionError("session not normalized; call split_long_records first")
    kept = {
        key: vec
        for key, vec in session.channels.items()
        if (arm is None or key.arm == arm) and (sensor is None or key.sensor == sensor)
    }
    return RecordingSession(
        participant_id=session.participant_id,
        label=session.label,
        handedness=session.handedness,
        sampling_rate_hz=session.sampling_rate_hz,
        raw_recordings=session.raw_recordings,
        channels=kept,
    )


def load_manifest(path) -> TaskManifest:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return TaskManifest.from_dict(obj)


def load_cohort(cohort_dir) -> tuple[TaskManifest, list[RecordingSession]]:
    """Load a cohort directory: manifest.json plus one session file per participant.

    Sessions are returned normalized (post-split), sorted by participant id.
    All sessions must share one sampling rate.
    """
    cohort_dir = Path(cohort_dir)
    manifest_path = cohort_dir / "manifest.json"
    if not manifest_path.exists():
        raise SessionError(f"{cohort_dir}: missing manifest.json")
    manifest = load_manifest(manifest_path)
    session_dir = cohort_dir / "sessions"
    paths = sorted(session_dir.glob("*.json")) if session_dir.exists() else []
    sessions = []
    rate = None
    for path in paths:
        session = split_long_records(load_session(path), manifest)
        if rate is None:
            rate = session.sampling_rate_hz
        elif session.sampling_rate_hz != rate:
            raise SessionError(
                f"{path}: inconsistent sampling rate across cohort: "
                f"{session.sampling_rate_hz} != {rate}"
            )
        sessions.append(session)
    sessions.sort(key=lambda s: s.participant_id)
    return manifest, sessions

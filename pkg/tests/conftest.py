import numpy as np
import pytest

from wristscreen.sessions import ARMS, AXES, N_RAW_TASKS, SENSORS, TaskManifest


def make_session_dict(
    fs: float = 50.0,
    long_tasks=(1, 2, 3),
    participant_id: str = "p0000",
    label: str = "PD",
    handedness: str = "right",
    seed: int = 0,
):
    """A complete, well-formed raw session document (132 recordings)."""
    rng = np.random.default_rng(seed)
    n10 = round(10 * fs)
    recordings = []
    for task in range(1, N_RAW_TASKS + 1):
        n = 2 * n10 if task in long_tasks else n10
        for arm in ARMS:
            for sensor in SENSORS:
                for axis in AXES:
                    recordings.append(
                        {
                            "task_id": task,
                            "arm": arm,
                            "sensor": sensor,
                            "axis": axis,
                            "samples": rng.normal(size=n).tolist(),
                        }
                    )
    return {
        "participant_id": participant_id,
        "label": label,
        "handedness": handedness,
        "sampling_rate_hz": fs,
        "recordings": recordings,
    }


@pytest.fixture
def session_dict():
    return make_session_dict()


@pytest.fixture
def manifest():
    return TaskManifest()

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wristscreen.sessions import (
    ARMS,
    AXES,
    ChannelKey,
    N_RAW_TASKS,
    SENSORS,
    SessionError,
    TaskManifest,
    channel_count,
    expected_channel_keys,
    filter_channels,
    load_session,
    save_session,
    session_from_dict,
    split_long_records,
)

from conftest import make_session_dict


class TestTaskManifest:
    def test_default_covers_fourteen_slots(self):
        manifest = TaskManifest()
        assert manifest.n_split_tasks == 14
        mapping = manifest.split_map()
        produced = [t for ids in mapping.values() for t in ids]
        assert sorted(produced) == list(range(1, 15))

    def test_long_tasks_map_to_consecutive_slots(self):
        mapping = TaskManifest(frozenset({2, 5, 9})).split_map()
        for raw in (2, 5, 9):
            a, b = mapping[raw]
            assert b == a + 1
        for raw in set(range(1, 12)) - {2, 5, 9}:
            assert len(mapping[raw]) == 1

    def test_group_of_inverts_split_map(self):
        manifest = TaskManifest()
        for raw, split_ids in manifest.split_map().items():
            for split_id in split_ids:
                assert manifest.group_of(split_id) == raw

    def test_rejects_out_of_range_ids(self):
        with pytest.raises(SessionError):
            TaskManifest(frozenset({0, 1}))
        with pytest.raises(SessionError):
            TaskManifest(frozenset({12}))

    @given(st.sets(st.integers(min_value=1, max_value=11)))
    @settings(max_examples=50, deadline=None)
    def test_split_map_is_bijection(self, long_ids):
        manifest = TaskManifest(frozenset(long_ids))
        produced = [t for ids in manifest.split_map().values() for t in ids]
        assert sorted(produced) == list(range(1, manifest.n_split_tasks + 1))


class TestLoadSession:
    def test_well_formed_file_loads_all_raw_channels(self, session_dict):
        session = session_from_dict(session_dict)
        assert len(session.raw_recordings) == 132  # 11 tasks x 2 arms x 2 sensors x 3 axes
        assert not session.is_split

    def test_missing_axis_error_names_the_channel(self, session_dict):
        session_dict["recordings"] = [
            r
            for r in session_dict["recordings"]
            if not (r["task_id"] == 4 and r["arm"] == "left"
                    and r["sensor"] == "gyroscope" and r["axis"] == "y")
        ]
        with pytest.raises(SessionError, match=r"task=4.*arm=left.*sensor=gyroscope.*axis=y"):
            session_from_dict(session_dict)

    def test_duplicate_channel_rejected(self, session_dict):
        session_dict["recordings"].append(dict(session_dict["recordings"][0]))
        with pytest.raises(SessionError, match="duplicate channel"):
            session_from_dict(session_dict)

    def test_unknown_task_id_rejected(self, session_dict):
        session_dict["recordings"][0]["task_id"] = 12
        with pytest.raises(SessionError, match="unknown task id"):
            session_from_dict(session_dict)

    def test_inconsistent_sampling_rate_rejected(self, session_dict):
        session_dict["recordings"][5]["sampling_rate_hz"] = 49.0
        with pytest.raises(SessionError, match="inconsistent sampling rate"):
            session_from_dict(session_dict)

    def test_unknown_label_rejected(self, session_dict):
        session_dict["label"] = "XX"
        with pytest.raises(SessionError, match="unknown label"):
            session_from_dict(session_dict)

    def test_missing_field_rejected(self, session_dict):
        del session_dict["handedness"]
        with pytest.raises(SessionError, match="handedness"):
            session_from_dict(session_dict)

    def test_non_finite_samples_rejected(self, session_dict):
        session_dict["recordings"][0]["samples"][3] = float("nan")
        with pytest.raises(SessionError, match="non-finite"):
            session_from_dict(session_dict)

    def test_round_trip_is_identity(self, tmp_path, session_dict):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(session_dict))
        first = load_session(path)
        save_session(first, tmp_path / "round.json")
        second = load_session(tmp_path / "round.json")
        assert first.participant_id == second.participant_id
        assert first.label == second.label
        assert first.handedness == second.handedness
        assert first.sampling_rate_hz == second.sampling_rate_hz
        assert len(first.raw_recordings) == len(second.raw_recordings)
        for a, b in zip(first.raw_recordings, second.raw_recordings):
            assert a.key == b.key
            assert np.array_equal(a.samples, b.samples)


class TestSplit:
    def test_three_long_tasks_yield_fourteen_slots(self, session_dict, manifest):
        session = split_long_records(session_from_dict(session_dict), manifest)
        assert channel_count(session) == 168
        assert {k.task_id for k in session.channels} == set(range(1, 15))

    def test_long_record_split_at_midpoint(self, manifest):
        doc = make_session_dict(fs=50.0)
        session = session_from_dict(doc)
        long_rec = next(r for r in session.raw_recordings if r.raw_task_id == 1)
        assert long_rec.samples.size == 1000
        split = split_long_records(session, manifest)
        first = split.channels[ChannelKey(1, long_rec.arm, long_rec.sensor, long_rec.axis)]
        second = split.channels[ChannelKey(2, long_rec.arm, long_rec.sensor, long_rec.axis)]
        assert first.size == second.size == 500
        assert np.array_equal(first, long_rec.samples[:500])
        assert np.array_equal(second, long_rec.samples[500:1000])

    def test_surplus_samples_dropped_from_end(self, manifest):
        doc = make_session_dict(fs=50.0)
        for rec in doc["recordings"]:
            if rec["task_id"] == 1:
                rec["samples"] = rec["samples"] + [99.0]  # 1001 samples
        split = split_long_records(session_from_dict(doc), manifest)
        for key, vec in split.channels.items():
            assert vec.size == 500
            assert 99.0 not in vec

    def test_too_short_record_rejected(self, manifest):
        doc = make_session_dict(fs=50.0)
        for rec in doc["recordings"]:
            if rec["task_id"] == 2 and rec["arm"] == "left":
                rec["samples"] = rec["samples"][:900]
                break
        with pytest.raises(SessionError, match="too short"):
            split_long_records(session_from_dict(doc), manifest)

    def test_idempotent_on_split_sessions(self, session_dict, manifest):
        once = split_long_records(session_from_dict(session_dict), manifest)
        twice = split_long_records(once, manifest)
        assert twice is once

    def test_channel_keys_are_full_cartesian_product(self, session_dict, manifest):
        session = split_long_records(session_from_dict(session_dict), manifest)
        expected = [
            ChannelKey(t, arm, sensor, axis)
            for t, arm, sensor, axis in itertools.product(
                range(1, 15), ARMS, SENSORS, AXES
            )
        ]
        assert session.channel_keys() == expected
        assert session.channel_keys() == sorted(expected)
        assert expected == expected_channel_keys(manifest)


class TestChannelCount:
    def test_complete_session(self, session_dict, manifest):
        session = split_long_records(session_from_dict(session_dict), manifest)
        assert channel_count(session) == 168

    def test_one_arm(self, session_dict, manifest):
        session = split_long_records(session_from_dict(session_dict), manifest)
        assert channel_count(filter_channels(session, arm="left")) == 84

    def test_one_arm_one_sensor(self, session_dict, manifest):
        session = split_long_records(session_from_dict(session_dict), manifest)
        assert channel_count(filter_channels(session, arm="left", sensor="gyroscope")) == 42

    def test_unsplit_session_rejected(self, session_dict):
        with pytest.raises(SessionError, match="not normalized"):
            channel_count(session_from_dict(session_dict))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sp_signal

from wristscreen.features import (
    FEATURE_SUFFIXES,
    FEATURES_PER_CHANNEL,
    FeatureConfig,
    FeatureMatrix,
    apply_scaler,
    channel_features,
    feature_names,
    featurize_cohort,
    featurize_session,
    fit_scaler,
    segment_stats,
    welch_log_psd,
    welch_psd,
)
from wristscreen.sessions import TaskManifest, filter_channels, session_from_dict, split_long_records

from conftest import make_session_dict


def dft_periodogram(x, fs):
    """Brute-force single-segment rectangular-window density PSD via direct DFT.

    Independent of any FFT: explicit O(N^2) evaluation of the transform sum.
    """
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    n = x.size
    k = np.arange(n // 2 + 1)
    angles = -2j * np.pi * np.outer(k, np.arange(n)) / n
    spectrum = np.exp(angles) @ x
    psd = np.abs(spectrum) ** 2 / (fs * n)
    psd[1:] *= 2.0
    if n % 2 == 0:
        psd[-1] /= 2.0
    return k * fs / n, psd


class TestWelch:
    def test_all_zero_signal_hits_log_floor(self):
        out = welch_log_psd(np.zeros(500), 50.0)
        assert out.shape == (19,)
        assert np.all(out == -12.0)

    def test_sine_peaks_in_its_bin_vs_dft_oracle(self):
        fs, n = 50.0, 500
        t = np.arange(n) / fs
        x = np.sin(2 * np.pi * 5.0 * t)
        # production configuration
        log_psd = welch_log_psd(x, fs)
        assert int(np.argmax(log_psd)) + 1 == 5
        # oracle configuration: single rectangular segment == direct DFT
        freqs, psd = welch_psd(x, fs, segment_length=n, window="rectangular", overlap=0.0)
        freqs_o, psd_o = dft_periodogram(x, fs)
        np.testing.assert_allclose(psd, psd_o, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(freqs, freqs_o)
        assert freqs[np.argmax(psd)] == freqs_o[np.argmax(psd_o)] == 5.0

    def test_parseval_single_segment_rectangular(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=500)
        freqs, psd = welch_psd(x, 50.0, segment_length=500, window="rectangular", overlap=0.0)
        df = freqs[1] - freqs[0]
        total = psd.sum() * df
        variance = np.var(x - x.mean())
        assert abs(total - variance) / variance < 1e-6

    def test_matches_reference_welch_implementation(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=500)
        freqs, psd = welch_psd(x, 50.0)
        f_ref, p_ref = sp_signal.welch(
            x, fs=50.0, window="hann", nperseg=50, noverlap=25,
            detrend="constant", scaling="density", average="mean",
        )
        np.testing.assert_allclose(freqs, f_ref)
        np.testing.assert_allclose(psd, p_ref, rtol=1e-10, atol=1e-14)

    def test_amplitude_scaling_multiplies_psd_by_square(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=500)
        _, base = welch_psd(x, 50.0)
        for c in (2.0, 3.5):
            _, scaled = welch_psd(c * x, 50.0)
            np.testing.assert_allclose(scaled, c**2 * base, rtol=1e-12)

    def test_rejects_short_vectors_and_low_rates(self):
        with pytest.raises(ValueError, match="shorter than one segment"):
            welch_psd(np.ones(30), 50.0)
        with pytest.raises(ValueError, match="too low"):
            welch_log_psd(np.ones(300), 30.0)
        with pytest.raises(ValueError, match="non-finite"):
            welch_psd(np.array([1.0, np.nan] * 100), 50.0)


class TestSegmentStats:
    def test_constant_signal(self):
        out = segment_stats(np.full(500, 2.0))
        np.testing.assert_allclose(out[0:4], 0.0)  # sd
        np.testing.assert_allclose(out[4:8], 2.0)  # maxabs
        np.testing.assert_allclose(out[8:12], 500.0)  # 125 samples * 4.0 each

    def test_hand_computed_case(self):
        x = np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0])
        out = segment_stats(x)
        # independent recomputation: population sd over each 2-sample half-wave
        segs = x.reshape(4, 2)
        sd = np.sqrt(((segs - segs.mean(axis=1, keepdims=True)) ** 2).mean(axis=1))
        np.testing.assert_allclose(out[0:4], sd)
        np.testing.assert_allclose(out[0:4], [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(out[4:8], [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(out[8:12], [2.0, 8.0, 18.0, 32.0])

    def test_remainder_samples_ignored(self):
        x = np.arange(10.0)
        np.testing.assert_array_equal(segment_stats(x), segment_stats(x[:8]))

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError, match="at least 4"):
            segment_stats(np.ones(3))

    @given(st.floats(min_value=1.1, max_value=10.0))
    @settings(max_examples=20, deadline=None)
    def test_scaling_monotonicity(self, c):
        rng = np.random.default_rng(5)
        x = rng.normal(size=128)
        base, scaled = segment_stats(x), segment_stats(c * x)
        np.testing.assert_allclose(scaled[0:4], c * base[0:4], rtol=1e-12)
        np.testing.assert_allclose(scaled[4:8], c * base[4:8], rtol=1e-12)
        np.testing.assert_allclose(scaled[8:12], c**2 * base[8:12], rtol=1e-12)


@pytest.fixture(scope="module")
def split_session():
    doc = make_session_dict(seed=21)
    return split_long_records(session_from_dict(doc), TaskManifest())


class TestFeaturizeSession:
    def test_full_session_row_length(self, split_session):
        row = featurize_session(split_session)
        assert row.shape == (5208,)
        assert np.isfinite(row).all()

    def test_one_arm_row_length(self, split_session):
        row = featurize_session(filter_channels(split_session, arm="right"))
        assert row.shape == (2604,)

    def test_determinism(self, split_session):
        np.testing.assert_array_equal(
            featurize_session(split_session), featurize_session(split_session)
        )

    def test_channel_vector_layout(self, split_session):
        key = split_session.channel_keys()[0]
        vec = channel_features(split_session.channels[key], 50.0)
        assert vec.shape == (31,)
        np.testing.assert_array_equal(
            vec[:19], welch_log_psd(split_session.channels[key], 50.0)
        )
        np.testing.assert_array_equal(vec[19:], segment_stats(split_session.channels[key]))


class TestFeatureMatrix:
    @pytest.fixture(scope="class")
    def matrix(self):
        docs = [
            make_session_dict(seed=s, participant_id=f"p{s:04d}", label=label)
            for s, label in zip(range(3), ("PD", "DD", "HC"))
        ]
        sessions = [split_long_records(session_from_dict(d), TaskManifest()) for d in docs]
        return featurize_cohort(sessions)

    def test_shape_and_names(self, matrix):
        assert matrix.X.shape == (3, 5208)
        assert len(matrix.names) == 5208
        assert matrix.names[0] == "t01_left_accelerometer_x_psd01"
        assert matrix.names[30] == "t01_left_accelerometer_x_energy4"
        assert matrix.names[-1] == "t14_right_gyroscope_z_energy4"

    def test_post_split_task_groups_partition_columns(self, matrix):
        per_task = {}
        for j in range(matrix.n_columns):
            per_task.setdefault(matrix.task_of_column(j), []).append(j)
        assert sorted(per_task) == list(range(1, 15))
        assert all(len(cols) == 5208 // 14 for cols in per_task.values())

    def test_raw_group_columns(self, matrix):
        groups = matrix.group_columns(TaskManifest())
        assert sorted(groups) == list(range(1, 12))
        sizes = {g: len(cols) for g, cols in groups.items()}
        assert all(sizes[g] == 744 for g in (1, 2, 3))  # split tasks: two slots
        assert all(sizes[g] == 372 for g in range(4, 12))
        assert sum(sizes.values()) == 5208

    def test_csv_round_trip_exact(self, matrix, tmp_path):
        path = tmp_path / "features.csv"
        matrix.to_csv(path)
        back = FeatureMatrix.from_csv(path)
        np.testing.assert_array_equal(back.X, matrix.X)
        assert back.names == matrix.names
        assert back.labels == matrix.labels
        assert back.handedness == matrix.handedness
        assert back.participant_ids == matrix.participant_ids
        assert back.channels == matrix.channels


class TestScaler:
    def test_two_point_column(self):
        X = np.array([[1.0], [3.0]])
        params = fit_scaler(X)
        np.testing.assert_allclose(params.mean, [2.0])
        np.testing.assert_allclose(params.sd, [1.0])
        np.testing.assert_allclose(apply_scaler(params, X), [[-1.0], [1.0]])

    def test_constant_column_flagged_and_centered(self):
        X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
        params = fit_scaler(X)
        assert params.degenerate.tolist() == [True, False]
        out = apply_scaler(params, X)
        np.testing.assert_allclose(out[:, 0], 0.0)

    def test_held_out_rows_use_training_statistics(self):
        X = np.array([[0.0], [2.0], [10.0]])
        params = fit_scaler(X, rows=[0, 1])  # mean 1, population sd 1
        out = apply_scaler(params, X[[2]])
        np.testing.assert_allclose(out, [[9.0]])  # (10 - 1) / 1, hand-computed

    def test_fit_rows_have_unit_variance(self):
        rng = np.random.default_rng(17)
        X = rng.normal(5.0, 3.0, size=(40, 7))
        out = apply_scaler(fit_scaler(X), X)
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-9)
        np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)

    def test_empty_subset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            fit_scaler(np.ones((3, 2)), rows=[])


def test_feature_name_grammar():
    assert FEATURE_SUFFIXES[0] == "psd01"
    assert FEATURE_SUFFIXES[18] == "psd19"
    assert FEATURE_SUFFIXES[19] == "sd1"
    assert FEATURE_SUFFIXES[23] == "maxabs1"
    assert FEATURE_SUFFIXES[27] == "energy1"
    assert len(FEATURE_SUFFIXES) == FEATURES_PER_CHANNEL

"""Per-channel spectral and segment features, and the cohort feature table.

Each 10 s channel becomes 31 numbers: the log10 power spectral density at
1..19 Hz (Welch estimate with 1 Hz bins) followed by per-quarter statistics
(standard deviation, max |x|, sum of squares). A full 168-channel session
therefore yields a 5208-element row.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .sessions import ChannelKey, RecordingSession, SessionError, TaskManifest

PSD_BINS = 19
N_SEGMENTS = 4
FEATURES_PER_CHANNEL = PSD_BINS + 3 * N_SEGMENTS  # 31

FEATURE_SUFFIXES = (
    [f"psd{k:02d}" for k in range(1, PSD_BINS + 1)]
    + [f"sd{k}" for k in range(1, N_SEGMENTS + 1)]
    + [f"maxabs{k}" for k in range(1, N_SEGMENTS + 1)]
    + [f"energy{k}" for k in range(1, N_SEGMENTS + 1)]
)

_COLUMN_RE = re.compile(r"^t(\d{2})_([a-z]+)_([a-z]+)_([xyz])_([a-z]+\d+)$")


@dataclass(frozen=True)
class FeatureConfig:
    """Knobs for the per-channel transform.

    The defaults reproduce the production pipeline: Hann window, 50% segment
    overlap, one-second segments (1 Hz bins), log10 with a 1e-12 floor, and
    population (divide-by-n) standard deviation.
    """

    window: str = "hann"
    overlap: float = 0.5
    log_floor: float = 1e-12
    sd_ddof: int = 0


def _make_window(name: str, n: int) -> np.ndarray:
    if name == "hann":
        # Periodic form, as used by standard Welch implementations.
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    if name in ("rectangular", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


def welch_psd(
    x,
    fs: float,
    *,
    segment_length: int | None = None,
    window: str = "hann",
    overlap: float = 0.5,
    detrend: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """One-sided Welch power spectral density estimate.

    Segments of `segment_length` samples (default round(fs), i.e. 1 Hz bin
    spacing) are taken at `overlap` fractional overlap, mean-detrended,
    windowed, and their periodograms averaged. Density scaling compensates
    the window power, so sum(psd) * df equals the signal's mean square
    (variance, when detrended) for a single rectangular segment.

    Returns (freqs, psd) with freqs[k] = k * fs / segment_length.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D sample vector")
    if not np.isfinite(x).all():
        raise ValueError("non-finite samples")
    nper = int(round(fs)) if segment_length is None else int(segment_length)
    if nper < 2:
        raise ValueError(f"segment length {nper} too small")
    if x.size < nper:
        raise ValueError(f"vector of {x.size} samples shorter than one segment ({nper})")
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must lie in [0, 1), got {overlap}")

    step = max(1, int(round(nper * (1.0 - overlap))))
    win = _make_window(window, nper)
    scale = 1.0 / (fs * np.dot(win, win))

    starts = range(0, x.size - nper + 1, step)
    acc = np.zeros(nper // 2 + 1)
    for start in starts:
        seg = x[start : start + nper]
        if detrend:
            seg = seg - seg.mean()
        spec = np.fft.rfft(seg * win)
        acc += (spec.real**2 + spec.imag**2) * scale
    psd = acc / len(starts)
    # One-sided doubling; bin 0 and (for even lengths) the Nyquist bin are unique.
    psd[1:] *= 2.0
    if nper % 2 == 0:
        psd[-1] /= 2.0
    freqs = np.arange(nper // 2 + 1) * (fs / nper)
    return freqs, psd


def welch_log_psd(x, fs: float, *, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """log10 PSD at the 19 one-Hz bins 1..19; bin 0 and bins >= 20 Hz are dropped."""
    if round(fs) < 2 * PSD_BINS + 2:
        raise ValueError(f"sampling rate {fs} too low to host {PSD_BINS} one-Hz bins")
    _, psd = welch_psd(x, fs, window=config.window, overlap=config.overlap)
    return np.log10(np.maximum(psd[1 : PSD_BINS + 1], config.log_floor))


def segment_stats(x, *, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Quarter-segment statistics: [sd_1..4, maxabs_1..4, energy_1..4].

    The first 4*floor(L/4) samples are split into four contiguous equal
    segments; the remainder is ignored. Energy is the sum of squared samples.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size < N_SEGMENTS:
        raise ValueError(f"need at least {N_SEGMENTS} samples, got {x.size}")
    seg_len = x.size // N_SEGMENTS
    segs = x[: N_SEGMENTS * seg_len].reshape(N_SEGMENTS, seg_len)
    sd = segs.std(axis=1, ddof=config.sd_ddof)
    maxabs = np.abs(segs).max(axis=1)
    energy = (segs**2).sum(axis=1)
    return np.concatenate([sd, maxabs, energy])


def channel_features(x, fs: float, *, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """The 31-element vector for one channel: log-PSD then segment stats."""
    return np.concatenate([welch_log_psd(x, fs, config=config), segment_stats(x, config=config)])


def featurize_session(
    session: RecordingSession, *, config: FeatureConfig = FeatureConfig()
) -> np.ndarray:
    """Feature row for one normalized session, channels in canonical order."""
    if session.channels is None:
        raise SessionError("session not normalized; call split_long_records first")
    parts = [
        channel_features(session.channels[key], session.sampling_rate_hz, config=config)
        for key in session.channel_keys()
    ]
    return np.concatenate(parts) if parts else np.empty(0)


def feature_names(channels) -> list[str]:
    return [f"{key.name()}_{suffix}" for key in channels for suffix in FEATURE_SUFFIXES]


@dataclass
class FeatureMatrix:
    """Participants x features table with label/handedness metadata.

    Columns are grouped per channel (31 consecutive features each) in
    canonical channel order; names follow
    t{task:02d}_{arm}_{sensor}_{axis}_{psd01..psd19|sd1..4|maxabs1..4|energy1..4}.
    """

    X: np.ndarray
    participant_ids: list
    labels: list
    handedness: list
    channels: list
    names: list = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = feature_names(self.channels)
        n, m = self.X.shape
        if not (len(self.participant_ids) == len(self.labels) == len(self.handedness) == n):
            raise ValueError("row metadata length mismatch")
        if m != len(self.channels) * FEATURES_PER_CHANNEL or m != len(self.names):
            raise ValueError(
                f"column count {m} inconsistent with {len(self.channels)} channels"
            )

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_columns(self) -> int:
        return self.X.shape[1]

    def task_of_column(self, column: int) -> int:
        return self.channels[column // FEATURES_PER_CHANNEL].task_id

    def group_columns(self, manifest: TaskManifest) -> dict[int, np.ndarray]:
        """Raw assessment step -> column indices (split halves share one group)."""
        groups: dict[int, list] = {}
        for j in range(self.n_columns):
            groups.setdefault(manifest.group_of(self.task_of_column(j)), []).append(j)
        return {g: np.asarray(cols, dtype=np.intp) for g, cols in sorted(groups.items())}

    def to_csv(self, path) -> None:
        frame = pd.DataFrame(self.X, columns=self.names)
        frame.insert(0, "handedness", self.handedness)
        frame.insert(0, "label", self.labels)
        frame.insert(0, "participant_id", self.participant_ids)
        # shortest-roundtrip decimal form so a reload reproduces the exact doubles
        frame.to_csv(path, index=False, float_format=lambda v: repr(float(v)))

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        frame = pd.read_csv(path, dtype={"participant_id": str}, float_precision="round_trip")
        meta = ["participant_id", "label", "handedness"]
        for col in meta:
            if col not in frame.columns:
                raise ValueError(f"{path}: missing required column '{col}'")
        names = [c for c in frame.columns if c not in meta]
        channels = _channels_from_names(names)
        return cls(
            X=frame[names].to_numpy(dtype=np.float64),
            participant_ids=frame["participant_id"].tolist(),
            labels=frame["label"].tolist(),
            handedness=frame["handedness"].tolist(),
            channels=channels,
            names=names,
        )


def _channels_from_names(names) -> list[ChannelKey]:
    if len(names) % FEATURES_PER_CHANNEL:
        raise ValueError(f"{len(names)} feature columns is not a multiple of 31")
    channels = []
    for base in range(0, len(names), FEATURES_PER_CHANNEL):
        block = names[base : base + FEATURES_PER_CHANNEL]
        parsed = [_COLUMN_RE.match(name) for name in block]
        if any(p is None for p in parsed):
            bad = block[[p is None for p in parsed].index(True)]
            raise ValueError(f"malformed feature column name {bad!r}")
        heads = {p.groups()[:4] for p in parsed}
        suffixes = [p.group(5) for p in parsed]
        if len(heads) != 1 or suffixes != FEATURE_SUFFIXES:
            raise ValueError(f"feature columns near {block[0]!r} not grouped per channel")
        task, arm, sensor, axis = parsed[0].groups()[:4]
        channels.append(ChannelKey(int(task), arm, sensor, axis))
    return channels


def featurize_cohort(
    sessions, *, config: FeatureConfig = FeatureConfig()
) -> FeatureMatrix:
    """Assemble the cohort feature table from normalized sessions."""
    sessions = list(sessions)
    if not sessions:
        raise ValueError("no sessions to featurize")
    channels = sessions[0].channel_keys()
    rows = []
    for session in sessions:
        if session.channel_keys() != channels:
            raise SessionError(
                f"{session.participant_id}: channel set differs from the rest of the cohort"
            )
        rows.append(featurize_session(session, config=config))
    return FeatureMatrix(
        X=np.vstack(rows),
        participant_ids=[s.participant_id for s in sessions],
        labels=[s.label for s in sessions],
        handedness=[s.handedness for s in sessions],
        channels=channels,
    )


@dataclass(frozen=True)
class ScalerParams:
    """Per-column z-score parameters estimated from a training subset."""

    mean: np.ndarray
    sd: np.ndarray
    degenerate: np.ndarray  # sd == 0; these columns are centered only

    @property
    def divisor(self) -> np.ndarray:
        return np.where(self.degenerate, 1.0, self.sd)


def fit_scaler(X: np.ndarray, rows=None) -> ScalerParams:
    """Column means/SDs (population) over the given row subset."""
    sub = X if rows is None else X[np.asarray(rows, dtype=np.intp)]
    if sub.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty row subset")
    mean = sub.mean(axis=0)
    sd = sub.std(axis=0)
    return ScalerParams(mean=mean, sd=sd, degenerate=sd == 0.0)


def apply_scaler(params: ScalerParams, X: np.ndarray) -> np.ndarray:
    """z-score using training statistics; zero-variance columns are centered only."""
    return (X - params.mean) / params.divisor

"""Seeded synthetic assessment cohorts with known class/task/arm structure.

Every channel carries colored background noise; participants from affected
classes additionally express a narrow-band oscillation on a per-participant
subset of their class's tasks, stronger on one (dominant) arm. The generator
doubles as the end-to-end test oracle: the emitted ground truth records
exactly which tasks and arms carry signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .common import derive_seed, write_json
from .sessions import (
    ARMS,
    AXES,
    DEFAULT_LONG_TASKS,
    LABELS,
    N_RAW_TASKS,
    RawRecording,
    RecordingSession,
    SENSORS,
    TaskManifest,
    samples_per_channel,
    save_session,
)

# Default per-(label, handedness) cell counts; cohort sizes scale these
# proportions (cases outnumber controls, about 8% left-handed).
REFERENCE_SAMPLE_COUNTS = {
    ("PD", "right"): 262,
    ("PD", "left"): 17,
    ("DD", "right"): 122,
    ("DD", "left"): 12,
    ("HC", "right"): 80,
    ("HC", "left"): 11,
}

DEFAULT_SEED = 42
DEFAULT_N = 150


@dataclass(frozen=True)
class ClassEffect:
    """Oscillation added for one diagnosis class.

    band_hz: tremor frequency range; amplitude: uniform draw range (units of
    noise scale); affected_tasks: raw tasks that may express the oscillation;
    expression_prob: chance that an affected task actually expresses it for a
    given participant (at least one always does).
    """

    band_hz: tuple = (4.0, 6.0)
    amplitude: tuple = (5.0, 9.0)
    affected_tasks: tuple = (1, 2, 3, 4, 5)
    expression_prob: float = 0.3

    def validate(self, fs: float):
        lo, hi = self.band_hz
        if not (0.0 < lo < hi < fs / 2.0):
            raise ValueError(f"tremor band {self.band_hz} outside (0, fs/2)")
        if not (0.0 < self.amplitude[0] <= self.amplitude[1]):
            raise ValueError(f"bad amplitude range {self.amplitude}")
        if not set(self.affected_tasks) <= set(range(1, N_RAW_TASKS + 1)):
            raise ValueError(f"affected tasks {self.affected_tasks} outside 1..{N_RAW_TASKS}")
        if not (0.0 < self.expression_prob <= 1.0):
            raise ValueError(f"expression_prob must lie in (0, 1], got {self.expression_prob}")


def default_effects() -> dict:
    # Tasks 10 and 11 stay pure noise for every class; the class task sets
    # overlap on task 4 and jointly cover tasks 1..9, so the selection study
    # has exactly two designed ignorable groups.
    return {
        "PD": ClassEffect(band_hz=(4.0, 6.0), affected_tasks=(1, 2, 3, 4, 5)),
        "DD": ClassEffect(band_hz=(6.0, 9.0), affected_tasks=(4, 6, 7, 8, 9)),
    }


@dataclass(frozen=True)
class CohortSpec:
    """Full description of a synthetic cohort; generation is a pure function of it."""

    counts: dict  # (label, handedness) -> participant count
    sampling_rate_hz: float = 50.0
    seed: int = DEFAULT_SEED
    effects: dict = field(default_factory=default_effects)
    asymmetry: float = 0.4  # non-dominant arm amplitude factor, 0..1
    dominant_arm: str = "random"  # "random" | "left" | "right" | "handedness"
    noise_exponent: float = 1.0  # PSD ~ 1/f^exponent
    noise_scale: float = 1.0
    long_task_ids: frozenset = DEFAULT_LONG_TASKS

    def validate(self):
        for (label, handedness), count in self.counts.items():
            if label not in LABELS or handedness not in ARMS:
                raise ValueError(f"bad cohort cell ({label!r}, {handedness!r})")
            if count < 0:
                raise ValueError(f"negative count for ({label}, {handedness})")
        if self.sampling_rate_hz <= 0:
            raise ValueError("sampling rate must be positive")
        if not 0.0 <= self.asymmetry <= 1.0:
            raise ValueError(f"asymmetry must lie in [0, 1], got {self.asymmetry}")
        if self.dominant_arm not in ("random", "left", "right", "handedness"):
            raise ValueError(f"unknown dominant_arm policy {self.dominant_arm!r}")
        if self.noise_scale <= 0:
            raise ValueError("noise scale must be positive")
        for label, effect in self.effects.items():
            if label not in LABELS:
                raise ValueError(f"effect for unknown label {label!r}")
            if effect is not None:
                effect.validate(self.sampling_rate_hz)

    @property
    def n_participants(self) -> int:
        return sum(self.counts.values())

    @property
    def manifest(self) -> TaskManifest:
        return TaskManifest(long_task_ids=self.long_task_ids)

    def noise_tasks(self) -> list[int]:
        affected = set()
        for effect in self.effects.values():
            if effect is not None:
                affected |= set(effect.affected_tasks)
        return sorted(set(range(1, N_RAW_TASKS + 1)) - affected)

    def to_dict(self) -> dict:
        return {
            "counts": {f"{label}/{hand}": n for (label, hand), n in sorted(self.counts.items())},
            "sampling_rate_hz": self.sampling_rate_hz,
            "seed": self.seed,
            "effects": {
                label: None
                if effect is None
                else {
                    "band_hz": list(effect.band_hz),
                    "amplitude": list(effect.amplitude),
                    "affected_tasks": list(effect.affected_tasks),
                    "expression_prob": effect.expression_prob,
                }
                for label, effect in sorted(self.effects.items())
            },
            "asymmetry": self.asymmetry,
            "dominant_arm": self.dominant_arm,
            "noise_exponent": self.noise_exponent,
            "noise_scale": self.noise_scale,
            "long_task_ids": sorted(self.long_task_ids),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CohortSpec":
        counts = {}
        for key, n in obj["counts"].items():
            label, hand = key.split("/")
            counts[(label, hand)] = int(n)
        effects = {}
        for label, eff in obj.get("effects", {}).items():
            effects[label] = None if eff is None else ClassEffect(
                band_hz=tuple(eff["band_hz"]),
                amplitude=tuple(eff["amplitude"]),
                affected_tasks=tuple(eff["affected_tasks"]),
                expression_prob=eff["expression_prob"],
            )
        return cls(
            counts=counts,
            sampling_rate_hz=obj.get("sampling_rate_hz", 50.0),
            seed=obj.get("seed", DEFAULT_SEED),
            effects=effects if effects else default_effects(),
            asymmetry=obj.get("asymmetry", 0.4),
            dominant_arm=obj.get("dominant_arm", "random"),
            noise_exponent=obj.get("noise_exponent", 1.0),
            noise_scale=obj.get("noise_scale", 1.0),
            long_task_ids=frozenset(obj.get("long_task_ids", sorted(DEFAULT_LONG_TASKS))),
        )


def largest_remainder(total: int, weights) -> list[int]:
    """Apportion `total` integer seats proportionally to `weights`."""
    weights = np.asarray(weights, dtype=np.float64)
    quotas = total * weights / weights.sum()
    counts = np.floor(quotas).astype(int)
    remainders = quotas - counts
    for idx in sorted(range(len(weights)), key=lambda i: (-remainders[i], i)):
        if counts.sum() >= total:
            break
        counts[idx] += 1
    return counts.tolist()


def spec_from_reference_sample(n: int, seed: int = DEFAULT_SEED, **overrides) -> CohortSpec:
    """Cohort spec scaled from the reference label/handedness proportions.

    Largest-remainder apportionment, class-first then handedness within each
    class; every class gets at least one participant (hence n >= 3).
    """
    if n < len(LABELS) and n != 0:
        raise ValueError(f"need at least {len(LABELS)} participants to cover all classes")
    class_totals = {lab: sum(v for (l, _), v in REFERENCE_SAMPLE_COUNTS.items() if l == lab) for lab in LABELS}
    per_class = dict(zip(LABELS, largest_remainder(n, [class_totals[lab] for lab in LABELS])))
    if n >= len(LABELS):
        # guarantee every class is present
        while any(v == 0 for v in per_class.values()):
            donor = max(LABELS, key=lambda lab: per_class[lab])
            taker = next(lab for lab in LABELS if per_class[lab] == 0)
            per_class[donor] -= 1
            per_class[taker] += 1
    counts = {}
    for label in LABELS:
        right, left = largest_remainder(
            per_class[label],
            [REFERENCE_SAMPLE_COUNTS[(label, "right")], REFERENCE_SAMPLE_COUNTS[(label, "left")]],
        )
        counts[(label, "right")] = right
        counts[(label, "left")] = left
    return CohortSpec(counts=counts, seed=seed, **overrides)


def colored_noise(n: int, exponent: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance noise with power spectrum ~ 1/f^exponent."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (-exponent / 2.0)
    spec *= shape
    x = np.fft.irfft(spec, n)
    sd = x.std()
    return x / sd if sd > 0 else x


@dataclass
class GroundTruth:
    """What the generator actually injected, for assertions downstream."""

    spec: CohortSpec
    participants: dict  # pid -> {label, handedness, dominant_arm, expressed_tasks, ...}

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "noise_tasks": self.spec.noise_tasks(),
            "class_affected_tasks": {
                label: sorted(effect.affected_tasks)
                for label, effect in sorted(self.spec.effects.items())
                if effect is not None
            },
            "participants": self.participants,
        }


def _participant_cells(spec: CohortSpec):
    for label in LABELS:
        for handedness in ("right", "left"):
            for _ in range(spec.counts.get((label, handedness), 0)):
                yield label, handedness


def generate_session(spec: CohortSpec, index: int, label: str, handedness: str):
    """One participant's raw session plus its ground-truth record."""
    rng = np.random.default_rng(derive_seed(spec.seed, "participant", index))
    pid = f"p{index:04d}"
    fs = spec.sampling_rate_hz
    n10 = samples_per_channel(fs)

    if spec.dominant_arm == "random":
        dominant = ARMS[int(rng.integers(0, 2))]
    elif spec.dominant_arm == "handedness":
        dominant = handedness
    else:
        dominant = spec.dominant_arm

    effect = spec.effects.get(label)
    expressed: list[int] = []
    tremor_hz = 0.0
    amplitude = 0.0
    if effect is not None:
        tremor_hz = float(rng.uniform(*effect.band_hz))
        amplitude = float(rng.uniform(*effect.amplitude)) * spec.noise_scale
        draws = rng.random(len(effect.affected_tasks))
        fallback = int(rng.integers(0, len(effect.affected_tasks)))
        expressed = [
            task for task, d in zip(effect.affected_tasks, draws) if d < effect.expression_prob
        ]
        if not expressed:
            expressed = [effect.affected_tasks[fallback]]

    recordings = []
    for raw_task in range(1, N_RAW_TASKS + 1):
        n = 2 * n10 if raw_task in spec.long_task_ids else n10
        t = np.arange(n) / fs
        envelope = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
        for arm in ARMS:
            arm_gain = 1.0 if arm == dominant else spec.asymmetry
            for sensor in SENSORS:
                for axis in AXES:
                    samples = spec.noise_scale * colored_noise(n, spec.noise_exponent, rng)
                    if raw_task in expressed:
                        phase = rng.uniform(0.0, 2.0 * np.pi)
                        jitter = rng.uniform(-0.1, 0.1)
                        freq = float(np.clip(tremor_hz + jitter, *effect.band_hz))
                        samples = samples + (
                            amplitude
                            * arm_gain
                            * envelope
                            * np.sin(2.0 * np.pi * freq * t + phase)
                        )
                    recordings.append(RawRecording(raw_task, arm, sensor, axis, samples))

    session = RecordingSession(
        participant_id=pid,
        label=label,
        handedness=handedness,
        sampling_rate_hz=fs,
        raw_recordings=tuple(recordings),
    )
    truth = {
        "label": label,
        "handedness": handedness,
        "dominant_arm": dominant,
        "expressed_tasks": expressed,
        "tremor_hz": tremor_hz if expressed else None,
        "amplitude": amplitude if expressed else None,
    }
    return session, truth


def generate_sessions(spec: CohortSpec):
    """Yield (session, truth) pairs for the whole cohort, deterministic in spec."""
    spec.validate()
    for index, (label, handedness) in enumerate(_participant_cells(spec)):
        yield generate_session(spec, index, label, handedness)


def generate_cohort(spec: CohortSpec, out_dir) -> GroundTruth:
    """Write a cohort directory: sessions/, manifest.json, ground_truth.json."""
    spec.validate()
    out_dir = Path(out_dir)
    session_dir = out_dir / "sessions"
    session_dir.mkdir(parents=True, exist_ok=True)
    participants = {}
    for session, truth in generate_sessions(spec):
        save_session(session, session_dir / f"{session.participant_id}.json")
        participants[session.participant_id] = truth
    truth = GroundTruth(spec=spec, participants=participants)
    manifest = spec.manifest.to_dict()
    manifest.update(
        {
            "sampling_rate_hz": spec.sampling_rate_hz,
            "n_participants": spec.n_participants,
            "seed": spec.seed,
        }
    )
    write_json(out_dir / "manifest.json", manifest)
    write_json(out_dir / "ground_truth.json", truth.to_dict())
    return truth

"""Reduction studies: arm-restricted inputs and greedy task-group selection.

Feature groups are keyed to the 11 raw assessment steps (both halves of a
split 20 s record belong to one group). Greedy selection adds (forward) or
removes (backward) the group with the best cross-validated score at each
step; all candidate evaluations reuse the same CV plan so comparisons are
paired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .evaluation import CvPlan, CvReport, GridSpec, _map_jobs, run_cv
from .features import FEATURES_PER_CHANNEL, FeatureMatrix, feature_names
from .sessions import ChannelKey, TaskManifest
from .svm import SvmConfig

ARM_SETTINGS = ("both", "left", "right", "strong", "weak")
MINIMAL_SUBSET_TOLERANCE = 0.005  # absolute balanced-accuracy units


def _subset_columns(matrix: FeatureMatrix, columns: np.ndarray) -> FeatureMatrix:
    """Matrix restricted to whole-channel column runs (keeps 31-per-channel layout)."""
    columns = np.asarray(columns, dtype=np.intp)
    if columns.size % FEATURES_PER_CHANNEL:
        raise ValueError("column subset must cover whole channels")
    channels = []
    for base in range(0, columns.size, FEATURES_PER_CHANNEL):
        run = columns[base : base + FEATURES_PER_CHANNEL]
        first = run[0]
        if first % FEATURES_PER_CHANNEL or not np.array_equal(
            run, np.arange(first, first + FEATURES_PER_CHANNEL)
        ):
            raise ValueError("column subset must cover whole channels")
        channels.append(matrix.channels[first // FEATURES_PER_CHANNEL])
    return FeatureMatrix(
        X=matrix.X[:, columns],
        participant_ids=matrix.participant_ids,
        labels=matrix.labels,
        handedness=matrix.handedness,
        channels=channels,
    )


def filter_arm(
    matrix: FeatureMatrix, setting: str, *, alignment: str = "arm-relative"
) -> FeatureMatrix:
    """Restrict inputs to one recording arm.

    'both' is the identity. 'left'/'right' keep that arm's columns. 'strong'
    (the stated handedness) and 'weak' (its opposite) pick per participant;
    with the default arm-relative alignment the result has one arm's channel
    layout and column j holds the j-th channel of whichever arm was selected
    for that row. alignment='in-place' instead keeps all columns and zeroes
    the deselected arm.
    """
    if setting not in ARM_SETTINGS:
        raise ValueError(f"unknown arm setting {setting!r}; expected one of {ARM_SETTINGS}")
    if setting == "both":
        return matrix
    if setting in ("left", "right"):
        cols = np.flatnonzero(
            [matrix.channels[j // FEATURES_PER_CHANNEL].arm == setting for j in range(matrix.n_columns)]
        )
        return _subset_columns(matrix, cols)

    arm_cols = {
        arm: np.flatnonzero(
            [matrix.channels[j // FEATURES_PER_CHANNEL].arm == arm for j in range(matrix.n_columns)]
        )
        for arm in ("left", "right")
    }
    if arm_cols["left"].size != arm_cols["right"].size:
        raise ValueError("strong/weak settings need both arms present")
    picked_arm = []
    for hand in matrix.handedness:
        strong = hand
        picked_arm.append(strong if setting == "strong" else ("left" if strong == "right" else "right"))

    if alignment == "arm-relative":
        X = np.empty((matrix.n_rows, arm_cols["left"].size))
        for r, arm in enumerate(picked_arm):
            X[r] = matrix.X[r, arm_cols[arm]]
        # channel identity is arm-relative now; label the arm with the setting name
        left_channels = [c for c in matrix.channels if c.arm == "left"]
        channels = [ChannelKey(c.task_id, setting, c.sensor, c.axis) for c in left_channels]
        return FeatureMatrix(
            X=X,
            participant_ids=matrix.participant_ids,
            labels=matrix.labels,
            handedness=matrix.handedness,
            channels=channels,
            names=feature_names(channels),
        )
    if alignment == "in-place":
        X = matrix.X.copy()
        for r, arm in enumerate(picked_arm):
            other = "left" if arm == "right" else "right"
            X[r, arm_cols[other]] = 0.0
        return FeatureMatrix(
            X=X,
            participant_ids=matrix.participant_ids,
            labels=matrix.labels,
            handedness=matrix.handedness,
            channels=matrix.channels,
            names=matrix.names,
        )
    raise ValueError(f"unknown alignment {alignment!r}")


@dataclass
class SelectionStep:
    step: int
    group: int | None  # group added (forward) / removed (backward); None = baseline
    active: tuple  # active group ids after this step, ascending
    report: CvReport

    @property
    def mean(self) -> float:
        return self.report.mean

    @property
    def sd(self) -> float:
        return self.report.sd


@dataclass
class SelectionTrace:
    """Ordered record of one greedy selection run."""

    direction: str  # "forward" or "backward"
    task: str
    arm_setting: str
    steps: list

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "task": self.task,
            "arm_setting": self.arm_setting,
            "steps": [
                {
                    "step": s.step,
                    "group": s.group,
                    "active": list(s.active),
                    "mean": s.mean,
                    "sd": s.sd,
                    "report": s.report.to_dict(),
                }
                for s in self.steps
            ],
            "minimal_subset": list(minimal_subset(self)),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SelectionTrace":
        return cls(
            direction=obj["direction"],
            task=obj["task"],
            arm_setting=obj["arm_setting"],
            steps=[
                SelectionStep(
                    step=s["step"],
                    group=s["group"],
                    active=tuple(s["active"]),
                    report=CvReport.from_dict(s["report"]),
                )
                for s in obj["steps"]
            ],
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "step": [s.step for s in self.steps],
                "direction": [self.direction] * len(self.steps),
                "group": [s.group for s in self.steps],
                "cardinality": [len(s.active) for s in self.steps],
                "mean": [s.mean for s in self.steps],
                "sd": [s.sd for s in self.steps],
            }
        )


def _group_columns(groups: dict, active) -> np.ndarray:
    return np.concatenate([np.asarray(groups[g], dtype=np.intp) for g in sorted(active)])


def _candidate_worker(payload) -> CvReport:
    matrix, task, plan, grid, config, scaler_scope, grid_scope = payload
    return run_cv(
        matrix, task, plan, grid,
        config=config, scaler_scope=scaler_scope, grid_scope=grid_scope, jobs=1,
    )


def _evaluate_candidates(matrix, groups, candidates, task, plan, grid, config,
                         scaler_scope, grid_scope, jobs):
    payloads = [
        (
            _subset_columns(matrix, _group_columns(groups, active)),
            task, plan, grid, config, scaler_scope, grid_scope,
        )
        for active in candidates
    ]
    return _map_jobs(_candidate_worker, payloads, jobs)


def forward_select(
    matrix: FeatureMatrix,
    groups: dict,
    task: str,
    plan: CvPlan,
    grid: GridSpec,
    *,
    arm_setting: str = "both",
    config: SvmConfig = SvmConfig(),
    scaler_scope: str = "fold",
    grid_scope: str = "nested",
    jobs: int = 1,
) -> SelectionTrace:
    """Greedily add the group that most improves the CV score (ties: lowest id)."""
    if not groups:
        raise ValueError("need at least one feature group")
    active: list[int] = []
    remaining = sorted(groups)
    steps = []
    for step in range(1, len(groups) + 1):
        candidates = [tuple(sorted(active + [g])) for g in remaining]
        reports = _evaluate_candidates(
            matrix, groups, candidates, task, plan, grid, config, scaler_scope, grid_scope, jobs
        )
        best = max(range(len(remaining)), key=lambda k: (reports[k].mean, -remaining[k]))
        chosen = remaining[best]
        active = sorted(active + [chosen])
        remaining.remove(chosen)
        steps.append(SelectionStep(step=step, group=chosen, active=tuple(active),
                                   report=reports[best]))
    return SelectionTrace(direction="forward", task=task, arm_setting=arm_setting, steps=steps)


def backward_select(
    matrix: FeatureMatrix,
    groups: dict,
    task: str,
    plan: CvPlan,
    grid: GridSpec,
    *,
    arm_setting: str = "both",
    config: SvmConfig = SvmConfig(),
    scaler_scope: str = "fold",
    grid_scope: str = "nested",
    jobs: int = 1,
) -> SelectionTrace:
    """Start from all groups; greedily remove the one whose loss hurts least."""
    if not groups:
        raise ValueError("need at least one feature group")
    active = sorted(groups)
    baseline = _evaluate_candidates(
        matrix, groups, [tuple(active)], task, plan, grid, config, scaler_scope, grid_scope, jobs
    )[0]
    steps = [SelectionStep(step=0, group=None, active=tuple(active), report=baseline)]
    step = 1
    while len(active) > 1:
        candidates = [tuple(g for g in active if g != out) for out in active]
        reports = _evaluate_candidates(
            matrix, groups, candidates, task, plan, grid, config, scaler_scope, grid_scope, jobs
        )
        best = max(range(len(active)), key=lambda k: (reports[k].mean, -active[k]))
        removed = active[best]
        active = [g for g in active if g != removed]
        steps.append(SelectionStep(step=step, group=removed, active=tuple(active),
                                   report=reports[best]))
        step += 1
    return SelectionTrace(direction="backward", task=task, arm_setting=arm_setting, steps=steps)


def minimal_subset(trace: SelectionTrace, tolerance: float = MINIMAL_SUBSET_TOLERANCE) -> tuple:
    """Smallest active set whose mean score is within `tolerance` of the trace best.

    Equal cardinalities resolve to the earlier trace step.
    """
    if not trace.steps:
        raise ValueError("empty selection trace")
    best = max(s.mean for s in trace.steps)
    qualifying = [s for s in trace.steps if s.mean >= best - tolerance]
    chosen = min(enumerate(qualifying), key=lambda kv: (len(kv[1].active), kv[0]))[1]
    return tuple(sorted(chosen.active))


def exclusion_consensus(traces, tolerance: float = MINIMAL_SUBSET_TOLERANCE) -> list[dict]:
    """How often each group is left out of the minimal subsets, over all runs.

    Returns one record per group, sorted by exclusion count descending
    (ties: lower group id first).
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one selection trace")
    universe: set[int] = set()
    for trace in traces:
        for s in trace.steps:
            universe |= set(s.active)
    counts = {g: 0 for g in sorted(universe)}
    for trace in traces:
        kept = set(minimal_subset(trace, tolerance))
        for g in universe - kept:
            counts[g] += 1
    ordered = sorted(counts, key=lambda g: (-counts[g], g))
    return [
        {"group": g, "excluded": counts[g], "runs": len(traces)}
        for g in ordered
    ]


def arm_study(
    matrix: FeatureMatrix,
    tasks,
    plan: CvPlan,
    grid: GridSpec,
    *,
    settings=ARM_SETTINGS,
    group_subset=None,
    manifest: TaskManifest | None = None,
    alignment: str = "arm-relative",
    config: SvmConfig = SvmConfig(),
    scaler_scope: str = "fold",
    grid_scope: str = "nested",
    jobs: int = 1,
) -> dict:
    """CV reports per (task, arm setting), optionally on a group subset."""
    settings = list(settings)
    if not settings:
        raise ValueError("need at least one arm setting")
    if group_subset is not None and manifest is None:
        raise ValueError("a task manifest is required to restrict feature groups")
    results = {}
    for setting in settings:
        filtered = filter_arm(matrix, setting, alignment=alignment)
        columns = None
        if group_subset is not None:
            groups = filtered.group_columns(manifest)
            missing = sorted(set(group_subset) - set(groups))
            if missing:
                raise ValueError(f"unknown feature groups {missing}")
            columns = _group_columns(groups, group_subset)
        for task in tasks:
            results[(task, setting)] = run_cv(
                filtered, task, plan, grid,
                columns=columns, config=config,
                scaler_scope=scaler_scope, grid_scope=grid_scope, jobs=jobs,
            )
    return results


def arm_study_frame(results: dict) -> pd.DataFrame:
    rows = [
        {"task": task, "setting": setting, "mean": rep.mean, "sd": rep.sd}
        for (task, setting), rep in results.items()
    ]
    return pd.DataFrame(rows)

"""Command-line front door: synth -> extract -> cv / arm-study / select-groups -> report.

Every command writes its artifacts plus a run.json echoing the resolved
configuration, seeds, and input hashes. Commands are deterministic given
identical inputs and flags (reports embed no timestamps), so reruns are
byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import click
import pandas as pd

from . import __version__
from .common import canonical_json, read_json, sha256_file, sha256_text, write_json
from .evaluation import BINARY_TASK_NAMES, CvPlan, CvReport, GridSpec, TASK_NAMES, run_cv
from .features import FeatureMatrix, featurize_cohort
from .plots import save_arm_study_plot, save_report_plot, save_selection_plot
from .selection import (
    ARM_SETTINGS,
    MINIMAL_SUBSET_TOLERANCE,
    arm_study,
    arm_study_frame,
    backward_select,
    exclusion_consensus,
    filter_arm,
    forward_select,
    minimal_subset,
)
from .sessions import SessionError, TaskManifest, load_cohort, load_manifest
from .synth import CohortSpec, generate_cohort, spec_from_reference_sample

REPORT_SETTINGS = (
    ("baseline", "Baseline"),
    ("reduced_tasks", "Reduced task set"),
    ("right_arm", "Right arm only"),
    ("reduced_right", "Reduced task set, right arm only"),
)

TASK_TITLES = {
    "pd-vs-hc": "PD vs. HC",
    "pddd-vs-hc": "PD + DD vs. HC",
    "pd-vs-dd": "PD vs. DD",
    "pd-vs-dd-vs-hc": "PD vs. DD vs. HC",
}


def _fail(message: str):
    raise click.ClickException(message)


def _write_run_json(out_dir: Path, command: str, config: dict, inputs: dict) -> str:
    config_sha = sha256_text(canonical_json(config))
    write_json(
        out_dir / "run.json",
        {
            "command": command,
            "config": config,
            "config_sha256": config_sha,
            "inputs": inputs,
            "package_version": __version__,
        },
    )
    return config_sha


def _parse_groups(text: str | None):
    if not text:
        return None
    try:
        groups = sorted({int(part) for part in text.split(",") if part.strip()})
    except ValueError:
        _fail(f"--groups expects a comma-separated list of task ids, got {text!r}")
    if not groups:
        _fail("--groups given but empty")
    return groups


def _load_features(features_path: Path) -> tuple[FeatureMatrix, str]:
    if not features_path.exists():
        _fail(f"features file not found: {features_path}")
    try:
        matrix = FeatureMatrix.from_csv(features_path)
    except ValueError as exc:
        _fail(f"cannot read {features_path}: {exc}")
    return matrix, sha256_file(features_path)


def _find_manifest(features_path: Path, manifest_flag: str | None) -> TaskManifest:
    path = Path(manifest_flag) if manifest_flag else features_path.parent / "manifest.json"
    if not path.exists():
        _fail(
            f"manifest not found at {path}; pass --manifest (needed to map features "
            "to assessment-task groups)"
        )
    return load_manifest(path)


@click.group()
@click.version_option(__version__)
def main():
    """Movement-assessment screening pipeline on wrist-sensor recordings."""


@main.command()
@click.option("--n", default=150, show_default=True, help="Cohort size.")
@click.option("--seed", default=42, show_default=True, help="Master generation seed.")
@click.option("--fs", default=50.0, show_default=True, help="Sampling rate in Hz.")
@click.option("--spec", "spec_path", type=click.Path(path_type=Path),
              help="Cohort spec JSON; overrides --n/--seed/--fs.")
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Cohort directory.")
def synth(n, seed, fs, spec_path, out):
    """Generate a seeded synthetic cohort with known class/task/arm structure."""
    if spec_path is not None:
        if not spec_path.exists():
            _fail(f"spec file not found: {spec_path}")
        spec = CohortSpec.from_dict(read_json(spec_path))
    else:
        try:
            spec = spec_from_reference_sample(n, seed, sampling_rate_hz=fs)
        except ValueError as exc:
            _fail(str(exc))
    out.mkdir(parents=True, exist_ok=True)
    try:
        truth = generate_cohort(spec, out)
    except ValueError as exc:
        _fail(str(exc))
    _write_run_json(out, "synth", spec.to_dict(), {})
    click.echo(f"wrote {len(truth.participants)} sessions to {out}")


@main.command()
@click.option("--cohort", required=True, type=click.Path(path_type=Path),
              help="Cohort directory (from synth, or externally prepared).")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def extract(cohort, out):
    """Compute the per-participant feature table and write features.csv."""
    if not cohort.exists():
        _fail(f"cohort directory not found: {cohort}")
    try:
        manifest, sessions = load_cohort(cohort)
    except SessionError as exc:
        _fail(str(exc))
    if not sessions:
        _fail(f"cohort {cohort} contains no sessions")
    matrix = featurize_cohort(sessions)
    out.mkdir(parents=True, exist_ok=True)
    features_path = out / "features.csv"
    matrix.to_csv(features_path)
    write_json(out / "manifest.json", manifest.to_dict())
    session_dir = cohort / "sessions"
    cohort_sha = sha256_text(
        "".join(sha256_file(p) for p in sorted(session_dir.glob("*.json")))
    )
    _write_run_json(
        out,
        "extract",
        {"cohort": str(cohort), "n_participants": matrix.n_rows,
         "n_features": matrix.n_columns},
        {"cohort_sha256": cohort_sha, "features_sha256": sha256_file(features_path)},
    )
    click.echo(f"wrote {matrix.n_rows} x {matrix.n_columns} feature table to {features_path}")


def _cv_options(fn):
    fn = click.option("--features", "features_path", required=True,
                      type=click.Path(path_type=Path), help="features.csv from extract.")(fn)
    fn = click.option("--out", required=True, type=click.Path(path_type=Path))(fn)
    fn = click.option("--seed", default=42, show_default=True, help="Master CV seed.")(fn)
    fn = click.option("--folds", default=5, show_default=True)(fn)
    fn = click.option("--repeats", default=3, show_default=True)(fn)
    fn = click.option("--manifest", "manifest_flag", type=click.Path(path_type=Path),
                      help="manifest.json (defaults to the features.csv sibling).")(fn)
    fn = click.option("--scaler-scope", type=click.Choice(["fold", "full"]), default="fold",
                      show_default=True)(fn)
    fn = click.option("--grid-scope", type=click.Choice(["nested", "outer"]), default="nested",
                      show_default=True)(fn)
    fn = click.option("--jobs", default=1, show_default=True, help="Worker process cap.")(fn)
    return fn


def _report_payload(report: CvReport, provenance: dict) -> dict:
    payload = report.to_dict()
    payload["provenance"] = provenance
    return payload


@main.command()
@_cv_options
@click.option("--task", "tasks", multiple=True, type=click.Choice(TASK_NAMES),
              default=("pd-vs-hc",), show_default=True)
@click.option("--arm", type=click.Choice(ARM_SETTINGS), default="both", show_default=True)
@click.option("--groups", "groups_text", default=None,
              help="Comma-separated raw task ids to keep, e.g. '1,2,5'.")
def cv(features_path, out, seed, folds, repeats, manifest_flag, scaler_scope, grid_scope,
       jobs, tasks, arm, groups_text):
    """Cross-validate classification tasks on the feature table."""
    matrix, features_sha = _load_features(features_path)
    group_subset = _parse_groups(groups_text)
    plan = CvPlan(n_folds=folds, n_repeats=repeats, master_seed=seed)
    grid = GridSpec()
    filtered = filter_arm(matrix, arm)
    columns = None
    if group_subset is not None:
        manifest = _find_manifest(features_path, manifest_flag)
        groups = filtered.group_columns(manifest)
        unknown = sorted(set(group_subset) - set(groups))
        if unknown:
            _fail(f"unknown feature groups {unknown}; cohort has {sorted(groups)}")
        columns = [c for g in group_subset for c in groups[g].tolist()]
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "features": str(features_path),
        "tasks": list(tasks),
        "arm": arm,
        "groups": group_subset,
        "plan": plan.to_dict(),
        "grid": grid.to_dict(),
        "scaler_scope": scaler_scope,
        "grid_scope": grid_scope,
    }
    config_sha = _write_run_json(out, "cv", config, {"features_sha256": features_sha})
    provenance = {
        "command": "cv",
        "master_seed": seed,
        "config": config,
        "config_sha256": config_sha,
        "features_sha256": features_sha,
    }
    for task in tasks:
        try:
            report = run_cv(
                filtered, task, plan, grid, columns=columns,
                scaler_scope=scaler_scope, grid_scope=grid_scope, jobs=jobs,
            )
        except ValueError as exc:
            _fail(f"task {task}: {exc}")
        write_json(out / f"cv_{task}.json", _report_payload(report, provenance))
        report.to_frame().to_csv(out / f"cv_{task}.csv", index=False)
        click.echo(f"{task}: balanced accuracy {report.mean:.4f} ({report.sd:.4f})")


@main.command("arm-study")
@_cv_options
@click.option("--task", "tasks", multiple=True, type=click.Choice(TASK_NAMES),
              default=TASK_NAMES, show_default=True)
@click.option("--settings", "settings_text", default=",".join(ARM_SETTINGS),
              show_default=True, help="Comma-separated arm settings to compare.")
@click.option("--groups", "groups_text", default=None,
              help="Optional comma-separated raw task ids to restrict features to.")
@click.option("--plots/--no-plots", default=True, show_default=True)
def arm_study_cmd(features_path, out, seed, folds, repeats, manifest_flag, scaler_scope,
                  grid_scope, jobs, tasks, settings_text, groups_text, plots):
    """Compare recording-arm settings per classification task."""
    matrix, features_sha = _load_features(features_path)
    settings = [s.strip() for s in settings_text.split(",") if s.strip()]
    unknown = [s for s in settings if s not in ARM_SETTINGS]
    if unknown:
        _fail(f"unknown arm settings {unknown}; expected among {list(ARM_SETTINGS)}")
    group_subset = _parse_groups(groups_text)
    manifest = (
        _find_manifest(features_path, manifest_flag) if group_subset is not None else None
    )
    plan = CvPlan(n_folds=folds, n_repeats=repeats, master_seed=seed)
    grid = GridSpec()
    try:
        results = arm_study(
            matrix, list(tasks), plan, grid, settings=settings,
            group_subset=group_subset, manifest=manifest,
            scaler_scope=scaler_scope, grid_scope=grid_scope, jobs=jobs,
        )
    except ValueError as exc:
        _fail(str(exc))
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "features": str(features_path),
        "tasks": list(tasks),
        "settings": settings,
        "groups": group_subset,
        "plan": plan.to_dict(),
        "grid": grid.to_dict(),
        "scaler_scope": scaler_scope,
        "grid_scope": grid_scope,
    }
    config_sha = _write_run_json(out, "arm-study", config, {"features_sha256": features_sha})
    provenance = {
        "command": "arm-study",
        "master_seed": seed,
        "config": config,
        "config_sha256": config_sha,
        "features_sha256": features_sha,
    }
    payload = {"provenance": provenance, "results": {}}
    for (task, setting), report in results.items():
        payload["results"].setdefault(task, {})[setting] = report.to_dict()
    write_json(out / "arm_study.json", payload)
    frame = arm_study_frame(results)
    frame.to_csv(out / "arm_study.csv", index=False)
    if plots:
        save_arm_study_plot(frame, out / "arm_study.png")
    for (task, setting), report in results.items():
        click.echo(f"{task} / {setting}: {report.mean:.4f} ({report.sd:.4f})")


@main.command("select-groups")
@_cv_options
@click.option("--task", required=True, type=click.Choice(TASK_NAMES))
@click.option("--direction", type=click.Choice(["forward", "backward", "both"]),
              default="both", show_default=True)
@click.option("--arm", type=click.Choice(ARM_SETTINGS), default="both", show_default=True)
@click.option("--tolerance", default=MINIMAL_SUBSET_TOLERANCE, show_default=True,
              help="Minimal-subset tolerance in absolute balanced-accuracy units.")
@click.option("--plots/--no-plots", default=True, show_default=True)
def select_groups(features_path, out, seed, folds, repeats, manifest_flag, scaler_scope,
                  grid_scope, jobs, task, direction, arm, tolerance, plots):
    """Greedy forward/backward selection over assessment-task feature groups."""
    matrix, features_sha = _load_features(features_path)
    manifest = _find_manifest(features_path, manifest_flag)
    filtered = filter_arm(matrix, arm)
    groups = filtered.group_columns(manifest)
    plan = CvPlan(n_folds=folds, n_repeats=repeats, master_seed=seed)
    grid = GridSpec()
    directions = ["forward", "backward"] if direction == "both" else [direction]
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "features": str(features_path),
        "task": task,
        "directions": directions,
        "arm": arm,
        "tolerance": tolerance,
        "plan": plan.to_dict(),
        "grid": grid.to_dict(),
        "scaler_scope": scaler_scope,
        "grid_scope": grid_scope,
    }
    config_sha = _write_run_json(out, "select-groups", config,
                                 {"features_sha256": features_sha})
    provenance = {
        "command": "select-groups",
        "master_seed": seed,
        "config": config,
        "config_sha256": config_sha,
        "features_sha256": features_sha,
    }
    traces = []
    for dir_name in directions:
        select = forward_select if dir_name == "forward" else backward_select
        try:
            trace = select(
                filtered, groups, task, plan, grid, arm_setting=arm,
                scaler_scope=scaler_scope, grid_scope=grid_scope, jobs=jobs,
            )
        except ValueError as exc:
            _fail(str(exc))
        traces.append(trace)
        payload = trace.to_dict()
        payload["minimal_subset"] = list(minimal_subset(trace, tolerance))
        payload["provenance"] = provenance
        stem = f"selection_{task}_{dir_name}"
        write_json(out / f"{stem}.json", payload)
        frame = trace.to_frame()
        frame.to_csv(out / f"{stem}.csv", index=False)
        if plots:
            save_selection_plot(frame, task, out / f"{stem}.png")
        click.echo(
            f"{dir_name}: minimal subset {sorted(minimal_subset(trace, tolerance))} "
            f"(best mean {max(s.mean for s in trace.steps):.4f})"
        )
    if len(traces) > 1:
        table = exclusion_consensus(traces, tolerance)
        write_json(out / "consensus.json", {"provenance": provenance, "table": table})
        pd.DataFrame(table).to_csv(out / "consensus.csv", index=False)


@main.command()
@click.option("--baseline", required=True, type=click.Path(path_type=Path),
              help="cv output dir: both arms, all groups.")
@click.option("--reduced-tasks", "reduced_tasks", required=True,
              type=click.Path(path_type=Path), help="cv output dir: reduced task set.")
@click.option("--right-arm", "right_arm", required=True, type=click.Path(path_type=Path),
              help="cv output dir: right arm only.")
@click.option("--reduced-right", "reduced_right", required=True,
              type=click.Path(path_type=Path), help="cv output dir: reduced tasks + right arm.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--plots/--no-plots", default=True, show_default=True)
def report(baseline, reduced_tasks, right_arm, reduced_right, out, plots):
    """Assemble the summary table from the four constituent cv runs."""
    run_dirs = dict(zip([key for key, _ in REPORT_SETTINGS],
                        [baseline, reduced_tasks, right_arm, reduced_right]))
    loaded = {}
    feature_hashes = {}
    for key, run_dir in run_dirs.items():
        for task in BINARY_TASK_NAMES:
            path = Path(run_dir) / f"cv_{task}.json"
            if not path.exists():
                _fail(f"missing constituent run: {path} (setting '{key}', task '{task}')")
            obj = read_json(path)
            loaded[(key, task)] = CvReport.from_dict(obj)
            feature_hashes[(key, task)] = obj.get("provenance", {}).get("features_sha256")
    hashes = set(feature_hashes.values())
    if len(hashes) > 1:
        detail = ", ".join(f"{k}: {v}" for k, v in sorted(feature_hashes.items()))
        _fail(f"refusing to mix artifacts from different cohorts ({detail})")

    out.mkdir(parents=True, exist_ok=True)
    formatted = {}
    numeric = {}
    for task in BINARY_TASK_NAMES:
        formatted[TASK_TITLES[task]] = {
            title: f"{loaded[(key, task)].mean:.4f} ({loaded[(key, task)].sd:.4f})"
            for key, title in REPORT_SETTINGS
        }
        numeric[task] = {
            key: {"mean": loaded[(key, task)].mean, "sd": loaded[(key, task)].sd}
            for key, _ in REPORT_SETTINGS
        }
    write_json(
        out / "report.json",
        {
            "table": formatted,
            "numeric": numeric,
            "features_sha256": next(iter(hashes)),
            "runs": {k: str(v) for k, v in run_dirs.items()},
        },
    )
    table = pd.DataFrame(
        [
            {"task": TASK_TITLES[task], **formatted[TASK_TITLES[task]]}
            for task in BINARY_TASK_NAMES
        ]
    )
    table.to_csv(out / "report.csv", index=False)
    if plots:
        plot_frame = pd.DataFrame(
            {
                (title, stat): [numeric[task][key][stat] for task in BINARY_TASK_NAMES]
                for key, title in REPORT_SETTINGS
                for stat in ("mean", "sd")
            },
            index=[TASK_TITLES[task] for task in BINARY_TASK_NAMES],
        )
        save_report_plot(plot_frame, out / "report.png")
    click.echo(table.to_string(index=False))


if __name__ == "__main__":
    main()

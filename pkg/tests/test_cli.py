import json

import pytest
from click.testing import CliRunner

from wristscreen.cli import main
from wristscreen.common import read_json


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory, runner):
    """synth -> extract on a small cohort, shared across CLI tests."""
    root = tmp_path_factory.mktemp("pipeline")
    cohort = root / "cohort"
    feats = root / "features"
    res = runner.invoke(main, ["synth", "--n", "24", "--seed", "7", "--out", str(cohort)])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, ["extract", "--cohort", str(cohort), "--out", str(feats)])
    assert res.exit_code == 0, res.output
    return root, cohort, feats


class TestSynthExtract:
    def test_cohort_layout(self, pipeline_dirs):
        _, cohort, feats = pipeline_dirs
        assert (cohort / "manifest.json").exists()
        assert (cohort / "ground_truth.json").exists()
        assert (cohort / "run.json").exists()
        assert len(list((cohort / "sessions").glob("*.json"))) == 24
        assert (feats / "features.csv").exists()
        assert (feats / "manifest.json").exists()

    def test_extract_reports_shape(self, pipeline_dirs):
        _, _, feats = pipeline_dirs
        header = (feats / "features.csv").read_text().splitlines()[0].split(",")
        assert header[:3] == ["participant_id", "label", "handedness"]
        assert len(header) == 3 + 5208

    def test_empty_cohort_has_valid_manifest(self, tmp_path, runner):
        out = tmp_path / "empty"
        res = runner.invoke(main, ["synth", "--n", "0", "--out", str(out)])
        assert res.exit_code == 0, res.output
        assert read_json(out / "manifest.json")["n_participants"] == 0
        res = runner.invoke(main, ["extract", "--cohort", str(out), "--out",
                                   str(tmp_path / "feat")])
        assert res.exit_code != 0
        assert "no sessions" in res.output

    def test_too_small_cohort_fails_cleanly(self, tmp_path, runner):
        res = runner.invoke(main, ["synth", "--n", "2", "--out", str(tmp_path / "x")])
        assert res.exit_code != 0
        assert "at least 3" in res.output


class TestCv:
    def test_pipeline_produces_report_with_15_fold_scores(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        out = tmp_path / "cv"
        runner = CliRunner()
        res = runner.invoke(main, [
            "cv", "--features", str(feats / "features.csv"), "--out", str(out),
            "--task", "pd-vs-hc", "--seed", "7", "--folds", "3",
        ])
        assert res.exit_code == 0, res.output
        payload = read_json(out / "cv_pd-vs-hc.json")
        assert len(payload["per_fold"]) == 9  # 3 repeats x 3 folds
        assert len(payload["grid_choices"]) == 9
        assert payload["provenance"]["master_seed"] == 7
        assert (out / "cv_pd-vs-hc.csv").exists()
        assert (out / "run.json").exists()

    def test_rerun_is_byte_identical(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        runner = CliRunner()
        args = ["--features", str(feats / "features.csv"), "--task", "pd-vs-hc",
                "--seed", "3", "--folds", "2", "--repeats", "1"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert runner.invoke(main, ["cv", *args, "--out", str(out_a)]).exit_code == 0
        assert runner.invoke(main, ["cv", *args, "--out", str(out_b)]).exit_code == 0
        for name in ("cv_pd-vs-hc.json", "cv_pd-vs-hc.csv", "run.json"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_group_restriction_and_arm_flag(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        runner = CliRunner()
        out = tmp_path / "cvg"
        res = runner.invoke(main, [
            "cv", "--features", str(feats / "features.csv"), "--out", str(out),
            "--task", "pd-vs-hc", "--folds", "2", "--repeats", "1",
            "--arm", "right", "--groups", "1,4,10",
        ])
        assert res.exit_code == 0, res.output
        config = read_json(out / "run.json")["config"]
        assert config["arm"] == "right"
        assert config["groups"] == [1, 4, 10]

    def test_unknown_group_fails_with_message(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        runner = CliRunner()
        res = runner.invoke(main, [
            "cv", "--features", str(feats / "features.csv"),
            "--out", str(tmp_path / "bad"), "--task", "pd-vs-hc", "--groups", "1,99",
        ])
        assert res.exit_code != 0
        assert "99" in res.output

    def test_missing_features_file(self, tmp_path):
        runner = CliRunner()
        res = runner.invoke(main, [
            "cv", "--features", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o"),
            "--task", "pd-vs-hc",
        ])
        assert res.exit_code != 0
        assert "not found" in res.output


class TestArmStudyCommand:
    def test_outputs_table_csv_and_figure(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        runner = CliRunner()
        out = tmp_path / "arms"
        res = runner.invoke(main, [
            "arm-study", "--features", str(feats / "features.csv"), "--out", str(out),
            "--task", "pd-vs-hc", "--settings", "left,right",
            "--folds", "2", "--repeats", "1", "--seed", "5",
        ])
        assert res.exit_code == 0, res.output
        payload = read_json(out / "arm_study.json")
        assert set(payload["results"]["pd-vs-hc"]) == {"left", "right"}
        csv_lines = (out / "arm_study.csv").read_text().splitlines()
        assert csv_lines[0] == "task,setting,mean,sd"
        assert len(csv_lines) == 3
        assert (out / "arm_study.png").stat().st_size > 0

    def test_bad_setting_rejected(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        runner = CliRunner()
        res = runner.invoke(main, [
            "arm-study", "--features", str(feats / "features.csv"),
            "--out", str(tmp_path / "o"), "--settings", "left,up",
        ])
        assert res.exit_code != 0
        assert "up" in res.output


class TestSelectGroupsCommand:
    def test_both_directions_emit_traces_and_consensus(self, pipeline_dirs, tmp_path):
        _, _, feats = pipeline_dirs
        runner = CliRunner()
        out = tmp_path / "sel"
        res = runner.invoke(main, [
            "select-groups", "--features", str(feats / "features.csv"), "--out", str(out),
            "--task", "pd-vs-hc", "--direction", "both",
            "--folds", "2", "--repeats", "1", "--seed", "5", "--jobs", "2",
        ])
        assert res.exit_code == 0, res.output
        fwd = read_json(out / "selection_pd-vs-hc_forward.json")
        bwd = read_json(out / "selection_pd-vs-hc_backward.json")
        assert len(fwd["steps"]) == 11
        assert len(bwd["steps"]) == 11
        assert fwd["minimal_subset"]
        consensus = read_json(out / "consensus.json")
        assert len(consensus["table"]) == 11
        for stem in ("selection_pd-vs-hc_forward", "selection_pd-vs-hc_backward"):
            assert (out / f"{stem}.csv").exists()
            assert (out / f"{stem}.png").stat().st_size > 0
        assert (out / "consensus.csv").exists()


def write_fake_cv_run(run_dir, means, features_sha="abc123"):
    """Craft cv_<task>.json documents without running the pipeline."""
    run_dir.mkdir(parents=True, exist_ok=True)
    for task, (mean, sd) in means.items():
        doc = {
            "task": task,
            "plan": {"n_folds": 5, "n_repeats": 3, "master_seed": 1},
            "scaler_scope": "fold",
            "grid_scope": "nested",
            "per_fold": [],
            "grid_choices": [],
            "mean": mean,
            "sd": sd,
            "provenance": {"features_sha256": features_sha},
        }
        (run_dir / f"cv_{task}.json").write_text(json.dumps(doc))


class TestReportCommand:
    MEANS = {
        "pd-vs-hc": (0.8268, 0.0373),
        "pddd-vs-hc": (0.8265, 0.0375),
        "pd-vs-dd": (0.6765, 0.0492),
    }

    def _make_runs(self, root):
        dirs = {}
        for key in ("baseline", "reduced", "right", "reduced_right"):
            dirs[key] = root / key
            write_fake_cv_run(dirs[key], self.MEANS)
        return dirs

    def test_table_shape_and_formatting(self, tmp_path):
        dirs = self._make_runs(tmp_path)
        out = tmp_path / "report"
        runner = CliRunner()
        res = runner.invoke(main, [
            "report", "--baseline", str(dirs["baseline"]),
            "--reduced-tasks", str(dirs["reduced"]), "--right-arm", str(dirs["right"]),
            "--reduced-right", str(dirs["reduced_right"]), "--out", str(out),
        ])
        assert res.exit_code == 0, res.output
        payload = read_json(out / "report.json")
        table = payload["table"]
        assert set(table) == {"PD vs. HC", "PD + DD vs. HC", "PD vs. DD"}
        row = table["PD vs. HC"]
        assert set(row) == {"Baseline", "Reduced task set", "Right arm only",
                            "Reduced task set, right arm only"}
        assert row["Baseline"] == "0.8268 (0.0373)"
        csv_lines = (out / "report.csv").read_text().splitlines()
        assert len(csv_lines) == 4  # header + 3 tasks
        assert "0.6765 (0.0492)" in csv_lines[3]
        assert (out / "report.png").stat().st_size > 0

    def test_missing_run_is_named(self, tmp_path):
        dirs = self._make_runs(tmp_path)
        (dirs["right"] / "cv_pd-vs-dd.json").unlink()
        runner = CliRunner()
        res = runner.invoke(main, [
            "report", "--baseline", str(dirs["baseline"]),
            "--reduced-tasks", str(dirs["reduced"]), "--right-arm", str(dirs["right"]),
            "--reduced-right", str(dirs["reduced_right"]),
            "--out", str(tmp_path / "r"),
        ])
        assert res.exit_code != 0
        assert "cv_pd-vs-dd.json" in res.output

    def test_mixed_cohort_hashes_refused(self, tmp_path):
        dirs = self._make_runs(tmp_path)
        write_fake_cv_run(dirs["reduced_right"], self.MEANS, features_sha="zzz999")
        runner = CliRunner()
        res = runner.invoke(main, [
            "report", "--baseline", str(dirs["baseline"]),
            "--reduced-tasks", str(dirs["reduced"]), "--right-arm", str(dirs["right"]),
            "--reduced-right", str(dirs["reduced_right"]),
            "--out", str(tmp_path / "r"),
        ])
        assert res.exit_code != 0
        assert "different cohorts" in res.output

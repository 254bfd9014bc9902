"""CLI exit codes, file handling, and report rendering."""

import json

import pytest
from click.testing import CliRunner

from earshot.assignment import build_trial_schedule
from earshot.cli import main
from earshot.core import Origin, Stimulus, dump_manifest
from earshot.eventlog import FileEventLog
from earshot.session import SessionService, StudyBundle
from earshot.simulate import simulate_study

from conftest import FakeClock, build_stimuli, build_study


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def manifest_path(tmp_path):
    study = build_study(min_raters=2)
    path = tmp_path / "manifest.json"
    path.write_text(dump_manifest(study, build_stimuli(study)))
    return path


def test_validate_ok_is_silent(runner, manifest_path):
    result = runner.invoke(main, ["validate", "--manifest", str(manifest_path)])
    assert result.exit_code == 0
    assert result.output == ""


def test_validate_violation_prints_one_line(runner, tmp_path):
    study = build_study(systems=("xtts",), utterances=1, min_raters=1)
    bad = Stimulus("x1", "xtts", "u0", Origin.MACHINE, "a.wav", 1000, prompt_utterance_id="u0")
    path = tmp_path / "bad.json"
    path.write_text(dump_manifest(study, [bad]))
    result = runner.invoke(main, ["validate", "--manifest", str(path)])
    assert result.exit_code == 1
    lines = result.output.strip().split("\n")
    assert len(lines) == 1
    assert "prompt-equals-target" in lines[0]


def test_validate_missing_file_exits_2(runner, tmp_path):
    result = runner.invoke(main, ["validate", "--manifest", str(tmp_path / "none.json")])
    assert result.exit_code == 2


def test_schedule_deterministic_and_sized(runner, manifest_path, tmp_path):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    for out in (out1, out2):
        result = runner.invoke(
            main,
            ["schedule", "--manifest", str(manifest_path), "--pool", "2", "--seed", "5", "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
    assert out1.read_bytes() == out2.read_bytes()

    short = runner.invoke(main, ["schedule", "--manifest", str(manifest_path), "--pool", "1"])
    assert short.exit_code == 1
    assert "minimum feasible pool = 2" in short.output


def make_results_csv(tmp_path):
    """Simulate a full study through the real service and export via the CLI."""
    study = build_study(min_raters=2)
    stimuli = build_stimuli(study)
    schedule = build_trial_schedule(study, stimuli, 2, seed=study.rng_seed)
    data_dir = tmp_path / "data"
    study_dir = data_dir / "studies" / study.study_id
    study_dir.mkdir(parents=True)
    (study_dir / "manifest.json").write_text(dump_manifest(study, stimuli))
    (study_dir / "schedule.json").write_text(schedule.to_json())

    log = FileEventLog(data_dir / "events.log")
    service = SessionService(
        {study.study_id: StudyBundle.build(study, stimuli, schedule)},
        log,
        mac_key="csv-key",
        clock=FakeClock(),
    )
    simulate_study(service, study.study_id, seed=42)
    log.close()
    return data_dir, study


def test_export_and_reports(runner, tmp_path):
    data_dir, study = make_results_csv(tmp_path)
    csv_path = tmp_path / "results.csv"
    result = runner.invoke(
        main,
        ["export", "--data-dir", str(data_dir), "--study", study.study_id, "--out", str(csv_path)],
    )
    assert result.exit_code == 0, result.output
    assert csv_path.read_text().startswith("study_id,")

    text = runner.invoke(main, ["report", "--results", str(csv_path), "--report", "hfr-table"])
    assert text.exit_code == 0, text.output
    assert "mu" in text.output

    js = runner.invoke(
        main, ["report", "--results", str(csv_path), "--report", "hfr-table", "--format", "json"]
    )
    doc = json.loads(js.output)
    assert doc["kind"] == "hfr-table"
    assert doc["rows"]

    timing = runner.invoke(
        main, ["report", "--results", str(csv_path), "--report", "timing-table", "--format", "json"]
    )
    assert json.loads(timing.output)["seconds_per_sample"]["HFR"] > 0

    wilson = runner.invoke(
        main,
        ["report", "--results", str(csv_path), "--report", "hfr-table", "--ci-method", "wilson", "--format", "csv"],
    )
    assert wilson.exit_code == 0

    mushra_on_hfr = runner.invoke(
        main, ["report", "--results", str(csv_path), "--report", "mushra-table"]
    )
    assert mushra_on_hfr.exit_code == 1  # kind mismatch is a domain error


def test_export_unknown_study_exits_1(runner, tmp_path):
    data_dir, _ = make_results_csv(tmp_path)
    result = runner.invoke(main, ["export", "--data-dir", str(data_dir), "--study", "ghost"])
    assert result.exit_code == 1
    assert "unknown study" in result.output


def test_report_schema_drift_names_columns(runner, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("study_id,rater_id\n")
    result = runner.invoke(main, ["report", "--results", str(bad), "--report", "hfr-table"])
    assert result.exit_code == 1
    assert "missing columns" in result.output


def test_usage_errors_exit_2(runner):
    assert runner.invoke(main, ["report", "--results", "x.csv"]).exit_code == 2  # missing --report
    assert runner.invoke(main, ["nonsense"]).exit_code == 2

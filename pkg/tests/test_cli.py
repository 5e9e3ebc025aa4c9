"""Command line interface: runs, exit codes, reproducible traces, tooling."""

import json

import pytest
from click.testing import CliRunner

from smaad.cli import main
from smaad.messages import MessageLog


@pytest.fixture()
def runner():
    return CliRunner()


def run_args(tmp_path, tag, seed=7, extra=()):
    return [
        "run",
        "--pack", "diarrhea",
        "--scenario", "viral",
        "--base", str(tmp_path / f"base-{tag}"),
        "--trace", str(tmp_path / f"trace-{tag}.json"),
        "--log", str(tmp_path / f"log-{tag}.jsonl"),
        "--seed", str(seed),
        "--no-timestamps",
        *extra,
    ]


def test_lint_passes_on_the_shipped_pack(runner):
    result = runner.invoke(main, ["lint", "--pack", "diarrhea"])
    assert result.exit_code == 0, result.output
    assert "pack diarrhea OK: 9 signs, 9 diagnoses, 3 scenarios" in result.output


def test_lint_fails_on_unknown_pack(runner):
    result = runner.invoke(main, ["lint", "--pack", "dermatologie"])
    assert result.exit_code == 1
    assert "unknown domain pack" in result.output


def test_run_completes_and_writes_artifacts(runner, tmp_path):
    result = runner.invoke(main, run_args(tmp_path, "a"))
    assert result.exit_code == 0, result.output
    assert "diagnosis: Δ1" in result.output
    assert "therapy: Θ1" in result.output
    assert "status: completed  (case case-0001-" in result.output

    trace = json.loads((tmp_path / "trace-a.json").read_text(encoding="utf-8"))
    assert set(trace) == {
        "session",
        "pack",
        "scenario",
        "status",
        "components",
        "labels",
        "case",
        "stage_traces",
        "pending_questions",
        "messages",
    }
    assert trace["status"] == "completed"
    assert trace["components"]["diagnosis"] == "Δ1"
    assert trace["stage_traces"]["diagnosis"][-1]["to"] == "Δ1"
    assert all(m["ts"] == "" for m in trace["messages"])  # --no-timestamps

    log = MessageLog.load(tmp_path / "log-a.jsonl")
    assert [m.seq for m in log] == list(range(1, len(log.messages) + 1))
    assert log.messages[-1].content["event"] == "session_completed"


def test_same_seed_runs_are_byte_identical(runner, tmp_path):
    first = runner.invoke(main, run_args(tmp_path, "one"))
    second = runner.invoke(main, run_args(tmp_path, "two"))
    assert first.exit_code == 0 and second.exit_code == 0
    assert (tmp_path / "trace-one.json").read_bytes() == (tmp_path / "trace-two.json").read_bytes()
    assert (tmp_path / "log-one.jsonl").read_bytes() == (tmp_path / "log-two.jsonl").read_bytes()

    other_seed = runner.invoke(main, run_args(tmp_path, "three", seed=8))
    assert other_seed.exit_code == 0
    trace_one = json.loads((tmp_path / "trace-one.json").read_text(encoding="utf-8"))
    trace_three = json.loads((tmp_path / "trace-three.json").read_text(encoding="utf-8"))
    assert trace_one["session"] != trace_three["session"]


def test_threaded_run_completes(runner, tmp_path):
    result = runner.invoke(main, run_args(tmp_path, "t", extra=["--threaded"]))
    assert result.exit_code == 0, result.output
    assert "status: completed" in result.output


def test_run_exits_3_when_questions_remain(runner, tmp_path):
    scenario = tmp_path / "partial.json"
    scenario.write_text(json.dumps({"id": "partial", "findings": {"SO1": "present"}}))
    result = runner.invoke(
        main, ["run", "--pack", "diarrhea", "--scenario", str(scenario)]
    )
    assert result.exit_code == 3
    assert "unanswered: AC, SE1, SE2, SE3, SE5, SE6, SG" in result.output
    assert "status: awaiting_user" in result.output


def test_run_exits_2_when_stuck(runner, tmp_path):
    scenario = tmp_path / "impasse.json"
    scenario.write_text(json.dumps({"id": "impasse", "findings": {"SO1": "absent"}}))
    result = runner.invoke(
        main, ["run", "--pack", "diarrhea", "--scenario", str(scenario)]
    )
    assert result.exit_code == 2
    assert "status: stuck" in result.output


def test_run_rejects_unknown_scenarios_and_packs(runner):
    result = runner.invoke(main, ["run", "--pack", "diarrhea", "--scenario", "grippe"])
    assert result.exit_code == 1
    assert "no scenario 'grippe'" in result.output
    assert "bacterial_benign" in result.output  # lists what the pack ships

    result = runner.invoke(main, ["run", "--pack", "cardio", "--scenario", "viral"])
    assert result.exit_code == 1
    assert "unknown domain pack" in result.output


def test_cases_stats_and_query(runner, tmp_path):
    assert runner.invoke(main, run_args(tmp_path, "seed")).exit_code == 0
    base = str(tmp_path / "base-seed")

    stats = runner.invoke(main, ["cases", "stats", "--base", base])
    assert stats.exit_code == 0, stats.output
    payload = json.loads(stats.output)
    assert payload["cases"] == 1
    assert payload["components"]["diagnosis"] == 1

    query = runner.invoke(
        main,
        ["cases", "query", "--base", base, "--keywords", "virale,hivernale", "-k", "1"],
    )
    assert query.exit_code == 0, query.output
    line = query.output.strip()
    assert line.startswith("0.")
    assert "case-0001-" in line
    assert "diagnosis=Δ1" in line

    findings_file = tmp_path / "query-findings.json"
    findings_file.write_text(json.dumps({"SO1": "present", "SE1": "present"}))
    by_findings = runner.invoke(
        main,
        [
            "cases", "query",
            "--base", base,
            "--findings", str(findings_file),
            "--pack", "diarrhea",
        ],
    )
    assert by_findings.exit_code == 0, by_findings.output
    assert "case-0001-" in by_findings.output


def test_cases_query_requires_some_criterion(runner, tmp_path):
    base = tmp_path / "empty-base"
    base.mkdir()
    result = runner.invoke(main, ["cases", "query", "--base", str(base)])
    assert result.exit_code == 1
    assert "provide --findings and/or --keywords" in result.output

    empty = runner.invoke(
        main, ["cases", "query", "--base", str(base), "--keywords", "diarrhée"]
    )
    assert empty.exit_code == 0
    assert "no cases retained" in empty.output

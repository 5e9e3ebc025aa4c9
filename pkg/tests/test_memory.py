"""Working-memory semantics: finding values, versioning, question queue."""

import pytest

from smaad.memory import (
    ABSENT,
    PRESENT,
    UNKNOWN,
    FindingValue,
    StageKind,
    UnknownSign,
    WorkingMemory,
    parse_findings,
    positive,
)

SIGNS = ["SO1", "SE1", "SE2"]


def test_finding_value_json_roundtrip():
    for value in (PRESENT, ABSENT, UNKNOWN, positive(""), positive("salmonella")):
        assert FindingValue.from_json(value.to_json()) == value


def test_parse_findings_accepts_both_forms():
    parsed = parse_findings({"SO1": "present", "SE2": {"positive": "shigella"}})
    assert parsed["SO1"] == PRESENT
    assert parsed["SE2"] == positive("shigella")
    assert parsed["SE2"].result == "shigella"


def test_parse_findings_rejects_garbage():
    with pytest.raises(ValueError):
        parse_findings({"SO1": "perhaps"})
    with pytest.raises(ValueError):
        parse_findings({"SO1": {"negative": ""}})


def test_known_covers_all_states_but_unknown():
    assert PRESENT.known and ABSENT.known and positive("x").known
    assert not UNKNOWN.known


def test_version_bumps_only_on_writes():
    memory = WorkingMemory(SIGNS)
    assert memory.version == 0
    assert memory.record_finding("SO1", PRESENT) == 1
    assert memory.set_stage_result(StageKind.DIAGNOSIS, "Δ1") == 2
    # question bookkeeping is not a memory write
    memory.add_questions(["SE1", "SE2"])
    memory.clear_questions(["SE2"])
    assert memory.version == 2


def test_answering_a_pending_question_is_one_write():
    memory = WorkingMemory(SIGNS)
    memory.add_questions(["SE1"])
    assert memory.pending_questions == ["SE1"]
    version = memory.record_finding("SE1", ABSENT)
    assert version == 1
    assert memory.pending_questions == []


def test_add_questions_skips_known_and_queued():
    memory = WorkingMemory(SIGNS)
    memory.record_finding("SO1", PRESENT)
    memory.add_questions(["SE1"])
    assert memory.add_questions(["SO1", "SE1", "SE2"]) == ["SE2"]
    assert memory.pending_questions == ["SE1", "SE2"]


def test_undeclared_sign_rejected_everywhere():
    memory = WorkingMemory(SIGNS)
    with pytest.raises(UnknownSign):
        memory.record_finding("XX", PRESENT)
    with pytest.raises(UnknownSign):
        memory.add_questions(["XX"])


def test_snapshot_is_isolated_from_later_writes():
    memory = WorkingMemory(SIGNS)
    memory.record_finding("SO1", PRESENT)
    snap = memory.snapshot()
    memory.record_finding("SO1", ABSENT)
    memory.set_stage_result(StageKind.DIAGNOSIS, "Δ1")
    assert snap.value_of("SO1") == PRESENT
    assert snap.stage_result(StageKind.DIAGNOSIS) is None
    assert snap.version == 1
    assert memory.snapshot().version == 3


def test_snapshot_defaults_unknown():
    memory = WorkingMemory(SIGNS)
    assert memory.snapshot().value_of("SE2") is UNKNOWN

"""Supervisor working memory: sign findings and intermediate stage results.

The working memory is the single shared picture of the current clinical
situation. Only the supervisor writes to it; agents read immutable
snapshots. Every write bumps a version counter so readers can tell
whether anything changed since they last looked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping


class StageKind(Enum):
    """The clinical stages orchestrated by the general automaton."""

    DIAGNOSIS = "diagnosis"
    PROGNOSIS = "prognosis"
    THERAPY = "therapy"
    FOLLOW_UP = "follow_up"
    GENERAL = "general"

    @classmethod
    def parse(cls, name: str) -> "StageKind":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown stage kind: {name!r}") from None


class UnknownSign(KeyError):
    """Raised when a sign id is not part of the declared catalogue."""

    def __init__(self, sign: str):
        super().__init__(sign)
        self.sign = sign

    def __str__(self) -> str:
        return f"unknown sign: {self.sign!r}"


@dataclass(frozen=True)
class FindingValue:
    """Observed value of one clinical sign.

    ``state`` is one of ``present``, ``absent``, ``unknown`` or
    ``positive``; ``result`` carries the free-text test result and is
    only meaningful for positive test findings.
    """

    state: str
    result: str | None = None

    PRESENT = "present"
    ABSENT = "absent"
    UNKNOWN = "unknown"
    POSITIVE = "positive"

    def __post_init__(self) -> None:
        if self.state not in (self.PRESENT, self.ABSENT, self.UNKNOWN, self.POSITIVE):
            raise ValueError(f"invalid finding state: {self.state!r}")
        if self.result is not None and self.state != self.POSITIVE:
            raise ValueError("only positive findings carry a test result")

    @property
    def known(self) -> bool:
        return self.state != self.UNKNOWN

    def to_json(self) -> Any:
        if self.state == self.POSITIVE:
            return {"positive": self.result or ""}
        return self.state

    @classmethod
    def from_json(cls, value: Any) -> "FindingValue":
        if isinstance(value, str):
            if value in (cls.PRESENT, cls.ABSENT, cls.UNKNOWN):
                return cls(value)
            if value == cls.POSITIVE:
                return cls(cls.POSITIVE, "")
            raise ValueError(f"invalid finding value: {value!r}")
        if isinstance(value, Mapping) and set(value) == {"positive"}:
            result = value["positive"]
            if not isinstance(result, str):
                raise ValueError("positive test result must be a string")
            return cls(cls.POSITIVE, result)
        raise ValueError(f"invalid finding value: {value!r}")


PRESENT = FindingValue(FindingValue.PRESENT)
ABSENT = FindingValue(FindingValue.ABSENT)
UNKNOWN = FindingValue(FindingValue.UNKNOWN)


def positive(result: str = "") -> FindingValue:
    return FindingValue(FindingValue.POSITIVE, result)


def parse_findings(raw: Mapping[str, Any]) -> dict[str, FindingValue]:
    """Decode a JSON findings map, e.g. ``{"SO1": "present", "SE2": {"positive": "..."}}``."""
    return {sign: FindingValue.from_json(value) for sign, value in raw.items()}


@dataclass(frozen=True)
class MemorySnapshot:
    """Immutable view of the working memory at one version."""

    findings: Mapping[str, FindingValue]
    stage_results: Mapping[StageKind, str]
    version: int

    def value_of(self, sign: str) -> FindingValue:
        return self.findings.get(sign, UNKNOWN)

    def stage_result(self, stage: StageKind) -> str | None:
        return self.stage_results.get(stage)


@dataclass
class WorkingMemory:
    """Mutable situation record owned by the supervisor.

    The version counts finding and stage-result writes; question-queue
    bookkeeping does not bump it. Answering a pending question is one
    mutation (write + dequeue) and therefore one version step.
    """

    declared_signs: frozenset[str]
    findings: dict[str, FindingValue] = field(default_factory=dict)
    stage_results: dict[StageKind, str] = field(default_factory=dict)
    version: int = 0
    pending_questions: list[str] = field(default_factory=list)

    def __init__(self, declared_signs: Iterable[str]):
        self.declared_signs = frozenset(declared_signs)
        self.findings = {}
        self.stage_results = {}
        self.version = 0
        self.pending_questions = []

    def value_of(self, sign: str) -> FindingValue:
        return self.findings.get(sign, UNKNOWN)

    def stage_result(self, stage: StageKind) -> str | None:
        return self.stage_results.get(stage)

    def record_finding(self, sign: str, value: FindingValue) -> int:
        """Write one finding, clear any pending question for it, bump the version."""
        if sign not in self.declared_signs:
            raise UnknownSign(sign)
        self.findings[sign] = value
        if sign in self.pending_questions:
            self.pending_questions.remove(sign)
        self.version += 1
        return self.version

    def set_stage_result(self, stage: StageKind, result: str) -> int:
        self.stage_results[stage] = result
        self.version += 1
        return self.version

    def add_questions(self, signs: Iterable[str]) -> list[str]:
        """Queue signs awaiting a user answer; already-known or queued signs are skipped."""
        added = []
        for sign in signs:
            if sign not in self.declared_signs:
                raise UnknownSign(sign)
            if sign in self.pending_questions or self.value_of(sign).known:
                continue
            self.pending_questions.append(sign)
            added.append(sign)
        return added

    def clear_questions(self, signs: Iterable[str]) -> None:
        """Drop queued questions that became moot (e.g. their stage resolved)."""
        drop = set(signs)
        self.pending_questions = [s for s in self.pending_questions if s not in drop]

    def snapshot(self) -> MemorySnapshot:
        return MemorySnapshot(
            findings=dict(self.findings),
            stage_results=dict(self.stage_results),
            version=self.version,
        )

"""Finite-state automata with three-valued guards over findings.

Stage automata advance on the lowest-priority transition whose guard is
true. Guards evaluate to true, false or indeterminate (Kleene logic);
an indeterminate guard means some referenced sign is still unknown, and
the step outcome then names exactly the signs the user must be asked.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .memory import (
    ABSENT,
    PRESENT,
    FindingValue,
    MemorySnapshot,
    StageKind,
    UnknownSign,
    positive,
)


class AutomatonError(ValueError):
    """Base class for automaton definition and execution failures."""


class UnknownState(AutomatonError):
    pass


class DuplicatePriority(AutomatonError):
    pass


class UnreachableInitial(AutomatonError):
    pass


class StepBudgetExceeded(AutomatonError):
    pass


class SignSpaceTooLarge(AutomatonError):
    pass


class Truth(Enum):
    TRUE = "true"
    FALSE = "false"
    INDETERMINATE = "indeterminate"


def truth_not(value: Truth) -> Truth:
    if value is Truth.TRUE:
        return Truth.FALSE
    if value is Truth.FALSE:
        return Truth.TRUE
    return Truth.INDETERMINATE


def truth_and(values: Iterable[Truth]) -> Truth:
    values = list(values)
    if any(v is Truth.FALSE for v in values):
        return Truth.FALSE
    if any(v is Truth.INDETERMINATE for v in values):
        return Truth.INDETERMINATE
    return Truth.TRUE


def truth_or(values: Iterable[Truth]) -> Truth:
    values = list(values)
    if any(v is Truth.TRUE for v in values):
        return Truth.TRUE
    if any(v is Truth.INDETERMINATE for v in values):
        return Truth.INDETERMINATE
    return Truth.FALSE


# -- guard expressions -------------------------------------------------------

WILDCARD = "*"


class GuardExpr:
    """Boolean expression tree evaluated against a memory snapshot."""

    def evaluate(self, memory: MemorySnapshot) -> Truth:
        raise NotImplementedError

    def signs(self) -> frozenset[str]:
        raise NotImplementedError

    def to_json(self) -> Any:
        raise NotImplementedError


@dataclass(frozen=True)
class TrueGuard(GuardExpr):
    def evaluate(self, memory: MemorySnapshot) -> Truth:
        return Truth.TRUE

    def signs(self) -> frozenset[str]:
        return frozenset()

    def to_json(self) -> Any:
        return True


@dataclass(frozen=True)
class SignPredicate(GuardExpr):
    """present / absent / positive / unknown applied to one sign.

    ``present`` also holds for positive test findings; ``unknown`` is a
    meta-predicate and never evaluates indeterminate itself.
    """

    op: str  # present | absent | positive | unknown
    sign: str

    def evaluate(self, memory: MemorySnapshot) -> Truth:
        value = memory.value_of(self.sign)
        if self.op == "unknown":
            return Truth.TRUE if not value.known else Truth.FALSE
        if not value.known:
            return Truth.INDETERMINATE
        if self.op == "present":
            hit = value.state in (FindingValue.PRESENT, FindingValue.POSITIVE)
        elif self.op == "absent":
            hit = value.state == FindingValue.ABSENT
        elif self.op == "positive":
            hit = value.state == FindingValue.POSITIVE
        else:  # pragma: no cover - parse rejects other ops
            raise AutomatonError(f"invalid predicate op {self.op!r}")
        return Truth.TRUE if hit else Truth.FALSE

    def signs(self) -> frozenset[str]:
        return frozenset({self.sign})

    def to_json(self) -> Any:
        return [self.op, self.sign]


@dataclass(frozen=True)
class StageResultPredicate(GuardExpr):
    """True when a stage result is recorded (``*`` matches any value)."""

    stage: StageKind
    value: str

    def evaluate(self, memory: MemorySnapshot) -> Truth:
        result = memory.stage_result(self.stage)
        if result is None:
            return Truth.INDETERMINATE
        if self.value == WILDCARD:
            return Truth.TRUE
        return Truth.TRUE if result == self.value else Truth.FALSE

    def signs(self) -> frozenset[str]:
        return frozenset()

    def to_json(self) -> Any:
        return ["stage_result", self.stage.value, self.value]


@dataclass(frozen=True)
class Not(GuardExpr):
    item: GuardExpr

    def evaluate(self, memory: MemorySnapshot) -> Truth:
        return truth_not(self.item.evaluate(memory))

    def signs(self) -> frozenset[str]:
        return self.item.signs()

    def to_json(self) -> Any:
        return ["not", self.item.to_json()]


@dataclass(frozen=True)
class And(GuardExpr):
    items: tuple[GuardExpr, ...]

    def evaluate(self, memory: MemorySnapshot) -> Truth:
        return truth_and(item.evaluate(memory) for item in self.items)

    def signs(self) -> frozenset[str]:
        return frozenset().union(*(item.signs() for item in self.items))

    def to_json(self) -> Any:
        return ["and", *(item.to_json() for item in self.items)]


@dataclass(frozen=True)
class Or(GuardExpr):
    items: tuple[GuardExpr, ...]

    def evaluate(self, memory: MemorySnapshot) -> Truth:
        return truth_or(item.evaluate(memory) for item in self.items)

    def signs(self) -> frozenset[str]:
        return frozenset().union(*(item.signs() for item in self.items))

    def to_json(self) -> Any:
        return ["or", *(item.to_json() for item in self.items)]


_PREDICATE_OPS = ("present", "absent", "positive", "unknown")


def parse_guard(raw: Any) -> GuardExpr:
    """Parse the prefix-notation guard form, e.g. ``["and", ["present", "SO1"], true]``."""
    if raw is True or raw == ["true"] or raw == "true":
        return TrueGuard()
    if not isinstance(raw, Sequence) or isinstance(raw, (str, bytes)) or not raw:
        raise AutomatonError(f"malformed guard expression: {raw!r}")
    op = raw[0]
    if op in _PREDICATE_OPS:
        if len(raw) != 2 or not isinstance(raw[1], str):
            raise AutomatonError(f"{op} predicate takes exactly one sign id: {raw!r}")
        return SignPredicate(op, raw[1])
    if op == "stage_result":
        if len(raw) != 3:
            raise AutomatonError(f"stage_result takes a stage and a value: {raw!r}")
        return StageResultPredicate(StageKind.parse(str(raw[1])), str(raw[2]))
    if op == "not":
        if len(raw) != 2:
            raise AutomatonError(f"not takes exactly one operand: {raw!r}")
        return Not(parse_guard(raw[1]))
    if op == "and":
        return And(tuple(parse_guard(item) for item in raw[1:]))
    if op == "or":
        return Or(tuple(parse_guard(item) for item in raw[1:]))
    raise AutomatonError(f"unknown guard operator: {op!r}")


# -- automaton definition ----------------------------------------------------


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: GuardExpr
    priority: int

    def to_json(self) -> dict[str, Any]:
        return {
            "from": self.source,
            "to": self.target,
            "priority": self.priority,
            "guard": self.guard.to_json(),
        }


@dataclass(frozen=True)
class Automaton:
    id: str
    stage: StageKind
    states: tuple[str, ...]
    initial: str
    terminal: frozenset[str]
    transitions: tuple[Transition, ...]

    def outgoing(self, state: str) -> list[Transition]:
        return sorted(
            (t for t in self.transitions if t.source == state),
            key=lambda t: t.priority,
        )

    def signs(self) -> frozenset[str]:
        return frozenset().union(
            frozenset(), *(t.guard.signs() for t in self.transitions)
        )

    def to_document(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "stage": self.stage.value,
            "states": list(self.states),
            "initial": self.initial,
            "terminal": sorted(self.terminal),
            "transitions": [t.to_json() for t in self.transitions],
        }


def validate_automaton(automaton: Automaton, signs: Iterable[str]) -> Automaton:
    declared = frozenset(signs)
    states = set(automaton.states)
    if automaton.initial not in states:
        raise UnreachableInitial(
            f"automaton {automaton.id!r}: initial state {automaton.initial!r} is not declared"
        )
    for state in automaton.terminal:
        if state not in states:
            raise UnknownState(f"automaton {automaton.id!r}: terminal state {state!r} is not declared")
    seen_priorities: set[tuple[str, int]] = set()
    for transition in automaton.transitions:
        for endpoint in (transition.source, transition.target):
            if endpoint not in states:
                raise UnknownState(
                    f"automaton {automaton.id!r}: transition endpoint {endpoint!r} is not declared"
                )
        key = (transition.source, transition.priority)
        if key in seen_priorities:
            raise DuplicatePriority(
                f"automaton {automaton.id!r}: duplicate priority {transition.priority} "
                f"from state {transition.source!r}"
            )
        seen_priorities.add(key)
        undeclared = transition.guard.signs() - declared
        if undeclared:
            raise UnknownSign(sorted(undeclared)[0])
    return automaton


def load_automaton(document: str | Mapping[str, Any], signs: Iterable[str]) -> Automaton:
    """Load and validate an automaton document against the declared sign catalogue."""
    if isinstance(document, str):
        document = json.loads(document)
    transitions = tuple(
        Transition(
            source=str(raw["from"]),
            target=str(raw["to"]),
            guard=parse_guard(raw["guard"]),
            priority=int(raw["priority"]),
        )
        for raw in document.get("transitions", [])
    )
    automaton = Automaton(
        id=str(document["id"]),
        stage=StageKind.parse(str(document["stage"])),
        states=tuple(str(s) for s in document["states"]),
        initial=str(document["initial"]),
        terminal=frozenset(str(s) for s in document.get("terminal", [])),
        transitions=transitions,
    )
    return validate_automaton(automaton, signs)


# -- stepping ----------------------------------------------------------------


class StepKind(Enum):
    ADVANCED = "advanced"
    NEEDS_INFO = "needs_info"
    STUCK = "stuck"
    TERMINAL = "terminal"


@dataclass(frozen=True)
class StepOutcome:
    kind: StepKind
    next_state: str | None = None
    transition: Transition | None = None
    missing_signs: frozenset[str] = frozenset()


def step(automaton: Automaton, state: str, memory: MemorySnapshot) -> StepOutcome:
    """Evaluate one state's transitions against the memory snapshot.

    Resolution order: the lowest-priority true guard advances; a terminal
    state with no true guard terminates; otherwise indeterminate guards
    collect the unknown signs they mention, and with none of those the
    automaton is stuck.
    """
    if state not in automaton.states:
        raise UnknownState(f"automaton {automaton.id!r}: unknown state {state!r}")
    missing: set[str] = set()
    for transition in automaton.outgoing(state):
        verdict = transition.guard.evaluate(memory)
        if verdict is Truth.TRUE:
            return StepOutcome(StepKind.ADVANCED, next_state=transition.target, transition=transition)
        if verdict is Truth.INDETERMINATE:
            missing |= {s for s in transition.guard.signs() if not memory.value_of(s).known}
    if state in automaton.terminal:
        return StepOutcome(StepKind.TERMINAL, next_state=state)
    if missing:
        return StepOutcome(StepKind.NEEDS_INFO, missing_signs=frozenset(missing))
    return StepOutcome(StepKind.STUCK)


@dataclass(frozen=True)
class RunResult:
    trace: tuple[Transition, ...]
    outcome: StepOutcome
    final_state: str

    @property
    def states(self) -> list[str]:
        if not self.trace:
            return [self.final_state]
        return [self.trace[0].source, *(t.target for t in self.trace)]

    def trace_json(self) -> list[dict[str, Any]]:
        return [
            {"from": t.source, "to": t.target, "priority": t.priority}
            for t in self.trace
        ]


DEFAULT_STEP_BUDGET = 1000


def run_to_terminal(
    automaton: Automaton,
    memory: MemorySnapshot,
    start: str | None = None,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> RunResult:
    """Step from the initial state until Terminal, Stuck or NeedsInfo.

    Acyclic automata halt within ``len(states)`` steps; the step budget
    bounds cyclic ones and overrunning it is an error.
    """
    state = automaton.initial if start is None else start
    trace: list[Transition] = []
    for _ in range(step_budget):
        outcome = step(automaton, state, memory)
        if outcome.kind is not StepKind.ADVANCED:
            return RunResult(tuple(trace), outcome, state)
        assert outcome.transition is not None
        trace.append(outcome.transition)
        state = outcome.next_state or state
    raise StepBudgetExceeded(
        f"automaton {automaton.id!r}: no terminal state within {step_budget} steps"
    )


# -- determinism audit -------------------------------------------------------


@dataclass(frozen=True)
class AmbiguityConflict:
    state: str
    assignment: tuple[tuple[str, FindingValue], ...]
    priority: int
    targets: tuple[str, ...]


DEFAULT_SIGN_CAP = 16


def affirmative_values(automaton: Automaton, signs: Iterable[str]) -> dict[str, list[FindingValue]]:
    """Known-value domain per sign for exhaustive enumeration.

    A sign probed with ``positive`` anywhere enumerates a positive test
    result instead of plain presence; a sign probed both ways enumerates
    all three known values.
    """
    positive_probed: set[str] = set()
    presence_probed: set[str] = set()

    def walk(expr: GuardExpr) -> None:
        if isinstance(expr, SignPredicate):
            if expr.op == "positive":
                positive_probed.add(expr.sign)
            elif expr.op in ("present", "absent"):
                presence_probed.add(expr.sign)
        elif isinstance(expr, Not):
            walk(expr.item)
        elif isinstance(expr, (And, Or)):
            for item in expr.items:
                walk(item)

    for transition in automaton.transitions:
        walk(transition.guard)
    domains: dict[str, list[FindingValue]] = {}
    for sign in signs:
        if sign in positive_probed and sign in presence_probed:
            domains[sign] = [PRESENT, positive(""), ABSENT]
        elif sign in positive_probed:
            domains[sign] = [positive(""), ABSENT]
        else:
            domains[sign] = [PRESENT, ABSENT]
    return domains


def enumerate_assignments(
    automaton: Automaton,
    signs: Sequence[str],
    include_unknown: bool = False,
    cap: int = DEFAULT_SIGN_CAP,
) -> Iterable[dict[str, FindingValue]]:
    """Yield every complete finding assignment over the declared signs."""
    if len(signs) > cap:
        raise SignSpaceTooLarge(
            f"{len(signs)} signs exceed the enumeration cap of {cap}"
        )
    domains = affirmative_values(automaton, signs)
    value_lists = []
    for sign in signs:
        values = list(domains[sign])
        if include_unknown:
            values.append(FindingValue(FindingValue.UNKNOWN))
        value_lists.append(values)
    for combo in itertools.product(*value_lists):
        yield dict(zip(signs, combo))


def check_ambiguity(
    automaton: Automaton,
    signs: Iterable[str],
    include_unknown: bool = False,
    cap: int = DEFAULT_SIGN_CAP,
) -> list[AmbiguityConflict]:
    """Exhaustively search for equal-priority transitions that fire together.

    An empty result proves no finding assignment ever leaves two
    same-priority guards simultaneously true in any state.
    """
    signs = sorted(set(signs))
    conflicts: list[AmbiguityConflict] = []
    for assignment in enumerate_assignments(automaton, signs, include_unknown, cap):
        memory = MemorySnapshot(findings=assignment, stage_results={}, version=0)
        for state in automaton.states:
            by_priority: dict[int, list[Transition]] = {}
            for transition in automaton.outgoing(state):
                if transition.guard.evaluate(memory) is Truth.TRUE:
                    by_priority.setdefault(transition.priority, []).append(transition)
            for priority, fired in by_priority.items():
                if len(fired) > 1:
                    conflicts.append(
                        AmbiguityConflict(
                            state=state,
                            assignment=tuple(sorted(assignment.items())),
                            priority=priority,
                            targets=tuple(t.target for t in fired),
                        )
                    )
    return conflicts

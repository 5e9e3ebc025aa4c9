"""Domain knowledge packs: sign catalogue, clinical tables, automata, scenarios.

A pack is a directory of declarative JSON files. The diagnosis automaton
ships as an editable file; prognosis and therapy automata are generated
from the clinical table rows unless the pack ships explicit ones, so the
table and the generated automata cannot drift apart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .automaton import (
    Automaton,
    StepKind,
    Transition,
    check_ambiguity,
    enumerate_assignments,
    load_automaton,
    parse_guard,
    run_to_terminal,
    validate_automaton,
)
from .memory import FindingValue, MemorySnapshot, StageKind, parse_findings
from .ontology import OntologyError, OntologyGraph, SignCategory, load_ontology


class DomainError(ValueError):
    pass


class UnknownDiagnosis(DomainError):
    pass


class IntermediateDiagnosis(DomainError):
    """The diagnosis is a way-point that must be refined before prognosis/therapy."""

    def __init__(self, diagnosis: str):
        super().__init__(f"diagnosis {diagnosis!r} is intermediate; refine it first")
        self.diagnosis = diagnosis


@dataclass(frozen=True)
class SignDef:
    id: str
    category: SignCategory
    description: str
    test: bool = False  # test signs record positive results instead of simple presence


@dataclass(frozen=True)
class ClinicalTable:
    """Diagnosis labels plus the partial prognosis and therapy maps."""

    diagnoses: Mapping[str, str]
    prognosis_of: Mapping[str, tuple[str, str]]  # diagnosis -> (prognosis id, severity)
    therapy_of: Mapping[str, tuple[str, str]]  # diagnosis -> (therapy id, therapy text)

    def lookup_prognosis(self, diagnosis: str) -> tuple[str, str]:
        if diagnosis not in self.diagnoses:
            raise UnknownDiagnosis(f"unknown diagnosis: {diagnosis!r}")
        if diagnosis not in self.prognosis_of:
            raise IntermediateDiagnosis(diagnosis)
        return self.prognosis_of[diagnosis]

    def lookup_therapy(self, diagnosis: str) -> tuple[str, str]:
        if diagnosis not in self.diagnoses:
            raise UnknownDiagnosis(f"unknown diagnosis: {diagnosis!r}")
        if diagnosis not in self.therapy_of:
            raise IntermediateDiagnosis(diagnosis)
        return self.therapy_of[diagnosis]

    def intermediate_diagnoses(self) -> set[str]:
        return {d for d in self.diagnoses if d not in self.prognosis_of}


def load_clinical_table(raw: Mapping[str, Any]) -> ClinicalTable:
    diagnoses = {str(k): str(v) for k, v in raw["diagnoses"].items()}
    prognosis = {
        str(k): (str(v["id"]), str(v["severity"])) for k, v in raw.get("prognosis", {}).items()
    }
    therapy = {str(k): (str(v["id"]), str(v["text"])) for k, v in raw.get("therapy", {}).items()}
    for mapping, name in ((prognosis, "prognosis"), (therapy, "therapy")):
        for diagnosis in mapping:
            if diagnosis not in diagnoses:
                raise DomainError(f"{name} row for undeclared diagnosis {diagnosis!r}")
    if set(prognosis) != set(therapy):
        raise DomainError("prognosis and therapy must cover the same diagnoses")
    return ClinicalTable(diagnoses=diagnoses, prognosis_of=prognosis, therapy_of=therapy)


def table_automaton(table: ClinicalTable, stage: StageKind, automaton_id: str) -> Automaton:
    """One transition per mapped diagnosis: Start -> stage component on that result."""
    rows = table.prognosis_of if stage is StageKind.PROGNOSIS else table.therapy_of
    transitions = []
    targets = []
    for priority, diagnosis in enumerate(sorted(rows)):
        component = rows[diagnosis][0]
        if component not in targets:
            targets.append(component)
        transitions.append(
            Transition(
                source="Start",
                target=component,
                guard=parse_guard(["stage_result", StageKind.DIAGNOSIS.value, diagnosis]),
                priority=priority,
            )
        )
    automaton = Automaton(
        id=automaton_id,
        stage=stage,
        states=("Start", *targets),
        initial="Start",
        terminal=frozenset(targets),
        transitions=tuple(transitions),
    )
    return validate_automaton(automaton, ())


@dataclass(frozen=True)
class Scenario:
    """A scripted headless session: preloaded findings plus a validation policy."""

    id: str
    findings: Mapping[str, FindingValue]
    keywords: tuple[str, ...] = ()
    policy: str = "validate_first"
    note: str = ""


def load_scenario(raw: Mapping[str, Any], fallback_id: str = "") -> Scenario:
    policy = str(raw.get("policy", "validate_first"))
    if policy != "validate_first":
        raise DomainError(f"unsupported scenario policy: {policy!r}")
    return Scenario(
        id=str(raw.get("id", fallback_id)),
        findings=parse_findings(raw.get("findings", {})),
        keywords=tuple(str(k) for k in raw.get("keywords", [])),
        policy=policy,
        note=str(raw.get("note", "")),
    )


@dataclass
class DomainPack:
    id: str
    path: Path
    signs: dict[str, SignDef]
    table: ClinicalTable
    ontology: OntologyGraph
    automata: dict[StageKind, Automaton]
    aefcg: Automaton
    stage_bindings: dict[str, StageKind]  # AEFCG state -> clinical stage
    scenarios: dict[str, Scenario] = field(default_factory=dict)

    def sign_categories(self) -> dict[str, SignCategory]:
        return {sign.id: sign.category for sign in self.signs.values()}

    def stage_for_state(self, state: str) -> StageKind | None:
        return self.stage_bindings.get(state)

    def diagnosis_signs(self) -> list[str]:
        return sorted(self.signs)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DomainError(f"missing pack file: {path}") from None
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def load_pack(path: str | Path) -> DomainPack:
    path = Path(path)
    if not path.is_dir():
        raise DomainError(f"not a pack directory: {path}")

    signs: dict[str, SignDef] = {}
    for raw in _read_json(path / "signs.json")["signs"]:
        sign = SignDef(
            id=str(raw["id"]),
            category=SignCategory.parse(str(raw["category"])),
            description=str(raw["description"]),
            test=bool(raw.get("test", False)),
        )
        if sign.id in signs:
            raise DomainError(f"duplicate sign id {sign.id!r} in signs.json")
        signs[sign.id] = sign

    table = load_clinical_table(_read_json(path / "clinical_table.json"))
    ontology = load_ontology(_read_json(path / "ontology.json")).apply_extrapolation()

    automata: dict[StageKind, Automaton] = {}
    aefcg: Automaton | None = None
    stage_bindings: dict[str, StageKind] = {}
    for file in sorted((path / "automata").glob("*.json")):
        raw = _read_json(file)
        automaton = load_automaton(raw, signs.keys())
        if automaton.stage is StageKind.GENERAL:
            if aefcg is not None:
                raise DomainError("pack declares more than one general automaton")
            aefcg = automaton
            stage_bindings = {
                str(state): StageKind.parse(str(stage))
                for state, stage in raw.get("stage_bindings", {}).items()
            }
            for state in stage_bindings:
                if state not in automaton.states:
                    raise DomainError(f"stage binding references unknown AEFCG state {state!r}")
        else:
            if automaton.stage in automata:
                raise DomainError(f"pack declares two automata for stage {automaton.stage.value}")
            automata[automaton.stage] = automaton
    if aefcg is None:
        raise DomainError("pack is missing the general (AEFCG) automaton")
    if StageKind.DIAGNOSIS not in automata:
        raise DomainError("pack is missing the diagnosis automaton")
    if StageKind.PROGNOSIS not in automata:
        automata[StageKind.PROGNOSIS] = table_automaton(table, StageKind.PROGNOSIS, "prognosis")
    if StageKind.THERAPY not in automata:
        automata[StageKind.THERAPY] = table_automaton(table, StageKind.THERAPY, "therapy")
    if StageKind.FOLLOW_UP not in automata:
        raise DomainError("pack is missing the follow-up automaton")

    scenarios: dict[str, Scenario] = {}
    scenario_dir = path / "scenarios"
    if scenario_dir.is_dir():
        for file in sorted(scenario_dir.glob("*.json")):
            scenario = load_scenario(_read_json(file), fallback_id=file.stem)
            for sign in scenario.findings:
                if sign not in signs:
                    raise DomainError(f"scenario {scenario.id!r} uses undeclared sign {sign!r}")
            scenarios[scenario.id] = scenario

    return DomainPack(
        id=path.name,
        path=path,
        signs=signs,
        table=table,
        ontology=ontology,
        automata=automata,
        aefcg=aefcg,
        stage_bindings=stage_bindings,
        scenarios=scenarios,
    )


def builtin_packs_dir() -> Path:
    return Path(__file__).resolve().parent / "packs"


def resolve_pack(pack: str | Path, packs_dir: Path | None = None) -> Path:
    """Resolve a pack argument: an existing directory or a built-in pack id."""
    candidate = Path(pack)
    if candidate.is_dir():
        return candidate
    root = packs_dir or builtin_packs_dir()
    builtin = root / str(pack)
    if builtin.is_dir():
        return builtin
    raise DomainError(f"unknown domain pack: {pack!r}")


# -- pack lint ----------------------------------------------------------------


@dataclass(frozen=True)
class LintViolation:
    check: str
    message: str

    def __str__(self) -> str:
        return f"[{self.check}] {self.message}"


def lint_pack(path: str | Path) -> list[LintViolation]:
    """Validate a pack end to end; an empty report means the pack is sound."""
    violations: list[LintViolation] = []
    try:
        pack = load_pack(path)
    except (DomainError, OntologyError, ValueError, KeyError) as exc:
        return [LintViolation("load", str(exc))]

    diagnosis = pack.automata[StageKind.DIAGNOSIS]
    signs = sorted(diagnosis.signs())

    try:
        conflicts = check_ambiguity(diagnosis, signs)
        for conflict in conflicts[:20]:
            violations.append(
                LintViolation(
                    "ambiguity",
                    f"state {conflict.state!r}: transitions to {conflict.targets} fire "
                    f"together at priority {conflict.priority}",
                )
            )
        if len(conflicts) > 20:
            violations.append(
                LintViolation("ambiguity", f"... and {len(conflicts) - 20} more conflicts")
            )
    except Exception as exc:  # SignSpaceTooLarge and friends
        violations.append(LintViolation("ambiguity", str(exc)))

    # Every terminal diagnosis must be reachable under some complete assignment.
    reachable: set[str] = set()
    for assignment in enumerate_assignments(diagnosis, signs):
        memory = MemorySnapshot(findings=assignment, stage_results={}, version=0)
        run = run_to_terminal(diagnosis, memory)
        if run.outcome.kind is StepKind.TERMINAL:
            reachable.add(run.final_state)
    for state in sorted(diagnosis.terminal - reachable):
        violations.append(
            LintViolation("reachability", f"terminal diagnosis {state!r} is unreachable")
        )

    # Intermediate diagnoses must not be terminal; terminal ones must map fully.
    intermediates = pack.table.intermediate_diagnoses()
    for state in sorted(diagnosis.terminal & intermediates):
        violations.append(
            LintViolation(
                "table", f"diagnosis {state!r} is terminal but has no prognosis/therapy row"
            )
        )
    for state in sorted(diagnosis.terminal):
        if state not in pack.table.diagnoses:
            violations.append(
                LintViolation("table", f"terminal state {state!r} is not a declared diagnosis")
            )

    # The stage automata must land exactly where the table says.
    for stage, rows in (
        (StageKind.PROGNOSIS, pack.table.prognosis_of),
        (StageKind.THERAPY, pack.table.therapy_of),
    ):
        automaton = pack.automata[stage]
        for diagnosis_id, (component, _) in sorted(rows.items()):
            memory = MemorySnapshot(
                findings={}, stage_results={StageKind.DIAGNOSIS: diagnosis_id}, version=0
            )
            run = run_to_terminal(automaton, memory)
            if run.outcome.kind is not StepKind.TERMINAL or run.final_state != component:
                landed = run.final_state if run.outcome.kind is StepKind.TERMINAL else run.outcome.kind.value
                violations.append(
                    LintViolation(
                        "consistency",
                        f"{stage.value} automaton reaches {landed!r} for {diagnosis_id!r} "
                        f"but the table says {component!r}",
                    )
                )

    # Ontology sanity: sign concepts must carry a category attribute.
    for concept in pack.ontology.concepts.values():
        category = concept.attributes.get("sign_category")
        if category is not None:
            try:
                SignCategory.parse(str(category))
            except ValueError as exc:
                violations.append(LintViolation("ontology", f"concept {concept.id!r}: {exc}"))

    return violations

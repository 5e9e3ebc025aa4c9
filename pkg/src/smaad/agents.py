"""Cognitive agents: capability evaluation and per-stage specialists.

All agents share one generic shape (descriptor + capability + work) and
specialize by the knowledge they own: a stage automaton, the case base,
or the domain ontology. Agents never touch the working memory directly;
they see an immutable snapshot and communicate through emitted messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .automaton import Automaton, StepKind, run_to_terminal
from .casebase import CaseBase, CaseProfile
from .memory import MemorySnapshot, StageKind
from .messages import Performative
from .domain import DomainPack

RESOLVE_STAGE = "resolve_stage"
ANNOTATE = "annotate"


@dataclass(frozen=True)
class Task:
    """A unit of work announced by the supervisor."""

    id: str
    nature: str
    stage: StageKind
    domain: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "nature": self.nature,
            "stage": self.stage.value,
            "domain": self.domain,
        }


@dataclass(frozen=True)
class AgentDescriptor:
    """What an agent is for: its stage, the task natures it performs, its domains."""

    id: str
    natures: frozenset[str]
    domains: frozenset[str]
    stage: StageKind | None = None  # None = not tied to one clinical stage
    proficiency: float = 0.9


FOREIGN_DOMAIN_FACTOR = 1.0 / 3.0


@dataclass(frozen=True)
class CapabilityReport:
    score: float
    reason: str


def evaluate_capability(descriptor: AgentDescriptor, task: Task) -> CapabilityReport:
    """Grade a task against a descriptor: stage, then nature, then knowledge base.

    A stage or task-nature mismatch is disqualifying. An unfamiliar domain
    only degrades the score: the agent may still help if nobody better
    volunteers.
    """
    if descriptor.stage is not None and descriptor.stage is not task.stage:
        return CapabilityReport(0.0, f"outside clinical stage ({descriptor.stage.value})")
    if task.nature not in descriptor.natures:
        return CapabilityReport(0.0, f"cannot perform task nature {task.nature!r}")
    if task.domain and task.domain not in descriptor.domains:
        return CapabilityReport(
            round(descriptor.proficiency * FOREIGN_DOMAIN_FACTOR, 6),
            f"domain {task.domain!r} not in knowledge base",
        )
    return CapabilityReport(descriptor.proficiency, "stage, nature and domain match")


class WorkContext:
    """Everything an agent may consult while working one task."""

    def __init__(
        self,
        snapshot: MemorySnapshot,
        pack: DomainPack,
        emit: Callable[[Performative, Mapping[str, Any]], None],
        keywords: tuple[str, ...] = (),
        casebase: CaseBase | None = None,
    ):
        self.snapshot = snapshot
        self.pack = pack
        self.emit = emit
        self.keywords = keywords
        self.casebase = casebase


class Agent:
    """Generic cognitive agent; subclasses specialize ``work``."""

    def __init__(self, descriptor: AgentDescriptor):
        self.descriptor = descriptor

    @property
    def id(self) -> str:
        return self.descriptor.id

    def capability(self, task: Task) -> CapabilityReport:
        return evaluate_capability(self.descriptor, task)

    def work(self, task: Task, ctx: WorkContext) -> None:
        raise NotImplementedError


class StageAutomatonAgent(Agent):
    """Resolves one clinical stage by walking its finite-state automaton.

    Terminal -> propose the final state as the stage solution;
    NeedsInfo -> ask the user for the undecided signs;
    Stuck -> report it, leaving the supervisor to decide what next.
    """

    def __init__(self, agent_id: str, stage: StageKind, automaton: Automaton, domain: str):
        super().__init__(
            AgentDescriptor(
                id=agent_id,
                natures=frozenset({RESOLVE_STAGE}),
                domains=frozenset({domain}),
                stage=stage,
            )
        )
        self.automaton = automaton

    def work(self, task: Task, ctx: WorkContext) -> None:
        run = run_to_terminal(self.automaton, ctx.snapshot)
        if run.outcome.kind is StepKind.TERMINAL:
            content: dict[str, Any] = {
                "stage": task.stage.value,
                "value": run.final_state,
                "trace": run.trace_json(),
                "basis": "automaton",
            }
            label = self._label_for(ctx.pack, task.stage, run.final_state)
            if label:
                content["label"] = label
            ctx.emit(Performative.PROPOSE_SOLUTION, content)
        elif run.outcome.kind is StepKind.NEEDS_INFO:
            ctx.emit(
                Performative.QUERY_USER,
                {"stage": task.stage.value, "signs": sorted(run.outcome.missing_signs)},
            )
        else:
            ctx.emit(
                Performative.INFORM,
                {"event": "automaton_stuck", "stage": task.stage.value, "state": run.final_state},
            )

    @staticmethod
    def _label_for(pack: DomainPack, stage: StageKind, value: str) -> str:
        table = pack.table
        if stage is StageKind.DIAGNOSIS:
            return table.diagnoses.get(value, "")
        rows = table.prognosis_of if stage is StageKind.PROGNOSIS else table.therapy_of
        if stage in (StageKind.PROGNOSIS, StageKind.THERAPY):
            for component, text in rows.values():
                if component == value:
                    return text
        return ""


class CaseBasedAgent(Agent):
    """Recalls previously solved cases that resemble the current findings.

    Always reports the nearest neighbours; additionally proposes the top
    case's diagnosis when it clears the suggestion threshold.
    """

    def __init__(
        self,
        agent_id: str,
        casebase: CaseBase,
        domain: str,
        suggestion_threshold: float = 0.5,
        k: int = 3,
    ):
        super().__init__(
            AgentDescriptor(
                id=agent_id,
                natures=frozenset({RESOLVE_STAGE}),
                domains=frozenset({domain}),
                stage=StageKind.DIAGNOSIS,
                proficiency=0.7,
            )
        )
        self.casebase = casebase
        self.suggestion_threshold = suggestion_threshold
        self.k = k

    def work(self, task: Task, ctx: WorkContext) -> None:
        query = CaseProfile(findings=dict(ctx.snapshot.findings), keywords=frozenset(ctx.keywords))
        ranked = self.casebase.retrieve(query, k=self.k)
        ctx.emit(
            Performative.INFORM,
            {
                "event": "similar_cases",
                "cases": [{"id": case.id, "score": round(score, 6)} for case, score in ranked],
            },
        )
        if not ranked:
            return
        best, score = ranked[0]
        if score < self.suggestion_threshold:
            return
        diagnosis = best.components.get(StageKind.DIAGNOSIS)
        if diagnosis is None:
            return
        ctx.emit(
            Performative.PROPOSE_SOLUTION,
            {
                "stage": StageKind.DIAGNOSIS.value,
                "value": diagnosis,
                "trace": best.trace.get(StageKind.DIAGNOSIS, []),
                "basis": {"case": best.id, "score": round(score, 6)},
                "label": ctx.pack.table.diagnoses.get(diagnosis, ""),
            },
        )


class EpidemiologyAgent(Agent):
    """Annotates the prognosis stage with incidence/prevalence notes.

    Purely informative: it reads the validated diagnosis, finds the
    ontology concept carrying that diagnosis attribute and reports its
    epidemiological attributes. It never proposes a solution.
    """

    def __init__(self, agent_id: str, domain: str):
        super().__init__(
            AgentDescriptor(
                id=agent_id,
                natures=frozenset({RESOLVE_STAGE}),
                domains=frozenset({domain}),
                stage=StageKind.PROGNOSIS,
                proficiency=0.6,
            )
        )

    def work(self, task: Task, ctx: WorkContext) -> None:
        diagnosis = ctx.snapshot.stage_result(StageKind.DIAGNOSIS)
        if diagnosis is None:
            return
        for concept in ctx.pack.ontology.concepts.values():
            if concept.attributes.get("diagnosis") != diagnosis:
                continue
            notes = {
                key: concept.attributes[key]
                for key in ("incidence", "prevalence")
                if key in concept.attributes
            }
            if notes:
                ctx.emit(
                    Performative.INFORM,
                    {"event": "epidemiology", "diagnosis": diagnosis, "notes": notes},
                )
            return


class OntologyAgent(Agent):
    """Serves domain terminology; declines stage-resolution work.

    One instance per domain. Other agents and the service query it
    directly — term definitions are request/response, not deliberation.
    """

    def __init__(self, agent_id: str, pack: DomainPack):
        super().__init__(
            AgentDescriptor(
                id=agent_id,
                natures=frozenset({ANNOTATE}),
                domains=frozenset({pack.id}),
            )
        )
        self.pack = pack

    def define(self, term: str, stage: StageKind | None = None) -> dict[str, Any] | None:
        """Concept card for an id or label; None when the term is unknown."""
        graph = self.pack.ontology
        concept_id = term if term in graph.concepts else graph.lookup_term(term)
        if concept_id is None:
            return None
        concept = graph.concepts[concept_id]
        if stage is not None and not concept.served_for(stage):
            return None
        return {
            "id": concept.id,
            "label": concept.label,
            "kind": concept.kind,
            "stage_scope": sorted(s.value for s in concept.stage_scope),
            "attributes": dict(concept.attributes),
            "ancestors": graph.isa_ancestors(concept.id),
            "relations": [
                {
                    "source": r.source,
                    "kind": r.kind.value,
                    "target": r.target,
                    "provenance": r.provenance,
                }
                for r in graph.relations_of(concept.id)
            ],
        }

    def work(self, task: Task, ctx: WorkContext) -> None:  # pragma: no cover - never accepted
        raise NotImplementedError("terminology is served by direct calls")


def default_agents(
    pack: DomainPack, casebase: CaseBase | None, suggestion_threshold: float = 0.5
) -> list[Agent]:
    """The standard crew for a pack: one specialist per stage plus the
    case-based recaller, the epidemiologist and the terminologist."""
    agents: list[Agent] = [
        StageAutomatonAgent("diagnostician", StageKind.DIAGNOSIS,
                            pack.automata[StageKind.DIAGNOSIS], pack.id),
        StageAutomatonAgent("prognostician", StageKind.PROGNOSIS,
                            pack.automata[StageKind.PROGNOSIS], pack.id),
        StageAutomatonAgent("therapist", StageKind.THERAPY,
                            pack.automata[StageKind.THERAPY], pack.id),
        StageAutomatonAgent("follow_up_planner", StageKind.FOLLOW_UP,
                            pack.automata[StageKind.FOLLOW_UP], pack.id),
    ]
    if casebase is not None:
        agents.append(
            CaseBasedAgent("case_recaller", casebase, pack.id, suggestion_threshold)
        )
    agents.append(EpidemiologyAgent("epidemiologist", pack.id))
    agents.append(OntologyAgent("terminologist", pack))
    return agents

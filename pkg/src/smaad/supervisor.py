"""Session supervisor: one conversation, one working memory, one arbiter.

The supervisor owns the working memory and the general staged automaton.
For each clinical stage it announces a task, records who accepts, lets the
accepted agents work against an immutable memory snapshot, and arbitrates
their proposals. Every step leaves a performative message in the log, and
``session_replay`` folds a log back into the exact session state.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, Mapping

from .agents import Agent, RESOLVE_STAGE, Task, WorkContext, default_agents
from .automaton import StepKind, step
from .casebase import Case, CaseBase
from .domain import DomainPack, Scenario
from .memory import FindingValue, StageKind, WorkingMemory
from .messages import BROADCAST, Message, MessageLog, Performative

SUPERVISOR = "supervisor"
USER = "user"


class SupervisorError(RuntimeError):
    pass


class SessionClosed(SupervisorError):
    pass


class UnknownProposal(SupervisorError):
    pass


class SessionStatus(Enum):
    ACTIVE = "active"
    AWAITING_USER = "awaiting_user"
    COMPLETED = "completed"
    STUCK = "stuck"
    FAILED = "failed"


class CooperativeScheduler:
    """Runs agent jobs one after another, in registration order."""

    def run(self, jobs: list[Callable[[], None]]) -> None:
        for job in jobs:
            job()


class ThreadedScheduler:
    """Runs agent jobs in parallel threads; the supervisor lock serializes
    their emissions, so the log stays a total order."""

    def run(self, jobs: list[Callable[[], None]]) -> None:
        threads = [threading.Thread(target=job) for job in jobs]
        for t in threads:
            t.start()
        for t in threads:
            t.join()


@dataclass
class SupervisorConfig:
    capability_threshold: float = 0.5
    suggestion_threshold: float = 0.5
    deadline_seconds: float = 300.0
    auto_validate: bool = False  # validate the first proposal without waiting for the user
    retain_cases: bool = True
    monotonic_clock: Callable[[], float] = time.monotonic
    wall_clock: Callable[[], str] | None = None  # None -> messages carry no timestamps
    case_id_factory: Callable[[], str] | None = None
    scheduler: Any = field(default_factory=CooperativeScheduler)


@dataclass
class Proposal:
    seq: int  # seq of the propose_solution message
    agent: str
    stage: StageKind
    value: str
    label: str
    trace: list[dict[str, Any]]
    basis: Any
    status: str = "open"  # open | validated | rejected | cancelled

    def to_json(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "agent": self.agent,
            "stage": self.stage.value,
            "value": self.value,
            "label": self.label,
            "basis": self.basis,
            "status": self.status,
        }


@dataclass
class _Worker:
    agent: Agent
    task: Task
    accepted_at: float
    proposed: bool = False
    closed: bool = False  # cancelled, abandoned or stage resolved


@dataclass
class SessionState:
    """Projection of a session; both the live supervisor and the log fold
    produce this shape, and the two must agree."""

    session: str
    pack: str
    status: str
    keywords: tuple[str, ...]
    findings: dict[str, Any]  # sign -> JSON finding form
    stage_results: dict[str, str]
    labels: dict[str, str]
    pending_questions: list[str]
    proposals: list[dict[str, Any]]
    aefcg_state: str
    case: str | None
    last_seq: int

    def to_json(self) -> dict[str, Any]:
        return {
            "session": self.session,
            "pack": self.pack,
            "status": self.status,
            "keywords": list(self.keywords),
            "findings": dict(self.findings),
            "stage_results": dict(self.stage_results),
            "labels": dict(self.labels),
            "pending_questions": list(self.pending_questions),
            "proposals": [dict(p) for p in self.proposals],
            "aefcg_state": self.aefcg_state,
            "case": self.case,
            "last_seq": self.last_seq,
        }


class Supervisor:
    """Drives one session over a domain pack with a crew of agents."""

    def __init__(
        self,
        pack: DomainPack,
        agents: Iterable[Agent] | None = None,
        casebase: CaseBase | None = None,
        config: SupervisorConfig | None = None,
        log: MessageLog | None = None,
        session_id: str | None = None,
    ):
        self.pack = pack
        self.casebase = casebase
        self.config = config or SupervisorConfig()
        if agents is None:
            agents = default_agents(pack, casebase, self.config.suggestion_threshold)
        self.agents = list(agents)
        self.session_id = session_id or f"s-{uuid.uuid4().hex[:8]}"
        # not `log or ...`: an empty MessageLog is falsy but must be kept
        self.log = log if log is not None else MessageLog(clock=self.config.wall_clock)
        if log is not None and log.clock is None and self.config.wall_clock is not None:
            log.clock = self.config.wall_clock
        self.memory = WorkingMemory(pack.signs.keys())
        self.keywords: tuple[str, ...] = ()
        self.aefcg_state = pack.aefcg.initial
        self.case_id: str | None = None
        self._closed_status: SessionStatus | None = None  # completed/stuck/failed, sticky
        self._stage_task: Task | None = None
        self._workers: list[_Worker] = []
        self._proposals: list[Proposal] = []
        self._question_stage: dict[str, str] = {}  # queued sign -> stage that asked
        self._labels: dict[StageKind, str] = {}
        self._traces: dict[StageKind, list[dict[str, Any]]] = {}
        self._emitted: set[tuple[str, str, str]] = set()  # (agent, performative, content key)
        self._rejected: set[tuple[str, str, str]] = set()  # (agent, stage, value)
        self._task_counter = 0
        # _lock serializes user actions and orchestration; _emit_lock serializes
        # concurrent worker emissions in threaded mode. The orchestrator never
        # holds _emit_lock while waiting on workers, so workers cannot deadlock.
        self._lock = threading.RLock()
        self._emit_lock = threading.RLock()

    # -- public api ----------------------------------------------------------

    @property
    def status(self) -> SessionStatus:
        if self._closed_status is not None:
            return self._closed_status
        if self.memory.pending_questions or self.open_proposals():
            return SessionStatus.AWAITING_USER
        return SessionStatus.ACTIVE

    def open_proposals(self) -> list[Proposal]:
        return [p for p in self._proposals if p.status == "open"]

    @property
    def pending_questions(self) -> list[str]:
        return list(self.memory.pending_questions)

    def start(
        self,
        findings: Mapping[str, FindingValue] | None = None,
        keywords: Iterable[str] = (),
    ) -> "Supervisor":
        """Open the conversation, record volunteered findings, start deliberating."""
        if len(self.log) > 0:
            raise SupervisorError("session already started")
        self.keywords = tuple(keywords)
        self._append(
            Performative.ANNOUNCE,
            USER,
            SUPERVISOR,
            {
                "event": "session_start",
                "session": self.session_id,
                "pack": self.pack.id,
                "keywords": list(self.keywords),
            },
        )
        if findings:
            encoded = {}
            for sign, value in findings.items():
                self.memory.record_finding(sign, value)
                encoded[sign] = value.to_json()
            self._append(
                Performative.INFORM, USER, SUPERVISOR, {"event": "findings", "findings": encoded}
            )
        self._advance()
        return self

    def answer(self, sign: str, value: FindingValue) -> None:
        """Record a user answer (or a volunteered correction) and resume."""
        with self._lock:
            self._require_open()
            self.memory.record_finding(sign, value)  # validates the sign first
            self._question_stage.pop(sign, None)
            self._append(
                Performative.USER_RESPONSE,
                USER,
                SUPERVISOR,
                {"sign": sign, "value": value.to_json()},
            )
            self._advance()

    def validate(self, proposal_seq: int) -> None:
        with self._lock:
            self._require_open()
            proposal = self._find_open(proposal_seq)
            self._append(
                Performative.VALIDATE, USER, SUPERVISOR, {"proposal_seq": proposal_seq}
            )
            self._apply_validation(proposal)
            self._advance()

    def reject(self, proposal_seq: int, reason: str = "") -> None:
        with self._lock:
            self._require_open()
            proposal = self._find_open(proposal_seq)
            content: dict[str, Any] = {"proposal_seq": proposal_seq}
            if reason:
                content["reason"] = reason
            self._append(Performative.REJECT, USER, SUPERVISOR, content)
            proposal.status = "rejected"
            self._rejected.add((proposal.agent, proposal.stage.value, proposal.value))
            self._advance()

    def check_abandon(self, now: float | None = None) -> list[str]:
        """Abandon workers that outran the task deadline; returns their agent ids."""
        with self._lock:
            if self._stage_task is None or self._closed_status is not None:
                return []
            now = self.config.monotonic_clock() if now is None else now
            abandoned: list[str] = []
            for worker in self._workers:
                if worker.closed or self._has_open_proposal(worker.agent.id):
                    continue
                if now - worker.accepted_at > self.config.deadline_seconds:
                    worker.closed = True
                    abandoned.append(worker.agent.id)
                    self._append(
                        Performative.ABANDON,
                        worker.agent.id,
                        SUPERVISOR,
                        {"task": worker.task.id, "reason": "deadline"},
                    )
            if abandoned and not self.open_proposals() and all(w.closed for w in self._workers):
                self._mark_stuck(self._stage_task.stage)
            return abandoned

    def state(self) -> SessionState:
        """Live projection; must match ``session_replay`` over this session's log."""
        with self._lock:
            return SessionState(
                session=self.session_id,
                pack=self.pack.id,
                status=self.status.value,
                keywords=self.keywords,
                findings={s: v.to_json() for s, v in sorted(self.memory.findings.items())},
                stage_results={
                    stage.value: result for stage, result in self.memory.stage_results.items()
                },
                labels={stage.value: label for stage, label in self._labels.items()},
                pending_questions=list(self.memory.pending_questions),
                proposals=[p.to_json() for p in self._proposals],
                aefcg_state=self.aefcg_state,
                case=self.case_id,
                last_seq=self.log.last_seq,
            )

    def traces(self) -> dict[StageKind, list[dict[str, Any]]]:
        return {stage: list(tr) for stage, tr in self._traces.items()}

    # -- internals -------------------------------------------------------------

    def _require_open(self) -> None:
        if self._closed_status is not None:
            raise SessionClosed(f"session is {self._closed_status.value}")

    def _find_open(self, proposal_seq: int) -> Proposal:
        for proposal in self._proposals:
            if proposal.seq == proposal_seq:
                if proposal.status != "open":
                    raise UnknownProposal(f"proposal {proposal_seq} is {proposal.status}")
                return proposal
        raise UnknownProposal(f"no proposal with seq {proposal_seq}")

    def _append(
        self, performative: Performative, sender: str, receiver: str, content: Mapping[str, Any]
    ) -> Message:
        return self.log.append(self.session_id, performative, sender, receiver, content)

    def _has_open_proposal(self, agent_id: str) -> bool:
        return any(p.agent == agent_id and p.status == "open" for p in self._proposals)

    def _advance(self) -> None:
        while self._closed_status is None:
            state = self.aefcg_state
            if state in self.pack.aefcg.terminal:
                self._complete()
                return
            stage = self.pack.stage_for_state(state)
            if stage is not None and self.memory.stage_result(stage) is None:
                if self._stage_task is None or self._stage_task.stage is not stage:
                    self._announce_stage(stage)
                if not self._collect(stage):
                    if self._closed_status is None and not (
                        self.memory.pending_questions or self.open_proposals()
                    ):
                        self._mark_stuck(stage)
                    return
                continue
            outcome = step(self.pack.aefcg, state, self.memory.snapshot())
            if outcome.kind is not StepKind.ADVANCED:
                self._mark_stuck(stage)
                return
            self._stage_task = None
            self._workers = []
            content = {"event": "stage_advanced", "from": state, "to": outcome.next_state}
            if stage is not None:
                content["stage"] = stage.value
                content["result"] = self.memory.stage_result(stage)
            self._append(Performative.INFORM, SUPERVISOR, BROADCAST, content)
            self.aefcg_state = outcome.next_state or state

    def _announce_stage(self, stage: StageKind) -> None:
        self._task_counter += 1
        task = Task(
            id=f"{self.session_id}-t{self._task_counter}",
            nature=RESOLVE_STAGE,
            stage=stage,
            domain=self.pack.id,
        )
        self._stage_task = task
        self._workers = []
        self._append(
            Performative.ANNOUNCE, SUPERVISOR, BROADCAST, {"event": "task", "task": task.to_json()}
        )
        accepted_at = self.config.monotonic_clock()
        for agent in self.agents:
            report = agent.capability(task)
            content = {"task": task.id, "score": report.score, "reason": report.reason}
            if report.score >= self.config.capability_threshold:
                self._append(Performative.ACCEPT_TASK, agent.id, SUPERVISOR, content)
                self._workers.append(_Worker(agent=agent, task=task, accepted_at=accepted_at))
            else:
                self._append(Performative.DECLINE_TASK, agent.id, SUPERVISOR, content)

    def _collect(self, stage: StageKind) -> bool:
        """Let active workers deliberate once; True when the stage resolved."""
        task = self._stage_task
        assert task is not None
        snapshot = self.memory.snapshot()
        errors: list[str] = []

        def job_for(worker: _Worker) -> Callable[[], None]:
            ctx = WorkContext(
                snapshot=snapshot,
                pack=self.pack,
                emit=lambda perf, content: self._on_emission(worker, perf, dict(content)),
                keywords=self.keywords,
                casebase=self.casebase,
            )

            def job() -> None:
                try:
                    worker.agent.work(worker.task, ctx)
                except Exception as exc:  # noqa: BLE001 - agent failure closes the session
                    with self._emit_lock:
                        errors.append(worker.agent.id)
                        self._append(
                            Performative.INFORM,
                            SUPERVISOR,
                            BROADCAST,
                            {
                                "event": "agent_error",
                                "agent": worker.agent.id,
                                "error": str(exc),
                            },
                        )

            return job

        jobs = [job_for(w) for w in self._workers if not w.closed]
        if jobs:
            self.config.scheduler.run(jobs)
        if errors:
            self._closed_status = SessionStatus.FAILED
            return False
        if self.config.auto_validate:
            stage_open = sorted(
                (p for p in self._proposals if p.stage is stage and p.status == "open"),
                key=lambda p: p.seq,
            )
            if stage_open:
                winner = stage_open[0]
                self._append(
                    Performative.VALIDATE,
                    USER,
                    SUPERVISOR,
                    {"proposal_seq": winner.seq, "policy": "validate_first"},
                )
                self._apply_validation(winner)
        return self.memory.stage_result(stage) is not None

    def _on_emission(
        self, worker: _Worker, performative: Performative, content: dict[str, Any]
    ) -> None:
        """Log an agent emission, deduplicating repeats across re-deliberations."""
        with self._emit_lock:
            agent_id = worker.agent.id
            if performative is Performative.QUERY_USER:
                signs = [s for s in content.get("signs", [])]
                added = self.memory.add_questions(signs)
                if not added:
                    return
                stage_name = content.get("stage", worker.task.stage.value)
                for sign in added:
                    self._question_stage[sign] = stage_name
                self._append(
                    Performative.QUERY_USER,
                    agent_id,
                    USER,
                    {
                        "stage": stage_name,
                        "signs": added,
                        "prompts": {
                            s: self.pack.signs[s].description for s in added if s in self.pack.signs
                        },
                        "tests": {
                            s: self.pack.signs[s].test for s in added if s in self.pack.signs
                        },
                    },
                )
                return
            if performative is Performative.PROPOSE_SOLUTION:
                stage = StageKind.parse(str(content.get("stage", worker.task.stage.value)))
                value = str(content.get("value", ""))
                if (agent_id, stage.value, value) in self._rejected:
                    return
                existing = [
                    p
                    for p in self._proposals
                    if p.agent == agent_id and p.stage is stage and p.status == "open"
                ]
                if any(p.value == value for p in existing):
                    return
                for stale in existing:
                    stale.status = "cancelled"
                    self._append(
                        Performative.CANCEL,
                        SUPERVISOR,
                        agent_id,
                        {"proposal_seq": stale.seq, "reason": "superseded"},
                    )
                message = self._append(Performative.PROPOSE_SOLUTION, agent_id, SUPERVISOR, content)
                self._proposals.append(
                    Proposal(
                        seq=message.seq,
                        agent=agent_id,
                        stage=stage,
                        value=value,
                        label=str(content.get("label", "")),
                        trace=list(content.get("trace", [])),
                        basis=content.get("basis"),
                        status="open",
                    )
                )
                worker.proposed = True
                return
            # plain informs: drop byte-identical repeats from re-deliberation
            key = (agent_id, performative.value, repr(sorted(content.items(), key=repr)))
            if key in self._emitted:
                return
            self._emitted.add(key)
            self._append(performative, agent_id, SUPERVISOR, content)

    def _apply_validation(self, proposal: Proposal) -> None:
        proposal.status = "validated"
        stage = proposal.stage
        self.memory.set_stage_result(stage, proposal.value)
        self._labels[stage] = proposal.label
        self._traces[stage] = list(proposal.trace)
        moot = [s for s, st in self._question_stage.items() if st == stage.value]
        if moot:
            self.memory.clear_questions(moot)
            for sign in moot:
                self._question_stage.pop(sign, None)
        for other in self._proposals:
            if other.stage is stage and other.status == "open":
                other.status = "cancelled"
                self._append(
                    Performative.CANCEL,
                    SUPERVISOR,
                    other.agent,
                    {"proposal_seq": other.seq, "reason": "alternative validated"},
                )
        for worker in self._workers:
            if not worker.closed and worker.agent.id != proposal.agent:
                if not self._has_open_proposal(worker.agent.id):
                    self._append(
                        Performative.CANCEL,
                        SUPERVISOR,
                        worker.agent.id,
                        {"task": worker.task.id, "reason": "stage resolved"},
                    )
            worker.closed = True

    def _mark_stuck(self, stage: StageKind | None) -> None:
        content: dict[str, Any] = {"event": "session_stuck", "aefcg_state": self.aefcg_state}
        if stage is not None:
            content["stage"] = stage.value
        self._append(Performative.INFORM, SUPERVISOR, BROADCAST, content)
        self._closed_status = SessionStatus.STUCK

    def _complete(self) -> None:
        components = {
            stage.value: result for stage, result in self.memory.stage_results.items()
        }
        if self.casebase is not None and self.config.retain_cases:
            self.case_id = self._retain_case()
        content: dict[str, Any] = {
            "event": "session_completed",
            "components": components,
            "labels": {stage.value: label for stage, label in self._labels.items()},
            "case": self.case_id,
        }
        self._append(Performative.INFORM, SUPERVISOR, BROADCAST, content)
        self._closed_status = SessionStatus.COMPLETED

    def _default_case_id(self) -> str:
        count = len(self.casebase.cases) if self.casebase is not None else 0
        return f"case-{count + 1:04d}-{uuid.uuid4().hex[:8]}"

    def _retain_case(self) -> str:
        assert self.casebase is not None
        factory = self.config.case_id_factory or self._default_case_id
        diagnosis = self.memory.stage_result(StageKind.DIAGNOSIS) or ""
        keywords = list(self.keywords)
        if not keywords:
            label = self._labels.get(StageKind.DIAGNOSIS, "") or diagnosis
            keywords = [tok.strip("(),.").lower() for tok in label.split() if len(tok) > 2]
        case = Case(
            id=factory(),
            pb_keywords=frozenset(keywords),
            environment={
                "findings": {s: v.to_json() for s, v in sorted(self.memory.findings.items())},
                "keywords": list(self.keywords),
                "session": self.session_id,
            },
            result="completed",
            components=dict(self.memory.stage_results),
            trace=self.traces(),
            retained_at=self.config.wall_clock() if self.config.wall_clock else "",
        )
        self.casebase.retain(case)
        return case.id


# -- log replay ---------------------------------------------------------------


def session_replay(log: MessageLog | Iterable[Message]) -> SessionState:
    """Fold a message log into the session state it describes.

    Pure function of the log: no pack, no agents, no clocks. The supervisor
    emits enough Inform events that this projection reconstructs findings,
    stage results, proposals, questions and status exactly.
    """
    messages = list(log)
    session = ""
    pack = ""
    keywords: tuple[str, ...] = ()
    findings: dict[str, Any] = {}
    stage_results: dict[str, str] = {}
    labels: dict[str, str] = {}
    pending: list[str] = []
    question_stage: dict[str, str] = {}
    proposals: dict[int, dict[str, Any]] = {}
    aefcg_state = ""
    case: str | None = None
    closed_status: str | None = None
    last_seq = 0

    for message in messages:
        last_seq = message.seq
        content = message.content
        kind = message.performative
        if kind is Performative.ANNOUNCE and content.get("event") == "session_start":
            session = str(content.get("session", message.conversation))
            pack = str(content.get("pack", ""))
            keywords = tuple(content.get("keywords", []))
        elif kind is Performative.INFORM:
            event = content.get("event")
            if event == "findings":
                findings.update(content.get("findings", {}))
            elif event == "stage_advanced":
                aefcg_state = str(content.get("to", aefcg_state))
            elif event == "session_completed":
                case = content.get("case")
                closed_status = SessionStatus.COMPLETED.value
            elif event == "session_stuck":
                closed_status = SessionStatus.STUCK.value
            elif event == "agent_error":
                closed_status = SessionStatus.FAILED.value
        elif kind is Performative.QUERY_USER:
            for sign in content.get("signs", []):
                if sign not in pending:
                    pending.append(sign)
                    question_stage[sign] = str(content.get("stage", ""))
        elif kind is Performative.USER_RESPONSE:
            sign = str(content.get("sign"))
            findings[sign] = content.get("value")
            if sign in pending:
                pending.remove(sign)
                question_stage.pop(sign, None)
        elif kind is Performative.PROPOSE_SOLUTION:
            proposals[message.seq] = {
                "seq": message.seq,
                "agent": message.sender,
                "stage": str(content.get("stage", "")),
                "value": str(content.get("value", "")),
                "label": str(content.get("label", "")),
                "basis": content.get("basis"),
                "status": "open",
            }
        elif kind is Performative.VALIDATE:
            seq = int(content.get("proposal_seq", -1))
            proposal = proposals.get(seq)
            if proposal is not None:
                proposal["status"] = "validated"
                stage = proposal["stage"]
                stage_results[stage] = proposal["value"]
                labels[stage] = proposal["label"]
                moot = [s for s, st in question_stage.items() if st == stage]
                for sign in moot:
                    pending.remove(sign)
                    question_stage.pop(sign, None)
        elif kind is Performative.REJECT:
            seq = int(content.get("proposal_seq", -1))
            if seq in proposals:
                proposals[seq]["status"] = "rejected"
        elif kind is Performative.CANCEL:
            seq = content.get("proposal_seq")
            if seq is not None and int(seq) in proposals:
                proposal = proposals[int(seq)]
                if proposal["status"] == "open":
                    proposal["status"] = "cancelled"

    if closed_status is not None:
        status = closed_status
    elif pending or any(p["status"] == "open" for p in proposals.values()):
        status = SessionStatus.AWAITING_USER.value
    else:
        status = SessionStatus.ACTIVE.value

    return SessionState(
        session=session,
        pack=pack,
        status=status,
        keywords=keywords,
        findings=dict(sorted(findings.items())),
        stage_results=stage_results,
        labels=labels,
        pending_questions=pending,
        proposals=[proposals[seq] for seq in sorted(proposals)],
        aefcg_state=aefcg_state,
        case=case,
        last_seq=last_seq,
    )


# -- scenario runner ------------------------------------------------------------


def run_scenario(
    pack: DomainPack,
    scenario: Scenario,
    casebase: CaseBase | None = None,
    config: SupervisorConfig | None = None,
    agents: Iterable[Agent] | None = None,
    log: MessageLog | None = None,
    session_id: str | None = None,
) -> Supervisor:
    """Run a scripted session headlessly: findings preloaded, first proposal
    of every stage validated automatically."""
    config = replace(config) if config is not None else SupervisorConfig()
    config.auto_validate = True
    supervisor = Supervisor(
        pack,
        agents=agents,
        casebase=casebase,
        config=config,
        log=log,
        session_id=session_id,
    )
    supervisor.start(findings=dict(scenario.findings), keywords=scenario.keywords)
    return supervisor

"""HTTP session service: JSON endpoints plus a server-sent-event message stream.

One service hosts many sessions over the installed domain packs. Every
session endpoint returns the same state projection the log fold produces,
and the event stream replays the message log (``id:`` = seq) so clients
can resume from the last sequence number they saw.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Iterator

from fastapi import Body, FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .agents import OntologyAgent, default_agents
from .casebase import CaseBase, CaseBaseError, CaseProfile
from .domain import DomainError, DomainPack, builtin_packs_dir, load_pack
from .memory import FindingValue, StageKind, UnknownSign, parse_findings
from .messages import LogCorrupt, MessageLog
from .supervisor import (
    SessionClosed,
    SessionStatus,
    Supervisor,
    SupervisorConfig,
    UnknownProposal,
    session_replay,
)

LIVE_STATUSES = (SessionStatus.ACTIVE, SessionStatus.AWAITING_USER)


def _error(status: int, code: str, message: str, detail: Any = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "detail": detail},
    )


class ServiceState:
    """Mutable bits behind the app: packs, case bases, live sessions."""

    def __init__(
        self,
        packs_dir: Path | None = None,
        data_dir: Path | None = None,
        config: SupervisorConfig | None = None,
    ):
        self.packs_dir = Path(packs_dir) if packs_dir else builtin_packs_dir()
        self.data_dir = Path(data_dir) if data_dir else None
        self.config = config or SupervisorConfig()
        self.packs: dict[str, DomainPack] = {}
        self.casebases: dict[str, CaseBase] = {}
        self.sessions: dict[str, Supervisor] = {}
        self.counter = 0

    def pack(self, pack_id: str) -> DomainPack:
        if pack_id not in self.packs:
            path = self.packs_dir / pack_id
            if not path.is_dir():
                raise DomainError(f"unknown domain pack: {pack_id!r}")
            self.packs[pack_id] = load_pack(path)
        return self.packs[pack_id]

    def casebase(self, pack: DomainPack) -> CaseBase | None:
        if self.data_dir is None:
            return None
        if pack.id not in self.casebases:
            self.casebases[pack.id] = CaseBase(
                self.data_dir / pack.id / "cases", categories=pack.sign_categories()
            )
        return self.casebases[pack.id]

    def log_path(self, session_id: str) -> Path | None:
        if self.data_dir is None:
            return None
        logs = self.data_dir / "logs"
        logs.mkdir(parents=True, exist_ok=True)
        return logs / f"{session_id}.jsonl"

    def next_session_id(self) -> str:
        self.counter += 1
        return f"s-{self.counter:06d}"


def create_app(
    packs_dir: str | Path | None = None,
    data_dir: str | Path | None = None,
    config: SupervisorConfig | None = None,
) -> FastAPI:
    app = FastAPI(title="smaad", version="0.1.0")
    state = ServiceState(
        packs_dir=Path(packs_dir) if packs_dir else None,
        data_dir=Path(data_dir) if data_dir else None,
        config=config,
    )
    app.state.service = state

    @app.exception_handler(DomainError)
    async def _domain_error(_: Request, exc: DomainError) -> JSONResponse:
        return _error(404, "unknown_pack", str(exc))

    @app.exception_handler(UnknownSign)
    async def _unknown_sign(_: Request, exc: UnknownSign) -> JSONResponse:
        return _error(422, "unknown_sign", f"unknown sign: {exc.sign!r}")

    @app.exception_handler(SessionClosed)
    async def _closed(_: Request, exc: SessionClosed) -> JSONResponse:
        return _error(409, "session_closed", str(exc))

    @app.exception_handler(UnknownProposal)
    async def _unknown_proposal(_: Request, exc: UnknownProposal) -> JSONResponse:
        return _error(404, "unknown_proposal", str(exc))

    @app.exception_handler(CaseBaseError)
    async def _casebase_error(_: Request, exc: CaseBaseError) -> JSONResponse:
        return _error(422, "casebase_error", str(exc))

    def _session(session_id: str) -> Supervisor | None:
        return state.sessions.get(session_id)

    def _state_response(supervisor: Supervisor, status_code: int = 200) -> JSONResponse:
        supervisor.check_abandon()
        return JSONResponse(status_code=status_code, content=supervisor.state().to_json())

    @app.get("/packs")
    async def list_packs() -> dict[str, Any]:
        found = sorted(p.name for p in state.packs_dir.iterdir() if (p / "signs.json").exists())
        return {"packs": found}

    @app.post("/sessions", status_code=201)
    async def create_session(payload: dict = Body(default_factory=dict)) -> JSONResponse:
        pack = state.pack(str(payload.get("pack", "")))
        findings: dict[str, FindingValue] = {}
        keywords: list[str] = [str(k) for k in payload.get("keywords", [])]
        auto_validate = bool(payload.get("auto_validate", False))
        scenario_id = payload.get("scenario")
        if scenario_id is not None:
            scenario = pack.scenarios.get(str(scenario_id))
            if scenario is None:
                return _error(404, "unknown_scenario", f"unknown scenario: {scenario_id!r}")
            findings.update(scenario.findings)
            keywords = keywords or list(scenario.keywords)
            auto_validate = True
        try:
            findings.update(parse_findings(payload.get("findings", {})))
        except (ValueError, KeyError) as exc:
            return _error(422, "bad_findings", str(exc))
        for sign in findings:  # validate before the session becomes visible
            if sign not in pack.signs:
                raise UnknownSign(sign)
        session_id = state.next_session_id()
        config = replace(state.config)
        config.auto_validate = auto_validate
        casebase = state.casebase(pack)
        log = MessageLog(path=state.log_path(session_id), clock=config.wall_clock)
        supervisor = Supervisor(
            pack,
            agents=default_agents(pack, casebase, config.suggestion_threshold),
            casebase=casebase,
            config=config,
            log=log,
            session_id=session_id,
        )
        state.sessions[session_id] = supervisor
        supervisor.start(findings=findings, keywords=keywords)
        return _state_response(supervisor, status_code=201)

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str) -> JSONResponse:
        supervisor = _session(session_id)
        if supervisor is not None:
            return _state_response(supervisor)
        log = _stored_log(session_id)
        if log is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        return JSONResponse(content=session_replay(log).to_json())

    def _stored_log(session_id: str) -> MessageLog | None:
        path = state.log_path(session_id)
        if path is None or not path.exists():
            return None
        try:
            return MessageLog.load(path)
        except LogCorrupt:
            return None

    @app.get("/sessions/{session_id}/events")
    async def session_events(
        session_id: str, request: Request, follow: bool = True
    ) -> StreamingResponse:
        try:
            start_from = int(request.query_params.get("from", 0))
        except ValueError:
            return _error(422, "bad_from", "from must be an integer sequence number")
        supervisor = _session(session_id)
        if supervisor is None:
            log = _stored_log(session_id)
            if log is None:
                return _error(404, "unknown_session", f"no session {session_id!r}")

            def dump() -> Iterator[str]:
                for message in log.since(start_from):
                    yield _sse(message.seq, message.to_json())

            return StreamingResponse(dump(), media_type="text/event-stream")

        def stream() -> Iterator[str]:
            last = start_from
            while True:
                for message in supervisor.log.since(last):
                    last = message.seq
                    yield _sse(message.seq, message.to_json())
                if not follow or supervisor.status not in LIVE_STATUSES:
                    return
                time.sleep(0.05)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/answers")
    async def post_answers(session_id: str, payload: dict = Body(...)) -> JSONResponse:
        supervisor = _session(session_id)
        if supervisor is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        answers = payload.get("answers")
        if answers is None and "sign" in payload:
            answers = {str(payload["sign"]): payload.get("value")}
        if not isinstance(answers, dict) or not answers:
            return _error(422, "bad_answers", "provide answers: {sign: value, ...}")
        try:
            parsed = parse_findings(answers)
        except (ValueError, KeyError) as exc:
            return _error(422, "bad_answers", str(exc))
        for sign, value in parsed.items():
            supervisor.answer(sign, value)
        return _state_response(supervisor)

    @app.post("/sessions/{session_id}/validate")
    async def post_validate(session_id: str, payload: dict = Body(...)) -> JSONResponse:
        supervisor = _session(session_id)
        if supervisor is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        seq = payload.get("proposal_seq")
        if not isinstance(seq, int):
            return _error(422, "bad_proposal", "proposal_seq must be an integer")
        supervisor.validate(seq)
        return _state_response(supervisor)

    @app.post("/sessions/{session_id}/reject")
    async def post_reject(session_id: str, payload: dict = Body(...)) -> JSONResponse:
        supervisor = _session(session_id)
        if supervisor is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        seq = payload.get("proposal_seq")
        if not isinstance(seq, int):
            return _error(422, "bad_proposal", "proposal_seq must be an integer")
        supervisor.reject(seq, reason=str(payload.get("reason", "")))
        return _state_response(supervisor)

    @app.get("/cases")
    async def query_cases(request: Request) -> JSONResponse:
        pack = state.pack(str(request.query_params.get("pack", "")))
        casebase = state.casebase(pack)
        if casebase is None:
            return _error(404, "no_casebase", "service is running without a data directory")
        raw_query = request.query_params.get("query", "")
        keywords = [kw for kw in (s.strip() for s in raw_query.split(",")) if kw]
        try:
            k = int(request.query_params.get("k", 3))
        except ValueError:
            return _error(422, "bad_k", "k must be an integer")
        if not casebase.cases:
            return JSONResponse(content={"cases": []})
        profile = CaseProfile.build({}, keywords)
        ranked = casebase.retrieve(profile, k=max(1, k))
        return JSONResponse(
            content={
                "cases": [
                    {
                        "id": case.id,
                        "score": round(score, 6),
                        "keywords": sorted(case.pb_keywords),
                        "components": {s.value: v for s, v in case.components.items()},
                        "retained_at": case.retained_at,
                    }
                    for case, score in ranked
                ]
            }
        )

    @app.get("/ontology/{pack_id}/concepts/{concept_id}")
    async def get_concept(pack_id: str, concept_id: str, request: Request) -> JSONResponse:
        pack = state.pack(pack_id)
        stage_param = request.query_params.get("stage")
        try:
            stage = StageKind.parse(stage_param) if stage_param else None
        except ValueError as exc:
            return _error(422, "bad_stage", str(exc))
        card = OntologyAgent("terminologist", pack).define(concept_id, stage=stage)
        if card is None:
            return _error(404, "unknown_concept", f"no concept {concept_id!r} in {pack_id!r}")
        return JSONResponse(content=card)

    return app


def _sse(seq: int, payload: dict[str, Any]) -> str:
    return f"id: {seq}\ndata: {json.dumps(payload, ensure_ascii=False)}\n\n"

"""Command line front end: headless runs, pack linting, case-base tools, serving.

Exit codes for ``run``: 0 the session completed; 2 it got stuck or failed;
3 it still awaits user input (a headless run cannot answer questions).
"""

from __future__ import annotations

import json
import random
import sys
from datetime import datetime, timezone
from pathlib import Path

import click

from .casebase import CaseBase, CaseProfile
from .domain import DomainError, load_pack, load_scenario, lint_pack, resolve_pack
from .memory import StageKind, parse_findings
from .messages import MessageLog
from .supervisor import (
    CooperativeScheduler,
    SessionStatus,
    SupervisorConfig,
    ThreadedScheduler,
    run_scenario,
)

EXIT_OK = 0
EXIT_STUCK = 2
EXIT_AWAITING = 3


def _iso_clock() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@click.group()
def main() -> None:
    """Supervised multi-agent decision support over domain packs."""


@main.command(name="run")
@click.option("--pack", "pack_arg", required=True, help="Pack directory or built-in pack id.")
@click.option("--scenario", "scenario_arg", required=True,
              help="Scenario file or a scenario id shipped with the pack.")
@click.option("--base", "base_dir", type=click.Path(file_okay=False), default=None,
              help="Case-base directory; enables recall and retention.")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), default=None,
              help="Write the full session trace (state + messages) as JSON.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Also persist the raw message log as JSON lines.")
@click.option("--seed", type=int, default=None,
              help="Seed session and case ids for reproducible traces.")
@click.option("--no-timestamps", is_flag=True, help="Omit timestamps for byte-stable output.")
@click.option("--threaded", is_flag=True, help="Deliberate with parallel agent threads.")
@click.pass_context
def run_command(
    ctx: click.Context,
    pack_arg: str,
    scenario_arg: str,
    base_dir: str | None,
    trace_path: str | None,
    log_path: str | None,
    seed: int | None,
    no_timestamps: bool,
    threaded: bool,
) -> None:
    """Run a scenario headlessly: findings preloaded, proposals auto-validated."""
    try:
        pack = load_pack(resolve_pack(pack_arg))
    except DomainError as exc:
        raise click.ClickException(str(exc))

    scenario_path = Path(scenario_arg)
    if scenario_path.is_file():
        scenario = load_scenario(
            json.loads(scenario_path.read_text(encoding="utf-8")), fallback_id=scenario_path.stem
        )
    elif scenario_arg in pack.scenarios:
        scenario = pack.scenarios[scenario_arg]
    else:
        raise click.ClickException(
            f"no scenario {scenario_arg!r}; pack ships {sorted(pack.scenarios)}"
        )

    casebase = CaseBase(base_dir, categories=pack.sign_categories()) if base_dir else None
    rng = random.Random(seed) if seed is not None else None

    config = SupervisorConfig(
        wall_clock=None if no_timestamps else _iso_clock,
        scheduler=ThreadedScheduler() if threaded else CooperativeScheduler(),
    )
    if rng is not None and casebase is not None:
        config.case_id_factory = (
            lambda: f"case-{len(casebase.cases) + 1:04d}-{rng.getrandbits(24):06x}"
        )
    session_id = f"s-{rng.getrandbits(32):08x}" if rng is not None else None
    log = MessageLog(path=log_path, clock=config.wall_clock) if log_path else None

    supervisor = run_scenario(
        pack, scenario, casebase=casebase, config=config, log=log, session_id=session_id
    )
    state = supervisor.state()

    click.echo(f"session {state.session} (pack {pack.id}, scenario {scenario.id})")
    for stage in StageKind:
        if stage.value in state.stage_results:
            label = state.labels.get(stage.value, "")
            suffix = f"  {label}" if label else ""
            click.echo(f"  {stage.value}: {state.stage_results[stage.value]}{suffix}")
    if state.pending_questions:
        click.echo(f"  unanswered: {', '.join(state.pending_questions)}")
    case_note = f"  (case {state.case})" if state.case else ""
    click.echo(f"status: {state.status}{case_note}")

    if trace_path:
        trace = {
            "session": state.session,
            "pack": pack.id,
            "scenario": scenario.id,
            "status": state.status,
            "components": state.stage_results,
            "labels": state.labels,
            "case": state.case,
            "stage_traces": {s.value: t for s, t in supervisor.traces().items()},
            "pending_questions": state.pending_questions,
            "messages": [m.to_json() for m in supervisor.log],
        }
        Path(trace_path).write_text(
            json.dumps(trace, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    if state.status == SessionStatus.COMPLETED.value:
        ctx.exit(EXIT_OK)
    elif state.status == SessionStatus.AWAITING_USER.value:
        ctx.exit(EXIT_AWAITING)
    else:
        ctx.exit(EXIT_STUCK)


@main.command(name="lint")
@click.option("--pack", "pack_arg", required=True, help="Pack directory or built-in pack id.")
@click.pass_context
def lint_command(ctx: click.Context, pack_arg: str) -> None:
    """Validate a pack: files, automata, determinism, reachability, table consistency."""
    try:
        path = resolve_pack(pack_arg)
    except DomainError as exc:
        raise click.ClickException(str(exc))
    violations = lint_pack(path)
    if violations:
        for violation in violations:
            click.echo(str(violation))
        click.echo(f"{len(violations)} problem(s) found")
        ctx.exit(1)
    pack = load_pack(path)
    click.echo(
        f"pack {pack.id} OK: {len(pack.signs)} signs, {len(pack.table.diagnoses)} diagnoses, "
        f"{len(pack.scenarios)} scenarios"
    )


@main.group(name="cases")
def cases_group() -> None:
    """Inspect and query a case base."""


@cases_group.command(name="stats")
@click.option("--base", "base_dir", required=True, type=click.Path(file_okay=False, exists=True))
def cases_stats(base_dir: str) -> None:
    """Show counts for a case base: cases, keywords, indexed signs, components."""
    casebase = CaseBase(base_dir)
    stats = casebase.stats()
    click.echo(json.dumps(stats, ensure_ascii=False, indent=2, sort_keys=True))


@cases_group.command(name="query")
@click.option("--base", "base_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--findings", "findings_path", type=click.Path(dir_okay=False, exists=True),
              default=None, help="JSON file with a findings map to match against.")
@click.option("--keywords", "keywords_csv", default="", help="Comma-separated problem keywords.")
@click.option("-k", "top_k", type=int, default=3, show_default=True)
@click.option("--pack", "pack_arg", default=None,
              help="Pack for sign-category weighting (optional).")
def cases_query(
    base_dir: str,
    findings_path: str | None,
    keywords_csv: str,
    top_k: int,
    pack_arg: str | None,
) -> None:
    """Rank stored cases against findings and/or keywords."""
    categories = None
    if pack_arg:
        try:
            categories = load_pack(resolve_pack(pack_arg)).sign_categories()
        except DomainError as exc:
            raise click.ClickException(str(exc))
    casebase = CaseBase(base_dir, categories=categories)
    findings = {}
    if findings_path:
        findings = parse_findings(json.loads(Path(findings_path).read_text(encoding="utf-8")))
    keywords = [kw for kw in (s.strip() for s in keywords_csv.split(",")) if kw]
    if not findings and not keywords:
        raise click.ClickException("provide --findings and/or --keywords")
    if not casebase.cases:
        click.echo("no cases retained")
        return
    profile = CaseProfile.build(findings, keywords)
    for case, score in casebase.retrieve(profile, k=max(1, top_k)):
        components = " ".join(
            f"{stage.value}={value}" for stage, value in case.components.items()
        )
        click.echo(f"{score:.4f}  {case.id}  {components}")


@main.command(name="serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--packs-dir", type=click.Path(file_okay=False), default=None)
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Enables case retention and log persistence.")
def serve_command(host: str, port: int, packs_dir: str | None, data_dir: str | None) -> None:
    """Serve sessions over HTTP with a server-sent-event message stream."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(packs_dir=packs_dir, data_dir=data_dir), host=host, port=port)


if __name__ == "__main__":
    main(sys.argv[1:])

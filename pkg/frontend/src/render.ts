/** HTML renderers: pure functions from the session view to markup.
 *
 * Chrome is language-neutral; clinical text (prompts, labels, therapy
 * prescriptions, epidemiology notes) is shown verbatim from the pack.
 */

import type { ServiceError } from "./client.js";
import {
  openProposals,
  statusOf,
  sortedProposals,
  type SessionView,
} from "./sessionView.js";
import type { FindingJson, ProposalJson } from "./types.js";

export const STAGES: ReadonlyArray<readonly [string, string]> = [
  ["diagnosis", "Δ"],
  ["prognosis", "Π"],
  ["therapy", "Θ"],
  ["follow_up", "SΘ"],
];

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

export function findingText(value: FindingJson): string {
  if (typeof value === "string") return value;
  return `positive: ${value.positive}`;
}

/** First stage without a validated result; null once the session closes. */
export function currentStage(view: SessionView): string | null {
  if (view.closedStatus !== null) return null;
  for (const [stage] of STAGES) {
    if (!(stage in view.stageResults)) return stage;
  }
  return null;
}

/** Form for the oldest pending question; empty string when none pending. */
export function renderQuestion(view: SessionView): string {
  const question = view.questions[0];
  if (question === undefined || view.closedStatus !== null) return "";
  const remaining = view.questions.length - 1;
  const controls = question.test
    ? `<label><input type="radio" name="value" value="positive"> Positive</label>
<label><input type="radio" name="value" value="absent"> Negative</label>
<input type="text" name="result" placeholder="test result">`
    : `<label><input type="radio" name="value" value="present"> Present</label>
<label><input type="radio" name="value" value="absent"> Absent</label>`;
  const queue =
    remaining > 0 ? `<p class="queue">${remaining} more question(s) pending</p>` : "";
  return `<form class="question" data-sign="${escapeHtml(question.sign)}">
<h3>${escapeHtml(question.sign)}</h3>
<p class="prompt">${escapeHtml(question.prompt)}</p>
${controls}
<button type="submit" data-action="answer">Submit</button>
${queue}
</form>`;
}

function basisText(basis: unknown): string {
  if (typeof basis === "string") return basis;
  if (basis !== null && typeof basis === "object" && "case" in basis) {
    const b = basis as { case: string; score: number };
    return `prior case ${b.case} (score ${b.score})`;
  }
  return "";
}

function renderProposal(proposal: ProposalJson, live: boolean): string {
  const buttons =
    live && proposal.status === "open"
      ? `<button data-action="validate" data-seq="${proposal.seq}">Validate</button>
<button data-action="reject" data-seq="${proposal.seq}">Reject</button>`
      : "";
  const label = proposal.label ? ` — ${escapeHtml(proposal.label)}` : "";
  return `<article class="proposal status-${proposal.status}" data-seq="${proposal.seq}">
<header><span class="agent">${escapeHtml(proposal.agent)}</span> <span class="stage">${escapeHtml(proposal.stage)}</span> <span class="chip">${proposal.status}</span></header>
<p class="value">${escapeHtml(proposal.value)}${label}</p>
<p class="basis">${escapeHtml(basisText(proposal.basis))}</p>
${buttons}
</article>`;
}

export function renderProposals(view: SessionView): string {
  const live = view.closedStatus === null;
  const items = sortedProposals(view)
    .map((p) => renderProposal(p, live))
    .join("\n");
  const suggestions = view.similarCases
    .map((c) => {
      const badge = c.score === 1.0 ? ` <span class="badge">identical prior case</span>` : "";
      return `<li data-case="${escapeHtml(c.id)}">${escapeHtml(c.id)} <span class="score">${c.score}</span>${badge}</li>`;
    })
    .join("\n");
  const aside = view.similarCases.length
    ? `<aside class="similar-cases"><h3>Similar cases</h3><ul>${suggestions}</ul></aside>`
    : "";
  return `<section class="proposals">${items}${aside}</section>`;
}

export function renderTimeline(view: SessionView): string {
  const current = currentStage(view);
  const items = STAGES.map(([stage, symbol]) => {
    const result = view.stageResults[stage];
    const classes = ["stage"];
    if (result !== undefined) classes.push("done");
    if (stage === current) classes.push("current");
    const label = view.labels[stage];
    const text =
      result !== undefined
        ? `${symbol} ${escapeHtml(result)}${label ? ` — ${escapeHtml(label)}` : ""}`
        : symbol;
    return `<li class="${classes.join(" ")}" data-stage="${stage}">${text}</li>`;
  }).join("\n");
  return `<ol class="timeline">${items}</ol>`;
}

export function renderFindings(view: SessionView): string {
  const rows = Object.keys(view.findings)
    .sort()
    .map(
      (sign) =>
        `<dt>${escapeHtml(sign)}</dt><dd>${escapeHtml(findingText(view.findings[sign]!))}</dd>`,
    )
    .join("\n");
  return `<dl class="findings">${rows}</dl>`;
}

export function renderStatus(view: SessionView, error: ServiceError | null = null): string {
  const status = statusOf(view);
  const caseNote =
    status === "completed" && view.caseId !== null
      ? ` <span class="case">case ${escapeHtml(view.caseId)}</span>`
      : "";
  const banner = error
    ? `<p class="error" role="alert">${escapeHtml(error.code)}: ${escapeHtml(error.message)}</p>`
    : "";
  const notes = view.epidemiology
    ? `<dl class="epidemiology">${Object.entries(view.epidemiology.notes)
        .map(([k, v]) => `<dt>${escapeHtml(k)}</dt><dd>${escapeHtml(v)}</dd>`)
        .join("")}</dl>`
    : "";
  return `<section class="status" data-status="${escapeHtml(status)}">
<p>${escapeHtml(view.session)} — ${escapeHtml(status)}${caseNote}</p>
${banner}${notes}
</section>`;
}

export function renderConsole(view: SessionView, error: ServiceError | null = null): string {
  const waiting =
    openProposals(view).length === 0 && view.questions.length === 0 && view.closedStatus === null
      ? `<p class="waiting">waiting for the supervisor…</p>`
      : "";
  return [
    renderStatus(view, error),
    renderTimeline(view),
    renderQuestion(view),
    renderProposals(view),
    renderFindings(view),
    waiting,
  ].join("\n");
}

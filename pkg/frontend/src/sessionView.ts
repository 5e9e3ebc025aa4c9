/** Event-sourced session view: a pure fold over the message stream.
 *
 * The service exposes the same projection server-side; `toStateJson` must
 * produce exactly the state the service would serve after the same events,
 * which the tests verify against a recorded session.
 */

import type {
  EventMessage,
  FindingJson,
  ProposalJson,
  SessionStateJson,
  SimilarCaseJson,
} from "./types.js";

export interface QuestionView {
  sign: string;
  stage: string;
  prompt: string;
  test: boolean; // true: positive-with-result control; false: present/absent
}

export interface EpidemiologyNote {
  diagnosis: string;
  notes: Record<string, string>;
}

export interface SessionView {
  session: string;
  pack: string;
  keywords: string[];
  findings: Record<string, FindingJson>;
  stageResults: Record<string, string>;
  labels: Record<string, string>;
  questions: QuestionView[]; // pending, oldest first
  proposals: Map<number, ProposalJson>;
  similarCases: SimilarCaseJson[]; // most recent report
  epidemiology: EpidemiologyNote | null;
  aefcgState: string;
  caseId: string | null;
  closedStatus: string | null; // completed | stuck | failed, once terminal
  lastSeq: number;
}

export function initialView(): SessionView {
  return {
    session: "",
    pack: "",
    keywords: [],
    findings: {},
    stageResults: {},
    labels: {},
    questions: [],
    proposals: new Map(),
    similarCases: [],
    epidemiology: null,
    aefcgState: "",
    caseId: null,
    closedStatus: null,
    lastSeq: 0,
  };
}

export function statusOf(view: SessionView): string {
  if (view.closedStatus !== null) return view.closedStatus;
  const openProposal = [...view.proposals.values()].some((p) => p.status === "open");
  return view.questions.length > 0 || openProposal ? "awaiting_user" : "active";
}

export function openProposals(view: SessionView): ProposalJson[] {
  return sortedProposals(view).filter((p) => p.status === "open");
}

export function sortedProposals(view: SessionView): ProposalJson[] {
  return [...view.proposals.keys()].sort((a, b) => a - b).map((seq) => view.proposals.get(seq)!);
}

function cloneView(view: SessionView): SessionView {
  return {
    ...view,
    keywords: [...view.keywords],
    findings: { ...view.findings },
    stageResults: { ...view.stageResults },
    labels: { ...view.labels },
    questions: view.questions.map((q) => ({ ...q })),
    proposals: new Map([...view.proposals].map(([seq, p]) => [seq, { ...p }])),
    similarCases: view.similarCases.map((c) => ({ ...c })),
    epidemiology: view.epidemiology
      ? { diagnosis: view.epidemiology.diagnosis, notes: { ...view.epidemiology.notes } }
      : null,
  };
}

/** Apply one event; events must arrive in contiguous sequence order. */
export function applyEvent(view: SessionView, message: EventMessage): SessionView {
  if (message.seq !== view.lastSeq + 1) {
    throw new Error(
      `event out of order: got seq ${message.seq} after ${view.lastSeq}`,
    );
  }
  const next = cloneView(view);
  next.lastSeq = message.seq;
  const content = message.content;

  switch (message.performative) {
    case "announce": {
      if (content["event"] === "session_start") {
        next.session = String(content["session"] ?? message.conversation);
        next.pack = String(content["pack"] ?? "");
        next.keywords = [...((content["keywords"] as string[] | undefined) ?? [])];
      }
      break;
    }
    case "inform": {
      const event = content["event"];
      if (event === "findings") {
        Object.assign(next.findings, (content["findings"] as object | undefined) ?? {});
      } else if (event === "stage_advanced") {
        next.aefcgState = String(content["to"] ?? next.aefcgState);
      } else if (event === "session_completed") {
        next.caseId = (content["case"] as string | null | undefined) ?? null;
        next.closedStatus = "completed";
      } else if (event === "session_stuck") {
        next.closedStatus = "stuck";
      } else if (event === "agent_error") {
        next.closedStatus = "failed";
      } else if (event === "similar_cases") {
        next.similarCases = [...((content["cases"] as SimilarCaseJson[] | undefined) ?? [])];
      } else if (event === "epidemiology") {
        next.epidemiology = {
          diagnosis: String(content["diagnosis"] ?? ""),
          notes: { ...((content["notes"] as Record<string, string> | undefined) ?? {}) },
        };
      }
      break;
    }
    case "query_user": {
      const signs = (content["signs"] as string[] | undefined) ?? [];
      const prompts = (content["prompts"] as Record<string, string> | undefined) ?? {};
      const tests = (content["tests"] as Record<string, boolean> | undefined) ?? {};
      const stage = String(content["stage"] ?? "");
      for (const sign of signs) {
        if (!next.questions.some((q) => q.sign === sign)) {
          next.questions.push({
            sign,
            stage,
            prompt: prompts[sign] ?? sign,
            test: tests[sign] ?? false,
          });
        }
      }
      break;
    }
    case "user_response": {
      const sign = String(content["sign"]);
      next.findings[sign] = content["value"] as FindingJson;
      next.questions = next.questions.filter((q) => q.sign !== sign);
      break;
    }
    case "propose_solution": {
      next.proposals.set(message.seq, {
        seq: message.seq,
        agent: message.sender,
        stage: String(content["stage"] ?? ""),
        value: String(content["value"] ?? ""),
        label: String(content["label"] ?? ""),
        basis: content["basis"] ?? null,
        status: "open",
      });
      break;
    }
    case "validate": {
      const seq = Number(content["proposal_seq"] ?? -1);
      const proposal = next.proposals.get(seq);
      if (proposal !== undefined) {
        proposal.status = "validated";
        next.stageResults[proposal.stage] = proposal.value;
        next.labels[proposal.stage] = proposal.label;
        next.questions = next.questions.filter((q) => q.stage !== proposal.stage);
      }
      break;
    }
    case "reject": {
      const seq = Number(content["proposal_seq"] ?? -1);
      const proposal = next.proposals.get(seq);
      if (proposal !== undefined) proposal.status = "rejected";
      break;
    }
    case "cancel": {
      const raw = content["proposal_seq"];
      if (raw !== undefined && raw !== null) {
        const proposal = next.proposals.get(Number(raw));
        if (proposal !== undefined && proposal.status === "open") proposal.status = "cancelled";
      }
      break;
    }
    default:
      break; // accept_task / decline_task / abandon carry no view state
  }
  return next;
}

export function foldEvents(messages: Iterable<EventMessage>): SessionView {
  let view = initialView();
  for (const message of messages) view = applyEvent(view, message);
  return view;
}

/** Project the view into the exact shape GET /sessions/{id} serves. */
export function toStateJson(view: SessionView): SessionStateJson {
  const findings: Record<string, FindingJson> = {};
  for (const sign of Object.keys(view.findings).sort()) {
    findings[sign] = view.findings[sign]!;
  }
  return {
    session: view.session,
    pack: view.pack,
    status: statusOf(view),
    keywords: [...view.keywords],
    findings,
    stage_results: { ...view.stageResults },
    labels: { ...view.labels },
    pending_questions: view.questions.map((q) => q.sign),
    proposals: sortedProposals(view).map((p) => ({ ...p })),
    aefcg_state: view.aefcgState,
    case: view.caseId,
    last_seq: view.lastSeq,
  };
}

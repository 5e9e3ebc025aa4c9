/** Wire types shared with the session service. */

/** JSON form of one recorded clinical finding. */
export type FindingJson = "present" | "absent" | "unknown" | { positive: string };

/** One message from the session's append-only event log. */
export interface EventMessage {
  v: number;
  seq: number;
  conversation: string;
  performative: string;
  sender: string;
  receiver: string;
  content: Record<string, unknown>;
  ts: string;
}

/** Session state as served by GET /sessions/{id}. */
export interface SessionStateJson {
  session: string;
  pack: string;
  status: string;
  keywords: string[];
  findings: Record<string, FindingJson>;
  stage_results: Record<string, string>;
  labels: Record<string, string>;
  pending_questions: string[];
  proposals: ProposalJson[];
  aefcg_state: string;
  case: string | null;
  last_seq: number;
}

export interface ProposalJson {
  seq: number;
  agent: string;
  stage: string;
  value: string;
  label: string;
  basis: unknown;
  status: string; // open | validated | rejected | cancelled
}

export interface SimilarCaseJson {
  id: string;
  score: number;
}

export interface CaseSummaryJson {
  id: string;
  score: number;
  keywords: string[];
  components: Record<string, string>;
  retained_at: string;
}

export interface ConceptCardJson {
  id: string;
  label: string;
  kind: string;
  stage_scope: string[];
  attributes: Record<string, unknown>;
  ancestors: string[];
  relations: { source: string; kind: string; target: string; provenance: string }[];
}

/** Thin typed client over the session service's JSON endpoints. */

import type {
  CaseSummaryJson,
  ConceptCardJson,
  FindingJson,
  SessionStateJson,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

export interface CreateSessionRequest {
  pack: string;
  findings?: Record<string, FindingJson>;
  keywords?: string[];
  scenario?: string;
  auto_validate?: boolean;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const error = (payload as { error?: { code?: string; message?: string } } | null)?.error;
      throw new ServiceError(
        response.status,
        error?.code ?? "unknown",
        error?.message ?? `request failed with status ${response.status}`,
      );
    }
    return payload as T;
  }

  listPacks(): Promise<{ packs: string[] }> {
    return this.request("GET", "/packs");
  }

  createSession(body: CreateSessionRequest): Promise<SessionStateJson> {
    return this.request("POST", "/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionStateJson> {
    return this.request("GET", `/sessions/${encodeURIComponent(sessionId)}`);
  }

  sendAnswer(sessionId: string, sign: string, value: FindingJson): Promise<SessionStateJson> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/answers`, {
      answers: { [sign]: value },
    });
  }

  validate(sessionId: string, proposalSeq: number): Promise<SessionStateJson> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/validate`, {
      proposal_seq: proposalSeq,
    });
  }

  reject(sessionId: string, proposalSeq: number, reason = ""): Promise<SessionStateJson> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/reject`, {
      proposal_seq: proposalSeq,
      reason,
    });
  }

  queryCases(pack: string, keywords: string[], k = 3): Promise<{ cases: CaseSummaryJson[] }> {
    const query = encodeURIComponent(keywords.join(","));
    return this.request("GET", `/cases?pack=${encodeURIComponent(pack)}&query=${query}&k=${k}`);
  }

  getConcept(pack: string, conceptId: string, stage?: string): Promise<ConceptCardJson> {
    const suffix = stage ? `?stage=${encodeURIComponent(stage)}` : "";
    return this.request(
      "GET",
      `/ontology/${encodeURIComponent(pack)}/concepts/${encodeURIComponent(conceptId)}${suffix}`,
    );
  }
}

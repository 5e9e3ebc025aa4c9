/** Session controller: one open session, one event feed, no optimistic UI.
 *
 * Actions only send requests; the view changes when the echoed events come
 * back over the stream, so the rendered state always matches what a replay
 * of the log would show.
 */

import { ApiClient, ServiceError } from "./client.js";
import { applyEvent, initialView, statusOf, type SessionView } from "./sessionView.js";
import type { EventMessage, FindingJson } from "./types.js";

export class SessionController {
  view: SessionView = initialView();
  lastError: ServiceError | null = null;
  private listeners: Array<(view: SessionView) => void> = [];

  constructor(
    private readonly client: ApiClient,
    readonly sessionId: string,
  ) {}

  static async open(
    client: ApiClient,
    request: { pack: string; keywords?: string[]; findings?: Record<string, FindingJson> },
  ): Promise<SessionController> {
    const state = await client.createSession(request);
    return new SessionController(client, state.session);
  }

  get status(): string {
    return statusOf(this.view);
  }

  onChange(listener: (view: SessionView) => void): void {
    this.listeners.push(listener);
  }

  /** Entry point for the event feed (and for tests driving scripted chunks). */
  ingest(messages: Iterable<EventMessage>): void {
    for (const message of messages) {
      this.view = applyEvent(this.view, message);
    }
    for (const listener of this.listeners) listener(this.view);
  }

  private async send(action: () => Promise<unknown>): Promise<boolean> {
    try {
      await action();
      this.lastError = null;
      return true;
    } catch (error) {
      if (error instanceof ServiceError) {
        this.lastError = error; // surface inline; the view itself is untouched
        for (const listener of this.listeners) listener(this.view);
        return false;
      }
      throw error;
    }
  }

  submitAnswer(sign: string, value: FindingJson): Promise<boolean> {
    return this.send(() => this.client.sendAnswer(this.sessionId, sign, value));
  }

  validateProposal(proposalSeq: number): Promise<boolean> {
    return this.send(() => this.client.validate(this.sessionId, proposalSeq));
  }

  rejectProposal(proposalSeq: number, reason = ""): Promise<boolean> {
    return this.send(() => this.client.reject(this.sessionId, proposalSeq, reason));
  }
}

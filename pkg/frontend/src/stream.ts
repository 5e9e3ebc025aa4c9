/** Server-sent-event consumer with resume-from-last-seq reconnection.
 *
 * The service writes one frame per log message with the message seq as the
 * SSE id. The feed tracks the highest seq it has delivered: reconnects ask
 * for `?from=<lastSeq>` (the server sends strictly-after), and any frames
 * the server replays anyway are dropped, so a flaky connection can neither
 * lose nor duplicate events.
 */

import type { EventMessage } from "./types.js";

interface SseFrame {
  id: number | null;
  data: string;
}

/** Incremental SSE frame parser; chunks may split frames anywhere. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseFrame[] {
    this.buffer += chunk;
    const frames: SseFrame[] = [];
    for (;;) {
      const cut = this.buffer.indexOf("\n\n");
      if (cut === -1) break;
      const raw = this.buffer.slice(0, cut);
      this.buffer = this.buffer.slice(cut + 2);
      let id: number | null = null;
      const dataLines: string[] = [];
      for (const line of raw.split("\n")) {
        if (line.startsWith("id: ")) id = Number(line.slice(4));
        else if (line.startsWith("data: ")) dataLines.push(line.slice(6));
      }
      if (dataLines.length > 0) frames.push({ id, data: dataLines.join("\n") });
    }
    return frames;
  }
}

async function* readFrames(body: ReadableStream<Uint8Array>): AsyncGenerator<SseFrame> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  const parser = new SseParser();
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const frame of parser.push(decoder.decode(value, { stream: true }))) {
        yield frame;
      }
    }
    for (const frame of parser.push(decoder.decode())) yield frame;
  } finally {
    reader.releaseLock();
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface FeedOptions {
  fetchImpl?: FetchLike;
  /** Starting point; events with seq <= fromSeq are never delivered. */
  fromSeq?: number;
  /** Reconnect attempts after a dropped connection; Infinity for the UI. */
  maxRetries?: number;
  retryDelayMs?: number;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class EventFeed {
  lastSeq: number;
  private stopped = false;
  private readonly fetchImpl: FetchLike;
  private readonly maxRetries: number;
  private readonly retryDelayMs: number;

  constructor(
    private readonly baseUrl: string,
    private readonly sessionId: string,
    options: FeedOptions = {},
  ) {
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
    this.lastSeq = options.fromSeq ?? 0;
    this.maxRetries = options.maxRetries ?? Infinity;
    this.retryDelayMs = options.retryDelayMs ?? 500;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Deliver events in order until the server closes the stream cleanly
   * (session over) or `stop()` is called. Dropped connections resume from
   * the last delivered seq. */
  async run(onEvent: (message: EventMessage) => void): Promise<void> {
    let retries = 0;
    while (!this.stopped) {
      const url =
        `${this.baseUrl}/sessions/${encodeURIComponent(this.sessionId)}/events` +
        `?follow=true&from=${this.lastSeq}`;
      try {
        const response = await this.fetchImpl(url);
        if (!response.ok || response.body === null) {
          throw new Error(`event stream failed with status ${response.status}`);
        }
        for await (const frame of readFrames(response.body)) {
          if (this.stopped) return;
          const message = JSON.parse(frame.data) as EventMessage;
          if (message.seq <= this.lastSeq) continue; // server replayed old frames
          this.lastSeq = message.seq;
          retries = 0;
          onEvent(message);
        }
      } catch (error) {
        if (this.stopped) return;
        if (retries >= this.maxRetries) throw error;
        retries += 1;
        await sleep(this.retryDelayMs);
        continue;
      }
      return; // clean end of stream: the session is closed
    }
  }
}

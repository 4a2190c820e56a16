/** Server-sent-event client over fetch streaming.
 *
 * Works in browsers and Node. Reconnects automatically, resuming from the
 * last seen sequence number, and drops duplicates so at-least-once delivery
 * never double-applies an event.
 */

import type { EventJson } from "./types.js";

export interface StreamOptions {
  onEvent: (event: EventJson) => void;
  onError?: (error: unknown) => void;
  fromSeq?: number;
  reconnectDelayMs?: number;
  /** Injection point for tests. */
  fetchImpl?: typeof fetch;
}

/** Parse one SSE frame (the lines between blank-line separators). */
export function parseFrame(frame: string): EventJson | null {
  let data = "";
  for (const line of frame.split("\n")) {
    if (line.startsWith("data: ")) data += line.slice(6);
    // id:/event: lines are informational; the payload carries seq and kind
  }
  if (!data) return null; // comment / keep-alive frame
  return JSON.parse(data) as EventJson;
}

export class EventStream {
  lastSeq: number;
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(private baseUrl: string, private token: string,
              private collaborationId: string,
              private options: StreamOptions) {
    this.lastSeq = (options.fromSeq ?? 1) - 1;
  }

  url(): string {
    return `${this.baseUrl}/collaborations/${encodeURIComponent(this.collaborationId)}` +
      `/events?from=${this.lastSeq + 1}`;
  }

  start(): void {
    this.stopped = false;
    void this.run();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private async run(): Promise<void> {
    const fetchImpl = this.options.fetchImpl ?? fetch;
    const delay = this.options.reconnectDelayMs ?? 1000;
    while (!this.stopped) {
      try {
        this.controller = new AbortController();
        const response = await fetchImpl(this.url(), {
          headers: { Authorization: `Bearer ${this.token}` },
          signal: this.controller.signal,
        });
        if (!response.ok || !response.body) {
          throw new Error(`event stream failed: HTTP ${response.status}`);
        }
        await this.consume(response.body);
      } catch (error) {
        if (this.stopped) return;
        this.options.onError?.(error);
      }
      if (this.stopped) return;
      await new Promise((resolve) => setTimeout(resolve, delay));
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, split);
        buffer = buffer.slice(split + 2);
        const event = parseFrame(frame);
        if (event === null) continue;
        if (event.seq <= this.lastSeq) continue; // duplicate delivery
        this.lastSeq = event.seq;
        this.options.onEvent(event);
      }
    }
  }
}

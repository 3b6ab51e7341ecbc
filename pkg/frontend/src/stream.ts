/**
 * Resumable consumer of the run event stream (server-sent events).
 *
 * Built on fetch + ReadableStream so it runs in both browsers and node. The
 * follower reconnects from lastSeq + 1 after any disconnect or detected gap,
 * which combined with the reducer's dense-sequence rule guarantees the client
 * view is gapless and duplicate-free for any disconnect pattern.
 */

import type { RunEvent } from "./types.js";

/** Incremental SSE frame parser; feed() returns completed data payloads. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): string[] {
    this.buffer += chunk.replace(/\r\n/g, "\n");
    const payloads: string[] = [];
    let boundary = this.buffer.indexOf("\n\n");
    while (boundary !== -1) {
      const frame = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const dataLines = frame
        .split("\n")
        .filter((line) => line.startsWith("data:"))
        .map((line) => line.slice(5).trimStart());
      if (dataLines.length > 0) {
        payloads.push(dataLines.join("\n"));
      }
      boundary = this.buffer.indexOf("\n\n");
    }
    return payloads;
  }
}

export interface FollowOptions {
  fromSeq?: number;
  /** Stop after this event kind has been delivered (default: Finished). */
  untilKind?: string | null;
  maxReconnects?: number;
  retryDelayMs?: number;
  fetchFn?: typeof fetch;
  signal?: AbortSignal;
}

export interface FollowResult {
  delivered: number;
  lastSeq: number;
  reconnects: number;
}

/**
 * Stream events to `onEvent` in order, reconnecting from the next sequence
 * number until the terminal event arrives or the signal aborts.
 */
export async function followRun(
  eventsUrl: (fromSeq: number) => string,
  onEvent: (event: RunEvent) => void,
  options: FollowOptions = {},
): Promise<FollowResult> {
  const untilKind = options.untilKind === undefined ? "Finished" : options.untilKind;
  const fetchFn = options.fetchFn ?? fetch;
  const maxReconnects = options.maxReconnects ?? 100;
  let lastSeq = (options.fromSeq ?? 1) - 1;
  let delivered = 0;
  let reconnects = -1;

  while (true) {
    reconnects += 1;
    if (reconnects > maxReconnects) {
      throw new Error(`gave up after ${maxReconnects} reconnects at seq ${lastSeq}`);
    }
    let sawTerminal = false;
    let streamEnded = false;
    try {
      const response = await fetchFn(eventsUrl(lastSeq + 1), {
        signal: options.signal,
        headers: { accept: "text/event-stream" },
      });
      if (!response.ok || response.body === null) {
        throw new Error(`event stream returned ${response.status}`);
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      for (;;) {
        const { value, done } = await reader.read();
        if (done) {
          streamEnded = true;
          break;
        }
        for (const payload of parser.feed(decoder.decode(value, { stream: true }))) {
          const event = JSON.parse(payload) as RunEvent;
          if (event.seq !== lastSeq + 1) {
            continue; // duplicate or gap; the next reconnect replays from lastSeq + 1
          }
          lastSeq = event.seq;
          delivered += 1;
          onEvent(event);
          if (untilKind !== null && event.kind === untilKind) {
            sawTerminal = true;
          }
        }
        if (sawTerminal) {
          await reader.cancel().catch(() => undefined);
          break;
        }
      }
    } catch (error) {
      if (options.signal?.aborted) {
        return { delivered, lastSeq, reconnects };
      }
      // fall through to reconnect
    }
    if (sawTerminal) {
      return { delivered, lastSeq, reconnects };
    }
    if (streamEnded && untilKind === null) {
      // caller asked for whatever the server has; a clean close is the end
      return { delivered, lastSeq, reconnects };
    }
    // disconnect before the terminal event: reconnect from lastSeq + 1
    await new Promise((resolve) => setTimeout(resolve, options.retryDelayMs ?? 50));
  }
}

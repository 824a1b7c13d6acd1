// Per-annotator session persistence: the annotator's name plus a queue of
// labels the server has not yet acknowledged. Queued labels survive reloads,
// so a dropped connection never loses work.

import type { LabelRequest } from "./api.js";

export interface QueuedLabel extends LabelRequest {
  queued_at: number;
}

const NAME_KEY = "synthpqa.annotator";

export function loadAnnotator(storage: Storage): string {
  return storage.getItem(NAME_KEY) ?? "";
}

export function saveAnnotator(storage: Storage, name: string): void {
  storage.setItem(NAME_KEY, name);
}

export function sessionKey(annotator: string, sampleId: string): string {
  return `synthpqa.session.${annotator}.${sampleId}`;
}

export class Session {
  private readonly key: string;
  queue: QueuedLabel[] = [];

  constructor(
    private readonly storage: Storage,
    annotator: string,
    sampleId: string,
  ) {
    this.key = sessionKey(annotator, sampleId);
    const raw = storage.getItem(this.key);
    if (raw !== null) {
      try {
        const stored: unknown = JSON.parse(raw);
        if (stored && typeof stored === "object" && Array.isArray((stored as { queue?: unknown }).queue)) {
          this.queue = (stored as { queue: QueuedLabel[] }).queue;
        }
      } catch {
        // Corrupt storage entry: start clean instead of wedging the session.
      }
    }
  }

  private persist(): void {
    this.storage.setItem(this.key, JSON.stringify({ queue: this.queue }));
  }

  /** Queue a label for retry; a second label for the same answer replaces the first. */
  enqueue(label: QueuedLabel): void {
    this.queue = this.queue.filter((q) => q.answer_id !== label.answer_id);
    this.queue.push(label);
    this.persist();
  }

  /** Drop a queued label once the server acknowledged it. */
  settle(answerId: string): void {
    this.queue = this.queue.filter((q) => q.answer_id !== answerId);
    this.persist();
  }

  get pending(): number {
    return this.queue.length;
  }
}

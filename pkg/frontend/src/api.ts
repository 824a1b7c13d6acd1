// Typed client for the three labeling-service endpoints. Nothing else in the
// UI talks to the network.

export type Label = "correct" | "hallucinated" | "unsure";

export const LABELS: readonly Label[] = ["correct", "hallucinated", "unsure"];

export interface AnswerView {
  answer_id: string;
  text: string;
  blinded_tag: string;
  // Present only when the server runs with blinding disabled. The renderer
  // must never read these; tests assert they cannot leak into the DOM.
  source?: string;
  model_name?: string;
  prompt_type?: string;
}

export interface ItemView {
  question_id: string;
  question: { title: string; body: string; community: string };
  answers: AnswerView[];
}

export interface Progress {
  labeled: number;
  total: number;
}

export interface NextResponse {
  done: boolean;
  sample_id?: string;
  progress: Progress;
  item: ItemView | null;
}

export interface LabelRequest {
  annotator: string;
  question_id: string;
  answer_id: string;
  label: Label;
  note?: string;
}

export interface RateRow {
  correct: number;
  hallucinated: number;
  unsure: number;
  judged: number;
  hallucination_rate_pct: number | null;
}

export interface Report {
  total_labels: number;
  annotators: string[];
  by_model: Record<string, RateRow>;
  by_model_prompt: Record<string, Record<string, RateRow>>;
  by_community?: Record<string, RateRow>;
}

/** A response the server answered with a 4xx/5xx status. */
export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const body: unknown = await res.json();
    if (body && typeof body === "object" && "detail" in body) {
      const detail = (body as { detail: unknown }).detail;
      if (typeof detail === "string") return detail;
      return JSON.stringify(detail);
    }
    return JSON.stringify(body);
  } catch {
    return `HTTP ${res.status}`;
  }
}

export async function fetchNext(annotator: string): Promise<NextResponse> {
  const res = await fetch(`/api/sample/next?annotator=${encodeURIComponent(annotator)}`);
  if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
  return (await res.json()) as NextResponse;
}

export async function submitLabel(req: LabelRequest): Promise<void> {
  const res = await fetch("/api/labels", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(req),
  });
  if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
}

export async function fetchReport(): Promise<Report> {
  const res = await fetch("/api/report");
  if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
  return (await res.json()) as Report;
}

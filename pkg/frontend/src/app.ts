// Single-page labeling flow: name gate, one question at a time with its
// blinded answers, keyboard-driven judgments, a retry queue for flaky
// connections, and a completion screen with the live rate report.

import { ApiError, fetchNext, fetchReport, submitLabel } from "./api.js";
import type { AnswerView, Label, LabelRequest, NextResponse, Report } from "./api.js";
import { loadAnnotator, saveAnnotator, Session } from "./state.js";

type AnswerStatus =
  | { kind: "open" }
  | { kind: "saving"; label: Label }
  | { kind: "queued"; label: Label }
  | { kind: "saved"; label: Label }
  | { kind: "failed"; label: Label; detail: string };

export interface AppOptions {
  root: HTMLElement;
  storage?: Storage;
  /** Delay before a queued label or failed fetch is retried. */
  retryDelayMs?: number;
}

const KEY_TO_LABEL: Record<string, Label> = {
  "1": "correct",
  "2": "hallucinated",
  "3": "unsure",
};

const BUTTONS: { label: Label; key: string; caption: string }[] = [
  { label: "correct", key: "1", caption: "correct" },
  { label: "hallucinated", key: "2", caption: "hallucinated" },
  { label: "unsure", key: "3", caption: "unsure / skip" },
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    if (name === "class") node.className = value;
    else node.setAttribute(name, value);
  }
  for (const child of children) node.append(child);
  return node;
}

export class App {
  private readonly root: HTMLElement;
  private readonly storage: Storage;
  private readonly retryDelayMs: number;

  private annotator = "";
  private session: Session | null = null;
  private view: NextResponse | null = null;
  private report: Report | null = null;
  private banner: string | null = null;

  // The full answer list of the question on screen. The server only returns
  // still-pending answers, so this cache keeps already-judged ones visible
  // (greyed out, relabelable) until the question is finished.
  private questionId: string | null = null;
  private answers: AnswerView[] = [];
  private status = new Map<string, AnswerStatus>();
  private noteDraft = "";

  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly onKeydown = (event: KeyboardEvent) => this.handleKey(event);

  constructor(options: AppOptions) {
    this.root = options.root;
    this.storage = options.storage ?? window.localStorage;
    this.retryDelayMs = options.retryDelayMs ?? 3000;
    document.addEventListener("keydown", this.onKeydown);
  }

  async start(): Promise<void> {
    this.annotator = loadAnnotator(this.storage);
    this.render();
    if (this.annotator) await this.loadNext();
  }

  destroy(): void {
    document.removeEventListener("keydown", this.onKeydown);
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.retryTimer = null;
  }

  // --- data flow -------------------------------------------------------------

  private async loadNext(): Promise<void> {
    try {
      const view = await fetchNext(this.annotator);
      this.view = view;
      this.banner = null;
      if (this.session === null) {
        this.session = new Session(this.storage, this.annotator, view.sample_id ?? "default");
        if (this.session.pending > 0) this.scheduleRetry(0);
      }
      const item = view.item;
      if (item && item.question_id !== this.questionId) {
        this.questionId = item.question_id;
        this.answers = item.answers.slice();
        const carried = new Map<string, AnswerStatus>();
        for (const answer of item.answers) {
          const state = this.status.get(answer.answer_id);
          if (state && state.kind === "queued") carried.set(answer.answer_id, state);
        }
        this.status = carried;
        this.noteDraft = "";
      }
      if (view.done) {
        this.questionId = null;
        this.answers = [];
        void this.loadReport();
      }
    } catch (err) {
      this.banner = err instanceof ApiError
        ? err.message
        : "server unreachable; your judgments are kept and retried";
      this.scheduleRetry();
    }
    this.render();
  }

  private async loadReport(): Promise<void> {
    try {
      this.report = await fetchReport();
    } catch {
      this.report = null; // the completion screen still links to the raw report
    }
    this.render();
  }

  private async labelAnswer(answerId: string, label: Label): Promise<void> {
    if (this.questionId === null) return;
    const request: LabelRequest = {
      annotator: this.annotator,
      question_id: this.questionId,
      answer_id: answerId,
      label,
    };
    const note = this.noteDraft.trim();
    if (note) request.note = note;
    this.status.set(answerId, { kind: "saving", label });
    this.render();
    try {
      await submitLabel(request);
      this.status.set(answerId, { kind: "saved", label });
      this.session?.settle(answerId);
      this.noteDraft = "";
      await this.loadNext();
    } catch (err) {
      if (err instanceof ApiError) {
        this.status.set(answerId, { kind: "failed", label, detail: err.message });
      } else {
        this.session?.enqueue({ ...request, queued_at: Date.now() });
        this.status.set(answerId, { kind: "queued", label });
        this.scheduleRetry();
      }
      this.render();
    }
  }

  private scheduleRetry(delay = this.retryDelayMs): void {
    if (this.retryTimer !== null) return;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      void this.retry();
    }, delay);
  }

  private async retry(): Promise<void> {
    if (this.session) {
      for (const queued of this.session.queue.slice()) {
        const { queued_at: _queuedAt, ...request } = queued;
        try {
          await submitLabel(request);
          this.session.settle(queued.answer_id);
          this.status.set(queued.answer_id, { kind: "saved", label: queued.label });
        } catch (err) {
          if (err instanceof ApiError) {
            // The server refused this label outright; retrying cannot help.
            this.session.settle(queued.answer_id);
            this.status.set(queued.answer_id, {
              kind: "failed",
              label: queued.label,
              detail: err.message,
            });
          } else {
            this.scheduleRetry();
            this.render();
            return; // still offline; keep the rest of the queue
          }
        }
      }
    }
    await this.loadNext();
  }

  // --- events ---------------------------------------------------------------

  private handleKey(event: KeyboardEvent): void {
    const target = event.target;
    if (target instanceof HTMLInputElement || target instanceof HTMLTextAreaElement) return;
    const label = KEY_TO_LABEL[event.key];
    if (!label) return;
    const active = this.activeAnswer();
    if (active) void this.labelAnswer(active.answer_id, label);
  }

  private activeAnswer(): AnswerView | null {
    for (const answer of this.answers) {
      const state = this.status.get(answer.answer_id) ?? { kind: "open" };
      if (state.kind === "open" || state.kind === "failed") return answer;
    }
    return null;
  }

  // --- rendering --------------------------------------------------------------

  private render(): void {
    const children: Node[] = [];
    if (!this.annotator) {
      children.push(this.renderNameForm());
    } else {
      children.push(this.renderHeader());
      if (this.banner !== null) children.push(this.renderBanner());
      if (this.view === null) {
        children.push(el("p", { class: "muted" }, ["loading…"]));
      } else if (this.view.done) {
        children.push(this.renderCompletion());
      } else if (this.view.item) {
        children.push(this.renderItem());
      }
    }
    this.root.replaceChildren(...children);
  }

  private renderNameForm(): HTMLElement {
    const input = el("input", {
      "data-testid": "name-input",
      placeholder: "your name",
      autocomplete: "off",
    });
    const form = el("form", { "data-testid": "name-form" }, [
      el("h1", {}, ["Answer audit"]),
      el("p", {}, ["Judge each answer as correct, hallucinated, or unsure. ",
        "Keys 1 / 2 / 3 work everywhere; unsure doubles as skip."]),
      input,
      el("button", { type: "submit" }, ["start"]),
    ]);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const name = input.value.trim();
      if (!name) return;
      this.annotator = name;
      saveAnnotator(this.storage, name);
      this.render();
      void this.loadNext();
    });
    return form;
  }

  private renderHeader(): HTMLElement {
    const parts: (Node | string)[] = [el("strong", {}, ["Answer audit"])];
    if (this.view) {
      const { labeled, total } = this.view.progress;
      parts.push(el("span", { "data-testid": "progress" }, [`${labeled} / ${total} labeled`]));
    }
    const pending = this.session?.pending ?? 0;
    if (pending > 0) {
      parts.push(el("span", { "data-testid": "queue-badge", class: "badge" },
        [`${pending} queued`]));
    }
    parts.push(el("span", { class: "muted" }, [`annotator: ${this.annotator}`]));
    return el("header", {}, parts);
  }

  private renderBanner(): HTMLElement {
    const button = el("button", { type: "button" }, ["retry now"]);
    button.addEventListener("click", () => {
      if (this.retryTimer !== null) {
        clearTimeout(this.retryTimer);
        this.retryTimer = null;
      }
      void this.retry();
    });
    return el("div", { "data-testid": "banner", class: "banner" },
      [this.banner ?? "", " ", button]);
  }

  private renderCompletion(): HTMLElement {
    const children: (Node | string)[] = [
      el("h2", { "data-testid": "done" }, ["All answers labeled - thank you"]),
      el("p", {}, [
        "Relabeling is possible from the API; a newer judgment overwrites the older one. ",
        el("a", { href: "/api/report", "data-testid": "report-link" }, ["Raw rate report"]),
      ]),
    ];
    if (this.report) {
      const rows = Object.entries(this.report.by_model).map(([model, row]) =>
        el("tr", {}, [
          el("td", {}, [model]),
          el("td", {}, [String(row.judged)]),
          el("td", {}, [String(row.hallucinated)]),
          el("td", {}, [row.hallucination_rate_pct === null
            ? "n/a"
            : `${row.hallucination_rate_pct.toFixed(1)}%`]),
        ]));
      children.push(el("table", { "data-testid": "report" }, [
        el("thead", {}, [el("tr", {}, [
          el("th", {}, ["model"]), el("th", {}, ["judged"]),
          el("th", {}, ["hallucinated"]), el("th", {}, ["rate"]),
        ])]),
        el("tbody", {}, rows),
      ]));
    }
    return el("section", { class: "completion" }, children);
  }

  private renderItem(): HTMLElement {
    const item = this.view?.item;
    if (!item) return el("div");
    const active = this.activeAnswer();
    const question = el("section", { "data-testid": "question" }, [
      el("span", { class: "badge" }, [item.question.community]),
      el("h2", {}, [item.question.title]),
      el("p", {}, [item.question.body]),
    ]);
    const note = el("input", {
      "data-testid": "note-input",
      placeholder: "optional note for the next judgment",
      autocomplete: "off",
      value: this.noteDraft,
    });
    note.value = this.noteDraft;
    note.addEventListener("input", () => {
      this.noteDraft = note.value;
    });
    const list = this.answers.map((answer) => this.renderAnswer(answer, active));
    return el("section", {}, [question, note, ...list]);
  }

  private renderAnswer(answer: AnswerView, active: AnswerView | null): HTMLElement {
    const state = this.status.get(answer.answer_id) ?? { kind: "open" as const };
    const isActive = active !== null && active.answer_id === answer.answer_id;
    const article = el("article", {
      "data-testid": "answer",
      "data-answer-id": answer.answer_id,
      "data-state": state.kind,
      class: isActive ? "answer active" : "answer",
    }, [
      el("h3", {}, [answer.blinded_tag]),
      el("p", {}, [answer.text]),
    ]);

    if (state.kind === "open" || state.kind === "failed") {
      if (state.kind === "failed") {
        article.append(el("p", { "data-testid": "answer-error", class: "error" },
          [`rejected: ${state.detail} - your choice (${state.label}) is kept below`]));
      }
      const row = el("div", { class: "buttons" });
      for (const { label, key, caption } of BUTTONS) {
        const attrs: Record<string, string> = { type: "button", "data-label": label };
        if (state.kind === "failed" && state.label === label) attrs["aria-pressed"] = "true";
        const button = el("button", attrs, [`[${key}] ${caption}`]);
        button.addEventListener("click", () => void this.labelAnswer(answer.answer_id, label));
        row.append(button);
      }
      article.append(row);
    } else if (state.kind === "saving") {
      article.append(el("p", { class: "muted" }, ["saving…"]));
    } else {
      const caption = state.kind === "queued"
        ? `queued: ${state.label} - will retry automatically`
        : `saved: ${state.label}`;
      const change = el("button", {
        type: "button",
        "data-testid": "relabel",
        title: "a new judgment overwrites the saved one",
      }, ["change (overwrites)"]);
      change.addEventListener("click", () => {
        this.status.set(answer.answer_id, { kind: "open" });
        this.render();
      });
      article.append(el("p", { class: "muted" }, [caption, " ", change]));
    }
    return article;
  }
}

export function mount(options: AppOptions): App {
  const app = new App(options);
  void app.start();
  return app;
}

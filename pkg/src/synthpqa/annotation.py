"""Hallucination audit: sampling, a labeling service, and rate reports.

A sample draws n questions equally split among communities (remainder
round-robin by community name order) and attaches every available answer,
human and synthetic, in a seeded shuffled presentation order. A small HTTP
service hands items to annotators one question at a time, hiding model
identities by default, and appends labels to a JSONL store with
last-write-wins semantics per (annotator, answer). The headline rate is
hallucinated / (hallucinated + correct); "unsure" is excluded and reported
separately.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from pydantic import BaseModel

from .corpus import Answer, Question

log = logging.getLogger(__name__)

LABELS = ("correct", "hallucinated", "unsure")
DEFAULT_SAMPLE_SIZE = 100
SAMPLE_FORMAT = "synthpqa-annotation-sample"
SAMPLE_VERSION = 1


@dataclass(frozen=True)
class SampleAnswer:
    answer_id: str
    text: str
    source: str
    model_name: str
    prompt_type: str


@dataclass(frozen=True)
class SampleItem:
    question_id: str
    title: str
    body: str
    community: str
    answers: tuple[SampleAnswer, ...]  # presentation order, already shuffled


@dataclass
class AnnotationSample:
    sample_id: str
    seed: int
    n_requested: int
    items: list[SampleItem]

    def item_for(self, question_id: str) -> SampleItem | None:
        for item in self.items:
            if item.question_id == question_id:
                return item
        return None

    def answer_lookup(self) -> dict[str, tuple[SampleItem, SampleAnswer]]:
        out = {}
        for item in self.items:
            for ans in item.answers:
                out[ans.answer_id] = (item, ans)
        return out


def _community_quotas(communities: list[str], n: int) -> dict[str, int]:
    """Equal split of n, remainder handed out round-robin in name order."""
    if not communities:
        raise ValueError("no communities present in the question set")
    ordered = sorted(communities)
    base, rem = divmod(n, len(ordered))
    return {c: base + (1 if i < rem else 0) for i, c in enumerate(ordered)}


def draw_sample(
    questions: Iterable[Question],
    answers: Iterable[Answer],
    n: int = DEFAULT_SAMPLE_SIZE,
    seed: int = 42,
) -> AnnotationSample:
    """Deterministic audit sample: n questions split equally among communities.

    Questions inside a community are chosen uniformly at random per seed; a
    community smaller than its quota contributes everything it has (logged).
    Each item carries all answers to the question, shuffled per question.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    question_list = list(questions)
    by_community: dict[str, list[Question]] = {}
    for q in question_list:
        by_community.setdefault(q.community, []).append(q)
    quotas = _community_quotas(list(by_community), n)

    answers_by_question: dict[str, list[Answer]] = {}
    for ans in answers:
        answers_by_question.setdefault(ans.question_id, []).append(ans)

    items: list[SampleItem] = []
    for community in sorted(by_community):
        quota = quotas[community]
        pool = sorted(by_community[community], key=lambda q: q.id)
        if len(pool) < quota:
            log.warning("community %s has %d questions, quota %d; taking all",
                        community, len(pool), quota)
            quota = len(pool)
        rng = random.Random(f"{seed}|select|{community}")
        chosen = sorted(rng.sample(pool, quota), key=lambda q: q.id)
        for q in chosen:
            attached = sorted(answers_by_question.get(q.id, []), key=lambda a: a.id)
            presented = [SampleAnswer(answer_id=a.id, text=a.text, source=a.source,
                                      model_name=a.model_name, prompt_type=a.prompt_type)
                         for a in attached]
            random.Random(f"{seed}|present|{q.id}").shuffle(presented)
            items.append(SampleItem(question_id=q.id, title=q.title, body=q.body,
                                    community=community, answers=tuple(presented)))

    digest = hashlib.sha256(json.dumps(
        [seed, [[it.question_id, [a.answer_id for a in it.answers]] for it in items]],
        sort_keys=True).encode("utf-8")).hexdigest()
    return AnnotationSample(sample_id=digest[:16], seed=seed, n_requested=n, items=items)


def save_sample(sample: AnnotationSample, path: str | Path) -> None:
    doc = {
        "format": SAMPLE_FORMAT,
        "version": SAMPLE_VERSION,
        "sample_id": sample.sample_id,
        "seed": sample.seed,
        "n_requested": sample.n_requested,
        "items": [asdict(item) for item in sample.items],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_sample(path: str | Path) -> AnnotationSample:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != SAMPLE_FORMAT or doc.get("version") != SAMPLE_VERSION:
        raise ValueError(f"{path}: not a {SAMPLE_FORMAT} v{SAMPLE_VERSION} file")
    items = [
        SampleItem(
            question_id=raw["question_id"], title=raw["title"], body=raw["body"],
            community=raw["community"],
            answers=tuple(SampleAnswer(**a) for a in raw["answers"]),
        )
        for raw in doc["items"]
    ]
    return AnnotationSample(sample_id=doc["sample_id"], seed=doc["seed"],
                            n_requested=doc["n_requested"], items=items)


@dataclass(frozen=True)
class AnnotationRecord:
    annotator: str
    question_id: str
    answer_id: str
    model_name: str
    prompt_type: str
    label: str
    note: str = ""
    timestamp: int = 0

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")


class LabelStore:
    """Append-only JSONL of labels; last write wins per (annotator, answer)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], AnnotationRecord] = {}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.touch()  # fail now if the location is unwritable
        self._replay()

    def _replay(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = AnnotationRecord(**json.loads(line))
                except (ValueError, TypeError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: bad label record: {exc}")
                self._records[(record.annotator, record.answer_id)] = record

    def append(self, record: AnnotationRecord) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(asdict(record), sort_keys=True, ensure_ascii=False) + "\n")
                fh.flush()
            self._records[(record.annotator, record.answer_id)] = record

    def records(self) -> list[AnnotationRecord]:
        """Effective records after last-write-wins resolution."""
        with self._lock:
            return list(self._records.values())

    def labeled_answer_ids(self, annotator: str) -> set[str]:
        with self._lock:
            return {aid for (name, aid) in self._records if name == annotator}


def _rate_row(counts: Counter) -> dict:
    correct = counts.get("correct", 0)
    hallucinated = counts.get("hallucinated", 0)
    unsure = counts.get("unsure", 0)
    judged = correct + hallucinated
    rate = 100.0 * hallucinated / judged if judged else None
    return {"correct": correct, "hallucinated": hallucinated, "unsure": unsure,
            "judged": judged, "hallucination_rate_pct": rate}


def hallucination_report(
    records: Iterable[AnnotationRecord],
    sample: AnnotationSample | None = None,
) -> dict:
    """Rates per model, per (model, prompt type), and per community.

    rate = 100 * hallucinated / (hallucinated + correct); a bucket with no
    correct/hallucinated labels reports a null rate with its denominators.
    """
    records = list(records)
    by_model: dict[str, Counter] = {}
    by_model_prompt: dict[str, dict[str, Counter]] = {}
    by_community: dict[str, Counter] = {}
    communities = {item.question_id: item.community for item in sample.items} if sample else {}

    for rec in records:
        model = rec.model_name or "human"
        by_model.setdefault(model, Counter())[rec.label] += 1
        by_model_prompt.setdefault(model, {}).setdefault(rec.prompt_type, Counter())[rec.label] += 1
        if sample:
            community = communities.get(rec.question_id)
            if community is None:
                log.warning("label for %s refers to a question outside the sample",
                            rec.answer_id)
            else:
                by_community.setdefault(community, Counter())[rec.label] += 1

    return {
        "total_labels": len(records),
        "annotators": sorted({rec.annotator for rec in records}),
        "by_model": {m: _rate_row(c) for m, c in sorted(by_model.items())},
        "by_model_prompt": {
            m: {p: _rate_row(c) for p, c in sorted(prompts.items())}
            for m, prompts in sorted(by_model_prompt.items())
        },
        "by_community": {c: _rate_row(cnt) for c, cnt in sorted(by_community.items())},
    }


class LabelIn(BaseModel):
    """Request body for POST /api/labels; model identity is filled in server-side."""

    annotator: str
    question_id: str
    answer_id: str
    label: str
    note: str = ""


def build_app(
    sample: AnnotationSample,
    store: LabelStore,
    reveal_models: bool = False,
    ui_dir: str | Path | None = None,
    clock: Callable[[], float] = time.time,
):
    """FastAPI app serving the labeling API and, when built, the companion UI."""
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import HTMLResponse

    app = FastAPI(title="answer annotation", version="1")
    lookup = sample.answer_lookup()

    def _answer_payload(ans: SampleAnswer, position: int) -> dict:
        payload = {"answer_id": ans.answer_id, "text": ans.text,
                   "blinded_tag": f"answer-{position}"}
        if reveal_models:
            payload.update(source=ans.source, model_name=ans.model_name,
                           prompt_type=ans.prompt_type)
        return payload

    @app.get("/api/sample/next")
    def next_item(annotator: str):
        if not annotator.strip():
            raise HTTPException(status_code=400, detail="annotator name must be non-empty")
        done = store.labeled_answer_ids(annotator)
        total = sum(len(item.answers) for item in sample.items)
        for item in sample.items:
            pending = [(i, a) for i, a in enumerate(item.answers, start=1)
                       if a.answer_id not in done]
            if pending:
                return {
                    "done": False,
                    "sample_id": sample.sample_id,
                    "progress": {"labeled": len(done), "total": total},
                    "item": {
                        "question_id": item.question_id,
                        "question": {"title": item.title, "body": item.body,
                                     "community": item.community},
                        "answers": [_answer_payload(a, i) for i, a in pending],
                    },
                }
        return {"done": True, "sample_id": sample.sample_id,
                "progress": {"labeled": len(done), "total": total}, "item": None}

    @app.post("/api/labels", status_code=201)
    def post_label(body: LabelIn):
        if body.label not in LABELS:
            raise HTTPException(status_code=400,
                                detail=f"label must be one of {list(LABELS)}, got {body.label!r}")
        if not body.annotator.strip():
            raise HTTPException(status_code=400, detail="annotator name must be non-empty")
        found = lookup.get(body.answer_id)
        if found is None:
            raise HTTPException(status_code=400,
                                detail=f"unknown answer_id {body.answer_id!r}")
        item, ans = found
        if body.question_id != item.question_id:
            raise HTTPException(status_code=400,
                                detail=f"answer {body.answer_id!r} belongs to question "
                                       f"{item.question_id!r}, not {body.question_id!r}")
        record = AnnotationRecord(
            annotator=body.annotator, question_id=item.question_id,
            answer_id=ans.answer_id, model_name=ans.model_name,
            prompt_type=ans.prompt_type, label=body.label, note=body.note,
            timestamp=int(clock()),
        )
        store.append(record)
        return asdict(record)

    @app.get("/api/report")
    def report():
        return hallucination_report(store.records(), sample)

    index_html = Path(ui_dir) / "index.html" if ui_dir else None
    if index_html is not None and index_html.exists():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def placeholder():
            return ("<html><body><h1>Annotation service</h1>"
                    "<p>The labeling UI has not been built; the JSON API under "
                    "<code>/api/</code> is live.</p></body></html>")

    return app

"""Corpus ingestion: questions, answers, relevance judgments, and user tag profiles.

Questions and answers live in newline-delimited JSON files; judgments use the
four-column TREC qrels format. All containers returned here are plain frozen
dataclasses or dicts and are safe for concurrent reads once built.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

HUMAN = "human"
GENERATED = "generated"
PROMPT_TYPES = ("basic", "personalized", "contextual")
ANSWER_SOURCES = (HUMAN, GENERATED)


class CorpusParseError(ValueError):
    """A record could not be decoded; message carries file and line number."""


class CorpusValidationError(ValueError):
    """Decoded records violate an integrity rule (duplicate or dangling ids)."""


@dataclass(frozen=True)
class Question:
    id: str
    title: str
    body: str
    tags: tuple[str, ...]
    user_id: str
    community: str
    created_at: int

    def query_text(self) -> str:
        """Retrieval query form: title and body concatenated."""
        return f"{self.title} {self.body}"


@dataclass(frozen=True)
class Answer:
    id: str
    question_id: str
    text: str
    source: str = HUMAN
    model_name: str = ""
    prompt_type: str = "none"
    created_at: int = 0


# question_id -> {answer_id: relevance}; relevance >= 1 means relevant
Qrels = dict[str, dict[str, int]]


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    top_tags: tuple[str, ...]
    as_of: int


def _require(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise CorpusValidationError(f"{where}: {msg}")


def _question_from_obj(obj: dict, where: str) -> Question:
    try:
        q = Question(
            id=str(obj["id"]),
            title=str(obj["title"]),
            body=str(obj["body"]),
            tags=tuple(str(t) for t in obj.get("tags", [])),
            user_id=str(obj.get("user_id", "")),
            community=str(obj["community"]),
            created_at=int(obj.get("created_at", 0)),
        )
    except KeyError as exc:
        raise CorpusParseError(f"{where}: missing field {exc}") from None
    _require(bool(q.id), where, "empty question id")
    _require(bool(q.community), where, "empty community")
    _require(bool(q.title.strip()), where, f"question {q.id!r} has blank title")
    _require(bool(q.body.strip()), where, f"question {q.id!r} has blank body")
    return q


def _answer_from_obj(obj: dict, where: str) -> Answer:
    try:
        a = Answer(
            id=str(obj["id"]),
            question_id=str(obj["question_id"]),
            text=str(obj["text"]),
            source=str(obj.get("source", HUMAN)),
            model_name=str(obj.get("model_name", "")),
            prompt_type=str(obj.get("prompt_type", "none")),
            created_at=int(obj.get("created_at", 0)),
        )
    except KeyError as exc:
        raise CorpusParseError(f"{where}: missing field {exc}") from None
    _require(bool(a.id), where, "empty answer id")
    _require(a.source in ANSWER_SOURCES, where, f"unknown source {a.source!r}")
    if a.source == HUMAN:
        _require(a.model_name == "", where, f"human answer {a.id!r} carries a model name")
        _require(a.prompt_type == "none", where, f"human answer {a.id!r} carries a prompt type")
    else:
        _require(bool(a.model_name), where, f"generated answer {a.id!r} lacks a model name")
        _require(a.prompt_type in PROMPT_TYPES, where,
                 f"generated answer {a.id!r} has prompt type {a.prompt_type!r}")
    return a


def _iter_jsonl(path: str | Path):
    """Yield (line_number, decoded object) for each non-blank line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None


def read_questions(path: str | Path) -> list[Question]:
    questions: list[Question] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        q = _question_from_obj(obj, f"{path}:{lineno}")
        if q.id in seen:
            raise CorpusValidationError(
                f"{path}:{lineno}: duplicate question id {q.id!r} (first seen on line {seen[q.id]})")
        seen[q.id] = lineno
        questions.append(q)
    return questions


def read_answers(path: str | Path) -> list[Answer]:
    answers: list[Answer] = []
    seen: dict[str, int] = {}
    for lineno, obj in _iter_jsonl(path):
        a = _answer_from_obj(obj, f"{path}:{lineno}")
        if a.id in seen:
            raise CorpusValidationError(
                f"{path}:{lineno}: duplicate answer id {a.id!r} (first seen on line {seen[a.id]})")
        seen[a.id] = lineno
        answers.append(a)
    return answers


def read_qrels(path: str | Path) -> Qrels:
    """Read TREC-format judgments: `question_id 0 answer_id relevance`."""
    qrels: Qrels = defaultdict(dict)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise CorpusParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _, aid, rel = parts
            try:
                relevance = int(rel)
            except ValueError:
                raise CorpusParseError(f"{path}:{lineno}: non-integer relevance {rel!r}") from None
            _require(relevance >= 0, f"{path}:{lineno}", f"negative relevance {relevance}")
            qrels[qid][aid] = relevance
    return dict(qrels)


def parse_corpus(
    questions_path: str | Path,
    answers_path: str | Path,
    qrels_path: str | Path,
    validate_qrels: bool = False,
) -> tuple[list[Question], list[Answer], Qrels]:
    """Parse the three corpus files and verify cross-file integrity.

    Answers must reference existing questions. Qrels referential integrity is
    opt-in because partially ingested corpora are common.
    """
    questions = read_questions(questions_path)
    answers = read_answers(answers_path)
    qrels = read_qrels(qrels_path)

    qids = {q.id for q in questions}
    for a in answers:
        _require(a.question_id in qids, str(answers_path),
                 f"answer {a.id!r} references unknown question {a.question_id!r}")
    if validate_qrels:
        aids = {a.id for a in answers}
        for qid, judged in qrels.items():
            _require(qid in qids, str(qrels_path), f"judgment for unknown question {qid!r}")
            for aid in judged:
                _require(aid in aids, str(qrels_path),
                         f"judgment for unknown answer {aid!r} (question {qid!r})")
    return questions, answers, qrels


def question_to_obj(q: Question) -> dict:
    return {
        "id": q.id, "title": q.title, "body": q.body, "tags": list(q.tags),
        "user_id": q.user_id, "community": q.community, "created_at": q.created_at,
    }


def answer_to_obj(a: Answer) -> dict:
    return {
        "id": a.id, "question_id": a.question_id, "text": a.text, "source": a.source,
        "model_name": a.model_name, "prompt_type": a.prompt_type, "created_at": a.created_at,
    }


def _write_jsonl(objs, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n")


def write_questions(questions: list[Question], path: str | Path) -> None:
    _write_jsonl((question_to_obj(q) for q in questions), path)


def write_answers(answers: list[Answer], path: str | Path) -> None:
    _write_jsonl((answer_to_obj(a) for a in answers), path)


def write_qrels(qrels: Qrels, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(qrels):
            for aid in sorted(qrels[qid]):
                fh.write(f"{qid} 0 {aid} {qrels[qid][aid]}\n")


def sample_per_community(questions: list[Question], cap: int, seed: int) -> list[Question]:
    """Uniform without-replacement sample of at most `cap` questions per community.

    Communities at or under the cap are kept whole. Selection is seeded per
    community so adding a new community does not perturb the others, and the
    output preserves the input's relative order.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    by_community: dict[str, list[int]] = defaultdict(list)
    for idx, q in enumerate(questions):
        by_community[q.community].append(idx)

    keep: set[int] = set()
    for community, idxs in by_community.items():
        if len(idxs) <= cap:
            keep.update(idxs)
        else:
            rng = random.Random(f"{seed}|{community}")
            keep.update(rng.sample(idxs, cap))
    return [q for idx, q in enumerate(questions) if idx in keep]


def build_user_profile(
    user_id: str,
    questions: list[Question],
    as_of: int,
    k: int = 5,
) -> UserProfile:
    """Top-k tags the user attached to questions strictly before `as_of`.

    Ranked by descending frequency; ties broken by ascending tag text so the
    profile is stable across runs.
    """
    counts: Counter[str] = Counter()
    for q in questions:
        if q.user_id == user_id and q.created_at < as_of:
            counts.update(q.tags)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return UserProfile(user_id=user_id, top_tags=tuple(tag for tag, _ in ranked[:k]), as_of=as_of)

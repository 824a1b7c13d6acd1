"""Small synthetic community-QA corpus used by the CLI and acceptance tests.

The texts are built from per-community word pools so retrieval, profile
building, and annotation sampling all have signal to work with, while the
whole corpus stays tiny enough for sub-second runs.
"""
import random
from pathlib import Path

from synthpqa.corpus import (
    Answer,
    Question,
    write_answers,
    write_qrels,
    write_questions,
)

COMMUNITY_WORDS = {
    "cooking": ["rice", "pan", "stove", "boil", "salt", "oven", "bread",
                "yeast", "flour", "knife", "pasta", "sauce"],
    "travel": ["train", "visa", "border", "ticket", "route", "hostel",
               "luggage", "transit", "airport", "customs"],
    "boardgames": ["dice", "board", "meeple", "rules", "turn", "score",
                   "card", "deck", "token", "tiles"],
}

COMMUNITY_TAGS = {
    "cooking": ["rice", "baking", "stovetop", "pasta", "equipment"],
    "travel": ["visas", "trains", "budget", "packing", "usa"],
    "boardgames": ["strategy", "dice", "rules", "two-player", "cards"],
}


def build_corpus(n_questions: int = 50, seed: int = 7,
                 communities: tuple[str, ...] = ("cooking", "travel", "boardgames")):
    """Returns (questions, answers, qrels) with one or two human answers each."""
    rng = random.Random(seed)
    questions: list[Question] = []
    answers: list[Answer] = []
    qrels: dict[str, dict[str, int]] = {}

    for i in range(n_questions):
        community = communities[i % len(communities)]
        words = COMMUNITY_WORDS[community]
        topic = rng.sample(words, 3)
        qid = f"q{i:03d}"
        title = f"How do I handle {topic[0]} and {topic[1]}?"
        body = (f"I keep running into trouble with {topic[0]} whenever {topic[2]} "
                f"is involved. Any advice about {topic[1]}?")
        questions.append(Question(
            id=qid,
            title=title,
            body=body,
            tags=tuple(sorted(rng.sample(COMMUNITY_TAGS[community], rng.randint(2, 4)))),
            user_id=f"u{i % 7}",
            community=community,
            created_at=1_600_000_000 + i * 86_400,
        ))

        good = (f"For {topic[0]} the usual fix is to adjust {topic[2]} first, "
                f"then {topic[1]} behaves. Works for most {community} setups.")
        aid = f"a{i:03d}h"
        answers.append(Answer(id=aid, question_id=qid, text=good,
                              created_at=1_600_000_000 + i * 86_400 + 3600))
        qrels[qid] = {aid: rng.choice([1, 1, 2])}

        if i % 3 == 0:
            extra_words = rng.sample(words, 2)
            so_so = (f"Not sure, but maybe look at {extra_words[0]} or "
                     f"{extra_words[1]} instead.")
            aid2 = f"a{i:03d}x"
            answers.append(Answer(id=aid2, question_id=qid, text=so_so,
                                  created_at=1_600_000_000 + i * 86_400 + 7200))
            qrels[qid][aid2] = rng.choice([0, 1])

    return questions, answers, qrels


def write_corpus(dir_path: str | Path, n_questions: int = 50, seed: int = 7):
    """Writes questions.jsonl / answers.jsonl / qrels.txt; returns their paths."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    questions, answers, qrels = build_corpus(n_questions=n_questions, seed=seed)
    paths = {
        "questions": dir_path / "questions.jsonl",
        "answers": dir_path / "answers.jsonl",
        "qrels": dir_path / "qrels.txt",
    }
    write_questions(questions, paths["questions"])
    write_answers(answers, paths["answers"])
    write_qrels(qrels, paths["qrels"])
    return paths

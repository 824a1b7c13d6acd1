"""Seeded random fixture generators shared by the unit and acceptance tests.

Documents are built from a small lowercase vocabulary joined by single
spaces, so a plain str.split() recovers exactly the tokens the analyzer
produces. That keeps the oracle side free of any dependency on the
package's own tokenizer.
"""
import random

VOCAB = [
    "rice", "pan", "stove", "boil", "water", "salt", "train", "visa",
    "border", "ticket", "dice", "board", "meeple", "rules", "turn", "score",
    "oven", "bread", "yeast", "flour", "knife", "pasta", "sauce", "herb",
    "route", "hostel", "luggage", "transit", "card", "deck", "тур", "ответ",
]

OOV = ["zzyzx", "qwfp", "выдра"]


def rand_docs(rng: random.Random, max_docs: int = 50) -> list[tuple[str, str]]:
    n = rng.randint(1, max_docs)
    docs = []
    for i in range(n):
        words = rng.choices(VOCAB, k=rng.randint(1, 12))
        docs.append((f"d{i:03d}", " ".join(words)))
    return docs


def rand_query(rng: random.Random, max_terms: int = 8) -> str:
    terms = rng.choices(VOCAB + OOV, k=rng.randint(1, max_terms))
    return " ".join(terms)


def rand_run_and_qrels(rng: random.Random):
    """A ranked run over up to 15 docs plus graded qrels, some queries empty."""
    doc_ids = [f"d{i}" for i in range(15)]
    n_queries = rng.randint(1, 6)
    run = {}
    qrels = {}
    for qi in range(n_queries):
        qid = f"q{qi}"
        depth = rng.randint(0, 12)
        ranked_ids = rng.sample(doc_ids, depth)
        scores = sorted((rng.uniform(-2, 5) for _ in range(depth)), reverse=True)
        run[qid] = list(zip(ranked_ids, scores))
        judged = rng.sample(doc_ids, rng.randint(0, 8))
        qrels[qid] = {d: rng.randint(0, 3) for d in judged}
    return run, qrels


def rand_parallel_corpus(rng: random.Random):
    """Aligned hypothesis/reference segment lists for BLEU / chrF parity."""
    n = rng.randint(1, 6)
    hyps, refs = [], []
    for _ in range(n):
        hyps.append(" ".join(rng.choices(VOCAB, k=rng.randint(0, 12))))
        refs.append(" ".join(rng.choices(VOCAB, k=rng.randint(0, 12))))
    if all(not h.strip() for h in hyps):
        hyps[0] = "rice water"
    return hyps, refs


def rand_fusion_fixture(rng: random.Random):
    """Lexical and neural runs over one candidate set per query, plus qrels."""
    run_a, run_b, qrels = {}, {}, {}
    for qi in range(rng.randint(1, 5)):
        qid = f"q{qi}"
        n_docs = rng.randint(1, 10)
        docs = [f"d{qi}_{j}" for j in range(n_docs)]
        def ranked(seq):
            scored = [(d, rng.uniform(-1, 4)) for d in seq]
            return sorted(scored, key=lambda p: (-p[1], p[0]))
        run_a[qid] = ranked(docs)
        run_b[qid] = ranked(docs)
        judged = rng.sample(docs, rng.randint(0, n_docs))
        qrels[qid] = {d: rng.randint(0, 2) for d in judged}
    return run_a, run_b, qrels

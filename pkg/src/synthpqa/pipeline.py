"""Two-stage retrieval: BM25 candidates re-scored by a neural scorer.

The first stage retrieves top-depth candidates per query; the second stage
re-scores exactly those candidates. Before fusing, each run's scores are
min-max normalized within the query, and the final score is the convex
combination lam * lexical + (1 - lam) * neural. lam is picked by grid search
against an IR metric on held-out queries; ties prefer the larger lam (leaning
on the cheaper lexical stage). Runs are exchanged in TREC format.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import bm25
from .encoder import Scorer
from .metrics import evaluate_run

log = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID: tuple[float, ...] = tuple(i / 10 for i in range(11))
DEFAULT_OBJECTIVE = "NDCG@10"
DEFAULT_DEPTH = 100
RUN_TAG = "synthpqa"

Run = dict[str, list[tuple[str, float]]]


def minmax_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    """Rescale to [0, 1] within one query; a constant list maps to all 1.0."""
    if not scores:
        return {}
    lo = min(scores.values())
    hi = max(scores.values())
    if hi == lo:
        return {doc_id: 1.0 for doc_id in scores}
    span = hi - lo
    return {doc_id: (s - lo) / span for doc_id, s in scores.items()}


def _ranked(scores: Mapping[str, float]) -> list[tuple[str, float]]:
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def fuse_scores(
    lexical: Mapping[str, float],
    neural: Mapping[str, float],
    lam: float,
) -> list[tuple[str, float]]:
    """Convex fusion over one query's candidates, ranked (score desc, id asc).

    Both maps must cover the same candidate set; normalization happens here.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if lexical.keys() != neural.keys():
        missing = sorted(lexical.keys() ^ neural.keys())
        raise ValueError(f"score maps cover different candidates: {missing[:5]}")
    norm_lex = minmax_normalize(lexical)
    norm_neu = minmax_normalize(neural)
    return _ranked({doc_id: lam * norm_lex[doc_id] + (1.0 - lam) * norm_neu[doc_id]
                    for doc_id in lexical})


def bm25_run(
    index: bm25.InvertedIndex,
    params: bm25.Bm25Params,
    queries: Mapping[str, str],
    depth: int = DEFAULT_DEPTH,
) -> Run:
    """First-stage run: BM25 top-depth per query."""
    return {qid: bm25.search(index, params, text, depth) for qid, text in queries.items()}


def rerank(
    first_stage: Run,
    scorer: Scorer,
    queries: Mapping[str, str],
    docs: Mapping[str, str],
    depth: int = DEFAULT_DEPTH,
) -> Run:
    """Re-score the top-depth first-stage candidates with the scorer.

    The output covers exactly the re-scored candidate set per query, ordered
    by the new scores (ties ascending id). Queries or docs without text are
    an input mismatch and raise by id.
    """
    out: Run = {}
    for qid, ranked in first_stage.items():
        if qid not in queries:
            raise KeyError(f"no query text for query id {qid!r}")
        query_text = queries[qid]
        rescored: dict[str, float] = {}
        for doc_id, _ in ranked[:depth]:
            if doc_id not in docs:
                raise KeyError(f"no document text for doc id {doc_id!r} (query {qid!r})")
            rescored[doc_id] = scorer.score(query_text, docs[doc_id])
        out[qid] = _ranked(rescored)
    return out


def fuse(lexical_run: Run, neural_run: Run, lam: float) -> Run:
    """Fuse two runs that cover identical per-query candidate sets."""
    if lexical_run.keys() != neural_run.keys():
        missing = sorted(lexical_run.keys() ^ neural_run.keys())
        raise ValueError(f"runs cover different query sets: {missing[:5]}")
    out: Run = {}
    for qid in lexical_run:
        try:
            out[qid] = fuse_scores(dict(lexical_run[qid]), dict(neural_run[qid]), lam)
        except ValueError as exc:
            raise ValueError(f"query {qid!r}: {exc}") from exc
    return out


@dataclass(frozen=True)
class LambdaPoint:
    lam: float
    objective_mean: float


@dataclass
class TuneResult:
    best_lambda: float
    best_mean: float
    objective: str
    points: list[LambdaPoint]

    def table_tsv(self) -> str:
        lines = ["lambda\t" + self.objective.lower()]
        lines += [f"{p.lam:g}\t{p.objective_mean:.6f}" for p in self.points]
        lines.append(f"# best_lambda\t{self.best_lambda:g}")
        return "\n".join(lines) + "\n"


def tune_lambda(
    lexical_run: Run,
    neural_run: Run,
    qrels: Mapping[str, Mapping[str, int]],
    objective: str = DEFAULT_OBJECTIVE,
    lambdas: Sequence[float] = DEFAULT_LAMBDA_GRID,
    exclude_no_relevant: bool = True,
) -> TuneResult:
    """Grid search for the fusion weight; ties resolve to the larger lambda."""
    if not lambdas:
        raise ValueError("lambda grid is empty")
    if any(not 0.0 <= lam <= 1.0 for lam in lambdas):
        raise ValueError(f"lambda grid must lie in [0, 1], got {sorted(lambdas)}")
    if not qrels:
        raise ValueError("empty qrels: nothing to tune against")
    points: list[LambdaPoint] = []
    for lam in sorted(lambdas):
        report = evaluate_run(fuse(lexical_run, neural_run, lam), dict(qrels), (objective,),
                              exclude_no_relevant=exclude_no_relevant)
        points.append(LambdaPoint(lam=lam, objective_mean=report.means[objective]))
    best = max(points, key=lambda p: (p.objective_mean, p.lam))
    log.info("tuned lambda=%g (%s=%.6f over %d grid points)",
             best.lam, objective, best.objective_mean, len(points))
    return TuneResult(best_lambda=best.lam, best_mean=best.objective_mean,
                      objective=objective, points=points)


# --- TREC run serialization -------------------------------------------------

def write_run(run: Run, path: str | Path, tag: str = RUN_TAG) -> None:
    """Standard six-column run file: qid Q0 docid rank score tag."""
    with open(path, "w", encoding="utf-8") as fh:
        for qid in sorted(run):
            for rank, (doc_id, score) in enumerate(run[qid], start=1):
                fh.write(f"{qid} Q0 {doc_id} {rank} {score!r} {tag}\n")


def read_run(path: str | Path) -> Run:
    """Parse a six-column run file; ranked order restored per query."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _, doc_id, rank, score, _ = parts
            if (qid, doc_id) in seen:
                raise ValueError(f"{path}:{lineno}: duplicate entry for ({qid}, {doc_id})")
            seen.add((qid, doc_id))
            rows.setdefault(qid, []).append((int(rank), doc_id, float(score)))
    out: Run = {}
    for qid, entries in rows.items():
        entries.sort(key=lambda e: e[0])
        out[qid] = [(doc_id, score) for _, doc_id, score in entries]
    return out

"""First-stage lexical retrieval: analyzer, inverted index, and BM25 scoring.

The scoring function is the saturation form without the (k1+1) numerator
constant, with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)). Defaults k1=1.75
and b=1.0 follow the retrieval setup this toolkit reproduces. The analyzer is
Unicode word segmentation (maximal runs of word characters) with optional
lowercasing; no stemming, no stopwords.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

_WORD = re.compile(r"\w+", re.UNICODE)

INDEX_FORMAT = "synthpqa-bm25-index"
INDEX_VERSION = 1


@dataclass(frozen=True)
class AnalyzerConfig:
    lowercase: bool = True


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.75
    b: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


def tokenize(text: str, cfg: AnalyzerConfig = AnalyzerConfig()) -> list[str]:
    """Split into maximal runs of Unicode word characters, lowercased by default."""
    if cfg.lowercase:
        text = text.lower()
    return _WORD.findall(text)


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[int, int]]]  # term -> [(doc ordinal, tf)], ordinal-sorted
    doc_lengths: list[int]
    avgdl: float
    doc_ids: list[str]  # ordinal -> external id
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)

    @property
    def N(self) -> int:
        return len(self.doc_ids)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def build_index(docs: list[tuple[str, str]], cfg: AnalyzerConfig = AnalyzerConfig()) -> InvertedIndex:
    """Index (id, text) pairs. Ids must be unique; ordinals follow input order."""
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    doc_lengths: list[int] = []
    doc_ids: list[str] = []
    seen: set[str] = set()
    for ordinal, (doc_id, text) in enumerate(docs):
        if doc_id in seen:
            raise ValueError(f"duplicate document id {doc_id!r}")
        seen.add(doc_id)
        terms = tokenize(text, cfg)
        doc_lengths.append(len(terms))
        doc_ids.append(doc_id)
        for term, tf in sorted(Counter(terms).items()):
            postings[term].append((ordinal, tf))
    avgdl = sum(doc_lengths) / len(doc_lengths) if doc_lengths else 0.0
    return InvertedIndex(postings=dict(postings), doc_lengths=doc_lengths,
                         avgdl=avgdl, doc_ids=doc_ids, analyzer=cfg)


def idf(index: InvertedIndex, term: str) -> float:
    df = index.df(term)
    return math.log(1.0 + (index.N - df + 0.5) / (df + 0.5))


def score(index: InvertedIndex, params: Bm25Params, query_terms: list[str], ordinal: int) -> float:
    """Score one document against the unique terms of the query."""
    if not 0 <= ordinal < index.N:
        raise IndexError(f"document ordinal {ordinal} out of range (N={index.N})")
    dl = index.doc_lengths[ordinal]
    norm = params.k1 * (1.0 - params.b + params.b * dl / index.avgdl) if index.avgdl else params.k1
    total = 0.0
    for term in sorted(set(query_terms)):
        plist = index.postings.get(term)
        if not plist:
            continue
        tf = next((f for d, f in plist if d == ordinal), 0)
        if tf == 0:
            continue
        total += idf(index, term) * tf / (tf + norm)
    return total


def search(
    index: InvertedIndex,
    params: Bm25Params,
    query: str,
    k: int,
) -> list[tuple[str, float]]:
    """Top-k (id, score) pairs, score descending, ties broken by ascending id.

    Only documents with positive score are returned, so the result holds
    min(k, number of matching documents) entries.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    accum: dict[int, float] = defaultdict(float)
    for term in sorted(set(tokenize(query, index.analyzer))):
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(index, term)
        for ordinal, tf in plist:
            dl = index.doc_lengths[ordinal]
            norm = params.k1 * (1.0 - params.b + params.b * dl / index.avgdl)
            accum[ordinal] += term_idf * tf / (tf + norm)
    ranked = sorted(
        ((index.doc_ids[ordinal], s) for ordinal, s in accum.items() if s > 0.0),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:k]


def save_index(index: InvertedIndex, path: str | Path) -> None:
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "lowercase": index.analyzer.lowercase,
        "doc_ids": index.doc_ids,
        "doc_lengths": index.doc_lengths,
        "avgdl": index.avgdl,
        "postings": {term: [[d, f] for d, f in plist] for term, plist in index.postings.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def load_index(path: str | Path) -> InvertedIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT:
        raise ValueError(f"{path}: not a {INDEX_FORMAT} file")
    if payload.get("version") != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version {payload.get('version')}")
    return InvertedIndex(
        postings={term: [(d, f) for d, f in plist] for term, plist in payload["postings"].items()},
        doc_lengths=list(payload["doc_lengths"]),
        avgdl=float(payload["avgdl"]),
        doc_ids=list(payload["doc_ids"]),
        analyzer=AnalyzerConfig(lowercase=bool(payload["lowercase"])),
    )

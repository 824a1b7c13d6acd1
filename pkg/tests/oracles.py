"""Independent reference implementations used only to check the package.

Everything here is written straight from the defining formulas with plain
loops and dicts; nothing imports the package under test. scipy appears as
an outside yardstick for the t-distribution.
"""
import math

import scipy.stats


# --- BM25 ------------------------------------------------------------------

def bm25_score(doc_tokens: list[list[str]], query_tokens: list[str],
               doc_index: int, k1: float = 1.75, b: float = 1.0) -> float:
    n_docs = len(doc_tokens)
    lengths = [len(toks) for toks in doc_tokens]
    avgdl = sum(lengths) / n_docs
    total = 0.0
    for term in sorted(set(query_tokens)):
        df = sum(1 for toks in doc_tokens if term in toks)
        if df == 0:
            continue
        tf = doc_tokens[doc_index].count(term)
        if tf == 0:
            continue
        idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
        denom = tf + k1 * (1.0 - b + b * lengths[doc_index] / avgdl)
        total += idf * tf / denom
    return total


def word_chunks(text: str) -> list[str]:
    """Maximal runs of word characters, via character classification rather
    than a regex, to cross-check the analyzer's segmentation."""
    out, cur = [], []
    for ch in text:
        if ch.isalnum() or ch == "_":
            cur.append(ch)
        elif cur:
            out.append("".join(cur))
            cur = []
    if cur:
        out.append("".join(cur))
    return out


# --- Ranking metrics ---------------------------------------------------------

def p_at_1(ranked: list[str], rels: dict[str, int]) -> float:
    if not ranked:
        return 0.0
    return 1.0 if rels.get(ranked[0], 0) >= 1 else 0.0


def ndcg_at_k(ranked: list[str], rels: dict[str, int], k: int) -> float:
    gains = sorted((r for r in rels.values() if r > 0), reverse=True)
    if not gains:
        return 0.0
    dcg = 0.0
    for i, doc in enumerate(ranked[:k], start=1):
        rel = rels.get(doc, 0)
        if rel > 0:
            dcg += rel / math.log2(i + 1)
    idcg = 0.0
    for i, g in enumerate(gains[:k], start=1):
        idcg += g / math.log2(i + 1)
    return dcg / idcg


def ap_at_k(ranked: list[str], rels: dict[str, int], k: int) -> float:
    relevant = {d for d, r in rels.items() if r >= 1}
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for i, doc in enumerate(ranked[:k], start=1):
        if doc in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


# --- Student t ---------------------------------------------------------------

def t_two_sided_p(t: float, df: int) -> float:
    return 2.0 * float(scipy.stats.t.sf(abs(t), df))


def t_critical(df: int, two_sided_alpha: float = 0.01) -> float:
    return float(scipy.stats.t.isf(two_sided_alpha / 2.0, df))


# --- BLEU / chrF -------------------------------------------------------------

def _word_ngrams(tokens: list[str], order: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(tokens) - order + 1):
        key = tuple(tokens[i:i + order])
        counts[key] = counts.get(key, 0) + 1
    return counts


def corpus_bleu(hyps: list[str], refs: list[str], max_order: int = 4,
                add_one: bool = False) -> float:
    matches = [0] * (max_order + 1)
    hyp_totals = [0] * (max_order + 1)
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        h_toks = hyp.split()
        r_toks = ref.split()
        hyp_len += len(h_toks)
        ref_len += len(r_toks)
        for order in range(1, max_order + 1):
            h_counts = _word_ngrams(h_toks, order)
            r_counts = _word_ngrams(r_toks, order)
            for gram, cnt in h_counts.items():
                matches[order] += min(cnt, r_counts.get(gram, 0))
                hyp_totals[order] += cnt

    log_sum = 0.0
    used = 0
    for order in range(1, max_order + 1):
        if hyp_totals[order] == 0:
            continue
        used += 1
        if add_one and order >= 2:
            prec = (matches[order] + 1.0) / (hyp_totals[order] + 1.0)
        else:
            if matches[order] == 0:
                return 0.0
            prec = matches[order] / hyp_totals[order]
        log_sum += math.log(prec)
    if used == 0 or hyp_len == 0:
        return 0.0
    geo = math.exp(log_sum / used)
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * geo


def _char_ngrams(text: str, order: int) -> dict[str, int]:
    counts: dict[str, int] = {}
    for i in range(len(text) - order + 1):
        key = text[i:i + order]
        counts[key] = counts.get(key, 0) + 1
    return counts


def chrf(hyps: list[str], refs: list[str], max_order: int = 6,
         beta: float = 2.0) -> float:
    matches = [0] * (max_order + 1)
    hyp_totals = [0] * (max_order + 1)
    ref_totals = [0] * (max_order + 1)
    for hyp, ref in zip(hyps, refs):
        h = "".join(hyp.split())
        r = "".join(ref.split())
        for order in range(1, max_order + 1):
            h_counts = _char_ngrams(h, order)
            r_counts = _char_ngrams(r, order)
            for gram, cnt in h_counts.items():
                matches[order] += min(cnt, r_counts.get(gram, 0))
            hyp_totals[order] += sum(h_counts.values())
            ref_totals[order] += sum(r_counts.values())

    precisions, recalls = [], []
    for order in range(1, max_order + 1):
        if hyp_totals[order] == 0 and ref_totals[order] == 0:
            continue
        precisions.append(matches[order] / hyp_totals[order] if hyp_totals[order] else 0.0)
        recalls.append(matches[order] / ref_totals[order] if ref_totals[order] else 0.0)
    if not precisions:
        return 0.0
    p = sum(precisions) / len(precisions)
    r = sum(recalls) / len(recalls)
    denom = beta * beta * p + r
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta * beta) * p * r / denom

"""Diversity and overlap analysis between answer sets.

Corpus BLEU and chrF quantify how much two aligned answer sets (same
questions, different prompt strategies) resemble each other; lexical overlap
measures how much of the question's wording an answer repeats. BLEU and chrF
follow their defining publications: word 4-grams with brevity penalty and no
smoothing, and character 6-grams with beta = 2 over whitespace-stripped text.
Both accumulate counts over the whole corpus before combining.
"""

from __future__ import annotations

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .bm25 import AnalyzerConfig, tokenize
from .corpus import Answer, Question
from .prompt import BASIC, CONTEXTUAL, PERSONALIZED

log = logging.getLogger(__name__)

BLEU_MAX_ORDER = 4
CHRF_MAX_ORDER = 6
CHRF_BETA = 2.0

# row/column order of the pairwise prompt comparisons
PAIR_ORDER: tuple[tuple[str, str], ...] = (
    (BASIC, CONTEXTUAL),
    (BASIC, PERSONALIZED),
    (CONTEXTUAL, PERSONALIZED),
)

_WS = re.compile(r"\s+")


def _word_ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hypotheses: Sequence[str],
    references: Sequence[str],
    max_order: int = BLEU_MAX_ORDER,
    smoothing: str = "none",
) -> float:
    """Corpus-level BLEU in [0, 1] over aligned (hypothesis, reference) pairs.

    Geometric mean of modified n-gram precisions for n = 1..max_order times
    the brevity penalty. Counts are pooled over all pairs before dividing.
    Orders for which the hypothesis corpus has no n-grams at all are dropped
    from the mean; with smoothing "none" any remaining zero precision makes
    the score 0, while "add-one" replaces p_n with (m+1)/(t+1) for n >= 2.
    Tokens are whitespace-separated and case-sensitive.
    """
    if not hypotheses or not references:
        raise ValueError("hypotheses and references must be non-empty")
    if len(hypotheses) != len(references):
        raise ValueError(
            f"aligned lists required: {len(hypotheses)} hypotheses vs {len(references)} references")
    if smoothing not in ("none", "add-one"):
        raise ValueError(f"smoothing must be 'none' or 'add-one', got {smoothing!r}")

    matches = [0] * (max_order + 1)
    totals = [0] * (max_order + 1)
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = hyp.split()
        ref_tokens = ref.split()
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        for n in range(1, max_order + 1):
            hyp_counts = _word_ngrams(hyp_tokens, n)
            if not hyp_counts:
                continue
            ref_counts = _word_ngrams(ref_tokens, n)
            totals[n] += sum(hyp_counts.values())
            matches[n] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    used_orders = 0
    for n in range(1, max_order + 1):
        if totals[n] == 0:
            continue  # the hypothesis corpus is too short to form these n-grams
        if smoothing == "add-one" and n >= 2:
            precision = (matches[n] + 1.0) / (totals[n] + 1.0)
        else:
            if matches[n] == 0:
                return 0.0
            precision = matches[n] / totals[n]
        log_sum += math.log(precision)
        used_orders += 1
    if used_orders == 0:
        return 0.0
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return brevity * math.exp(log_sum / used_orders)


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def chrf(
    hypotheses: Sequence[str],
    references: Sequence[str],
    max_order: int = CHRF_MAX_ORDER,
    beta: float = CHRF_BETA,
) -> float:
    """Corpus chrF in [0, 100]: character n-gram F-score, whitespace ignored.

    Per order, match/total counts are pooled over the corpus; precision and
    recall are then macro-averaged across orders that have any n-grams on
    either side, and combined as (1 + b^2) P R / (b^2 P + R) * 100.
    """
    if not hypotheses or not references:
        raise ValueError("hypotheses and references must be non-empty")
    if len(hypotheses) != len(references):
        raise ValueError(
            f"aligned lists required: {len(hypotheses)} hypotheses vs {len(references)} references")

    matches = [0] * (max_order + 1)
    hyp_totals = [0] * (max_order + 1)
    ref_totals = [0] * (max_order + 1)
    for hyp, ref in zip(hypotheses, references):
        hyp_chars = _WS.sub("", hyp)
        ref_chars = _WS.sub("", ref)
        for n in range(1, max_order + 1):
            hyp_counts = _char_ngrams(hyp_chars, n)
            ref_counts = _char_ngrams(ref_chars, n)
            hyp_totals[n] += sum(hyp_counts.values())
            ref_totals[n] += sum(ref_counts.values())
            matches[n] += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())

    precisions: list[float] = []
    recalls: list[float] = []
    for n in range(1, max_order + 1):
        if hyp_totals[n] == 0 and ref_totals[n] == 0:
            continue  # neither corpus is long enough for this order
        precisions.append(matches[n] / hyp_totals[n] if hyp_totals[n] else 0.0)
        recalls.append(matches[n] / ref_totals[n] if ref_totals[n] else 0.0)
    if not precisions:
        return 0.0
    precision = sum(precisions) / len(precisions)
    recall = sum(recalls) / len(recalls)
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta * beta) * precision * recall / denom


def lexical_overlap(query_body: str, answer: str,
                    analyzer: AnalyzerConfig = AnalyzerConfig()) -> float:
    """Percentage of the query's unique terms that appear in the answer."""
    query_terms = set(tokenize(query_body, analyzer))
    if not query_terms:
        log.warning("lexical_overlap: query has no terms, returning 0")
        return 0.0
    answer_terms = set(tokenize(answer, analyzer))
    return 100.0 * len(query_terms & answer_terms) / len(query_terms)


@dataclass(frozen=True)
class PairCell:
    hyp_prompt: str  # hypothesis side (table row)
    ref_prompt: str  # reference side (table column)
    bleu: float
    chrf: float


@dataclass
class DiversityReport:
    orientation: str
    models: list[str]
    cells: dict[str, list[PairCell]]  # model -> pairwise comparisons
    overlap_means: dict[str, dict[str, float]]  # model -> prompt -> mean %


def _group_answers(answers: Iterable[Answer]) -> dict[tuple[str, str], dict[str, str]]:
    groups: dict[tuple[str, str], dict[str, str]] = {}
    for ans in answers:
        key = (ans.model_name, ans.prompt_type)
        bucket = groups.setdefault(key, {})
        if ans.question_id in bucket:
            raise ValueError(
                f"multiple answers from {key} for question {ans.question_id!r}")
        bucket[ans.question_id] = ans.text
    return groups


def diversity_report(
    answers: Iterable[Answer],
    questions: Iterable[Question],
    smoothing: str = "none",
) -> DiversityReport:
    """Pairwise BLEU/chrF between prompt strategies plus per-group overlap.

    Every (model, prompt) group must answer the same question set; gaps are
    reported by id. In each comparison the first-named prompt's answers are
    the hypotheses and the second-named prompt's the references.
    """
    question_map = {q.id: q for q in questions}
    groups = _group_answers(answers)
    if not groups:
        raise ValueError("no generated answers to analyze")

    all_qids = sorted({qid for bucket in groups.values() for qid in bucket})
    for key, bucket in sorted(groups.items()):
        missing = [qid for qid in all_qids if qid not in bucket]
        if missing:
            raise ValueError(f"group {key} is missing answers for: {missing}")
    unknown = [qid for qid in all_qids if qid not in question_map]
    if unknown:
        raise ValueError(f"answers reference unknown questions: {unknown}")

    models = sorted({model for model, _ in groups})
    cells: dict[str, list[PairCell]] = {}
    overlap_means: dict[str, dict[str, float]] = {}
    for model in models:
        row: list[PairCell] = []
        for hyp_prompt, ref_prompt in PAIR_ORDER:
            hyp_group = groups.get((model, hyp_prompt))
            ref_group = groups.get((model, ref_prompt))
            if hyp_group is None or ref_group is None:
                continue
            hyps = [hyp_group[qid] for qid in all_qids]
            refs = [ref_group[qid] for qid in all_qids]
            row.append(PairCell(
                hyp_prompt=hyp_prompt, ref_prompt=ref_prompt,
                bleu=corpus_bleu(hyps, refs, smoothing=smoothing),
                chrf=chrf(hyps, refs),
            ))
        cells[model] = row
        means: dict[str, float] = {}
        for (m, prompt), bucket in sorted(groups.items()):
            if m != model:
                continue
            values = [lexical_overlap(question_map[qid].body, text)
                      for qid, text in sorted(bucket.items())]
            means[prompt] = sum(values) / len(values) if values else 0.0
        overlap_means[model] = means

    return DiversityReport(
        orientation="hypothesis=first prompt (row), reference=second prompt (column)",
        models=models, cells=cells, overlap_means=overlap_means,
    )


def render_diversity_report(report: DiversityReport) -> tuple[str, str]:
    """Markdown and TSV renderings of the pairwise matrices and overlap means."""
    md: list[str] = ["# Answer diversity", "", f"Orientation: {report.orientation}", ""]
    tsv: list[str] = ["model\thyp_prompt\tref_prompt\tbleu\tchrf"]
    md.append("| model | pair | BLEU | chrF |")
    md.append("| --- | --- | --- | --- |")
    for model in report.models:
        for cell in report.cells[model]:
            pair = f"{cell.hyp_prompt} vs {cell.ref_prompt}"
            md.append(f"| {model} | {pair} | {cell.bleu:.4f} | {cell.chrf:.2f} |")
            tsv.append(f"{model}\t{cell.hyp_prompt}\t{cell.ref_prompt}"
                       f"\t{cell.bleu:.6f}\t{cell.chrf:.6f}")
    md += ["", "| model | prompt | mean overlap % |", "| --- | --- | --- |"]
    tsv.append("model\tprompt\tmean_overlap_pct")
    for model in report.models:
        for prompt, mean in sorted(report.overlap_means[model].items()):
            md.append(f"| {model} | {prompt} | {mean:.2f} |")
            tsv.append(f"{model}\t{prompt}\t{mean:.6f}")
    return "\n".join(md) + "\n", "\n".join(tsv) + "\n"

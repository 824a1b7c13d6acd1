"""Rank-quality metrics (P@1, NDCG@k, MAP@k) and paired significance testing.

DCG uses linear gain rel_i / log2(i+1). Average precision divides by the total
relevant count for a query, so judged-relevant documents missing from the run
still count against it. The paired t-test is two-sided with a sample standard
deviation (n-1) and Bonferroni adjustment p_adj = min(1, m*p); the Student-t
CDF is computed here via the continued-fraction regularized incomplete beta
so no numerical library is needed at runtime.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

log = logging.getLogger(__name__)

DEFAULT_METRICS = ("P@1", "NDCG@3", "NDCG@10", "MAP@100")


def precision_at_1(ranked_ids: list[str], relevant: set[str]) -> float:
    if not ranked_ids:
        return 0.0
    return 1.0 if ranked_ids[0] in relevant else 0.0


def ndcg_at_k(ranked_ids: list[str], relevances: dict[str, int], k: int) -> float:
    """Normalized DCG with linear gain; 0.0 when the query has no relevant docs."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gains = sorted((rel for rel in relevances.values() if rel > 0), reverse=True)
    if not gains:
        return 0.0
    dcg = 0.0
    for i, doc_id in enumerate(ranked_ids[:k], start=1):
        rel = relevances.get(doc_id, 0)
        if rel > 0:
            dcg += rel / math.log2(i + 1)
    idcg = sum(rel / math.log2(i + 1) for i, rel in enumerate(gains[:k], start=1))
    return dcg / idcg


def map_at_k(
    ranked_ids: list[str],
    relevant: set[str],
    k: int = 100,
    total_relevant: int | None = None,
) -> float:
    """Average precision at cutoff k over the query's total relevant count."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    r = total_relevant if total_relevant is not None else len(relevant)
    if r == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for i, doc_id in enumerate(ranked_ids[:k], start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / i
    return precision_sum / r


def _parse_metric(metric_id: str) -> tuple[str, int]:
    name, _, cutoff = metric_id.partition("@")
    name = name.strip().upper()
    if name not in ("P", "NDCG", "MAP"):
        raise ValueError(f"unknown metric {metric_id!r}")
    k = int(cutoff) if cutoff else (1 if name == "P" else 100)
    if name == "P" and k != 1:
        raise ValueError(f"only P@1 is supported, got {metric_id!r}")
    return name, k


def metric_value(metric_id: str, ranked_ids: list[str], relevances: dict[str, int]) -> float:
    """Evaluate one metric id (e.g. 'NDCG@10') for a single query."""
    name, k = _parse_metric(metric_id)
    relevant = {doc_id for doc_id, rel in relevances.items() if rel >= 1}
    if name == "P":
        return precision_at_1(ranked_ids, relevant)
    if name == "NDCG":
        return ndcg_at_k(ranked_ids, relevances, k)
    return map_at_k(ranked_ids, relevant, k)


@dataclass
class MetricReport:
    metric_ids: tuple[str, ...]
    per_query: dict[str, dict[str, float]]  # metric -> {query_id: value}
    means: dict[str, float]
    evaluated_queries: list[str]
    skipped_no_relevant: list[str]


def evaluate_run(
    run: dict[str, list[tuple[str, float]]],
    qrels: dict[str, dict[str, int]],
    metric_ids: tuple[str, ...] = DEFAULT_METRICS,
    exclude_no_relevant: bool = True,
) -> MetricReport:
    """Per-query metric values plus arithmetic means over the evaluated queries.

    Queries whose judgments contain no relevant document are skipped (and
    logged) unless exclude_no_relevant is off. Queries absent from the run
    evaluate against an empty ranking.
    """
    per_query: dict[str, dict[str, float]] = {m: {} for m in metric_ids}
    evaluated: list[str] = []
    skipped: list[str] = []
    for qid in sorted(qrels):
        relevances = qrels[qid]
        if exclude_no_relevant and not any(rel >= 1 for rel in relevances.values()):
            skipped.append(qid)
            continue
        ranked_ids = [doc_id for doc_id, _ in run.get(qid, [])]
        evaluated.append(qid)
        for m in metric_ids:
            per_query[m][qid] = metric_value(m, ranked_ids, relevances)
    if skipped:
        log.info("evaluation skipped %d queries with no relevant documents", len(skipped))
    means = {
        m: (sum(per_query[m].values()) / len(evaluated) if evaluated else 0.0)
        for m in metric_ids
    }
    return MetricReport(metric_ids=tuple(metric_ids), per_query=per_query, means=means,
                        evaluated_queries=evaluated, skipped_no_relevant=skipped)


# --- Student-t machinery -------------------------------------------------

_FPMIN = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta function."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf_two_sided(t: float, df: int) -> float:
    """P(|T| >= |t|) for T ~ Student-t with df degrees of freedom."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc_regularized(df / 2.0, 0.5, x)


def student_t_cdf(t: float, df: int) -> float:
    half = 0.5 * student_t_sf_two_sided(t, df)
    return 1.0 - half if t >= 0.0 else half


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    p_adjusted: float
    significant: bool
    n: int
    degenerate: bool = False  # zero-variance difference vector


def paired_ttest_bonferroni(
    a: dict[str, float],
    b: dict[str, float],
    num_comparisons: int,
    alpha: float = 0.01,
) -> TTestResult:
    """Two-sided paired t-test of per-query scores a vs b, Bonferroni-adjusted.

    Both score maps must cover the same queries. A zero-variance difference is
    degenerate: p=1 when the mean difference is also zero, otherwise the
    difference is constant and treated as significant by convention.
    """
    if num_comparisons < 1:
        raise ValueError(f"num_comparisons must be >= 1, got {num_comparisons}")
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))[:5]
        only_b = sorted(set(b) - set(a))[:5]
        raise ValueError(f"query sets differ (a-only {only_a}, b-only {only_b})")
    n = len(a)
    if n < 2:
        raise ValueError(f"need at least 2 paired queries, got {n}")
    diffs = [a[q] - b[q] for q in sorted(a)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, p_adjusted=1.0, significant=False,
                               n=n, degenerate=True)
        log.warning("paired t-test: zero variance with nonzero mean difference %.6g", mean)
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, p_adjusted=0.0,
                           significant=True, n=n, degenerate=True)
    t = mean / math.sqrt(var / n)
    p = student_t_sf_two_sided(t, n - 1)
    p_adj = min(1.0, num_comparisons * p)
    return TTestResult(t=t, p=p, p_adjusted=p_adj, significant=p_adj < alpha, n=n)


# --- Report rendering ----------------------------------------------------

def comparison_table(
    baseline_name: str,
    baseline: MetricReport,
    candidates: dict[str, MetricReport],
    alpha: float = 0.01,
    metric_ids: tuple[str, ...] = DEFAULT_METRICS,
    lambdas: dict[str, float] | None = None,
) -> tuple[str, str]:
    """Markdown and TSV tables of metric means, starring significant gains.

    One t-test per (candidate, metric); the Bonferroni m is the total number
    of tests in this invocation. A star marks candidates whose adjusted p
    beats alpha and whose mean improves on the baseline. When a run was
    produced by score fusion its lambda lands in an extra column.
    """
    m = max(1, len(candidates) * len(metric_ids))
    headers = list(metric_ids) + (["lambda"] if lambdas else [])

    def _lam(name: str) -> list[str]:
        if not lambdas:
            return []
        return [f"{lambdas[name]:g}" if name in lambdas else "-"]

    md_rows = ["| Run | " + " | ".join(headers) + " |",
               "|---" * (len(headers) + 1) + "|"]
    tsv_rows = ["run\t" + "\t".join(headers)]
    base_cells = [f"{baseline.means[mid]:.4f}" for mid in metric_ids] + _lam(baseline_name)
    md_rows.append(f"| {baseline_name} | " + " | ".join(base_cells) + " |")
    tsv_rows.append(baseline_name + "\t" + "\t".join(base_cells))
    for name in sorted(candidates):
        report = candidates[name]
        cells = []
        for mid in metric_ids:
            result = paired_ttest_bonferroni(report.per_query[mid], baseline.per_query[mid],
                                             num_comparisons=m, alpha=alpha)
            star = "*" if result.significant and report.means[mid] > baseline.means[mid] else ""
            cells.append(f"{report.means[mid]:.4f}{star}")
        cells += _lam(name)
        md_rows.append(f"| {name} | " + " | ".join(cells) + " |")
        tsv_rows.append(name + "\t" + "\t".join(cells))
    return "\n".join(md_rows) + "\n", "\n".join(tsv_rows) + "\n"

"""Ranked-retrieval quality metrics: average precision, R-precision,
NDCG, and ROC-AUC."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence


class UndefinedMetricError(ValueError):
    """A metric that is mathematically undefined for the given input."""


def average_precision(presented: Sequence[str], relevant: Iterable[str]) -> float:
    """Average precision of a presentation order against a relevant set.

    Precision is accumulated at each rank holding a relevant document and
    divided by the total number of relevant documents, so unretrieved
    relevant documents contribute zero.
    """
    relevant_set = set(relevant)
    if not relevant_set:
        raise ValueError("the relevant set must be non-empty")
    hits = 0
    total = 0.0
    seen: set[str] = set()
    rank = 0
    for doc_id in presented:
        if doc_id in seen:
            continue
        seen.add(doc_id)
        rank += 1
        if doc_id in relevant_set:
            hits += 1
            total += hits / rank
    return total / len(relevant_set)


def r_precision(presented: Sequence[str], relevant: Iterable[str]) -> float:
    """Precision at rank R, where R is the number of relevant documents."""
    relevant_set = set(relevant)
    if not relevant_set:
        raise ValueError("the relevant set must be non-empty")
    cutoff = len(relevant_set)
    head = list(dict.fromkeys(presented))[:cutoff]
    return sum(1 for doc_id in head if doc_id in relevant_set) / cutoff


def ndcg(presented: Sequence[str], grades: Mapping[str, int], cutoff: int | None = None) -> float:
    """Normalized discounted cumulative gain with log2 discount and
    gain equal to the relevance grade.

    The ideal ordering ranks every graded document by grade, so relevant
    documents never retrieved still count against the score. Returns 0.0
    when no positive grades exist.
    """
    ranking = list(dict.fromkeys(presented))
    if cutoff is not None:
        if cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        ranking = ranking[:cutoff]
    dcg = sum(grades.get(doc_id, 0) / math.log2(rank + 1) for rank, doc_id in enumerate(ranking, start=1))
    ideal = sorted(grades.values(), reverse=True)
    if cutoff is not None:
        ideal = ideal[:cutoff]
    idcg = sum(grade / math.log2(rank + 1) for rank, grade in enumerate(ideal, start=1))
    if idcg <= 0.0:
        return 0.0
    return dcg / idcg


def roc_auc(scored: Iterable[tuple[float, bool]], lower_is_better: bool = False) -> float:
    """Area under the ROC curve from ``(score, is_relevant)`` pairs.

    Computed as the Mann-Whitney rank statistic with midranks, so exact
    score ties contribute 0.5 per pair. Set ``lower_is_better`` when a
    smaller score signals relevance (as with relevance error). Raises
    :class:`UndefinedMetricError` when either class is empty.
    """
    pairs = [((-s if lower_is_better else s), bool(rel)) for s, rel in scored]
    n_pos = sum(1 for _, rel in pairs if rel)
    n_neg = len(pairs) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC is undefined when one class is empty")
    pairs.sort(key=lambda p: p[0])
    rank_sum_pos = 0.0
    i = 0
    n = len(pairs)
    while i < n:
        j = i
        while j < n and pairs[j][0] == pairs[i][0]:
            j += 1
        mid_rank = (i + 1 + j) / 2.0
        rank_sum_pos += mid_rank * sum(1 for k in range(i, j) if pairs[k][1])
        i = j
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

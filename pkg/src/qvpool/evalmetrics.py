"""Effectiveness metrics (P@k, NDCG@k, RBP with residual) and RBO consistency."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Sequence

from .corpusio import JudgmentSet, RankedRun

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EffectivenessScore:
    topic_id: str
    variant_index: int
    p_at_k: float
    ndcg_at_k: float
    rbp_base: float
    rbp_residual: float


@dataclass(frozen=True)
class RboScore:
    topic_id: str
    mean_rbo: float
    num_pairs: int


@dataclass(frozen=True)
class AggregateScores:
    """Micro (over all topic/variant scores) or macro (over topic means) means."""

    aggregation: str
    p_at_k: float
    ndcg_at_k: float
    rbp_base: float
    rbp_residual: float
    n: int


def _doc_ids(run) -> list[str]:
    return run.doc_ids if isinstance(run, RankedRun) else list(run)


def precision_at_k(run, qrels: JudgmentSet, k: int, topic_id: str | None = None) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    topic = run.topic_id if topic_id is None else topic_id
    return sum(qrels.is_relevant(topic, d) for d in _doc_ids(run)[:k]) / k


def ndcg_at_k(
    run, qrels: JudgmentSet, k: int, topic_id: str | None = None, *, exponential_gain: bool = False
) -> float:
    """NDCG with linear gain (``2**g - 1`` with ``exponential_gain``).

    The ideal ranking is built from every judged document of the topic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    topic = run.topic_id if topic_id is None else topic_id

    def gain(g: int) -> float:
        return (2**g - 1) if exponential_gain else g

    judged = qrels.topic_grades(topic)
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    if not ideal:
        log.debug("topic %s has no relevant documents; NDCG is 0", topic)
        return 0.0
    idcg = sum(gain(g) / math.log2(i + 2) for i, g in enumerate(ideal))
    dcg = 0.0
    for i, d in enumerate(_doc_ids(run)[:k]):
        g = judged.get(d, 0)
        if g:
            dcg += gain(g) / math.log2(i + 2)
    return dcg / idcg


def rbp(
    run, qrels: JudgmentSet, p: float = 0.9, topic_id: str | None = None
) -> tuple[float, float]:
    """Rank-biased precision and its residual.

    Relevance is binary (grade >= 1). The residual collects the weight of
    unjudged ranks plus ``p**d`` for everything beyond the retrieved depth d.
    """
    if not 0 < p < 1:
        raise ValueError(f"RBP persistence must lie in (0, 1), got {p}")
    topic = run.topic_id if topic_id is None else topic_id
    base = 0.0
    residual = 0.0
    weight = 1 - p
    docs = _doc_ids(run)
    for d in docs:
        g = qrels.grade(topic, d)
        if g is None:
            residual += weight
        elif g >= 1:
            base += weight
        weight *= p
    return base, residual + p ** len(docs)


def rbo(list_a: Sequence[str], list_b: Sequence[str], p: float = 0.9) -> float:
    """Extrapolated rank-biased overlap.

    Both lists are evaluated to depth d = min(len(a), len(b)); agreement at
    depth d is assumed to persist beyond it.
    """
    if not 0 < p < 1:
        raise ValueError(f"RBO persistence must lie in (0, 1), got {p}")
    for name, lst in (("a", list_a), ("b", list_b)):
        if len(set(lst)) != len(lst):
            raise ValueError(f"ranking {name} contains duplicate ids")
    d = min(len(list_a), len(list_b))
    if d == 0:
        return 1.0 if len(list_a) == len(list_b) else 0.0
    seen_a: set[str] = set()
    seen_b: set[str] = set()
    overlap = 0
    total = 0.0
    weight = 1.0
    for k in range(1, d + 1):
        x, y = list_a[k - 1], list_b[k - 1]
        if x == y:
            overlap += 1
        else:
            overlap += (x in seen_b) + (y in seen_a)
        seen_a.add(x)
        seen_b.add(y)
        weight *= p
        total += overlap / k * weight
    agreement_d = overlap / d
    return min(1.0, (1 - p) / p * total + agreement_d * p**d)


def topic_rbo(runs: Sequence[RankedRun], p: float = 0.9, depth: int = 1000) -> RboScore:
    """Mean RBO over all unordered pairs of a topic's variant runs."""
    if len(runs) < 2:
        raise ValueError(f"topic RBO needs at least 2 variants, got {len(runs)}")
    topics = {r.topic_id for r in runs}
    if len(topics) != 1:
        raise ValueError(f"runs span several topics: {sorted(topics)}")
    lists = [r.doc_ids[:depth] for r in runs]
    values = [rbo(a, b, p) for a, b in itertools.combinations(lists, 2)]
    return RboScore(runs[0].topic_id, sum(values) / len(values), len(values))


def score_run(run: RankedRun, qrels: JudgmentSet, k: int = 10, p: float = 0.9, **kw) -> EffectivenessScore:
    base, residual = rbp(run, qrels, p)
    return EffectivenessScore(
        run.topic_id,
        run.variant_index,
        precision_at_k(run, qrels, k),
        ndcg_at_k(run, qrels, k, **kw),
        base,
        residual,
    )


_FIELDS = ("p_at_k", "ndcg_at_k", "rbp_base", "rbp_residual")


def per_topic_means(scores: Sequence[EffectivenessScore]) -> dict[str, dict[str, float]]:
    """topic -> metric -> mean over that topic's variants."""
    grouped: dict[str, list[EffectivenessScore]] = {}
    for s in scores:
        grouped.setdefault(s.topic_id, []).append(s)
    return {
        t: {f: sum(getattr(s, f) for s in ss) / len(ss) for f in _FIELDS}
        for t, ss in sorted(grouped.items())
    }


def aggregate_scores(scores: Sequence[EffectivenessScore]) -> tuple[AggregateScores, AggregateScores]:
    """Return ``(micro, macro)`` means."""
    if not scores:
        raise ValueError("no scores to aggregate")
    n = len(scores)
    micro = AggregateScores("micro", *(sum(getattr(s, f) for s in scores) / n for f in _FIELDS), n)
    topic_means = per_topic_means(scores)
    nt = len(topic_means)
    macro = AggregateScores(
        "macro", *(sum(m[f] for m in topic_means.values()) / nt for f in _FIELDS), nt
    )
    return micro, macro

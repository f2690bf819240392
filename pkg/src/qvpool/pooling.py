"""Document pools built across query variants: overlap, properties, growth."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpusio import JudgmentSet, RankedRun

log = logging.getLogger(__name__)

DEFAULT_DEPTHS = tuple(range(10, 101, 10))


@dataclass(frozen=True)
class Pool:
    topic_id: str
    depth: int
    doc_ids: frozenset[str]
    contributing_variants: int

    def __len__(self):
        return len(self.doc_ids)


@dataclass(frozen=True)
class PoolProperties:
    size: float
    frac_relevant: float
    frac_unjudged: float


@dataclass(frozen=True)
class OverlapPoint:
    depth: int
    mean_jaccard: float
    per_topic: Mapping[str, float]
    excluded_topics: tuple[str, ...] = ()


@dataclass(frozen=True)
class GrowthCurve:
    depth: int
    points: tuple[tuple[int, float], ...]
    orderings: int
    seed: int | None


def group_by_topic(runs: Sequence[RankedRun]) -> dict[str, list[RankedRun]]:
    out: dict[str, list[RankedRun]] = {}
    for r in runs:
        out.setdefault(r.topic_id, []).append(r)
    return out


def _dedup(runs: Sequence[RankedRun]) -> list[RankedRun]:
    # one run per variant index; batch_run already collapses duplicate strings
    seen: dict[int, RankedRun] = {}
    for r in runs:
        seen.setdefault(r.variant_index, r)
    return [seen[k] for k in sorted(seen)]


def build_pool(runs: Sequence[RankedRun], depth: int) -> Pool:
    """Union of the top-``depth`` documents of one topic's variant runs."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if not runs:
        raise ValueError("no runs to pool")
    topics = {r.topic_id for r in runs}
    if len(topics) != 1:
        raise ValueError(f"runs span several topics: {sorted(topics)}")
    runs = _dedup(runs)
    docs: set[str] = set()
    for r in runs:
        docs.update(r.doc_ids[:depth])
    return Pool(runs[0].topic_id, depth, frozenset(docs), len(runs))


def build_pools(runs: Sequence[RankedRun], depth: int) -> dict[str, Pool]:
    return {t: build_pool(rs, depth) for t, rs in sorted(group_by_topic(runs).items())}


def filter_relevant(pool: Pool, qrels: JudgmentSet) -> Pool:
    docs = frozenset(d for d in pool.doc_ids if qrels.is_relevant(pool.topic_id, d))
    return Pool(pool.topic_id, pool.depth, docs, pool.contributing_variants)


def pool_overlap(
    runs_a: Sequence[RankedRun],
    runs_b: Sequence[RankedRun],
    depths: Sequence[int] = DEFAULT_DEPTHS,
    relevance_filter: JudgmentSet | None = None,
) -> list[OverlapPoint]:
    """Mean per-topic Jaccard between the pools of two variant sets, per depth.

    With ``relevance_filter`` only documents graded >= 1 are kept. Topics
    whose two pools are both empty are left out of the mean.
    """
    by_a, by_b = group_by_topic(runs_a), group_by_topic(runs_b)
    if set(by_a) != set(by_b):
        raise ValueError(f"pool topic mismatch: {sorted(set(by_a) ^ set(by_b))}")
    points = []
    for depth in depths:
        per_topic: dict[str, float] = {}
        excluded = []
        for t in sorted(by_a):
            pa, pb = build_pool(by_a[t], depth), build_pool(by_b[t], depth)
            if relevance_filter is not None:
                pa, pb = filter_relevant(pa, relevance_filter), filter_relevant(pb, relevance_filter)
            union = pa.doc_ids | pb.doc_ids
            if not union:
                excluded.append(t)
                continue
            per_topic[t] = len(pa.doc_ids & pb.doc_ids) / len(union)
        if excluded:
            log.warning("depth %d: %d topic(s) with two empty pools excluded: %s", depth, len(excluded), excluded)
        mean = sum(per_topic.values()) / len(per_topic) if per_topic else float("nan")
        points.append(OverlapPoint(depth, mean, per_topic, tuple(excluded)))
    return points


def pool_properties(pools: Mapping[str, Pool] | Sequence[Pool], qrels: JudgmentSet) -> PoolProperties:
    """Mean pool size and mean per-topic fractions of relevant/unjudged documents.

    Empty pools count as size 0 with both fractions 0.
    """
    pools = list(pools.values()) if isinstance(pools, Mapping) else list(pools)
    if not pools:
        raise ValueError("no pools")
    sizes, rel, unj = [], [], []
    for pool in pools:
        n = len(pool.doc_ids)
        sizes.append(n)
        if n == 0:
            rel.append(0.0)
            unj.append(0.0)
            continue
        grades = [qrels.grade(pool.topic_id, d) for d in pool.doc_ids]
        rel.append(sum(1 for g in grades if g is not None and g >= 1) / n)
        unj.append(sum(1 for g in grades if g is None) / n)
    k = len(pools)
    return PoolProperties(sum(sizes) / k, sum(rel) / k, sum(unj) / k)


def _pool_sizes_along(order: Sequence[RankedRun], depth: int, upto: int) -> list[int]:
    docs: set[str] = set()
    sizes = []
    for m in range(upto):
        if m < len(order):
            docs.update(order[m].doc_ids[:depth])
        sizes.append(len(docs))
    return sizes


def variant_orderings(
    runs: Sequence[RankedRun], num_orderings: int, seed: int | None, topic_id: str
) -> list[list[RankedRun]]:
    """Orderings of one topic's runs; ``seed=None`` keeps the collection order."""
    if seed is None:
        return [list(runs)]
    rng = random.Random(f"{seed}:{topic_id}")
    out = []
    for _ in range(num_orderings):
        order = list(runs)
        rng.shuffle(order)
        out.append(order)
    return out


def growth_curve(
    runs: Sequence[RankedRun],
    depth: int = 10,
    num_orderings: int = 50,
    seed: int | None = 0,
    cutoff: int | None = None,
) -> GrowthCurve:
    """Mean pool size as variants are added one at a time.

    For each topic the unique variant runs are shuffled ``num_orderings``
    times (seeded per topic); the size of the pool formed by the first m
    variants is averaged over orderings and then over topics. A topic with
    fewer than m variants contributes its full pool. ``seed=None`` uses the
    variant order as given, once.
    """
    if num_orderings < 1:
        raise ValueError("num_orderings must be >= 1")
    by_topic = {t: _dedup(rs) for t, rs in sorted(group_by_topic(runs).items())}
    if not by_topic:
        return GrowthCurve(depth, (), num_orderings, seed)
    max_m = max(len(rs) for rs in by_topic.values())
    if cutoff is not None:
        max_m = min(max_m, cutoff)
    totals = [0.0] * max_m
    for t, rs in by_topic.items():
        orders = variant_orderings(rs, num_orderings, seed, t)
        acc = [0] * max_m
        for order in orders:
            for m, size in enumerate(_pool_sizes_along(order, depth, max_m)):
                acc[m] += size
        for m in range(max_m):
            totals[m] += acc[m] / len(orders)
    n = len(by_topic)
    points = tuple((m + 1, totals[m] / n) for m in range(max_m))
    return GrowthCurve(depth, points, num_orderings if seed is not None else 1, seed)

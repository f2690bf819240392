"""Query canonicalization levels T0-T4 and query-set similarity.

Each level cumulatively relaxes the matching condition:

    T0  trimmed, whitespace collapsed, lowercased (unless case-sensitive)
    T1  + punctuation and symbol characters removed
    T2  + Porter stemming of every token
    T3  + stop words removed (falls back to the T2 tokens if nothing is left)
    T4  + tokens sorted, so word order no longer matters

Every level is a function of the level below it, so two queries that match
at level L also match at every level above L.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import unicodedata
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpusio import VariantSet
from .porter import stem

log = logging.getLogger(__name__)

# Lucene's default English stop set (EnglishAnalyzer.ENGLISH_STOP_WORDS_SET).
STOP_WORDS: tuple[str, ...] = (
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "if",
    "in", "into", "is", "it", "no", "not", "of", "on", "or", "such", "that",
    "the", "their", "then", "there", "these", "they", "this", "to", "was",
    "will", "with",
)
STOP_SET = frozenset(STOP_WORDS)
# stop words as they look after stemming ("this" -> "thi", "was" -> "wa")
STEMMED_STOP_SET = frozenset(stem(w) for w in STOP_WORDS) | STOP_SET


def analyzer_fingerprint() -> str:
    """Hash identifying the stemmer and stop list shared with the engine."""
    h = hashlib.sha256()
    h.update(b"porter-1980-fixedpoint\n")
    h.update("\n".join(STOP_WORDS).encode("utf-8"))
    return h.hexdigest()


class NormLevel(enum.IntEnum):
    T0 = 0
    T1 = 1
    T2 = 2
    T3 = 3
    T4 = 4

    @classmethod
    def parse(cls, name: str | int | "NormLevel") -> "NormLevel":
        if isinstance(name, NormLevel):
            return name
        if isinstance(name, int):
            return cls(name)
        return cls[name.strip().upper()]


ALL_LEVELS: tuple[NormLevel, ...] = tuple(NormLevel)


@dataclass(frozen=True)
class CanonicalQuery:
    canonical: str
    level: NormLevel
    source: str


@dataclass(frozen=True)
class SetSimilarity:
    level: NormLevel
    jaccard: float
    coverage: float
    per_topic: Mapping[str, tuple[float, float]] = field(default_factory=dict)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _tokens(query: str, level: NormLevel, case_sensitive: bool) -> list[str]:
    text = query if case_sensitive else query.lower()
    tokens = text.split()
    if level == NormLevel.T0:
        return tokens
    text = "".join(ch for ch in " ".join(tokens) if not _is_punct(ch))
    tokens = text.split()
    if level == NormLevel.T1:
        return tokens
    tokens = [stem(t) for t in tokens]
    if level == NormLevel.T2:
        return tokens
    kept = [t for t in tokens if t not in STEMMED_STOP_SET]
    if kept:
        tokens = kept
    if level == NormLevel.T3:
        return tokens
    return sorted(tokens)


def normalize(
    query: str, level: NormLevel | str = NormLevel.T0, *, case_sensitive: bool = False
) -> CanonicalQuery:
    """Canonicalize ``query`` at ``level``.

    >>> normalize("Windsor knot, wiki", NormLevel.T1).canonical
    'windsor knot wiki'
    """
    level = NormLevel.parse(level)
    if not query or not query.strip():
        raise ValueError("cannot normalize an empty query")
    tokens = _tokens(query, level, case_sensitive)
    if not tokens:
        # punctuation-only queries ("???") keep their T0 form
        tokens = _tokens(query, NormLevel.T0, case_sensitive)
    return CanonicalQuery(" ".join(tokens), level, query)


def unique_canonical(
    variants: VariantSet,
    topic: str,
    level: NormLevel | str,
    *,
    case_sensitive: bool = False,
) -> set[str]:
    if topic not in variants.entries:
        raise KeyError(f"topic {topic!r} not in variant set {variants.label!r}")
    return {
        normalize(q, level, case_sensitive=case_sensitive).canonical
        for q in variants.entries[topic]
    }


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        log.debug("jaccard of two empty sets defined as 1.0")
        return 1.0
    return len(a & b) / len(a | b)


def coverage_ratio(reference: Iterable[str], candidate: Iterable[str]) -> float:
    """Fraction of ``reference`` that also appears in ``candidate``."""
    reference, candidate = set(reference), set(candidate)
    if not reference:
        raise ValueError("coverage ratio needs a non-empty reference set")
    return len(reference & candidate) / len(reference)


def cascade_compare(
    human: VariantSet,
    other: VariantSet,
    levels: Sequence[NormLevel | str] = ALL_LEVELS,
    *,
    case_sensitive: bool = False,
) -> list[SetSimilarity]:
    """Per-level Jaccard and coverage of ``other`` against ``human``.

    Top-level numbers are unweighted means over topics.
    """
    h_topics, o_topics = set(human.entries), set(other.entries)
    if h_topics != o_topics:
        missing_h = sorted(o_topics - h_topics)
        missing_o = sorted(h_topics - o_topics)
        raise ValueError(
            f"topic mismatch between {human.label!r} and {other.label!r}: "
            f"missing from {human.label}: {missing_h}; missing from {other.label}: {missing_o}"
        )
    topics = sorted(h_topics)
    if not topics:
        raise ValueError("no topics to compare")
    results = []
    for level in levels:
        level = NormLevel.parse(level)
        per_topic = {}
        for t in topics:
            hs = unique_canonical(human, t, level, case_sensitive=case_sensitive)
            os_ = unique_canonical(other, t, level, case_sensitive=case_sensitive)
            per_topic[t] = (jaccard(hs, os_), coverage_ratio(hs, os_))
        n = len(per_topic)
        results.append(
            SetSimilarity(
                level=level,
                jaccard=sum(j for j, _ in per_topic.values()) / n,
                coverage=sum(c for _, c in per_topic.values()) / n,
                per_topic=per_topic,
            )
        )
    return results


def similarity_rows(label: str, results: Sequence[SetSimilarity]) -> list[list]:
    """Rows for the ``set_label,level,topic_id,jaccard,coverage`` report."""
    rows = []
    for res in results:
        for topic, (j, c) in res.per_topic.items():
            rows.append([label, res.level.name, topic, j, c])
        rows.append([label, res.level.name, "ALL", res.jaccard, res.coverage])
    return rows

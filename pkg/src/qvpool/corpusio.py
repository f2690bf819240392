"""Readers and writers for every on-disk artifact, plus variant-set statistics.

Formats
-------
backstories TSV   ``topic_id<TAB>text``
variants TSV      ``topic_id<TAB>query``
qrels             ``topic 0 docid grade``
run               ``topic Q0 docid rank score tag`` (score with 6 decimals)
reports           CSV, UTF-8, LF line endings, optional ``# ...`` comment line
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

DEFAULT_MAX_GRADE = 4
GRADE_LABELS = {
    0: "Non-relevant",
    1: "Slightly Useful",
    2: "Mostly Useful",
    3: "Very Useful",
    4: "Essential",
}

# run-file query ids for variant runs look like "275_v3"
VARIANT_SEP = "_v"
_VARIANT_QID = re.compile(r"^(.+)" + re.escape(VARIANT_SEP) + r"(\d+)$")


class FormatError(ValueError):
    """A file does not follow its format; the message names the line."""


class ValidationError(ValueError):
    """Well-formed input that violates a data invariant."""


@dataclass(frozen=True)
class TopicBackstory:
    topic_id: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError(f"backstory for topic {self.topic_id!r} is empty")


@dataclass(frozen=True)
class VariantSet:
    label: str
    entries: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        frozen = {}
        for topic, queries in self.entries.items():
            queries = tuple(queries)
            for q in queries:
                if not q.strip():
                    raise ValidationError(f"empty query for topic {topic!r} in {self.label!r}")
            frozen[str(topic)] = queries
        object.__setattr__(self, "entries", MappingProxyType(frozen))

    @property
    def topics(self) -> list[str]:
        return sorted(self.entries)

    def without(self, topics: Iterable[str]) -> "VariantSet":
        drop = set(topics)
        return VariantSet(self.label, {t: q for t, q in self.entries.items() if t not in drop})

    def unique_variants(self, topic: str) -> list[str]:
        """Distinct raw strings for ``topic`` in first-seen order."""
        return list(dict.fromkeys(self.entries[topic]))

    def __eq__(self, other):
        if not isinstance(other, VariantSet):
            return NotImplemented
        return self.label == other.label and dict(self.entries) == dict(other.entries)

    def __hash__(self):
        return hash((self.label, tuple(sorted(self.entries.items()))))


@dataclass(frozen=True)
class JudgmentSet:
    grades: Mapping[tuple[str, str], int]
    max_grade: int = DEFAULT_MAX_GRADE

    def __post_init__(self):
        for key, g in self.grades.items():
            if not 0 <= g <= self.max_grade:
                raise ValidationError(f"grade {g} for {key} outside [0, {self.max_grade}]")
        object.__setattr__(self, "grades", MappingProxyType(dict(self.grades)))
        by_topic: dict[str, dict[str, int]] = {}
        for (topic, doc), g in self.grades.items():
            by_topic.setdefault(topic, {})[doc] = g
        object.__setattr__(self, "_by_topic", by_topic)

    def grade(self, topic: str, doc_id: str) -> int | None:
        """Grade of ``doc_id`` for ``topic``; ``None`` means unjudged."""
        return self.grades.get((topic, doc_id))

    def is_relevant(self, topic: str, doc_id: str) -> bool:
        g = self.grades.get((topic, doc_id))
        return g is not None and g >= 1

    def topic_grades(self, topic: str) -> Mapping[str, int]:
        return self._by_topic.get(topic, {})

    def with_grade(self, topic: str, doc_id: str, grade: int) -> "JudgmentSet":
        grades = dict(self.grades)
        grades[(topic, doc_id)] = grade
        return JudgmentSet(grades, self.max_grade)


@dataclass(frozen=True)
class RankedRun:
    """Ranked (doc_id, score) list for one variant of one topic."""

    topic_id: str
    variant_index: int
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if not isinstance(self.entries, tuple):
            object.__setattr__(self, "entries", tuple((str(d), float(s)) for d, s in self.entries))

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    @property
    def query_id(self) -> str:
        return f"{self.topic_id}{VARIANT_SEP}{self.variant_index}"

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class VariantSetStats:
    total: int
    unique: int
    min_per_topic: int
    max_per_topic: int
    avg_per_topic: float
    avg_words_per_query: float


def _read_lines(path: str | os.PathLike) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return fh.read().splitlines()


def parse_backstories(path: str | os.PathLike) -> list[TopicBackstory]:
    out: list[TopicBackstory] = []
    seen: set[str] = set()
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 tab-separated columns, got {len(cols)}")
        topic, text = cols[0].strip(), cols[1].strip()
        if topic in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate topic_id {topic!r}")
        if not text:
            raise ValidationError(f"{path}:{lineno}: empty backstory")
        seen.add(topic)
        out.append(TopicBackstory(topic, text))
    return out


def write_backstories(path: str | os.PathLike, backstories: Sequence[TopicBackstory]) -> None:
    atomic_write_text(path, "".join(f"{b.topic_id}\t{b.text}\n" for b in backstories))


def parse_variants(path: str | os.PathLike, label: str) -> VariantSet:
    entries: dict[str, list[str]] = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 tab-separated columns, got {len(cols)}")
        topic, query = cols[0].strip(), cols[1].strip()
        if not query:
            raise ValidationError(f"{path}:{lineno}: empty query")
        entries.setdefault(topic, []).append(query)
    return VariantSet(label, entries)


def write_variants(path: str | os.PathLike, variants: VariantSet) -> None:
    lines = []
    for topic in variants.topics:
        for q in variants.entries[topic]:
            if "\t" in q or "\n" in q:
                raise ValidationError(f"query {q!r} contains a tab or newline")
            lines.append(f"{topic}\t{q}\n")
    atomic_write_text(path, "".join(lines))


def parse_qrels(
    path: str | os.PathLike, max_grade: int = DEFAULT_MAX_GRADE, *, strict: bool = False
) -> JudgmentSet:
    """Read TREC qrels. Later duplicates win (or raise, with ``strict``)."""
    grades: dict[tuple[str, str], int] = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != 4:
            raise FormatError(f"{path}:{lineno}: expected 'topic 0 docid grade', got {len(cols)} fields")
        topic, _, doc, raw = cols
        try:
            g = int(raw)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer grade {raw!r}") from None
        if not 0 <= g <= max_grade:
            raise FormatError(f"{path}:{lineno}: grade {g} outside [0, {max_grade}]")
        key = (topic, doc)
        if key in grades:
            if strict:
                raise ValidationError(f"{path}:{lineno}: duplicate judgment for {key}")
            log.warning("%s:%d: duplicate judgment for %s, keeping the later one", path, lineno, key)
        grades[key] = g
    return JudgmentSet(grades, max_grade)


def write_qrels(path: str | os.PathLike, qrels: JudgmentSet) -> None:
    lines = [f"{t} 0 {d} {g}\n" for (t, d), g in sorted(qrels.grades.items())]
    atomic_write_text(path, "".join(lines))


def format_run(runs: Iterable[RankedRun], tag: str = "qvpool") -> str:
    buf = io.StringIO()
    for run in runs:
        prev = math.inf
        for rank, (doc, score) in enumerate(run.entries, 1):
            if not math.isfinite(score):
                raise ValidationError(f"non-finite score for {run.query_id} {doc}")
            if score > prev:
                raise ValidationError(f"scores increase at rank {rank} of {run.query_id}")
            prev = score
            buf.write(f"{run.query_id} Q0 {doc} {rank} {score:.6f} {tag}\n")
    return buf.getvalue()


def write_run(path: str | os.PathLike, runs: Iterable[RankedRun], tag: str = "qvpool") -> None:
    atomic_write_text(path, format_run(runs, tag))


def split_query_id(qid: str) -> tuple[str, int]:
    """``"275_v3" -> ("275", 3)``; plain TREC ids map to variant 0."""
    m = _VARIANT_QID.match(qid)
    if m:
        return m.group(1), int(m.group(2))
    return qid, 0


def parse_run(path: str | os.PathLike) -> list[RankedRun]:
    """Read a TREC run file; runs come back in first-seen query order."""
    rows: dict[str, list[tuple[int, str, float, int]]] = {}
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip():
            continue
        cols = line.split()
        if len(cols) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(cols)}")
        qid, _, doc, rank, score = cols[:5]
        try:
            rank_i, score_f = int(rank), float(score)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: bad rank or score") from None
        if not math.isfinite(score_f):
            raise FormatError(f"{path}:{lineno}: non-finite score")
        rows.setdefault(qid, []).append((rank_i, doc, score_f, lineno))
    runs = []
    for qid, items in rows.items():
        items.sort(key=lambda r: r[0])
        seen_docs: set[str] = set()
        prev = math.inf
        for expected, (rank, doc, score, lineno) in enumerate(items, 1):
            if rank != expected:
                raise ValidationError(f"{path}:{lineno}: rank {rank} for {qid}, expected {expected}")
            if score > prev:
                raise ValidationError(f"{path}:{lineno}: score increases at rank {rank} for {qid}")
            if doc in seen_docs:
                raise ValidationError(f"{path}:{lineno}: duplicate document {doc} for {qid}")
            seen_docs.add(doc)
            prev = score
        topic, variant = split_query_id(qid)
        runs.append(RankedRun(topic, variant, tuple((d, s) for _, d, s, _ in items)))
    return runs


def variant_stats(variants: VariantSet) -> VariantSetStats:
    counts = [len(qs) for qs in variants.entries.values()]
    if not counts or sum(counts) == 0:
        raise ValueError(f"variant set {variants.label!r} is empty")
    queries = [q for qs in variants.entries.values() for q in qs]
    return VariantSetStats(
        total=len(queries),
        unique=len(set(queries)),
        min_per_topic=min(counts),
        max_per_topic=max(counts),
        avg_per_topic=len(queries) / len(counts),
        avg_words_per_query=sum(len(q.split()) for q in queries) / len(queries),
    )


# --- reports ---------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def format_csv(header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(
    path: str | os.PathLike, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None
) -> None:
    atomic_write_text(path, format_csv(header, rows, comment))


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

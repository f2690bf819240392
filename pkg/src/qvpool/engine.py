"""Inverted index and BM25 retrieval.

Scoring follows Lucene/Anserini BM25:

    idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
    score    = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))

Ties are broken by ascending doc id so runs are reproducible.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .corpusio import FormatError, RankedRun, ValidationError, VariantSet, atomic_write_bytes
from .porter import stem
from .textnorm import STOP_SET, analyzer_fingerprint

log = logging.getLogger(__name__)

INDEX_MAGIC = b"QVPIDX\x00\x01"
INDEX_VERSION = 1
DEFAULT_RUN_DEPTH = 1000

_SPLIT = re.compile(r"[^\w]+|_+")


@dataclass(frozen=True)
class CorpusDocument:
    doc_id: str
    text: str


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError(f"k1 must be positive, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must lie in [0, 1], got {self.b}")


def analyze(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stop words, Porter-stem."""
    return [stem(tok) for tok in _SPLIT.split(text.lower()) if tok and tok not in STOP_SET]


class InvertedIndex:
    """Term -> (doc indices, term frequencies), both sorted by doc index."""

    def __init__(self, doc_ids: Sequence[str], doc_lengths: np.ndarray, postings: dict):
        self.doc_ids = list(doc_ids)
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int64)
        self.postings: dict[str, tuple[np.ndarray, np.ndarray]] = postings
        self.num_docs = len(self.doc_ids)
        self.avg_doc_length = float(self.doc_lengths.mean()) if self.num_docs else 0.0
        self._doc_index = {d: i for i, d in enumerate(self.doc_ids)}
        # position of each doc in ascending doc_id order, for tie-breaking
        order = sorted(range(self.num_docs), key=self.doc_ids.__getitem__)
        self._id_rank = np.empty(self.num_docs, dtype=np.int64)
        self._id_rank[order] = np.arange(self.num_docs)

    def doc_index(self, doc_id: str) -> int:
        try:
            return self._doc_index[doc_id]
        except KeyError:
            raise KeyError(f"unknown document {doc_id!r}") from None

    def df(self, term: str) -> int:
        p = self.postings.get(term)
        return 0 if p is None else len(p[0])

    def tf(self, term: str, doc_id: str) -> int:
        p = self.postings.get(term)
        if p is None:
            return 0
        docs, tfs = p
        i = self.doc_index(doc_id)
        pos = np.searchsorted(docs, i)
        if pos < len(docs) and docs[pos] == i:
            return int(tfs[pos])
        return 0

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1 + (self.num_docs - df + 0.5) / (df + 0.5))

    def save(self, path: str | os.PathLike) -> None:
        payload = {
            "doc_ids": self.doc_ids,
            "doc_lengths": self.doc_lengths.tolist(),
            "postings": {
                t: [docs.tolist(), tfs.tolist()] for t, (docs, tfs) in sorted(self.postings.items())
            },
        }
        body = zlib.compress(json.dumps(payload, separators=(",", ":")).encode("utf-8"), 6)
        fp = analyzer_fingerprint().encode("ascii")
        header = INDEX_MAGIC + struct.pack("<I", INDEX_VERSION) + fp
        atomic_write_bytes(path, header + body)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "InvertedIndex":
        data = Path(path).read_bytes()
        if not data.startswith(INDEX_MAGIC):
            raise FormatError(f"{path}: not an index file")
        off = len(INDEX_MAGIC)
        (version,) = struct.unpack_from("<I", data, off)
        off += 4
        if version != INDEX_VERSION:
            raise FormatError(f"{path}: index format version {version}, expected {INDEX_VERSION}")
        fp = data[off : off + 64].decode("ascii")
        off += 64
        if fp != analyzer_fingerprint():
            raise FormatError(f"{path}: analyzer fingerprint mismatch ({fp[:12]}...)")
        payload = json.loads(zlib.decompress(data[off:]))
        postings = {
            t: (np.asarray(d, dtype=np.int64), np.asarray(f, dtype=np.int64))
            for t, (d, f) in payload["postings"].items()
        }
        return cls(payload["doc_ids"], np.asarray(payload["doc_lengths"]), postings)


def build_index(corpus: Iterable[CorpusDocument]) -> InvertedIndex:
    doc_ids: list[str] = []
    seen: set[str] = set()
    lengths: list[int] = []
    raw: dict[str, tuple[list[int], list[int]]] = {}
    for i, doc in enumerate(corpus):
        if not doc.doc_id:
            raise ValidationError("empty doc_id")
        if doc.doc_id in seen:
            raise ValidationError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        doc_ids.append(doc.doc_id)
        terms = analyze(doc.text)
        lengths.append(len(terms))
        counts: dict[str, int] = {}
        for t in terms:
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            docs, tfs = raw.setdefault(t, ([], []))
            docs.append(i)
            tfs.append(c)
    if not doc_ids:
        raise ValidationError("empty corpus")
    postings = {
        t: (np.asarray(d, dtype=np.int64), np.asarray(f, dtype=np.int64)) for t, (d, f) in raw.items()
    }
    return InvertedIndex(doc_ids, np.asarray(lengths), postings)


def read_corpus(path: str | os.PathLike) -> Iterator[CorpusDocument]:
    """Stream documents from JSONL (``{"id", "contents"}``) or ``doc_id<TAB>text``."""
    jsonl = str(path).endswith((".jsonl", ".json"))
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            if jsonl:
                try:
                    obj = json.loads(line)
                    yield CorpusDocument(str(obj["id"]), obj["contents"])
                except (json.JSONDecodeError, KeyError, TypeError) as e:
                    raise FormatError(f"{path}:{lineno}: bad corpus record ({e})") from None
            else:
                cols = line.rstrip("\n").split("\t", 1)
                if len(cols) != 2:
                    raise FormatError(f"{path}:{lineno}: expected doc_id<TAB>text")
                yield CorpusDocument(cols[0], cols[1])


def bm25_score(
    index: InvertedIndex, params: Bm25Params, query_terms: Sequence[str], doc_id: str
) -> float:
    """Score one document; repeated query terms count once per occurrence."""
    i = index.doc_index(doc_id)
    norm = params.k1 * (1 - params.b + params.b * index.doc_lengths[i] / index.avg_doc_length)
    score = 0.0
    for t in query_terms:
        tf = index.tf(t, doc_id)
        if tf:
            score += index.idf(t) * tf * (params.k1 + 1) / (tf + norm)
    return score


def _score_all(index: InvertedIndex, params: Bm25Params, terms: Sequence[str]):
    scores = np.zeros(index.num_docs)
    matched = np.zeros(index.num_docs, dtype=bool)
    k1, b = params.k1, params.b
    for t in terms:
        p = index.postings.get(t)
        if p is None:
            continue
        docs, tfs = p
        norm = k1 * (1 - b + b * index.doc_lengths[docs] / index.avg_doc_length)
        scores[docs] += index.idf(t) * tfs * (k1 + 1) / (tfs + norm)
        matched[docs] = True
    return scores, np.flatnonzero(matched)


def search(
    index: InvertedIndex,
    params: Bm25Params,
    query: str,
    k: int = DEFAULT_RUN_DEPTH,
    *,
    topic_id: str = "",
    variant_index: int = 0,
) -> RankedRun:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = analyze(query)
    if not terms:
        log.info("query %r analyzes to nothing; empty run", query)
        return RankedRun(topic_id, variant_index, ())
    scores, cand = _score_all(index, params, terms)
    if len(cand) == 0:
        return RankedRun(topic_id, variant_index, ())
    order = np.lexsort((index._id_rank[cand], -scores[cand]))[:k]
    top = cand[order]
    return RankedRun(
        topic_id, variant_index, tuple((index.doc_ids[i], float(scores[i])) for i in top)
    )


def batch_run(
    index: InvertedIndex,
    params: Bm25Params,
    sets: Sequence[VariantSet],
    k: int = DEFAULT_RUN_DEPTH,
    *,
    jobs: int = 1,
) -> dict[str, list[RankedRun]]:
    """One run per (set, topic, unique raw variant), keyed by set label.

    ``variant_index`` numbers the distinct raw strings of a topic in first-seen
    order; the same string is searched once per topic and its run shared.
    Output order is fixed by (set, topic, variant) regardless of ``jobs``.
    """
    tasks: list[tuple[str, str, int, str]] = []
    for vs in sets:
        for topic in vs.topics:
            for vi, q in enumerate(vs.unique_variants(topic)):
                tasks.append((vs.label, topic, vi, q))

    cache: dict[tuple[str, str], RankedRun] = {}
    distinct = sorted({(topic, q) for _, topic, _, q in tasks})

    def work(key):
        return key, search(index, params, key[1], k, topic_id=key[0])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for key, run in pool.map(work, distinct):
                cache[key] = run
    else:
        for key in distinct:
            cache[key] = work(key)[1]

    out: dict[str, list[RankedRun]] = {vs.label: [] for vs in sets}
    for label, topic, vi, q in tasks:
        base = cache[(topic, q)]
        out[label].append(RankedRun(topic, vi, base.entries))
    return out

"""Deterministic synthetic test collection for offline end-to-end runs."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .corpusio import (
    JudgmentSet,
    TopicBackstory,
    VariantSet,
    atomic_write_text,
    write_backstories,
    write_qrels,
    write_variants,
)

_CONS = "bdfgklmnprstvz"
_VOW = "aeiou"
_FILLER = "the of and to in is for on with that this as at by it".split()


@dataclass(frozen=True)
class FixturePaths:
    corpus: Path
    backstories: Path
    human: Path
    qrels: Path
    example_topic: str


def _pseudo_word(rng: random.Random) -> str:
    return "".join(rng.choice(_CONS) + rng.choice(_VOW) for _ in range(rng.randint(2, 3))) + rng.choice(_CONS)


def _vocabulary(rng: random.Random, n: int) -> list[str]:
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < n:
        w = _pseudo_word(rng)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _noisy(query: list[str], rng: random.Random) -> str:
    words = list(query)
    if rng.random() < 0.2:
        words = [w.capitalize() for w in words]
    if rng.random() < 0.15 and len(words) > 1:
        i = rng.randrange(len(words) - 1)
        words[i] += ","
    if rng.random() < 0.15:
        words[-1] += rng.choice("?!.")
    if rng.random() < 0.2:
        words.insert(rng.randrange(len(words) + 1), rng.choice(["the", "of", "for", "how to"]))
    if rng.random() < 0.15:
        words[-1] += "s"
    return " ".join(words)


def make_fixture(
    outdir: str | Path,
    *,
    seed: int = 13,
    n_docs: int = 1000,
    n_topics: int = 10,
    example_topic: str = "275",
) -> FixturePaths:
    """Write corpus.jsonl, backstories.tsv, human.tsv and qrels.txt to ``outdir``.

    ``n_topics`` analyzed topics are created plus the one-shot example topic.
    """
    rng = random.Random(seed)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    background = _vocabulary(rng, 400)
    topic_ids = [str(201 + i) for i in range(n_topics)] + [example_topic]
    topic_words = {t: _vocabulary(rng, 10) for t in topic_ids}

    docs = []
    doc_topic = {}
    for i in range(n_docs):
        doc_id = f"doc{i:05d}"
        t = rng.choice(topic_ids) if rng.random() < 0.7 else None
        density = rng.uniform(0.05, 0.4) if t else 0.0
        words = []
        for _ in range(rng.randint(20, 80)):
            r = rng.random()
            if t and r < density:
                words.append(rng.choice(topic_words[t]))
            elif r < density + 0.25:
                words.append(rng.choice(_FILLER))
            else:
                words.append(rng.choice(background))
        docs.append({"id": doc_id, "contents": " ".join(words)})
        doc_topic[doc_id] = (t, density)

    corpus_path = outdir / "corpus.jsonl"
    atomic_write_text(corpus_path, "".join(json.dumps(d, sort_keys=True) + "\n" for d in docs))

    backstories = []
    for t in topic_ids:
        tw = topic_words[t]
        text = (
            f"You want to learn about {tw[0]} {tw[1]} and how {tw[2]} relates to "
            f"{tw[3]}. You are particularly interested in {tw[4]} {tw[5]} for your {tw[6]}."
        )
        backstories.append(TopicBackstory(t, text))
    bs_path = outdir / "backstories.tsv"
    write_backstories(bs_path, backstories)

    entries = {}
    for t in topic_ids:
        tw = topic_words[t][:7]
        queries: list[str] = []
        for _ in range(rng.randint(15, 40)):
            if queries and rng.random() < 0.25:
                queries.append(rng.choice(queries))
                continue
            length = rng.randint(1, 4)
            q = rng.sample(tw, length)
            if rng.random() < 0.2:
                q.append(rng.choice(background))
            queries.append(_noisy(q, rng))
        entries[t] = queries
    human_path = outdir / "human.tsv"
    write_variants(human_path, VariantSet("human", entries))

    grades = {}
    for doc_id, (dt, density) in doc_topic.items():
        for t in topic_ids:
            if dt == t and rng.random() < 0.75:
                grades[(t, doc_id)] = min(4, int(density * 12))
            elif rng.random() < 0.01:
                grades[(t, doc_id)] = 0
    qrels_path = outdir / "qrels.txt"
    write_qrels(qrels_path, JudgmentSet(grades))

    return FixturePaths(corpus_path, bs_path, human_path, qrels_path, example_topic)

import random

import pytest
from hypothesis import given, strategies as st

import oracles
from qvpool.corpusio import VariantSet
from qvpool.textnorm import (
    ALL_LEVELS,
    NormLevel,
    cascade_compare,
    coverage_ratio,
    jaccard,
    normalize,
    similarity_rows,
    unique_canonical,
)

WORDS = ["tie", "ties", "a", "the", "windsor", "knot", "knots", "how", "to", "Tying", "wiki",
         "hiking", "trails", "trail", "dog", "dogs", "park", "is", "this", "of"]
PUNCT = ["", "", "", ",", "!", "?", "'s", "-", "."]


def random_query(rng, max_words=4):
    words = [rng.choice(WORDS) + rng.choice(PUNCT) for _ in range(rng.randint(1, max_words))]
    if rng.random() < 0.2:
        words = [w.upper() for w in words]
    return " ".join(words)


query_text = st.lists(
    st.sampled_from(WORDS).flatmap(lambda w: st.sampled_from(PUNCT).map(lambda p: w + p)),
    min_size=1, max_size=5,
).map(" ".join)


# --- normalize ---

def test_t1_removes_punctuation_and_case():
    assert normalize("Windsor knot, wiki", NormLevel.T1).canonical == "windsor knot wiki"


def test_t4_is_order_insensitive():
    assert normalize("wiki windsor knot", "T4").canonical == normalize("windsor knot wiki", "T4").canonical


def test_t2_porter_stems_each_token():
    nltk_porter = pytest.importorskip("nltk.stem.porter")
    ref = nltk_porter.PorterStemmer(mode=nltk_porter.PorterStemmer.ORIGINAL_ALGORITHM)
    expected = " ".join(ref.stem(w) for w in ["hiking", "trails"])
    assert expected == "hike trail"
    assert normalize("hiking trails", NormLevel.T2).canonical == expected


def test_t0_collapses_whitespace_and_lowercases():
    assert normalize("  Tie   a\tTIE ", NormLevel.T0).canonical == "tie a tie"


def test_t0_case_sensitive_switch():
    assert normalize("Tie a TIE", NormLevel.T0, case_sensitive=True).canonical == "Tie a TIE"


def test_t3_removes_stop_words():
    assert normalize("how to tie a tie", NormLevel.T3).canonical == "how tie tie"


def test_t3_falls_back_when_only_stop_words():
    assert normalize("to be or not to be", NormLevel.T3).canonical == "to be or not to be"
    assert normalize("this is it", NormLevel.T3).canonical == normalize("this is it", NormLevel.T2).canonical


def test_t4_keeps_multiplicity():
    assert normalize("dog dog park", NormLevel.T4).canonical != normalize("dog park", NormLevel.T4).canonical


def test_punctuation_only_query_is_kept():
    assert normalize("???", NormLevel.T4).canonical == "???"


def test_empty_query_rejected():
    with pytest.raises(ValueError):
        normalize("   ", NormLevel.T0)


@given(query_text, st.sampled_from(ALL_LEVELS))
def test_normalize_idempotent(q, level):
    once = normalize(q, level).canonical
    assert normalize(once, level).canonical == once


@given(st.text(min_size=1).filter(str.strip), st.sampled_from(ALL_LEVELS))
def test_normalize_idempotent_arbitrary_text(q, level):
    once = normalize(q, level).canonical
    assert once
    assert normalize(once, level).canonical == once


@given(st.lists(st.sampled_from(WORDS), min_size=1, max_size=6), st.randoms())
def test_t4_permutation_invariant(tokens, rnd):
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    assert normalize(" ".join(tokens), "T4").canonical == normalize(" ".join(shuffled), "T4").canonical


@given(query_text, query_text)
def test_matching_is_monotone_per_query_pair(q1, q2):
    # each level is a function of the previous one, so a match persists upward
    matched = False
    for level in ALL_LEVELS:
        now = normalize(q1, level).canonical == normalize(q2, level).canonical
        assert now or not matched
        matched = now


# --- unique_canonical / jaccard / coverage ---

def test_unique_canonical_examples():
    vs = VariantSet("h", {"1": ["tie a tie", "Tie a tie!"], "2": ["a b", "b a"]})
    assert unique_canonical(vs, "1", "T1") == {"tie a tie"}
    assert len(unique_canonical(vs, "2", "T0")) == 2
    assert len(unique_canonical(vs, "2", "T4")) == 1
    with pytest.raises(KeyError):
        unique_canonical(vs, "3", "T0")


def test_unique_canonical_dedup_count():
    queries = [f"query number {i}" for i in range(54)] + ["query number 0", "query number 1", "query number 2"]
    assert len(queries) == 57
    assert len(unique_canonical(VariantSet("h", {"1": queries}), "1", "T0")) == 54


def test_jaccard_examples():
    assert jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5
    assert jaccard({"a"}, {"a"}) == 1.0
    assert jaccard({"a"}, {"b"}) == 0.0
    assert jaccard(set(), set()) == 1.0


def test_coverage_examples():
    assert coverage_ratio({"q1", "q2", "q3", "q4"}, {"q2", "q4", "q9"}) == 0.5
    assert coverage_ratio({"q1"}, {"q1", "q2"}) == 1.0
    assert coverage_ratio({"q1"}, {"q2"}) == 0.0
    with pytest.raises(ValueError):
        coverage_ratio(set(), {"q"})


@given(st.sets(st.integers(0, 9)), st.sets(st.integers(0, 9)))
def test_jaccard_symmetric_bounded(a, b):
    assert jaccard(a, b) == jaccard(b, a)
    assert 0.0 <= jaccard(a, b) <= 1.0


# --- cascade_compare ---

def test_identical_sets_score_one_everywhere():
    vs = VariantSet("h", {"1": ["tie a tie", "windsor knot"], "2": ["dog park"]})
    for res in cascade_compare(vs, VariantSet("g", dict(vs.entries))):
        assert res.jaccard == 1.0 and res.coverage == 1.0


def test_token_order_only_matches_at_t4():
    human = VariantSet("h", {"1": ["windsor knot wiki", "tie knot"]})
    other = VariantSet("g", {"1": ["wiki windsor knot", "knot tie"]})
    res = {r.level: r for r in cascade_compare(human, other)}
    assert all(res[lv].jaccard == 0.0 for lv in (NormLevel.T0, NormLevel.T1, NormLevel.T2, NormLevel.T3))
    assert res[NormLevel.T4].jaccard == 1.0


def test_topic_mismatch_lists_missing_topics():
    with pytest.raises(ValueError, match="3"):
        cascade_compare(VariantSet("h", {"1": ["a"], "3": ["b"]}), VariantSet("g", {"1": ["a"]}))


def test_cascade_matches_set_arithmetic_oracle():
    rng = random.Random(5)
    human = VariantSet("h", {str(t): [random_query(rng) for _ in range(rng.randint(3, 12))] for t in range(5)})
    other = VariantSet("g", {str(t): [random_query(rng) for _ in range(rng.randint(3, 12))] for t in range(5)})
    for res in cascade_compare(human, other):
        js, cs = [], []
        for t in human.topics:
            hs = {normalize(q, res.level).canonical for q in human.entries[t]}
            gs = {normalize(q, res.level).canonical for q in other.entries[t]}
            js.append(oracles.jaccard(hs, gs))
            cs.append(oracles.coverage(hs, gs))
            assert res.per_topic[t] == pytest.approx((js[-1], cs[-1]), abs=1e-12)
        assert res.jaccard == pytest.approx(sum(js) / 5, abs=1e-12)
        assert res.coverage == pytest.approx(sum(cs) / 5, abs=1e-12)


def test_similarity_rows_include_summary():
    vs = VariantSet("h", {"1": ["a b"], "2": ["c"]})
    rows = similarity_rows("g", cascade_compare(vs, vs))
    assert len(rows) == len(ALL_LEVELS) * (2 + 1)
    assert [r[2] for r in rows[:3]] == ["1", "2", "ALL"]


def test_set_level_scores_can_drop_when_classes_merge():
    # Jaccard/coverage over deduplicated canonical sets are not monotone:
    # merging two human queries shrinks the shared fraction.
    human = VariantSet("h", {"1": ["cat!", "cat?", "dog"]})
    other = VariantSet("g", {"1": ["cat!", "cat?"]})
    res = {r.level: r for r in cascade_compare(human, other, ["T0", "T1"])}
    assert res[NormLevel.T0].jaccard == pytest.approx(2 / 3)
    assert res[NormLevel.T1].jaccard == pytest.approx(1 / 2)
    assert res[NormLevel.T1].coverage < res[NormLevel.T0].coverage

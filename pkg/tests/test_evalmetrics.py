import math
import random

import pytest
from hypothesis import given, strategies as st

import oracles
from qvpool.corpusio import JudgmentSet, RankedRun
from qvpool.evalmetrics import (
    EffectivenessScore,
    aggregate_scores,
    ndcg_at_k,
    precision_at_k,
    rbo,
    rbp,
    score_run,
    topic_rbo,
)


def run_of(docs, topic="1", variant=0):
    return RankedRun(topic, variant, tuple((d, float(len(docs) - i)) for i, d in enumerate(docs)))


def qrels_of(grades, topic="1"):
    return JudgmentSet({(topic, d): g for d, g in grades.items()})


# --- precision ---

def test_precision_three_of_ten():
    q = qrels_of({"d0": 1, "d4": 2, "d9": 4, "d3": 0})
    assert precision_at_k(run_of([f"d{i}" for i in range(12)]), q, 10) == pytest.approx(0.3)


def test_precision_empty_and_unjudged():
    assert precision_at_k(run_of([]), qrels_of({}), 10) == 0.0
    assert precision_at_k(run_of(["x", "y"]), qrels_of({"a": 3}), 2) == 0.0


# --- ndcg ---

def test_ndcg_perfect_ordering():
    q = qrels_of({"a": 4, "b": 2, "c": 1, "d": 0})
    assert ndcg_at_k(run_of(["a", "b", "c", "d"]), q, 10) == pytest.approx(1.0)


def test_ndcg_no_relevant():
    assert ndcg_at_k(run_of(["a"]), qrels_of({"a": 0}), 10) == 0.0


def test_ndcg_hand_value():
    q = qrels_of({"x": 2, "y": 0, "z": 1})
    dcg = 2 / math.log2(2) + 1 / math.log2(4)
    idcg = 2 + 1 / math.log2(3)
    assert dcg == 2.5
    assert dcg / idcg == pytest.approx(0.9502, abs=1e-4)
    assert ndcg_at_k(run_of(["x", "y", "z"]), q, 3) == pytest.approx(dcg / idcg, abs=1e-12)
    assert oracles.ndcg(["x", "y", "z"], {"x": 2, "y": 0, "z": 1}, 3) == pytest.approx(dcg / idcg, abs=1e-12)


def test_ndcg_exponential_gain():
    q = qrels_of({"x": 2, "z": 1})
    got = ndcg_at_k(run_of(["z", "x"]), q, 2, exponential_gain=True)
    assert got == pytest.approx((1 + 3 / math.log2(3)) / (3 + 1 / math.log2(3)))


# --- rbp ---

def test_rbp_rank_one():
    docs = [f"d{i}" for i in range(300)]
    q = qrels_of({d: (1 if i == 0 else 0) for i, d in enumerate(docs)})
    base, res = rbp(run_of(docs), q, 0.9)
    assert base == pytest.approx(0.1)
    assert res == pytest.approx(0.0, abs=1e-12)


def test_rbp_all_unjudged():
    base, res = rbp(run_of(["a", "b", "c"]), qrels_of({}), 0.9)
    assert base == 0.0
    assert res == pytest.approx(1.0)


def test_rbp_ranks_one_and_two():
    docs = [f"d{i}" for i in range(300)]
    q = qrels_of({d: (2 if i < 2 else 0) for i, d in enumerate(docs)})
    assert rbp(run_of(docs), q, 0.9)[0] == pytest.approx(0.19)


def test_rbp_bad_p():
    with pytest.raises(ValueError):
        rbp(run_of(["a"]), qrels_of({}), 1.0)


# --- rbo ---

def test_rbo_identical_and_disjoint():
    assert rbo(list("abcdef"), list("abcdef"), 0.9) == pytest.approx(1.0)
    assert rbo(list("abc"), list("xyz"), 0.9) == 0.0


def test_rbo_swap_matches_series():
    expected = oracles.rbo_series(list("abc"), list("bac"), 0.9, 10_000)
    assert rbo(list("abc"), list("bac"), 0.9) == pytest.approx(expected, abs=1e-6)


def test_rbo_duplicates_rejected():
    with pytest.raises(ValueError):
        rbo(["a", "a"], ["a", "b"])


def test_rbo_empty_lists():
    assert rbo([], [], 0.9) == 1.0
    assert rbo([], ["a"], 0.9) == 0.0


ids = st.lists(st.sampled_from("abcdefghijklmn"), unique=True, max_size=10)


@given(ids, ids, st.floats(0.05, 0.95))
def test_rbo_symmetric_and_bounded(a, b, p):
    assert rbo(a, b, p) == pytest.approx(rbo(b, a, p), abs=1e-12)
    assert 0.0 <= rbo(a, b, p) <= 1.0


def test_topic_rbo_identical_variants():
    runs = [run_of(list("abcd"), variant=v) for v in range(3)]
    score = topic_rbo(runs, 0.9)
    assert score.mean_rbo == pytest.approx(1.0) and score.num_pairs == 3


def test_topic_rbo_matches_pairwise_oracle():
    rng = random.Random(2)
    lists = [rng.sample("abcdefghijkl", rng.randint(3, 10)) for _ in range(4)]
    runs = [run_of(lst, variant=i) for i, lst in enumerate(lists)]
    score = topic_rbo(runs, 0.9)
    assert score.num_pairs == 6
    assert score.mean_rbo == pytest.approx(
        oracles.mean_pairwise(lists, lambda x, y: oracles.rbo_series(x, y, 0.9)), abs=1e-6)


def test_topic_rbo_needs_two():
    with pytest.raises(ValueError):
        topic_rbo([run_of(["a"])])


def test_topic_rbo_truncates_depth():
    runs = [run_of(["a", "b", "x"], variant=0), run_of(["a", "b", "y"], variant=1)]
    assert topic_rbo(runs, 0.9, depth=2).mean_rbo == pytest.approx(1.0)


# --- aggregation ---

def _score(topic, variant, value):
    return EffectivenessScore(topic, variant, value, value, value, 1 - value)


def test_aggregate_single():
    micro, macro = aggregate_scores([_score("1", 0, 0.4)])
    assert micro.p_at_k == macro.p_at_k == 0.4


def test_aggregate_micro_vs_macro():
    scores = [_score("1", 0, 1.0), _score("2", 0, 0.0), _score("2", 1, 0.0), _score("2", 2, 0.6)]
    micro, macro = aggregate_scores(scores)
    assert micro.p_at_k == pytest.approx(1.6 / 4)  # 0.4
    assert macro.p_at_k == pytest.approx((1.0 + 0.2) / 2)  # 0.6
    assert (micro.n, macro.n) == (4, 2)


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate_scores([])


def test_score_run_bundle():
    q = qrels_of({"a": 2})
    s = score_run(run_of(["a", "b"]), q, k=10, p=0.9)
    assert s.p_at_k == pytest.approx(0.1)
    assert s.rbp_base == pytest.approx(0.1)
    assert s.rbp_residual == pytest.approx(0.09 + 0.81)

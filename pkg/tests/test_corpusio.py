import logging

import pytest
from hypothesis import given, strategies as st

from qvpool.corpusio import (
    FormatError,
    JudgmentSet,
    RankedRun,
    TopicBackstory,
    ValidationError,
    VariantSet,
    format_csv,
    parse_backstories,
    parse_qrels,
    parse_run,
    parse_variants,
    read_csv,
    split_query_id,
    variant_stats,
    write_backstories,
    write_csv,
    write_qrels,
    write_run,
    write_variants,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- backstories ---

def test_backstories_single_row(tmp_path):
    p = write(tmp_path, "b.tsv", "275\tYou want to tie a windsor knot...\n")
    assert parse_backstories(p) == [TopicBackstory("275", "You want to tie a windsor knot...")]


def test_backstories_empty_file(tmp_path):
    assert parse_backstories(write(tmp_path, "b.tsv", "")) == []


def test_backstories_duplicate_id(tmp_path):
    with pytest.raises(ValidationError, match="duplicate"):
        parse_backstories(write(tmp_path, "b.tsv", "275\tA\n275\tB"))


def test_backstories_bad_columns_names_line(tmp_path):
    with pytest.raises(FormatError, match=":2:"):
        parse_backstories(write(tmp_path, "b.tsv", "1\tok\n2 no tab here\n"))


def test_backstories_round_trip(tmp_path):
    items = [TopicBackstory("1", "first story"), TopicBackstory("2", "second, with punctuation!")]
    write_backstories(tmp_path / "b.tsv", items)
    assert parse_backstories(tmp_path / "b.tsv") == items


# --- variants ---

def test_variants_grouped_in_file_order(tmp_path):
    vs = parse_variants(write(tmp_path, "v.tsv", "1\tq one\n2\tz\n1\tq two\n"), "human")
    assert vs.entries["1"] == ("q one", "q two")
    assert set(vs.entries) == {"1", "2"}


def test_variants_whitespace_query_rejected(tmp_path):
    with pytest.raises(ValidationError, match=":2:"):
        parse_variants(write(tmp_path, "v.tsv", "1\tok\n1\t   \n"), "human")


queries = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp")), min_size=1, max_size=20
).map(str.strip).filter(bool)


@given(st.dictionaries(st.sampled_from(["1", "2", "30", "x7"]), st.lists(queries, min_size=1, max_size=5), min_size=1))
def test_variants_round_trip(tmp_path_factory, entries):
    path = tmp_path_factory.mktemp("v") / "v.tsv"
    vs = VariantSet("human", entries)
    write_variants(path, vs)
    assert parse_variants(path, "human") == vs


# --- qrels ---

def test_qrels_basic(tmp_path):
    q = parse_qrels(write(tmp_path, "q", "1 0 d5 3\n"))
    assert q.grade("1", "d5") == 3
    assert q.grade("1", "d6") is None


def test_qrels_grade_out_of_range(tmp_path):
    with pytest.raises(FormatError):
        parse_qrels(write(tmp_path, "q", "1 0 d5 9\n"), max_grade=4)


def test_qrels_non_integer(tmp_path):
    with pytest.raises(FormatError):
        parse_qrels(write(tmp_path, "q", "1 0 d5 high\n"))


def test_qrels_all_grades_retained(tmp_path):
    q = parse_qrels(write(tmp_path, "q", "".join(f"1 0 d{g} {g}\n" for g in range(5))))
    assert [q.grade("1", f"d{g}") for g in range(5)] == [0, 1, 2, 3, 4]
    assert q.grade("1", "d9") is None
    assert not q.is_relevant("1", "d0") and q.is_relevant("1", "d1")


def test_qrels_duplicates_last_wins(tmp_path, caplog):
    p = write(tmp_path, "q", "1 0 d1 1\n1 0 d1 3\n")
    with caplog.at_level(logging.WARNING):
        assert parse_qrels(p).grade("1", "d1") == 3
    assert "duplicate" in caplog.text
    with pytest.raises(ValidationError):
        parse_qrels(p, strict=True)


def test_qrels_round_trip(tmp_path):
    q = JudgmentSet({("1", "a"): 0, ("1", "b"): 4, ("2", "a"): 2})
    write_qrels(tmp_path / "q", q)
    assert parse_qrels(tmp_path / "q") == q


# --- runs ---

def test_run_lines(tmp_path):
    run = RankedRun("7", 2, (("dA", 3.5), ("dB", 1.25)))
    write_run(tmp_path / "r", [run], tag="t")
    assert (tmp_path / "r").read_text().splitlines() == [
        "7_v2 Q0 dA 1 3.500000 t",
        "7_v2 Q0 dB 2 1.250000 t",
    ]


def test_run_round_trip_100_docs(tmp_path):
    runs = [
        RankedRun(t, v, tuple((f"doc{i}", round(100 - i * 0.37 - v, 6)) for i in range(100)))
        for t in ("1", "2") for v in range(3)
    ]
    write_run(tmp_path / "r", runs)
    assert parse_run(tmp_path / "r") == runs


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30))
def test_run_round_trip_property(tmp_path_factory, scores):
    scores = sorted((round(s, 6) for s in scores), reverse=True)
    run = RankedRun("42", 0, tuple((f"d{i}", s) for i, s in enumerate(scores)))
    path = tmp_path_factory.mktemp("r") / "r"
    write_run(path, [run])
    assert parse_run(path) == [run]


def test_run_rank_gap_rejected(tmp_path):
    with pytest.raises(ValidationError, match="rank 3"):
        parse_run(write(tmp_path, "r", "1 Q0 a 1 2.0 t\n1 Q0 b 3 1.0 t\n"))


def test_run_increasing_score_rejected(tmp_path):
    with pytest.raises(ValidationError, match="score"):
        parse_run(write(tmp_path, "r", "1 Q0 a 1 1.0 t\n1 Q0 b 2 2.0 t\n"))


def test_write_rejects_non_monotone(tmp_path):
    with pytest.raises(ValidationError):
        write_run(tmp_path / "r", [RankedRun("1", 0, (("a", 1.0), ("b", 2.0)))])


def test_reference_trec_run_parses(data_dir):
    runs = parse_run(data_dir / "reference.run")
    assert [(r.topic_id, r.variant_index, len(r)) for r in runs] == [("301", 0, 4), ("302", 0, 3)]
    assert runs[0].entries[0] == ("clueweb12-0000tw-05-12114", 14.5231)
    assert runs[1].entries[-1][1] == -1.5


def test_split_query_id():
    assert split_query_id("275_v3") == ("275", 3)
    assert split_query_id("301") == ("301", 0)
    assert split_query_id("a_b_v10") == ("a_b", 10)


# --- stats ---

def test_variant_stats_hand_count():
    st_ = variant_stats(VariantSet("h", {"A": ["x y", "x y"], "B": ["z"]}))
    assert (st_.total, st_.unique, st_.min_per_topic, st_.max_per_topic) == (3, 2, 1, 2)
    assert st_.avg_per_topic == 1.5
    assert st_.avg_words_per_query == pytest.approx(5 / 3)


def test_variant_stats_single():
    st_ = variant_stats(VariantSet("h", {"A": ["a"]}))
    assert (st_.total, st_.unique, st_.avg_words_per_query) == (1, 1, 1.0)


def test_variant_stats_empty():
    with pytest.raises(ValueError):
        variant_stats(VariantSet("h", {}))


@given(st.dictionaries(st.text("ab", min_size=1, max_size=2),
                       st.lists(st.sampled_from(["a", "b c", "d e f", "a"]), min_size=1, max_size=8),
                       min_size=1))
def test_variant_stats_invariants(entries):
    s = variant_stats(VariantSet("h", entries))
    assert 0 < s.unique <= s.total
    assert s.min_per_topic <= s.avg_per_topic <= s.max_per_topic


# --- csv ---

def test_csv_header_comment_and_lf(tmp_path):
    write_csv(tmp_path / "r.csv", ["a", "b"], [["x", 0.5], ["y", 1]], comment="seed=1")
    raw = (tmp_path / "r.csv").read_bytes()
    assert raw == b"# seed=1\na,b\nx,0.500000\ny,1\n"
    assert read_csv(tmp_path / "r.csv") == [{"a": "x", "b": "0.500000"}, {"a": "y", "b": "1"}]


def test_format_csv_without_comment():
    assert format_csv(["a"], [[1]]) == "a\n1\n"

import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from headgen.corpus import (
    Article,
    CorpusFormatError,
    FilterSpec,
    SchemaError,
    SplitError,
    apply_filters,
    keep,
    load_corpus,
    parse_lines,
    split,
)


def words(n, w="w"):
    return " ".join(f"{w}{i}" for i in range(n))


@pytest.mark.parametrize("n,ok", [(2, False), (3, True), (15, True), (16, False)])
def test_title_length_boundaries(n, ok):
    assert keep(Article(words(n), words(25)), FilterSpec()) is ok


@pytest.mark.parametrize("n,ok", [(19, False), (20, True), (2000, True), (2001, False)])
def test_body_length_boundaries(n, ok):
    assert keep(Article(words(5), words(n)), FilterSpec()) is ok


def test_obituary_rule():
    a = Article("john doe, 87, dies", words(30))
    assert keep(a, FilterSpec())
    assert not keep(a, FilterSpec(exclude_obituaries=True))
    # whole-word match only
    assert keep(Article("studies show gains", words(30)), FilterSpec(exclude_obituaries=True))


def test_filter_preserves_order():
    arts = [Article(words(n), words(25)) for n in (3, 1, 5, 20, 4)]
    assert [a.title for a in apply_filters(arts, FilterSpec())] == [words(3), words(5), words(4)]


def test_bad_filter_spec():
    with pytest.raises(ValueError):
        FilterSpec(min_title_words=9, max_title_words=3)


def test_load_lowercases(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text(json.dumps({"title": "A B C", "text": "Mayor SAYS"}) + "\n\n", encoding="utf-8")
    assert list(load_corpus(p)) == [Article("a b c", "mayor says")]


@settings(max_examples=200, deadline=None)
@given(st.text(min_size=0, max_size=40).map(str.lower), st.text(min_size=0, max_size=40).map(str.lower))
def test_lowercase_input_is_identity(title, text):
    if title.lower() != title or text.lower() != text:
        return
    (a,) = parse_lines([json.dumps({"title": title, "text": text})])
    assert (a.title, a.body) == (title, text)


def test_errors_name_the_line():
    lines = [json.dumps({"title": "a", "text": "b"}), "", "{oops"]
    with pytest.raises(CorpusFormatError, match=":3:"):
        list(parse_lines(lines))
    with pytest.raises(CorpusFormatError, match=":1:"):
        list(parse_lines(["[1, 2]"]))
    with pytest.raises(SchemaError, match="text"):
        list(parse_lines([json.dumps({"title": "a"})]))
    with pytest.raises(SchemaError, match=":2:"):
        list(parse_lines([json.dumps({"title": "a", "text": "b"}), json.dumps({"title": 3, "text": "b"})]))


def test_split_partitions():
    s = split(100, 10, 0.1, 0)
    assert len(s.test) == 10 and len(s.val) == 9 and len(s.train) == 81
    assert sorted(s.train + s.val + s.test) == list(range(100))
    assert split(100, 10, 0.1, 0) == s
    assert split(100, 10, 0.1, 1).test != s.test


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 300), st.data())
def test_split_is_a_partition(n, data):
    test_size = data.draw(st.integers(0, n - 1))
    frac = data.draw(st.floats(0.0, 0.5))
    s = split(n, test_size, frac, data.draw(st.integers(0, 10)))
    assert len(s.test) == test_size
    assert sorted(s.train + s.val + s.test) == list(range(n))


def test_split_errors():
    with pytest.raises(SplitError):
        split(10, 10, 0.0, 0)
    with pytest.raises(SplitError):
        split(10, 2, 1.0, 0)


def test_split_manifest_round_trip(tmp_path):
    s = split(30, 5, 0.1, 4)
    s.save(tmp_path / "split.json")
    assert json.loads((tmp_path / "split.json").read_text()) == s.manifest()


@pytest.mark.parametrize("env,expected", [("HEADGEN_NYT_JSONL", 1444919), ("HEADGEN_RIA_JSONL", 1003869)])
def test_real_corpus_counts(env, expected):
    path = os.environ.get(env)
    if not path or not os.path.exists(path):
        pytest.skip(f"set {env} to a licensed corpus converted to JSON lines")
    spec = FilterSpec(exclude_obituaries=env == "HEADGEN_NYT_JSONL")
    assert sum(1 for _ in apply_filters(load_corpus(path), spec)) == expected

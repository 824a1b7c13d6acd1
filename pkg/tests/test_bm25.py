import math
import random

import pytest
from hypothesis import given, settings, strategies as st

import fixturegen
import oracles
from synthpqa.bm25 import (
    AnalyzerConfig,
    Bm25Params,
    build_index,
    idf,
    load_index,
    save_index,
    score,
    search,
    tokenize,
)


def test_tokenize_examples():
    assert tokenize("The movie, Volere Volare!") == ["the", "movie", "volere", "volare"]
    assert tokenize("") == []
    assert tokenize("...!?") == []
    assert tokenize("ABC abc") == ["abc", "abc"]
    assert tokenize("naïve café") == ["naïve", "café"]
    assert tokenize("under_score stays") == ["under_score", "stays"]


def test_tokenize_case_preserving_option():
    cfg = AnalyzerConfig(lowercase=False)
    assert tokenize("The Movie", cfg) == ["The", "Movie"]


@settings(max_examples=120, deadline=None)
@given(st.text(max_size=60))
def test_tokenize_matches_character_class_walk(text):
    assert tokenize(text) == [t.lower() for t in oracles.word_chunks(text)]


def test_build_index_hand_counts():
    index = build_index([("d1", "a b"), ("d2", "b b c")])
    assert index.N == 2
    assert index.df("b") == 2
    assert index.df("a") == 1
    assert index.df("missing") == 0
    assert dict(index.postings["b"])[1] == 2  # tf of b in d2
    assert index.avgdl == 2.5
    assert index.doc_lengths == [2, 3]


def test_build_index_duplicate_id():
    with pytest.raises(ValueError) as err:
        build_index([("d1", "a"), ("d1", "b")])
    assert "d1" in str(err.value)


def test_empty_corpus():
    index = build_index([])
    assert index.N == 0
    assert search(index, Bm25Params(), "anything", 5) == []


def test_hand_score_two_docs():
    # N=2, df(a)=1: idf = ln(1 + 1.5/1.5) = ln 2; equal lengths so dl/avgdl = 1
    # and the tf factor is 1/(1 + 1.75)
    index = build_index([("d1", "a b c"), ("d2", "x y z")])
    got = score(index, Bm25Params(), ["a"], 0)
    assert abs(got - math.log(2.0) / 2.75) < 1e-12


def test_duplicate_query_terms_count_once():
    index = build_index([("d", "a b c")])
    once = score(index, Bm25Params(), ["a"], 0)
    thrice = score(index, Bm25Params(), ["a", "a", "a"], 0)
    assert once == thrice


def test_score_out_of_range_ordinal():
    index = build_index([("d", "a")])
    with pytest.raises(IndexError):
        score(index, Bm25Params(), ["a"], 1)


def test_params_validation():
    with pytest.raises(ValueError):
        Bm25Params(k1=-0.1)
    with pytest.raises(ValueError):
        Bm25Params(b=1.5)


def test_brute_force_parity_random_corpora():
    rng = random.Random(123)
    params = Bm25Params()
    for _ in range(100):
        docs = fixturegen.rand_docs(rng)
        index = build_index(docs)
        query = fixturegen.rand_query(rng)
        doc_tokens = [text.split() for _, text in docs]
        for ordinal in range(len(docs)):
            mine = score(index, params, query.split(), ordinal)
            ref = oracles.bm25_score(doc_tokens, query.split(), ordinal,
                                     params.k1, params.b)
            assert abs(mine - ref) < 1e-9


def test_search_ties_break_by_ascending_id():
    index = build_index([("z", "a b"), ("m", "a b"), ("c", "a b")])
    ranked = search(index, Bm25Params(), "a", 10)
    assert [d for d, _ in ranked] == ["c", "m", "z"]
    assert len({s for _, s in ranked}) == 1


def test_search_only_positive_scores():
    index = build_index([("d1", "a b"), ("d2", "c d")])
    ranked = search(index, Bm25Params(), "a", 10)
    assert [d for d, _ in ranked] == ["d1"]
    assert all(s > 0 for _, s in ranked)


def test_search_k_larger_than_corpus():
    index = build_index([("d1", "a"), ("d2", "a")])
    assert len(search(index, Bm25Params(), "a", 50)) == 2


def test_search_k_prefix_property():
    rng = random.Random(9)
    docs = fixturegen.rand_docs(rng, max_docs=30)
    index = build_index(docs)
    query = fixturegen.rand_query(rng)
    small = search(index, Bm25Params(), query, 3)
    big = search(index, Bm25Params(), query, 10)
    assert big[:len(small)] == small


def test_search_rejects_bad_k():
    index = build_index([("d", "a")])
    with pytest.raises(ValueError):
        search(index, Bm25Params(), "a", 0)


def test_search_agrees_with_pointwise_score():
    rng = random.Random(77)
    for _ in range(30):
        docs = fixturegen.rand_docs(rng, max_docs=25)
        index = build_index(docs)
        query = fixturegen.rand_query(rng)
        ranked = search(index, Bm25Params(), query, len(docs))
        by_id = {doc_id: i for i, (doc_id, _) in enumerate(docs)}
        for doc_id, s in ranked:
            direct = score(index, Bm25Params(), tokenize(query), by_id[doc_id])
            assert abs(s - direct) < 1e-12


def test_adding_query_term_occurrence_never_hurts():
    rng = random.Random(31)
    for _ in range(40):
        docs = fixturegen.rand_docs(rng, max_docs=20)
        target = rng.randrange(len(docs))
        term = rng.choice(fixturegen.VOCAB)
        before = score(build_index(docs), Bm25Params(), [term], target)
        bumped = list(docs)
        doc_id, text = bumped[target]
        bumped[target] = (doc_id, f"{text} {term}")
        after = score(build_index(bumped), Bm25Params(), [term], target)
        assert after >= before - 1e-12


def test_idf_unseen_term_positive():
    index = build_index([("d", "a")])
    assert idf(index, "nope") == math.log(1.0 + 1.5 / 0.5)


def test_save_load_round_trip(tmp_path):
    rng = random.Random(5)
    docs = fixturegen.rand_docs(rng, max_docs=20)
    index = build_index(docs)
    path = tmp_path / "index.json"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.doc_ids == index.doc_ids
    assert loaded.doc_lengths == index.doc_lengths
    assert loaded.postings == index.postings
    assert loaded.avgdl == index.avgdl
    query = fixturegen.rand_query(rng)
    assert search(loaded, Bm25Params(), query, 10) == search(index, Bm25Params(), query, 10)


def test_save_is_byte_deterministic(tmp_path):
    docs = fixturegen.rand_docs(random.Random(6), max_docs=20)
    index = build_index(docs)
    save_index(index, tmp_path / "one.json")
    save_index(index, tmp_path / "two.json")
    assert (tmp_path / "one.json").read_bytes() == (tmp_path / "two.json").read_bytes()


def test_load_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"format": "other", "version": 1}')
    with pytest.raises(ValueError):
        load_index(path)

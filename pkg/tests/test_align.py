import json
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bijective_corpus, gdfa_matrix, to_matrix
from qaforge.align import (
    FORWARD,
    REVERSE,
    AlignerConfig,
    AlignmentLinkSet,
    DimensionMismatch,
    EmptyCorpus,
    ParseError,
    align_corpus,
    corpus_log_likelihood,
    diagonal_alignment,
    parse_pharaoh,
    read_parallel_jsonl,
    read_parallel_text,
    read_pharaoh,
    symmetrize_gdfa,
    train_gibbs,
    train_ibm1,
    viterbi_align,
    write_pharaoh,
)

TOY = [(["a", "b"], ["x", "y"]), (["a"], ["x"])]


def links(*pairs, n=None, m=None):
    return AlignmentLinkSet(frozenset(pairs), FORWARD, n, m)


def test_toy_lexicon_prefers_cooccurrence():
    lex = train_ibm1(TOY, iterations=5, alpha=0.001)
    assert lex.prob("a", "x") > lex.prob("a", "y")
    assert lex.prob("b", "y") > lex.prob("b", "x")


def test_single_pair_converges():
    probs = [train_ibm1([(["a"], ["x"])], iterations=k).prob("a", "x") for k in (1, 5, 20)]
    assert probs == sorted(probs)
    assert probs[-1] > 0.49  # the rest is shared with NULL


def test_zero_iterations_rejected():
    with pytest.raises(ValueError):
        train_ibm1(TOY, iterations=0)


def test_empty_corpus_rejected():
    with pytest.raises(EmptyCorpus):
        train_ibm1([([], ["x"]), (["a"], [])])


def test_viterbi_toy():
    lex = train_ibm1(TOY, iterations=5, alpha=0.001)
    assert viterbi_align(lex, TOY[0]).links == {(0, 0), (1, 1)}


def test_null_absorbs_shared_target_word():
    corpus = [(["a"], ["x", "q"]), (["b"], ["y", "q"]), (["c"], ["z", "q"])]
    lex = train_ibm1(corpus, iterations=10)
    out = viterbi_align(lex, corpus[0])
    assert (0, 0) in out and (0, 1) not in out


def test_viterbi_empty_side():
    lex = train_ibm1(TOY)
    assert len(viterbi_align(lex, (["a"], []))) == 0
    assert len(viterbi_align(lex, ([], ["x"]))) == 0


def test_reverse_direction_is_transposed():
    swapped = [(t, s) for s, t in TOY]
    lex = train_ibm1(swapped)
    out = viterbi_align(lex, (["a", "b"], ["x", "y", "x"]), REVERSE)
    assert out.src_len == 2 and out.tgt_len == 3
    assert all(i < 2 and j < 3 for i, j in out.links)


def test_rows_sum_to_one_every_iteration():
    corpus, _ = bijective_corpus(n_pairs=100, vocab=50, seed=3)
    seen = []

    def check(it, lex):
        seen.append(it)
        assert np.max(np.abs(lex.row_sums() - 1.0)) < 1e-9

    train_ibm1(corpus, iterations=6, on_iteration=check)
    assert seen == [1, 2, 3, 4, 5, 6]


def test_vectorized_likelihood_matches_loop():
    corpus, _ = bijective_corpus(n_pairs=60, vocab=30, seed=5)
    lex = train_ibm1(corpus, iterations=3, final_likelihood=True)
    assert lex.log_likelihood[-1] == pytest.approx(corpus_log_likelihood(lex, corpus), rel=1e-12)


def test_jobs_and_chunking_do_not_change_result():
    corpus, _ = bijective_corpus(n_pairs=200, vocab=80, seed=7)
    a = train_ibm1(corpus, iterations=4)
    b = train_ibm1(corpus, iterations=4, jobs=3, chunk_entries=500)
    assert np.allclose(a.pair_probs, b.pair_probs, rtol=0, atol=1e-12)
    assert np.array_equal(a.pair_keys, b.pair_keys)


def test_token_cap_skips_long_pairs_for_training():
    corpus = TOY + [(["a"] * 5, ["z"] * 5)]
    lex = train_ibm1(corpus, token_cap=4)
    assert "z" not in lex.tgt_vocab


def test_gibbs_is_seeded_and_learns():
    corpus, gold = bijective_corpus(n_pairs=150, vocab=40, seed=11)
    a = train_gibbs(corpus, iterations=20, seed=1)
    b = train_gibbs(corpus, iterations=20, seed=1)
    assert np.array_equal(a.pair_probs, b.pair_probs)
    hits = total = 0
    for pair, g in zip(corpus, gold):
        out = viterbi_align(a, pair).links
        hits += len(out & g)
        total += len(g)
    assert hits / total > 0.9


def test_gdfa_examples():
    assert symmetrize_gdfa(links((0, 0), (1, 1)), links((0, 0))).links == {(0, 0), (1, 1)}
    assert symmetrize_gdfa(links((0, 1)), links((1, 0))).links == {(0, 1), (1, 0)}
    s = links((0, 2), (1, 0), (2, 1))
    assert symmetrize_gdfa(s, s).links == s.links


def test_gdfa_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        symmetrize_gdfa(links((0, 0), n=2, m=2), links((0, 0), n=3, m=2))


link_sets = st.frozensets(st.tuples(st.integers(0, 7), st.integers(0, 7)), max_size=20)


@settings(max_examples=300)
@given(link_sets, link_sets)
def test_gdfa_between_intersection_and_union(f, r):
    out = symmetrize_gdfa(links(*f, n=8, m=8), links(*r, n=8, m=8)).links
    assert f & r <= out <= f | r


@settings(max_examples=200)
@given(link_sets, link_sets)
def test_gdfa_matches_matrix_reference(f, r):
    out = symmetrize_gdfa(links(*f, n=8, m=8), links(*r, n=8, m=8))
    ref = gdfa_matrix(to_matrix(f, 8, 8), to_matrix(r, 8, 8))
    assert np.array_equal(to_matrix(out.links, 8, 8), ref)


def test_linkset_bounds():
    with pytest.raises(DimensionMismatch):
        AlignmentLinkSet(frozenset({(2, 0)}), FORWARD, 2, 2)
    with pytest.raises(ValueError):
        AlignmentLinkSet(frozenset({(-1, 0)}))


def test_diagonal():
    assert diagonal_alignment(3, 2).links == {(0, 0), (1, 1)}


def test_pharaoh_parse():
    assert parse_pharaoh("0-0 1-2").links == {(0, 0), (1, 2)}
    assert parse_pharaoh("").links == frozenset()
    with pytest.raises(ParseError):
        parse_pharaoh("x-y")
    with pytest.raises(ParseError):
        parse_pharaoh("0-1 3")


def test_pharaoh_file_round_trip(tmp_path):
    text = "0-0 1-2\n\n2-1 0-3\n"
    path = tmp_path / "a.txt"
    path.write_text(text, "utf-8")
    alignments = read_pharaoh(path)
    assert [a.links for a in alignments] == [{(0, 0), (1, 2)}, frozenset(), {(0, 3), (2, 1)}]
    out = tmp_path / "b.txt"
    write_pharaoh(alignments, out)
    assert out.read_text("utf-8") == "0-0 1-2\n\n0-3 2-1\n"
    assert [a.links for a in read_pharaoh(out)] == [a.links for a in alignments]


@given(st.lists(link_sets, max_size=6))
def test_pharaoh_round_trip_property(tmp_path_factory, sets):
    path = tmp_path_factory.mktemp("ph") / "a.txt"
    write_pharaoh([links(*s) for s in sets], path)
    assert [a.links for a in read_pharaoh(path)] == [frozenset(s) for s in sets]


def test_corpus_readers(tmp_path):
    (tmp_path / "s.txt").write_text("a b\nc\n", "utf-8")
    (tmp_path / "t.txt").write_text("x y\nz\n", "utf-8")
    assert read_parallel_text(tmp_path / "s.txt", tmp_path / "t.txt") == [(["a", "b"], ["x", "y"]), (["c"], ["z"])]
    with open(tmp_path / "c.jsonl", "w", encoding="utf-8") as f:
        f.write(json.dumps({"src": ["a"], "tgt": ["x"]}) + "\n")
    assert read_parallel_jsonl(tmp_path / "c.jsonl") == [(["a"], ["x"])]


def test_align_corpus_symmetrized_on_synthetic():
    corpus, gold = bijective_corpus(n_pairs=300, vocab=100, seed=2)
    out = align_corpus(corpus, AlignerConfig())
    hits = sum(len(a.links & g) for a, g in zip(out, gold))
    assert hits / sum(len(g) for g in gold) > 0.95
    assert all(a.src_len == len(s) and a.tgt_len == len(t) for a, (s, t) in zip(out, corpus))


def test_align_corpus_lowercases():
    corpus = [(["A", "b"], ["X", "y"]), (["a"], ["x"])]
    out = align_corpus(corpus, AlignerConfig())
    assert (0, 0) in out[0]

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from langsteer import language as lang
from langsteer.errors import DimensionError, NumericError

from oracles import ref_cosine


# --- hash embedder ----------------------------------------------------------

def test_hash_embed_empty_is_zero():
    assert np.array_equal(lang.hash_embed(""), np.zeros(64))
    assert np.array_equal(lang.hash_embed("  ,,  !"), np.zeros(64))


def test_hash_embed_bag_of_words_symmetry():
    assert np.array_equal(lang.hash_embed("pick cup"), lang.hash_embed("cup pick"))
    assert np.array_equal(lang.hash_embed("Pick CUP!"), lang.hash_embed("pick cup"))


def test_hash_embed_cosine_matches_token_count_oracle():
    # independent oracle: raw token counts (valid while the tokens involved
    # hash to distinct buckets, which we assert explicitly)
    texts = ("pick cup", "pick bowl")
    toks = {t for txt in texts for t in txt.split()}
    buckets = {lang._fnv1a(t) % 64 for t in toks}
    assert len(buckets) == len(toks)

    def counts(text):
        vocab = sorted(toks)
        return [text.split().count(v) for v in vocab]

    want = ref_cosine(counts(texts[0]), counts(texts[1]))
    got = lang.cosine_similarity(lang.hash_embed(texts[0]), lang.hash_embed(texts[1]))
    assert got == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.5)


@given(st.text(max_size=80))
def test_hash_embed_norm_is_one_or_zero(text):
    n = np.linalg.norm(lang.hash_embed(text))
    assert n == 0.0 or n == pytest.approx(1.0, abs=1e-12)


# --- cosine ------------------------------------------------------------------

def test_cosine_examples():
    v = np.array([0.3, -1.2, 4.0])
    assert lang.cosine_similarity(v, v) == pytest.approx(1.0)
    assert lang.cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    got = lang.cosine_similarity(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    assert got == pytest.approx(math.sqrt(0.5), abs=1e-9)
    assert round(got, 8) == 0.70710678


def test_cosine_errors():
    with pytest.raises(NumericError):
        lang.cosine_similarity(np.zeros(3), np.ones(3))
    with pytest.raises(DimensionError):
        lang.cosine_similarity(np.ones(3), np.ones(4))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_cosine_bounded(vals):
    u = np.array(vals)
    v = np.arange(1.0, len(vals) + 1.0)
    if np.linalg.norm(u) == 0:
        return
    s = lang.cosine_similarity(u, v)
    assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12


# --- table and exemplars -------------------------------------------------------

def _hash_table_and_exemplars(texts_by_task, dim=64):
    labeled = [(task, t) for task, ts in texts_by_task.items() for t in ts]
    table = lang.EmbeddingTable.from_hash([t for _, t in labeled], dim=dim)
    return table, lang.build_exemplars(labeled, table)


def test_retrieval_identity_for_every_training_utterance():
    table, exemplars = _hash_table_and_exemplars(
        {"up": ["move up", "go higher now"], "down": ["move down", "descend please"]}
    )
    for ex in exemplars:
        hit, sim = lang.retrieve_nearest(ex.text, table, exemplars)
        assert hit.id == ex.id
        assert sim == pytest.approx(1.0, abs=1e-9)


def test_retrieval_paraphrase_and_exhaustive_max():
    table, exemplars = _hash_table_and_exemplars({"up": ["move up"], "down": ["move down"]})
    hit, sim = lang.retrieve_nearest("please move up now", table, exemplars)
    assert hit.text == "move up"
    sims = [
        lang.cosine_similarity(lang.hash_embed("please move up now"), ex.embedding)
        for ex in exemplars
    ]
    assert sim == pytest.approx(max(sims), abs=1e-12)


def test_retrieval_tie_breaks_to_smallest_id():
    table, exemplars = _hash_table_and_exemplars({"a": ["same words here"], "b": ["words same here"]})
    hit, sim = lang.retrieve_nearest("here same words", table, exemplars)
    assert hit.id == 0 and sim == pytest.approx(1.0)


def test_retrieval_lookup_error_without_fallback():
    table = lang.EmbeddingTable(
        dim=3,
        entries={"known utterance": np.array([1.0, 0.0, 0.0])},
        provenance="pretrained_fixture",
    )
    exemplars = lang.build_exemplars([("t", "known utterance")], table)
    with pytest.raises(LookupError):
        lang.retrieve_nearest("brand new words", table, exemplars)
    hit, _ = lang.retrieve_nearest("brand new words", table, exemplars, allow_hash_fallback=True)
    assert hit.text == "known utterance"


def test_empty_exemplar_store_rejected():
    table = lang.EmbeddingTable.from_hash(["x"], dim=8)
    with pytest.raises(ValueError):
        lang.retrieve_nearest("x", table, [])


def test_table_roundtrip_and_validation(tmp_path):
    table = lang.EmbeddingTable.from_hash(["alpha beta", "gamma"], dim=16)
    path = tmp_path / "table.json"
    lang.save_embedding_table(str(path), table)
    loaded = lang.load_embedding_table(str(path))
    assert loaded.dim == 16 and loaded.provenance == "hash"
    for text in table.entries:
        assert np.array_equal(loaded.entries[text], table.entries[text])


def test_table_token_level_mean_pooling(tmp_path):
    doc = {
        "schema": "embedding-table/1",
        "dim": 2,
        "provenance": "pretrained_fixture",
        "entries": [{"text": "two tokens", "vector": [[1.0, 0.0], [0.0, 1.0]]}],
    }
    path = tmp_path / "tok.json"
    path.write_text(json.dumps(doc))
    loaded = lang.load_embedding_table(str(path))
    assert np.array_equal(loaded.entries["two tokens"], [0.5, 0.5])


def test_table_rejects_duplicates_and_bad_dims(tmp_path):
    doc = {
        "schema": "embedding-table/1",
        "dim": 2,
        "entries": [
            {"text": "a", "vector": [1.0, 0.0]},
            {"text": "a", "vector": [0.0, 1.0]},
        ],
    }
    p = tmp_path / "dup.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        lang.load_embedding_table(str(p))
    with pytest.raises(DimensionError):
        lang.EmbeddingTable(dim=3, entries={"a": np.ones(2)})


def test_exemplar_file_roundtrip(tmp_path):
    labeled = [("up", "move up"), ("down", "move down")]
    path = tmp_path / "ex.json"
    lang.save_exemplar_file(str(path), labeled)
    assert lang.load_exemplar_file(str(path)) == labeled


# --- annotator filtering --------------------------------------------------------

def _grid_corpus(texts):
    """texts: dict annotator -> dict task -> text."""
    annotators = tuple(sorted(texts))
    tasks = tuple(sorted(next(iter(texts.values()))))
    return lang.AnnotatorCorpus(annotators=annotators, tasks=tasks, utterances=texts)


def test_filter_degenerate_all_identical():
    corpus = _grid_corpus({a: {"t1": "wave hello", "t2": "sit down"} for a in "abcd"})
    table = lang.EmbeddingTable.from_hash(["wave hello", "sit down"], dim=32)
    kept, scores = lang.filter_annotators(corpus, table, k=0)
    assert kept == list(corpus.annotators)
    assert all(s == pytest.approx(0.0, abs=1e-12) for s in scores.values())


def test_filter_drops_constructed_outlier():
    # four consistent annotators share directions in the first dims; the
    # outlier's vectors live in an orthogonal coordinate
    tasks = ("t1", "t2")
    consistent = list("abcd")
    texts = {a: {t: f"{a}:{t}" for t in tasks} for a in consistent + ["z"]}
    entries = {}
    for i, a in enumerate(consistent):
        entries[f"{a}:t1"] = np.array([1.0, 0.05 * i, 0.0])
        entries[f"{a}:t2"] = np.array([0.05 * i, 1.0, 0.0])
    entries["z:t1"] = np.array([0.0, 0.0, 1.0])
    entries["z:t2"] = np.array([0.0, 0.0, 1.0])
    table = lang.EmbeddingTable(dim=3, entries={k: v for k, v in entries.items()}, provenance="hash")
    corpus = _grid_corpus(texts)
    kept, scores = lang.filter_annotators(corpus, table, k=1)
    assert scores["z"] == max(scores.values())
    assert kept == consistent
    # direct recomputation of the outlier's score: orthogonal -> distance 1 per task
    assert scores["z"] == pytest.approx(1.0)


def test_filter_leave_one_out_vs_include_self():
    tasks = ("t",)
    texts = {a: {"t": f"u{a}"} for a in ("a", "b", "c")}
    entries = {"ua": np.array([1.0, 0.0]), "ub": np.array([1.0, 0.0]), "uc": np.array([0.0, 1.0])}
    table = lang.EmbeddingTable(dim=2, entries=entries, provenance="hash")
    corpus = _grid_corpus(texts)
    _, loo = lang.filter_annotators(corpus, table, k=0)
    _, incl = lang.filter_annotators(corpus, table, k=0, include_self=True)
    # leave-one-out pushes the odd annotator strictly further out
    assert loo["c"] > incl["c"]
    assert loo["c"] == pytest.approx(1.0)


def test_filter_permutation_invariant():
    rng = np.random.default_rng(0)
    annotators = tuple(f"a{i}" for i in range(6))
    tasks = ("t1", "t2", "t3")
    texts = {a: {t: f"{a} {t}" for t in tasks} for a in annotators}
    entries = {f"{a} {t}": rng.normal(size=8) for a in annotators for t in tasks}
    table = lang.EmbeddingTable(dim=8, entries=entries, provenance="hash")
    corpus = _grid_corpus(texts)
    kept, scores = lang.filter_annotators(corpus, table, k=2)

    shuffled = lang.AnnotatorCorpus(
        annotators=tuple(reversed(annotators)), tasks=tasks, utterances=texts
    )
    kept2, scores2 = lang.filter_annotators(shuffled, table, k=2)
    assert set(kept) == set(kept2)
    assert scores == scores2


def test_filter_tie_break_drops_greater_id():
    # two annotators are mutual leave-one-out consensus, so they tie
    # exactly; the greater id is the one dropped
    texts = {"a1": {"t": "north"}, "a2": {"t": "south"}}
    table = lang.EmbeddingTable(
        dim=2,
        entries={"north": np.array([1.0, 0.0]), "south": np.array([0.0, 1.0])},
        provenance="hash",
    )
    corpus = _grid_corpus(texts)
    kept, scores = lang.filter_annotators(corpus, table, k=1)
    assert scores["a1"] == scores["a2"]
    assert kept == ["a1"]


def test_filter_k_bounds():
    corpus = _grid_corpus({a: {"t": "x"} for a in "ab"})
    table = lang.EmbeddingTable.from_hash(["x"], dim=8)
    with pytest.raises(ValueError):
        lang.filter_annotators(corpus, table, k=2)


def test_corpus_requires_complete_grid():
    with pytest.raises(ValueError):
        lang.AnnotatorCorpus(
            annotators=("a", "b"), tasks=("t1", "t2"),
            utterances={"a": {"t1": "x", "t2": "y"}, "b": {"t1": "x"}},
        )

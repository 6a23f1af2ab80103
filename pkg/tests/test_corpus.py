import json

import numpy as np
import pytest

from structembed.config import Config
from structembed.corpus import Vocabulary, fragment, ingest, tokenize

from conftest import make_corpus


@pytest.fixture
def small_vocab():
    # filler token so virus/mortality/spread land at ids 3/4/5
    return Vocabulary(["filler", "virus", "mortality", "spread"])


class TestTokenize:
    def test_empty_text(self, small_vocab):
        assert tokenize("", small_vocab) == []

    def test_hand_example(self, small_vocab):
        assert tokenize("Virus mortality, virus spread", small_vocab) == [3, 4, 3, 5]

    def test_unknown_maps_to_unk(self, small_vocab):
        ids = tokenize("virus zebra", small_vocab)
        assert ids == [3, small_vocab.unk_id]

    def test_punctuation_and_case_folding(self, small_vocab):
        assert tokenize("VIRUS!!! (spread)", small_vocab) == [3, 5]


class TestVocabulary:
    def test_reserved_ids_distinct(self):
        v = Vocabulary(["a", "b"])
        assert v.mask_id != v.unk_id
        assert v.mask_id not in (v.token_to_id["a"], v.token_to_id["b"])

    def test_bijective(self):
        v = Vocabulary(["a", "b", "c"])
        for tok, i in v.token_to_id.items():
            assert v.id_to_token[i] == tok

    def test_build_frequency_cap(self):
        v = Vocabulary.build(["a a a b b c"], max_size=2)
        assert "a" in v.token_to_id and "b" in v.token_to_id
        assert "c" not in v.token_to_id

    def test_build_tie_break_lexicographic(self):
        v = Vocabulary.build(["b a"], max_size=2)
        assert v.token_to_id["a"] < v.token_to_id["b"]

    def test_round_trip_dict(self):
        v = Vocabulary(["x", "y"])
        w = Vocabulary.from_dict(v.to_dict())
        assert w.token_to_id == v.token_to_id


class TestFragment:
    def test_300_tokens_stride_64(self):
        frags = fragment(list(range(300)), max_seq_len=128, stride=64)
        starts = [f.tokens[0] for f in frags]
        lengths = [len(f.tokens) for f in frags]
        assert starts == [0, 64, 128, 192]
        assert lengths == [128, 128, 128, 108]
        assert [f.position for f in frags] == [1, 2, 3, 4]

    def test_short_input_single_window(self):
        frags = fragment(list(range(100)), max_seq_len=128, stride=64)
        assert len(frags) == 1
        assert len(frags[0].tokens) == 100

    def test_exact_window_suppresses_suffix(self):
        frags = fragment(list(range(128)), max_seq_len=128, stride=64)
        assert len(frags) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fragment([], 128, 64)

    def test_reconstruction(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 700))
            msl = int(rng.integers(1, 130))
            stride = int(rng.integers(1, msl + 1))
            tokens = list(rng.integers(0, 1000, size=n))
            frags = fragment(tokens, msl, stride)
            rebuilt = []
            for f in frags[:-1]:
                rebuilt.extend(f.tokens[:stride])
            rebuilt.extend(frags[-1].tokens)
            assert rebuilt == tokens

    def test_fragment_count_formula(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 600))
            msl = 128
            stride = 64
            frags = fragment(list(range(n)), msl, stride)
            expected = max(1, int(np.ceil((n - msl) / stride)) + 1)
            # the formula may overcount by the one suppressed tail window
            assert len(frags) in (expected, expected - 1)
            # every token covered
            covered = set()
            for f in frags:
                covered.update(f.tokens)
            assert covered == set(range(n))


class TestIngest:
    def test_counts(self, tmp_path):
        corpus = make_corpus(
            tmp_path,
            [("a", "one two"), ("b", "three four"), ("c", "five six")],
            edges=[("a", "b"), ("b", "c")],
        )
        assert corpus.n_docs == 3
        assert len(corpus.adjacency) == 4  # symmetrized

    def test_directed_config(self, tmp_path):
        cfg = Config(undirected=False)
        corpus = make_corpus(
            tmp_path,
            [("a", "one"), ("b", "two")],
            edges=[("a", "b")],
            cfg=cfg,
        )
        assert len(corpus.adjacency) == 1

    def test_unknown_edge_skipped_with_warning(self, tmp_path):
        corpus = make_corpus(
            tmp_path,
            [("a", "one"), ("b", "two")],
            edges=[("a", "b"), ("a", "ghost")],
        )
        assert corpus.warnings["skipped_edges"] == 1
        assert len(corpus.adjacency) == 2

    def test_duplicate_doc_id_error(self, tmp_path):
        with pytest.raises(ValueError, match="duplicate"):
            make_corpus(tmp_path, [("a", "one"), ("a", "two")])

    def test_empty_document_dropped(self, tmp_path):
        corpus = make_corpus(tmp_path, [("a", "word"), ("b", "!!!")])
        assert corpus.n_docs == 1
        assert corpus.warnings["empty_documents"] == 1

    def test_all_empty_error(self, tmp_path):
        with pytest.raises(ValueError, match="no valid documents"):
            make_corpus(tmp_path, [("a", "...")])

    def test_self_edge_dropped(self, tmp_path):
        corpus = make_corpus(tmp_path, [("a", "one"), ("b", "two")], edges=[("a", "a")])
        assert len(corpus.adjacency) == 0

    def test_edge_weights(self, tmp_path):
        corpus = make_corpus(
            tmp_path, [("a", "one"), ("b", "two")], edges=[("a", "b", "2.5")]
        )
        assert corpus.adjacency.entries[(0, 1)] == 2.5

    def test_idempotent(self, tmp_path):
        docs = [("a", "one two three"), ("b", "four five")]
        edges = [("a", "b")]
        c1 = make_corpus(tmp_path, docs, edges)
        c2 = make_corpus(tmp_path, docs, edges)
        assert c1.adjacency.entries == c2.adjacency.entries
        assert [d.doc_id for d in c1.documents] == [d.doc_id for d in c2.documents]
        assert c1.vocabulary.token_to_id == c2.vocabulary.token_to_id

    def test_document_invariants(self, tmp_path):
        text = " ".join(f"w{i}" for i in range(300))
        cfg = Config(max_seq_len=16, stride=8)
        corpus = make_corpus(tmp_path, [("a", text)], cfg=cfg)
        doc = corpus.documents[0]
        assert doc.n_fragments >= 1
        assert all(len(f.tokens) <= 16 for f in doc.fragments)
        assert all(
            t < len(corpus.vocabulary) for f in doc.fragments for t in f.tokens
        )

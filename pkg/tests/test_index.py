import numpy as np
import pytest

from bovw import (
    AssignmentMap,
    BowVector,
    ConflictError,
    InvertedIndex,
    QuerySpec,
    ValidationError,
    build_query,
)
from bovw.bow import empty_bow
from helpers import bow_to_dense, dense_cosine_ranking, random_bow, random_map


def build_random_index(rng, n_docs, vocab_size, allow_empty=False):
    index = InvertedIndex(vocab_size)
    dense = {}
    for i in range(n_docs):
        doc_id = f"doc-{i:04d}"
        if allow_empty and rng.random() < 0.05:
            bow = empty_bow(vocab_size)
        else:
            bow = random_bow(rng, vocab_size)
        index.add_document(doc_id, bow)
        dense[doc_id] = bow_to_dense(bow)
    return index, dense


class TestAddDocument:
    def test_self_retrieval(self):
        rng = np.random.default_rng(1)
        index = InvertedIndex(32)
        bow = random_bow(rng, 32)
        index.add_document("only", bow)
        ranked = index.search(bow, top_k=5)
        assert ranked.items[0][0] == "only"
        assert ranked.items[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_empty_document_never_retrieved(self):
        rng = np.random.default_rng(2)
        index = InvertedIndex(16)
        index.add_document("void", empty_bow(16))
        index.add_document("real", random_bow(rng, 16))
        assert "void" in index.doc_ids
        for _ in range(10):
            ranked = index.search(random_bow(rng, 16), top_k=10)
            assert "void" not in ranked.doc_ids()

    def test_reconstruction_oracle(self):
        rng = np.random.default_rng(3)
        index = InvertedIndex(64)
        originals = {}
        for i in range(100):
            bow = random_bow(rng, 64)
            doc_id = f"d{i:03d}"
            index.add_document(doc_id, bow)
            originals[doc_id] = bow
        assert index.nnz == sum(v.nnz for v in originals.values())
        rebuilt = index.document_vectors(list(originals))
        for doc_id, bow in originals.items():
            np.testing.assert_array_equal(rebuilt[doc_id].ids, bow.ids)
            np.testing.assert_array_equal(rebuilt[doc_id].weights, bow.weights)
            assert rebuilt[doc_id].norm == pytest.approx(bow.norm, abs=1e-9)
        # postings stay ordinal-sorted without duplicates
        for word, (ords, _) in index._postings.items():
            assert ords == sorted(ords)
            assert len(set(ords)) == len(ords)

    def test_duplicate_doc_id_rejected(self):
        rng = np.random.default_rng(4)
        index = InvertedIndex(8)
        index.add_document("a", random_bow(rng, 8))
        with pytest.raises(ConflictError):
            index.add_document("a", random_bow(rng, 8))

    def test_vocab_mismatch_rejected(self):
        rng = np.random.default_rng(5)
        index = InvertedIndex(8)
        with pytest.raises(ValidationError):
            index.add_document("a", random_bow(rng, 9))


class TestSearch:
    def test_dense_oracle_equivalence(self):
        rng = np.random.default_rng(6)
        index, dense = build_random_index(rng, 200, 64, allow_empty=True)
        for _ in range(20):
            query = random_bow(rng, 64)
            got = index.search(query, top_k=200)
            want = dense_cosine_ranking(dense, bow_to_dense(query))
            assert got.doc_ids() == [d for d, _ in want]
            for (_, gs), (_, ws) in zip(got.items, want):
                assert gs == pytest.approx(ws, abs=1e-6)

    def test_empty_query(self):
        rng = np.random.default_rng(7)
        index, _ = build_random_index(rng, 20, 16)
        assert index.search(empty_bow(16), top_k=5).items == []

    def test_top_k_truncation(self):
        rng = np.random.default_rng(8)
        index, dense = build_random_index(rng, 50, 8)
        query = random_bow(rng, 8)
        full = index.search(query, top_k=50)
        head = index.search(query, top_k=3)
        assert head.items == full.items[:3]

    def test_tie_break_ascending_doc_id(self):
        index = InvertedIndex(4)
        bow = BowVector(4, np.array([0]), np.array([2.0]))
        for doc_id in ["zed", "alpha", "mid"]:
            index.add_document(doc_id, BowVector(4, np.array([0]), np.array([3.0])))
        ranked = index.search(bow, top_k=3)
        assert ranked.doc_ids() == ["alpha", "mid", "zed"]
        assert all(s == pytest.approx(1.0) for _, s in ranked.items)

    def test_monotonicity_of_existing_scores(self):
        rng = np.random.default_rng(9)
        index, _ = build_random_index(rng, 30, 16)
        query = random_bow(rng, 16)
        before = dict(index.search(query, top_k=30).items)
        index.add_document("latecomer", random_bow(rng, 16))
        after = dict(index.search(query, top_k=31).items)
        for doc_id, score in before.items():
            assert after[doc_id] == score

    def test_determinism(self):
        rng = np.random.default_rng(10)
        index, _ = build_random_index(rng, 40, 32)
        query = random_bow(rng, 32)
        first = index.search(query, top_k=40)
        second = index.search(query, top_k=40)
        assert first.items == second.items

    def test_zero_score_documents_omitted(self):
        index = InvertedIndex(8)
        index.add_document("hit", BowVector(8, np.array([1]), np.array([1.0])))
        index.add_document("miss", BowVector(8, np.array([5]), np.array([1.0])))
        ranked = index.search(BowVector(8, np.array([1]), np.array([1.0])), top_k=10)
        assert ranked.doc_ids() == ["hit"]


class TestBuildQuery:
    def test_gs_uniform_map(self):
        amap = AssignmentMap(image_id="q", words=np.full((3, 4), 3), width=40, height=30)
        bow = build_query(QuerySpec(query_id="q", amap=amap), vocab_size=8)
        assert bow.ids.tolist() == [3]
        assert bow.weights.tolist() == [12.0]

    def test_ls_full_box_equals_gs(self):
        rng = np.random.default_rng(11)
        amap = random_map(rng, 4, 6, 16)
        gs = build_query(QuerySpec(query_id="q", amap=amap), 16)
        ls = build_query(
            QuerySpec(query_id="q", amap=amap, box=(0, 0, amap.width, amap.height)), 16
        )
        np.testing.assert_array_equal(gs.ids, ls.ids)
        np.testing.assert_array_equal(gs.weights, ls.weights)

    def test_ls_left_half_words_only(self):
        words = np.zeros((4, 8), dtype=int)
        words[:, :4] = 1
        words[:, 4:] = 2
        amap = AssignmentMap(image_id="q", words=words, width=128, height=64)
        bow = build_query(
            QuerySpec(query_id="q", amap=amap, box=(0, 0, 64, 64)), vocab_size=4
        )
        assert bow.ids.tolist() == [1]
        assert bow.weights.tolist() == [16.0]


class TestPersistence:
    def test_roundtrip_search_equivalence(self, tmp_path):
        rng = np.random.default_rng(12)
        index, _ = build_random_index(rng, 60, 32)
        path = tmp_path / "index.idx"
        index.save(path)
        back = InvertedIndex.load(path)
        assert back.doc_count == index.doc_count
        assert back.doc_ids == index.doc_ids
        assert back.nnz == index.nnz
        query = random_bow(rng, 32, integer_weights=True)
        a = index.search(query, top_k=60)
        b = back.search(query, top_k=60)
        assert a.doc_ids() == b.doc_ids()
        for (_, sa), (_, sb) in zip(a.items, b.items):
            assert sb == pytest.approx(sa, rel=1e-5)

    def test_save_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(13)
        index, _ = build_random_index(rng, 25, 16)
        a, b = tmp_path / "a.idx", tmp_path / "b.idx"
        index.save(a)
        index.save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_integer_counts_survive_exactly(self, tmp_path):
        rng = np.random.default_rng(14)
        index = InvertedIndex(32)
        bows = {}
        for i in range(10):
            bow = random_bow(rng, 32, integer_weights=True)
            index.add_document(f"d{i}", bow)
            bows[f"d{i}"] = bow
        path = tmp_path / "i.idx"
        index.save(path)
        back = InvertedIndex.load(path)
        rebuilt = back.document_vectors(list(bows))
        for doc_id, bow in bows.items():
            np.testing.assert_array_equal(rebuilt[doc_id].ids, bow.ids)
            np.testing.assert_array_equal(rebuilt[doc_id].weights, bow.weights)

import math

import numpy as np
import pytest

from querysmith import (
    CorpusStats,
    Measure,
    ResultDoc,
    bm25_score,
    build_prototype,
    build_result_doc,
    desm_score,
    mean_relevance_error,
    rank_by_re,
    relevance_error,
    tfidf_score,
    word_doc_distance,
)
from conftest import random_unit_store


def doc(doc_id, words, text=None):
    return ResultDoc(id=doc_id, text=text or " ".join(words), words=tuple(words))


# Independent scalar-math oracle used to confirm expected values before
# asserting them against the library path.
def oracle_cosine_distance(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return 1.0 - dot / (nu * nv)


def oracle_re(result_words, proto_words, vecs):
    total = 0.0
    for w in result_words:
        total += min(oracle_cosine_distance(vecs[w], vecs[p]) for p in proto_words)
    return total / len(result_words)


FIXTURE_VECS = {"dog": (1.0, 0.0), "cat": (0.8, 0.6), "car": (0.0, 1.0)}


class TestWordDocDistance:
    def test_word_in_prototype_is_zero(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        assert word_doc_distance("dog", proto, tiny_store) == 0.0

    def test_cat_against_dog_car(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        expected = min(
            oracle_cosine_distance(FIXTURE_VECS["cat"], FIXTURE_VECS["dog"]),
            oracle_cosine_distance(FIXTURE_VECS["cat"], FIXTURE_VECS["car"]),
        )
        assert expected == pytest.approx(0.2, abs=1e-9)  # min(0.2, 0.4)
        assert word_doc_distance("cat", proto, tiny_store) == pytest.approx(expected, abs=1e-9)

    def test_orthogonal_word(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        assert word_doc_distance("car", proto, tiny_store) == pytest.approx(1.0, abs=1e-9)

    def test_empty_prototype_rejected(self, tiny_store):
        from querysmith import PrototypeDocument

        empty = PrototypeDocument(raw_text="", words=[], candidate_vocab=[])
        with pytest.raises(ValueError):
            word_doc_distance("dog", empty, tiny_store)


class TestRelevanceError:
    def test_contained_words_score_exactly_zero(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        assert relevance_error(doc("r", ["dog"]), proto, tiny_store) == 0.0

    def test_single_word_average(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        expected = oracle_re(["cat"], ["dog", "car"], FIXTURE_VECS)
        assert expected == pytest.approx(0.2, abs=1e-9)
        assert relevance_error(doc("r", ["cat"]), proto, tiny_store) == pytest.approx(expected, abs=1e-9)

    def test_two_word_average(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        expected = oracle_re(["cat", "car"], ["dog"], FIXTURE_VECS)
        assert expected == pytest.approx(0.6, abs=1e-9)  # (0.2 + 1.0) / 2
        assert relevance_error(doc("r", ["cat", "car"]), proto, tiny_store) == pytest.approx(
            expected, abs=1e-9
        )

    def test_vacuous_result_scores_max(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        assert relevance_error(doc("r", []), proto, tiny_store) == 2.0

    def test_not_symmetric(self, config, tiny_store):
        proto_dc = build_prototype("dog car", config, tiny_store)
        proto_cat = build_prototype("cat", config, tiny_store)
        forward = relevance_error(doc("r", ["cat"]), proto_dc, tiny_store)
        backward = relevance_error(doc("r", ["dog", "car"]), proto_cat, tiny_store)
        assert forward == pytest.approx(0.2, abs=1e-9)
        assert backward == pytest.approx(0.3, abs=1e-9)  # (0.2 + 0.4) / 2
        assert forward != pytest.approx(backward, abs=1e-6)

    def test_zero_implies_duplicate_vectors(self):
        rng = np.random.default_rng(5)
        store = random_unit_store(rng, 40, 6)
        from querysmith import PrototypeDocument

        proto_words = [f"w{i}" for i in range(8)]
        proto = PrototypeDocument(raw_text="", words=proto_words, candidate_vocab=proto_words)

        def assert_words_have_duplicate_vectors(words):
            for w in words:
                dots = store.vectors(proto_words) @ store.vector(w)
                assert np.max(dots) == pytest.approx(1.0, abs=1e-9)

        zero_cases = 0
        for i in range(60):
            if i % 3 == 0:  # guaranteed containment case
                words = [f"w{j}" for j in rng.integers(0, 8, size=3)]
            else:
                words = [f"w{j}" for j in rng.integers(0, 40, size=4)]
            re = relevance_error(doc("r", words), proto, store)
            if re <= 1e-12:
                zero_cases += 1
                assert_words_have_duplicate_vectors(words)
        assert zero_cases > 0, "no zero-RE case was exercised"


class TestMeanRelevanceError:
    def test_empty_batch_is_exactly_two(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        assert mean_relevance_error([], proto, tiny_store) == 2.0

    def test_containment_batch_is_zero(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        assert mean_relevance_error([doc("r1", ["dog"])], proto, tiny_store) == 0.0

    def test_two_doc_mean(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        expected = (
            oracle_re(["dog"], ["dog", "car"], FIXTURE_VECS)
            + oracle_re(["cat"], ["dog", "car"], FIXTURE_VECS)
        ) / 2
        assert expected == pytest.approx(0.1, abs=1e-9)
        got = mean_relevance_error([doc("a", ["dog"]), doc("b", ["cat"])], proto, tiny_store)
        assert got == pytest.approx(expected, abs=1e-9)

    def test_permutation_invariant(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        docs = [doc("a", ["dog"]), doc("b", ["cat"]), doc("c", ["car", "cat"])]
        forward = mean_relevance_error(docs, proto, tiny_store)
        backward = mean_relevance_error(list(reversed(docs)), proto, tiny_store)
        assert forward == pytest.approx(backward, abs=1e-12)

    def test_duplicating_batch_leaves_mre_unchanged(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        docs = [doc("a", ["dog"]), doc("b", ["cat"])]
        assert mean_relevance_error(docs + docs, proto, tiny_store) == pytest.approx(
            mean_relevance_error(docs, proto, tiny_store), abs=1e-12
        )

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(17)
        from querysmith import PrototypeDocument

        for _ in range(25):
            store = random_unit_store(rng, 60, 5)
            vecs = {t: store.vector(t).tolist() for t in store.tokens()}
            proto_words = [f"w{i}" for i in rng.choice(60, size=rng.integers(1, 30), replace=False)]
            proto = PrototypeDocument(raw_text="", words=proto_words, candidate_vocab=proto_words)
            docs = []
            for d in range(int(rng.integers(1, 50))):
                words = [f"w{i}" for i in rng.choice(60, size=rng.integers(1, 30), replace=False)]
                docs.append(doc(f"d{d}", words))
            expected = sum(oracle_re(list(d.words), proto_words, vecs) for d in docs) / len(docs)
            assert mean_relevance_error(docs, proto, store) == pytest.approx(expected, abs=1e-9)

    def test_range_bounds(self):
        rng = np.random.default_rng(23)
        from querysmith import PrototypeDocument

        store = random_unit_store(rng, 50, 4)
        for _ in range(200):
            proto_words = [f"w{i}" for i in rng.choice(50, size=rng.integers(1, 10), replace=False)]
            proto = PrototypeDocument(raw_text="", words=proto_words, candidate_vocab=proto_words)
            docs = [
                doc(f"d{d}", [f"w{i}" for i in rng.choice(50, size=rng.integers(1, 8), replace=False)])
                for d in range(int(rng.integers(0, 6)))
            ]
            mre = mean_relevance_error(docs, proto, store)
            assert 0.0 <= mre <= 2.0


class TestRankByRe:
    def test_orders_ascending(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        ranked = rank_by_re([doc("x", ["cat"]), doc("y", ["dog"])], proto, tiny_store)
        assert [s.doc.id for s in ranked] == ["y", "x"]
        assert ranked[0].score == 0.0
        assert ranked[1].score == pytest.approx(0.2, abs=1e-9)

    def test_empty_input(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        assert rank_by_re([], proto, tiny_store) == []

    def test_ties_break_by_doc_id(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        ranked = rank_by_re([doc("b", ["dog"]), doc("a", ["car"])], proto, tiny_store)
        assert [s.doc.id for s in ranked] == ["a", "b"]

    def test_rank_invariant_under_uniform_rescaling(self, config, tmp_path):
        lines = ["dog 1 0", "cat 0.8 0.6", "car 0 1"]
        scaled = ["dog 3.7 0", "cat 2.96 2.22", "car 0 3.7"]
        from querysmith import load_embeddings

        p1 = tmp_path / "a.txt"
        p1.write_text("\n".join(lines) + "\n", encoding="utf-8")
        p2 = tmp_path / "b.txt"
        p2.write_text("\n".join(scaled) + "\n", encoding="utf-8")
        s1, s2 = load_embeddings(p1), load_embeddings(p2)
        docs = [doc("a", ["cat"]), doc("b", ["dog"]), doc("c", ["car", "cat"])]
        proto1 = build_prototype("dog car", config, s1)
        proto2 = build_prototype("dog car", config, s2)
        order1 = [s.doc.id for s in rank_by_re(docs, proto1, s1)]
        order2 = [s.doc.id for s in rank_by_re(docs, proto2, s2)]
        assert order1 == order2


class TestTfidf:
    def test_identical_texts_score_one(self, config, tiny_store):
        proto = build_prototype("dog car", config, tiny_store)
        stats = CorpusStats.from_texts(["dog car", "cat"], config)
        r = build_result_doc("r", "dog car", config, tiny_store)
        assert tfidf_score(r, proto, stats) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_vocabulary_scores_zero(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        stats = CorpusStats.from_texts(["cat", "dog"], config)
        r = build_result_doc("r", "cat", config, tiny_store)
        assert tfidf_score(r, proto, stats) == 0.0

    def test_parallel_one_dimensional_vectors(self, config, tiny_store):
        # r="dog dog", d="dog", two-doc corpus with df(dog)=2: same single
        # axis, so cosine is 1 regardless of the idf weight.
        proto = build_prototype("dog", config, tiny_store)
        stats = CorpusStats.from_texts(["dog dog", "dog"], config)
        r = build_result_doc("r", "dog dog", config, tiny_store)
        assert stats.doc_freq["dog"] == 2
        assert tfidf_score(r, proto, stats) == pytest.approx(1.0, abs=1e-9)


class TestBm25:
    def test_no_shared_terms_scores_zero(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        stats = CorpusStats.from_texts(["cat"], config)
        r = build_result_doc("r", "cat", config, tiny_store)
        assert bm25_score(r, proto, stats) == 0.0

    def test_single_term_at_average_length_equals_idf(self, config, tiny_store):
        # N=1, df=1, |r| = avgdl, tf=1: the saturation term cancels to 1,
        # leaving exactly the idf.
        proto = build_prototype("dog", config, tiny_store)
        stats = CorpusStats.from_texts(["dog"], config)
        r = build_result_doc("r", "dog", config, tiny_store)
        expected_idf = math.log(1.0 + (1 - 1 + 0.5) / (1 + 0.5))
        assert bm25_score(r, proto, stats) == pytest.approx(expected_idf, abs=1e-12)

    def test_score_monotone_in_term_frequency(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        corpus = ["dog cat", "cat cat"]
        stats = CorpusStats.from_texts(corpus, config)
        previous = -1.0
        for tf in range(1, 8):
            text = " ".join(["dog"] * tf)
            r = build_result_doc("r", text, config, tiny_store)
            score = bm25_score(r, proto, stats)
            assert score >= previous
            previous = score


class TestDesm:
    def test_identical_single_word(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        r = doc("r", ["dog"])
        assert desm_score(r, proto, tiny_store) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_words(self, config, tiny_store):
        proto = build_prototype("car", config, tiny_store)
        r = doc("r", ["dog"])
        assert desm_score(r, proto, tiny_store) == pytest.approx(0.0, abs=1e-9)

    def test_centroid_of_dog_car_against_dog(self, config, tiny_store):
        # centroid of (1,0) and (0,1) normalises to (sqrt2/2, sqrt2/2);
        # cosine with (1,0) is sqrt2/2 = 0.7071...
        proto = build_prototype("dog", config, tiny_store)
        r = doc("r", ["dog", "car"])
        expected = math.sqrt(2) / 2
        assert desm_score(r, proto, tiny_store) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.7071, abs=1e-4)

    def test_empty_result_words_scores_minus_one(self, config, tiny_store):
        proto = build_prototype("dog", config, tiny_store)
        assert desm_score(doc("r", []), proto, tiny_store) == -1.0


class TestMeasureEnum:
    def test_values(self):
        assert {m.value for m in Measure} == {"re", "tfidf", "bm25", "desm"}

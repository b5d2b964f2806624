"""Acceptance suite: each test enforces one release criterion end to end
and prints a single pass/fail line for it.

The criteria are property-based plus oracle equivalence on synthetic
fixtures; a dataset-driven reproduction runs only when judgment data and
a large embedding are supplied via QUERYSMITH_TREC_DIR.
"""

import itertools
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from querysmith import (
    EmbeddingStore,
    IndexEngine,
    IqsParams,
    Measure,
    PrototypeDocument,
    ResultDoc,
    TokenizerConfig,
    average_precision,
    build_index,
    build_prototype,
    build_result_doc,
    iqs_run,
    make_query,
    mean_relevance_error,
    ndcg,
    r_precision,
    relevance_error,
    roc_auc,
    search,
)
from querysmith.harness import (
    FeedbackParams,
    iqs_feedback_experiment,
    load_qrels,
    load_topics,
    mre_feedback_experiment,
)
from conftest import build_planted_dataset


def report(criterion: str) -> None:
    print(f"[acceptance] {criterion}: PASS")


def proto_of(words: list[str]) -> PrototypeDocument:
    return PrototypeDocument(raw_text=" ".join(words), words=list(words), candidate_vocab=list(words))


def doc_of(doc_id: str, words: list[str]) -> ResultDoc:
    return ResultDoc(id=doc_id, text=" ".join(words), words=tuple(words))


# --------------------------------------------------------------------------
# Criterion 1: MRE oracle equivalence
# --------------------------------------------------------------------------


def scalar_cosine_distance(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return 1.0 - dot / (nu * nv)


def test_mre_matches_brute_force_triple_loop():
    rng = np.random.default_rng(2024)
    vocab_size, dim = 60, 6
    started = time.perf_counter()
    for _ in range(200):
        raw = rng.normal(size=(vocab_size, dim))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        tokens = [f"w{i}" for i in range(vocab_size)]
        store = EmbeddingStore({t: raw[i] for i, t in enumerate(tokens)})
        plain = {t: [float(x) for x in store.vector(t)] for t in tokens}

        proto_words = [tokens[i] for i in rng.choice(vocab_size, size=int(rng.integers(1, 31)), replace=False)]
        prototype = proto_of(proto_words)
        docs = []
        for d in range(int(rng.integers(1, 51))):
            words = [tokens[i] for i in rng.choice(vocab_size, size=int(rng.integers(1, 31)), replace=False)]
            docs.append(doc_of(f"d{d}", words))

        # Independent oracle: plain-Python triple loop over
        # results x result words x prototype words.
        per_doc = []
        for d in docs:
            total = 0.0
            for w in d.words:
                best = None
                for p in proto_words:
                    dist = scalar_cosine_distance(plain[w], plain[p])
                    if best is None or dist < best:
                        best = dist
                total += best
            per_doc.append(total / len(d.words))
        expected = sum(per_doc) / len(per_doc)

        got = mean_relevance_error(docs, prototype, store)
        assert abs(got - expected) <= 1e-9
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"oracle equivalence took {elapsed:.1f}s (budget 5s)"
    report("mre-oracle-equivalence")


# --------------------------------------------------------------------------
# Criterion 2: range and edge rules
# --------------------------------------------------------------------------


def test_mre_range_and_edge_rules():
    rng = np.random.default_rng(99)
    vocab_size, dim = 40, 5
    raw = rng.normal(size=(vocab_size, dim))
    tokens = [f"w{i}" for i in range(vocab_size)]
    store = EmbeddingStore({t: raw[i] for i, t in enumerate(tokens)})
    for _ in range(1000):
        proto_words = [tokens[i] for i in rng.choice(vocab_size, size=int(rng.integers(1, 12)), replace=False)]
        prototype = proto_of(proto_words)
        docs = [
            doc_of(f"d{d}", [tokens[i] for i in rng.choice(vocab_size, size=int(rng.integers(1, 9)), replace=False)])
            for d in range(int(rng.integers(0, 7)))
        ]
        mre = mean_relevance_error(docs, prototype, store)
        assert 0.0 <= mre <= 2.0

    fixture = EmbeddingStore({"dog": [1.0, 0.0], "cat": [0.8, 0.6], "car": [0.0, 1.0]})
    prototype = proto_of(["dog", "car"])
    assert mean_relevance_error([], prototype, fixture) == 2.0
    assert relevance_error(doc_of("r", []), prototype, fixture) == 2.0
    assert relevance_error(doc_of("r", ["dog", "car"]), prototype, fixture) == 0.0
    # containment on arbitrary unit vectors holds to fp tolerance
    proto_random = proto_of([tokens[3], tokens[7], tokens[9]])
    contained = doc_of("r", [tokens[7], tokens[3]])
    assert relevance_error(contained, proto_random, store) <= 1e-9
    report("mre-range-and-edge-rules")


# --------------------------------------------------------------------------
# Criterion 3: hand-computed fixture values
# --------------------------------------------------------------------------


def test_hand_computed_fixture_values():
    from querysmith import cosine_distance, desm_score

    vecs = {"dog": (1.0, 0.0), "cat": (0.8, 0.6), "car": (0.0, 1.0)}
    store = EmbeddingStore({t: list(v) for t, v in vecs.items()})

    # each expected value is first confirmed with an independent scalar oracle
    expected_dog_cat = scalar_cosine_distance(vecs["dog"], vecs["cat"])
    assert abs(expected_dog_cat - 0.2) <= 1e-9
    assert abs(cosine_distance(store.vector("dog"), store.vector("cat")) - expected_dog_cat) <= 1e-9

    expected_re = (
        scalar_cosine_distance(vecs["cat"], vecs["dog"])
        + scalar_cosine_distance(vecs["car"], vecs["dog"])
    ) / 2
    assert abs(expected_re - 0.6) <= 1e-9
    got_re = relevance_error(doc_of("r", ["cat", "car"]), proto_of(["dog"]), store)
    assert abs(got_re - expected_re) <= 1e-9

    expected_mre = (0.0 + scalar_cosine_distance(vecs["cat"], vecs["dog"])) / 2
    assert abs(expected_mre - 0.1) <= 1e-9
    got_mre = mean_relevance_error(
        [doc_of("a", ["dog"]), doc_of("b", ["cat"])], proto_of(["dog", "car"]), store
    )
    assert abs(got_mre - expected_mre) <= 1e-9

    centroid = [(a + b) / 2 for a, b in zip(vecs["dog"], vecs["car"])]
    norm = math.sqrt(sum(x * x for x in centroid))
    expected_desm = sum(a * b / norm for a, b in zip(vecs["dog"], centroid))
    assert abs(expected_desm - math.sqrt(2) / 2) <= 1e-12
    got_desm = desm_score(doc_of("r", ["dog", "car"]), proto_of(["dog"]), store)
    assert abs(got_desm - expected_desm) <= 1e-9
    assert abs(got_desm - 0.7071) <= 1e-4

    expected_ap = (1.0 / 1.0 + 2.0 / 3.0) / 2.0
    got_ap = average_precision(["rel1", "non", "rel2"], {"rel1", "rel2"})
    assert abs(got_ap - expected_ap) <= 1e-9
    assert abs(got_ap - 0.8333333333333333) <= 1e-9
    report("hand-computed-fixture-values")


# --------------------------------------------------------------------------
# Criterion 4: boolean index equivalence and monotonicity
# --------------------------------------------------------------------------


def test_boolean_index_equivalence_and_monotonicity():
    rng = np.random.default_rng(7)
    started = time.perf_counter()
    config = TokenizerConfig(stopwords=frozenset(), entity_max_ngram=1)
    vocab = [f"t{i}" for i in range(40)]
    store = EmbeddingStore({t: rng.normal(size=4) for t in vocab})
    docs = []
    doc_tokens: dict[str, set[str]] = {}
    for i in range(10_000):
        words = [vocab[j] for j in rng.integers(0, 40, size=int(rng.integers(1, 9)))]
        doc_id = f"D{i:05d}"
        docs.append(build_result_doc(doc_id, " ".join(words), config, store, int(rng.integers(0, 10**7))))
        doc_tokens[doc_id] = set(words)
    index = build_index(docs, config, store)

    for _ in range(50):
        terms = {vocab[j] for j in rng.choice(40, size=int(rng.integers(1, 4)), replace=False)}
        got = {d.id for d in search(index, make_query(terms), 10**9)}
        expected = {doc_id for doc_id, tokens in doc_tokens.items() if terms <= tokens}
        assert got == expected

    for _ in range(1000):
        terms = {vocab[j] for j in rng.choice(40, size=int(rng.integers(1, 4)), replace=False)}
        extra = vocab[int(rng.integers(0, 40))]
        base = {d.id for d in search(index, make_query(terms), 10**9)}
        extended = {d.id for d in search(index, make_query(terms | {extra}), 10**9)}
        assert extended <= base

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"index equivalence took {elapsed:.1f}s (budget 30s)"
    report("boolean-index-equivalence")


# --------------------------------------------------------------------------
# Criteria 5 and 6: algorithm conformance and hill-climb optimality
# --------------------------------------------------------------------------


def conformance_fixture():
    """|V_d| = 4 corpus whose global optimum query is {alpha, beta}."""
    store = EmbeddingStore(
        {
            "alpha": [1.0, 0.0, 0.0, 0.0],
            "beta": [0.98, 0.199, 0.0, 0.0],
            "gamma": [0.98, 0.0, 0.199, 0.0],
            "delta": [0.98, 0.0, 0.0, 0.199],
            "junk": [0.0, 1.0, 0.0, 0.0],
            "noise": [0.0, 0.0, 1.0, 0.0],
        }
    )
    config = TokenizerConfig(stopwords=frozenset(), entity_max_ngram=1)
    texts = (
        [("P%d" % i, "alpha beta") for i in range(5)]
        + [("A%d" % i, "alpha junk noise") for i in range(10)]
        + [("B%d" % i, "beta junk") for i in range(10)]
        + [("G%d" % i, "gamma junk") for i in range(10)]
        + [("D%d" % i, "delta noise") for i in range(10)]
    )
    docs = [build_result_doc(i, t, config, store, ts) for ts, (i, t) in enumerate(texts)]
    engine = IndexEngine(build_index(docs, config, store))
    prototype = build_prototype("alpha beta gamma delta", config, store)
    return store, engine, prototype


def test_algorithm_conformance():
    store, engine, prototype = conformance_fixture()
    params = IqsParams(itr=15, runs=3, minq=1, maxq=3, rlimit=20, num_queries=10, seed=123)

    queue1, trace1 = iqs_run(prototype, engine, params, store)
    queue2, trace2 = iqs_run(prototype, engine, params, store)
    assert queue1.snapshot() == queue2.snapshot()
    assert trace1.records == trace2.records

    for run in range(params.runs):
        accepted = trace1.accepted_mres(run)
        assert all(b < a for a, b in zip(accepted, accepted[1:]))

    assert trace1.engine_calls <= params.runs * (params.itr + 1)

    vocab = set(prototype.candidate_vocab)
    for record in trace1.records:
        assert params.minq <= len(record.query) <= params.maxq
        assert set(record.query) <= vocab

    # zero-result evaluations must suppress add_word exactly one iteration
    probe_params = IqsParams(itr=30, runs=5, minq=1, maxq=3, rlimit=20, num_queries=10, seed=7)
    _, probe = iqs_run(prototype, engine, probe_params, store)
    by_run: dict[int, list] = {}
    for record in probe.records:
        by_run.setdefault(record.run, []).append(record)
    empties = 0
    restores = 0
    for records in by_run.values():
        q_best = set(records[0].query)
        for prev, nxt in zip(records, records[1:]):
            if prev.accepted:
                q_best = set(prev.query)
            if prev.result_count == 0:
                empties += 1
                assert "add_word" not in nxt.offered
            elif prev.result_count and len(q_best) < probe_params.maxq and len(q_best) < len(vocab):
                restores += 1
                assert "add_word" in nxt.offered
    assert empties > 0 and restores > 0
    report("algorithm-conformance")


def test_hill_climb_reaches_global_optimum():
    store, engine, prototype = conformance_fixture()
    vocab = sorted(prototype.candidate_vocab)
    minq, maxq, rlimit = 1, 3, 20

    # exhaustive enumeration of the whole query space is the oracle
    global_best = None
    for size in range(minq, min(maxq, len(vocab)) + 1):
        for combo in itertools.combinations(vocab, size):
            mre = mean_relevance_error(engine.search(frozenset(combo), rlimit), prototype, store)
            if global_best is None or mre < global_best:
                global_best = mre
    assert global_best == pytest.approx(0.0, abs=1e-9)

    hits = 0
    for seed in range(100):
        params = IqsParams(itr=15, runs=3, minq=minq, maxq=maxq, rlimit=rlimit, num_queries=10, seed=seed)
        queue, _ = iqs_run(prototype, engine, params, store)
        best = queue.best()
        if best is not None and abs(best[1] - global_best) <= 1e-9:
            hits += 1
    assert hits >= 80, f"optimum reached in only {hits}/100 seeded runs"
    report(f"hill-climb-optimality ({hits}/100)")


# --------------------------------------------------------------------------
# Criterion 7: end-to-end planted-topic recall
# --------------------------------------------------------------------------


def test_end_to_end_planted_topic_recall():
    started = time.perf_counter()
    dataset = build_planted_dataset(seed=0, n_docs=5000, n_planted=50, judged_irrelevant=200)
    engine = IndexEngine(build_index(dataset.docs, dataset.config, dataset.store))
    record = iqs_feedback_experiment(
        dataset.topic,
        dataset.qrels,
        engine,
        IqsParams(itr=15, runs=3, rlimit=20, num_queries=40, seed=2718),
        FeedbackParams(label_budget=300, batch_size=10),
        dataset.store,
        dataset.config,
    )
    elapsed = time.perf_counter() - started
    assert record is not None
    recall = len(set(record.presented) & dataset.planted_ids) / len(dataset.planted_ids)
    assert recall >= 0.8, f"recall {recall:.2f} < 0.8"
    assert record.map >= 0.6, f"MAP {record.map:.2f} < 0.6"
    assert record.labels_used <= 300
    assert elapsed < 60.0, f"end-to-end run took {elapsed:.1f}s (budget 60s)"
    report(f"planted-topic-recall (recall={recall:.2f}, map={record.map:.2f}, {elapsed:.1f}s)")


# --------------------------------------------------------------------------
# Criterion 8: metric correctness against reference implementations
# --------------------------------------------------------------------------


def reference_average_precision(ranking, relevant):
    precisions = []
    hits = 0
    for idx, doc_id in enumerate(ranking):
        if doc_id in relevant:
            hits += 1
            precisions.append(hits / (idx + 1))
    return sum(precisions) / len(relevant) if relevant else 0.0


def reference_r_precision(ranking, relevant):
    r = len(relevant)
    return len([d for d in ranking[:r] if d in relevant]) / r


def reference_ndcg(ranking, grades):
    def dcg(ordering):
        return sum(g / math.log2(i + 2) for i, g in enumerate(ordering))

    actual = dcg([grades.get(d, 0) for d in ranking])
    ideal = dcg(sorted(grades.values(), reverse=True))
    return actual / ideal if ideal > 0 else 0.0


def reference_auc(pairs):
    pos = [s for s, rel in pairs if rel]
    neg = [s for s, rel in pairs if not rel]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def test_metric_correctness():
    rng = np.random.default_rng(404)
    for _ in range(100):
        n = int(rng.integers(5, 60))
        ranking = [f"d{i}" for i in rng.permutation(n)]
        relevant = {f"d{i}" for i in rng.choice(n, size=int(rng.integers(1, n)), replace=False)}
        grades = {f"d{i}": int(rng.integers(0, 4)) for i in range(n)}
        if all(g == 0 for g in grades.values()):
            grades["d0"] = 1
        assert abs(average_precision(ranking, relevant) - reference_average_precision(ranking, relevant)) <= 1e-9
        assert abs(r_precision(ranking, relevant) - reference_r_precision(ranking, relevant)) <= 1e-9
        assert abs(ndcg(ranking, grades) - reference_ndcg(ranking, grades)) <= 1e-9

        scores = rng.random(n).round(2)
        labels = [f"d{i}" in relevant for i in range(n)]
        if any(labels) and not all(labels):
            pairs = list(zip(scores.tolist(), labels))
            assert abs(roc_auc(pairs) - reference_auc(pairs)) <= 1e-9

    # relevance-error style AUC: relevant docs strictly lower scores
    pool = [(0.05, True), (0.1, True), (0.2, True), (0.8, False), (0.9, False), (1.4, False)]
    assert roc_auc(pool, lower_is_better=True) == 1.0
    report("metric-correctness")


# --------------------------------------------------------------------------
# Criterion 9 (optional): dataset-driven directional reproduction
# --------------------------------------------------------------------------


TREC_DIR = os.environ.get("QUERYSMITH_TREC_DIR")


@pytest.mark.skipif(
    not TREC_DIR,
    reason="set QUERYSMITH_TREC_DIR to a directory holding topics.jsonl, qrels.txt, "
    "corpus.jsonl and vectors.txt to run the dataset-driven reproduction",
)
def test_dataset_driven_measure_ordering():
    from querysmith import load_embeddings, read_corpus

    base = Path(TREC_DIR)
    store = load_embeddings(base / "vectors.txt")
    config = TokenizerConfig()
    topics = load_topics(base / "topics.jsonl")
    qrels = load_qrels(base / "qrels.txt")
    docs = {d.id: d for d in read_corpus(base / "corpus.jsonl", config, store)}
    params = FeedbackParams(label_budget=300, batch_size=10)

    maps: dict[str, float] = {}
    for measure in (Measure.RE, Measure.TFIDF, Measure.BM25, Measure.DESM):
        records = []
        for topic in topics:
            pool = [docs[i] for i in sorted(qrels.judged_ids(topic.id)) if i in docs]
            record = mre_feedback_experiment(topic, qrels, pool, measure, params, store, config)
            if record is not None:
                records.append(record)
        assert records, "no topic produced a record"
        maps[measure.value] = sum(r.map for r in records) / len(records)

    assert maps["re"] > maps["tfidf"]
    assert maps["re"] > maps["bm25"]
    assert maps["re"] > maps["desm"]
    report(f"dataset-driven-ordering ({json.dumps(maps)})")

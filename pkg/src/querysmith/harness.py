"""Experiment harness: relevance-feedback protocols over topic/judgment
datasets, the optimizer-in-the-loop variant, and the pseudo-relevance
(no human) mode, with metric records and curve data."""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingStore
from .metrics import average_precision, ndcg, r_precision
from .optimizer import IqsParams, QueryQueue, collect, iqs_run
from .relevance import (
    CorpusStats,
    Measure,
    ResultDoc,
    ScoredResult,
    bm25_score,
    desm_score,
    rank_by_re,
    relevance_error,
    tfidf_score,
)
from .search import Query, SearchEngine
from .textprep import (
    DEFAULT_KNN_K,
    EmptyPrototypeError,
    PrototypeDocument,
    TokenizerConfig,
    build_prototype,
)

log = logging.getLogger(__name__)

LABEL_RELEVANT = "relevant"
LABEL_IRRELEVANT = "irrelevant"
LABEL_UNKNOWN = "unknown"
LABELS = frozenset({LABEL_RELEVANT, LABEL_IRRELEVANT, LABEL_UNKNOWN})

MODE_MRE_RANK = "mre_rank"
MODE_IQS_LOOP = "iqs_loop"


@dataclass(frozen=True)
class Topic:
    """A search topic: an id, an initial query string, and optionally a
    longer search narrative."""

    id: str
    query: str
    narrative: str | None = None

    def __post_init__(self) -> None:
        if not self.query.strip():
            raise ValueError(f"topic {self.id!r} has an empty query")


class Qrels:
    """Relevance judgments: (topic id, doc id) -> integer grade, where a
    positive grade means relevant."""

    def __init__(self, judgments: Mapping[tuple[str, str], int]) -> None:
        for (topic_id, doc_id), grade in judgments.items():
            if grade < 0:
                raise ValueError(f"negative grade for ({topic_id!r}, {doc_id!r})")
        self._judgments = dict(judgments)
        self._by_topic: dict[str, dict[str, int]] = {}
        for (topic_id, doc_id), grade in self._judgments.items():
            self._by_topic.setdefault(topic_id, {})[doc_id] = grade

    def __len__(self) -> int:
        return len(self._judgments)

    def grade(self, topic_id: str, doc_id: str) -> int:
        return self._judgments.get((topic_id, doc_id), 0)

    def grades_for(self, topic_id: str) -> dict[str, int]:
        return dict(self._by_topic.get(topic_id, {}))

    def judged_ids(self, topic_id: str) -> set[str]:
        return set(self._by_topic.get(topic_id, {}))

    def relevant_ids(self, topic_id: str) -> set[str]:
        return {d for d, g in self._by_topic.get(topic_id, {}).items() if g > 0}

    def topic_ids(self) -> list[str]:
        return sorted(self._by_topic)


def load_topics(path: str | Path) -> list[Topic]:
    """Topics file: JSON Lines of ``{"id", "query", "narrative"?}``."""
    path = Path(path)
    topics: list[Topic] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            if not isinstance(record, dict) or "id" not in record or "query" not in record:
                raise ValueError(f"{path}: line {lineno}: expected an object with 'id' and 'query'")
            topics.append(
                Topic(str(record["id"]), str(record["query"]), record.get("narrative"))
            )
    return topics


def load_qrels(path: str | Path) -> Qrels:
    """TREC-layout qrels: whitespace-separated ``topic iter doc grade`` lines."""
    path = Path(path)
    judgments: dict[tuple[str, str], int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(parts)}")
            topic_id, _iteration, doc_id, grade_text = parts
            try:
                grade = int(grade_text)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: grade {grade_text!r} is not an integer") from None
            if grade < 0:
                grade = 0  # some TREC files mark unjudged/irrelevant as -1
            judgments[(topic_id, doc_id)] = grade
    return Qrels(judgments)


@dataclass(frozen=True)
class FeedbackParams:
    """Budget and prototype-expansion settings for a feedback session."""

    label_budget: int = 300
    batch_size: int = 10
    expansions: frozenset[str] = frozenset()
    synonym_lexicon: Mapping[str, tuple[str, ...]] | None = None
    knn_k: int = DEFAULT_KNN_K

    def __post_init__(self) -> None:
        if self.label_budget < 1:
            raise ValueError("label_budget must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class FeedbackSession:
    """Mutable loop state for one relevance-feedback session.

    The presented-doc registry guarantees no document is ever shown for
    labeling twice; the prototype grows with each relevant label.
    """

    topic: Topic
    prototype: PrototypeDocument
    config: TokenizerConfig
    store: EmbeddingStore
    params: FeedbackParams
    mode: str = MODE_MRE_RANK
    labeled: dict[str, str] = field(default_factory=dict)
    presented: set[str] = field(default_factory=set)
    presentation_order: list[str] = field(default_factory=list)
    ranked_history: list[tuple[str, int, int]] = field(default_factory=list)
    expanded_doc_ids: set[str] = field(default_factory=set)
    round: int = 0

    @property
    def labels_used(self) -> int:
        return len(self.labeled)

    @property
    def budget_remaining(self) -> int:
        return self.params.label_budget - self.labels_used


def new_session(
    topic: Topic,
    config: TokenizerConfig,
    store: EmbeddingStore,
    params: FeedbackParams,
    mode: str = MODE_MRE_RANK,
    prototype_text: str | None = None,
) -> FeedbackSession:
    """Create a session whose initial prototype is the topic's query (or
    an explicit text such as a narrative)."""
    text = prototype_text if prototype_text is not None else topic.query
    prototype = build_prototype(
        text,
        config,
        store,
        expansions=params.expansions,
        synonym_lexicon=params.synonym_lexicon,
        knn_k=params.knn_k,
    )
    return FeedbackSession(
        topic=topic, prototype=prototype, config=config, store=store, params=params, mode=mode
    )


def expand_prototype(session: FeedbackSession, relevant_docs: Sequence[ResultDoc]) -> PrototypeDocument:
    """Append relevant documents' texts to the prototype and rebuild its
    word set and candidate vocabulary.

    Each document's text is appended at most once; documents already used
    for expansion are ignored.
    """
    fresh = [d for d in relevant_docs if d.id not in session.expanded_doc_ids]
    if not fresh:
        return session.prototype
    session.expanded_doc_ids.update(d.id for d in fresh)
    raw = " ".join([session.prototype.raw_text] + [d.text for d in fresh])
    session.prototype = build_prototype(
        raw,
        session.config,
        session.store,
        expansions=session.params.expansions,
        synonym_lexicon=session.params.synonym_lexicon,
        knn_k=session.params.knn_k,
    )
    return session.prototype


@dataclass(frozen=True)
class RoundStat:
    """Curve point: metric state after one labeling round."""

    round: int
    labels_used: int
    map: float


@dataclass
class MetricRecord:
    """Per-topic outcome of one experiment protocol."""

    topic_id: str
    measure: str
    map: float
    r_precision: float
    ndcg: float | None
    labels_used: int
    presented: list[str] = field(default_factory=list)
    rounds: list[RoundStat] = field(default_factory=list)

    def to_json_obj(self) -> dict:
        obj = {
            "topic_id": self.topic_id,
            "measure": self.measure,
            "map": self.map,
            "r_precision": self.r_precision,
            "labels_used": self.labels_used,
        }
        if self.ndcg is not None:
            obj["ndcg"] = self.ndcg
        return obj


Scorer = Callable[[ResultDoc, PrototypeDocument], float]


def scorer_for(
    measure: Measure, store: EmbeddingStore, stats: CorpusStats | None
) -> tuple[Scorer, bool]:
    """The scoring callable for a measure plus its ranking direction
    (True = ascending, lower is more relevant)."""
    if measure is Measure.RE:
        return (lambda doc, proto: relevance_error(doc, proto, store)), True
    if measure is Measure.DESM:
        return (lambda doc, proto: desm_score(doc, proto, store)), False
    if stats is None:
        raise ValueError(f"measure {measure.value} requires corpus statistics")
    if measure is Measure.TFIDF:
        return (lambda doc, proto: tfidf_score(doc, proto, stats)), False
    if measure is Measure.BM25:
        return (lambda doc, proto: bm25_score(doc, proto, stats)), False
    raise ValueError(f"unsupported measure: {measure}")


def _oracle_label(qrels: Qrels, topic_id: str, doc_id: str) -> str:
    return LABEL_RELEVANT if qrels.grade(topic_id, doc_id) > 0 else LABEL_IRRELEVANT


def _run_labeling_round(
    session: FeedbackSession,
    candidates: Sequence[ResultDoc],
    score_fn: Scorer,
    ascending: bool,
    qrels: Qrels,
) -> list[ResultDoc]:
    """Score candidates, present the top unlabeled batch, label it via the
    qrels oracle, and expand the prototype with the relevant ones.

    Returns the batch actually presented (possibly empty). This single
    code path serves every measure; only ``score_fn`` differs.
    """
    fresh = [d for d in candidates if d.id not in session.presented]
    if not fresh:
        return []
    scored = [(score_fn(doc, session.prototype), doc) for doc in fresh]
    scored.sort(key=lambda pair: (pair[0] if ascending else -pair[0], pair[1].id))
    take = min(session.params.batch_size, session.budget_remaining)
    batch = [doc for _, doc in scored[:take]]
    relevant_batch: list[ResultDoc] = []
    for rank, doc in enumerate(batch, start=1):
        session.presented.add(doc.id)
        session.presentation_order.append(doc.id)
        session.ranked_history.append((doc.id, rank, session.round))
        label = _oracle_label(qrels, session.topic.id, doc.id)
        session.labeled[doc.id] = label
        if label == LABEL_RELEVANT:
            relevant_batch.append(doc)
    expand_prototype(session, relevant_batch)
    session.round += 1
    return batch


def _finish_record(
    session: FeedbackSession, qrels: Qrels, measure: str, rounds: list[RoundStat]
) -> MetricRecord:
    relevant = qrels.relevant_ids(session.topic.id)
    grades = qrels.grades_for(session.topic.id)
    return MetricRecord(
        topic_id=session.topic.id,
        measure=measure,
        map=average_precision(session.presentation_order, relevant),
        r_precision=r_precision(session.presentation_order, relevant),
        ndcg=ndcg(session.presentation_order, grades),
        labels_used=session.labels_used,
        presented=list(session.presentation_order),
        rounds=rounds,
    )


def mre_feedback_experiment(
    topic: Topic,
    qrels: Qrels,
    pool: Sequence[ResultDoc],
    measure: Measure,
    params: FeedbackParams,
    store: EmbeddingStore,
    config: TokenizerConfig,
) -> MetricRecord | None:
    """Oracle relevance feedback over a fixed judged pool.

    Rounds of: score the pool with ``measure`` against the current
    prototype, present the top unlabeled batch, label via qrels, expand
    the prototype with the relevant results. Stops at the label budget or
    pool exhaustion. Topics without relevant judgments are skipped (None).
    """
    relevant = qrels.relevant_ids(topic.id)
    if not relevant:
        log.warning("topic %s skipped: no relevant judgments", topic.id)
        return None
    try:
        session = new_session(topic, config, store, params, mode=MODE_MRE_RANK)
    except EmptyPrototypeError:
        log.warning("topic %s skipped: query text yields no usable words", topic.id)
        return None
    stats = (
        CorpusStats.from_docs(pool, config) if measure in (Measure.TFIDF, Measure.BM25) else None
    )
    score_fn, ascending = scorer_for(measure, store, stats)
    rounds: list[RoundStat] = []
    while session.budget_remaining > 0:
        batch = _run_labeling_round(session, pool, score_fn, ascending, qrels)
        if not batch:
            break
        rounds.append(
            RoundStat(
                round=session.round,
                labels_used=session.labels_used,
                map=average_precision(session.presentation_order, relevant),
            )
        )
    return _finish_record(session, qrels, measure.value, rounds)


class RecordingEngine:
    """Engine wrapper that remembers every distinct document it returned."""

    def __init__(self, inner: SearchEngine) -> None:
        self.inner = inner
        self.boolean = getattr(inner, "boolean", True)
        self.max_rlimit = getattr(inner, "max_rlimit", 10_000)
        self.captured: list[ResultDoc] = []
        self._seen: set[str] = set()
        self.calls = 0

    def search(self, query: Query, rlimit: int) -> list[ResultDoc]:
        results = self.inner.search(query, rlimit)
        self.calls += 1
        for doc in results:
            if doc.id not in self._seen:
                self._seen.add(doc.id)
                self.captured.append(doc)
        return results

    def reset_capture(self) -> None:
        self.captured = []
        self._seen = set()


def _spawn_seed(seed: int | None, *key: int) -> int | None:
    """Derive a child seed from a base seed and an index key (stable)."""
    if seed is None:
        return None
    state = np.random.SeedSequence([seed & 0xFFFF_FFFF_FFFF_FFFF, *key]).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def iqs_feedback_experiment(
    topic: Topic,
    qrels: Qrels,
    engine: SearchEngine,
    iqs_params: IqsParams,
    params: FeedbackParams,
    store: EmbeddingStore,
    config: TokenizerConfig,
) -> MetricRecord | None:
    """Full optimizer-in-the-loop protocol against a search engine.

    Each round runs the hill-climbing query search with the current
    prototype, ranks everything that round retrieved by relevance error
    (ascending), presents the top unlabeled batch for oracle labeling, and
    expands the prototype with the relevant results. Stops at the label
    budget or when a round surfaces nothing new.
    """
    relevant = qrels.relevant_ids(topic.id)
    if not relevant:
        log.warning("topic %s skipped: no relevant judgments", topic.id)
        return None
    try:
        session = new_session(topic, config, store, params, mode=MODE_IQS_LOOP)
    except EmptyPrototypeError:
        log.warning("topic %s skipped: query text yields no usable words", topic.id)
        return None
    recorder = RecordingEngine(engine)
    rounds: list[RoundStat] = []
    round_index = 0
    while session.budget_remaining > 0:
        run_params = replace(iqs_params, seed=_spawn_seed(iqs_params.seed, round_index))
        recorder.reset_capture()
        iqs_run(session.prototype, recorder, run_params, store)
        ranked = rank_by_re(recorder.captured, session.prototype, store)
        batch = _run_labeling_round(
            session,
            [s.doc for s in ranked],
            lambda doc, proto: relevance_error(doc, proto, store),
            True,
            qrels,
        )
        if not batch:
            break
        rounds.append(
            RoundStat(
                round=session.round,
                labels_used=session.labels_used,
                map=average_precision(session.presentation_order, relevant),
            )
        )
        round_index += 1
    return _finish_record(session, qrels, "iqs", rounds)


def pseudo_relevance_run(
    topic: Topic,
    engine: SearchEngine,
    iqs_params: IqsParams,
    store: EmbeddingStore,
    config: TokenizerConfig,
    per_query_cap: int = 500,
    expansions: Iterable[str] = (),
    synonym_lexicon: Mapping[str, tuple[str, ...]] | None = None,
    knn_k: int = DEFAULT_KNN_K,
) -> tuple[list[ScoredResult], QueryQueue]:
    """No-human mode: the topic narrative is the prototype, the optimizer
    runs once, and everything its queries collect is returned ranked by
    relevance error ascending."""
    if not topic.narrative or not topic.narrative.strip():
        raise ValueError(f"topic {topic.id!r} has no narrative to use as a prototype")
    prototype = build_prototype(
        topic.narrative,
        config,
        store,
        expansions=expansions,
        synonym_lexicon=synonym_lexicon,
        knn_k=knn_k,
    )
    queue, _trace = iqs_run(prototype, engine, iqs_params, store)
    if len(queue) == 0:
        return [], queue
    docs = collect(queue, engine, per_query_cap)
    return rank_by_re(docs, prototype, store), queue


def aggregate_record(records: Sequence[MetricRecord], measure: str) -> MetricRecord:
    """Mean-of-topics summary row (topic id ``ALL``)."""
    if not records:
        raise ValueError("no records to aggregate")
    ndcgs = [r.ndcg for r in records if r.ndcg is not None]
    return MetricRecord(
        topic_id="ALL",
        measure=measure,
        map=sum(r.map for r in records) / len(records),
        r_precision=sum(r.r_precision for r in records) / len(records),
        ndcg=sum(ndcgs) / len(ndcgs) if ndcgs else None,
        labels_used=sum(r.labels_used for r in records),
    )


def write_metrics_jsonl(records: Sequence[MetricRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json_obj(), sort_keys=True) + "\n")


def write_metrics_csv(records: Sequence[MetricRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "measure", "map", "r_precision", "ndcg", "labels_used"])
        for r in records:
            writer.writerow(
                [r.topic_id, r.measure, f"{r.map:.6f}", f"{r.r_precision:.6f}",
                 "" if r.ndcg is None else f"{r.ndcg:.6f}", r.labels_used]
            )


def write_curves_csv(records: Sequence[MetricRecord], path: str | Path) -> None:
    """Per-round curve data (labels consumed vs. MAP so far) for plotting."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topic_id", "measure", "round", "labels_used", "map"])
        for r in records:
            for point in r.rounds:
                writer.writerow([r.topic_id, r.measure, point.round, point.labels_used, f"{point.map:.6f}"])

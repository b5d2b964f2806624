"""Stochastic hill climbing over the query space: random add/remove/swap
mutations, accepted only when they strictly lower the mean relevance error
of the retrieved results."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingStore
from .relevance import ResultDoc, mean_relevance_error
from .search import Query, SearchEngine, TransportError
from .textprep import PrototypeDocument

log = logging.getLogger(__name__)

ADD_WORD = "add_word"
REMOVE_WORD = "remove_word"
SWAP_WORDS = "swap_words"
INIT = "init"


@dataclass(frozen=True)
class IqsParams:
    """Hyperparameters of the query search.

    Defaults are the configuration that worked best in relevance-feedback
    tuning; the bulk-collection profile (minq=3, maxq=6, num_queries=5)
    is exposed as a CLI preset instead.
    """

    itr: int = 15
    runs: int = 3
    minq: int = 1
    maxq: int = 6
    rlimit: int = 20
    num_queries: int = 40
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.itr < 1:
            raise ValueError("itr must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 1 <= self.minq <= self.maxq:
            raise ValueError("query size bounds must satisfy 1 <= minq <= maxq")
        if self.rlimit < 1:
            raise ValueError("rlimit must be >= 1")
        if self.num_queries < 1:
            raise ValueError("num_queries must be >= 1")


def _query_sort_key(query: Query) -> tuple[str, ...]:
    return tuple(sorted(query))


class QueryQueue:
    """The best queries found so far, unique by term set and capped.

    Iteration yields ``(query, mre)`` pairs ascending by score, with ties
    broken by lexicographic term order. When full, a better entry evicts
    the current worst.
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: dict[Query, float] = {}

    def add(self, query: Query, mre: float) -> bool:
        """Insert or improve an entry; returns whether the queue changed."""
        if query in self._entries:
            if mre < self._entries[query]:
                self._entries[query] = mre
                return True
            return False
        if len(self._entries) < self.capacity:
            self._entries[query] = mre
            return True
        worst_query, worst_mre = max(
            self._entries.items(), key=lambda kv: (kv[1], _query_sort_key(kv[0]))
        )
        if mre < worst_mre:
            del self._entries[worst_query]
            self._entries[query] = mre
            return True
        return False

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[tuple[Query, float]]:
        return iter(sorted(self._entries.items(), key=lambda kv: (kv[1], _query_sort_key(kv[0]))))

    def best(self) -> tuple[Query, float] | None:
        if not self._entries:
            return None
        return min(self._entries.items(), key=lambda kv: (kv[1], _query_sort_key(kv[0])))

    def snapshot(self) -> list[tuple[tuple[str, ...], float]]:
        """JSON-friendly view: sorted term tuples with scores, ascending."""
        return [(_query_sort_key(q), mre) for q, mre in self]


@dataclass(frozen=True)
class TraceRecord:
    """One evaluated proposal (iteration 0 is the restart's initial query)."""

    run: int
    iteration: int
    action: str
    query: Query
    mre: float | None
    accepted: bool
    result_count: int | None = None
    offered: tuple[str, ...] = ()
    error: str | None = None


@dataclass
class IqsTrace:
    records: list[TraceRecord] = field(default_factory=list)
    engine_calls: int = 0

    def accepted_mres(self, run: int) -> list[float]:
        return [r.mre for r in self.records if r.run == run and r.accepted and r.mre is not None]


def add_word(query: Query, vocab: list[str], rng: np.random.Generator) -> Query:
    """Add one uniformly random vocabulary word not already in the query."""
    candidates = sorted(set(vocab) - query)
    if not candidates:
        raise ValueError("no vocabulary word available to add")
    return query | {candidates[int(rng.integers(len(candidates)))]}


def remove_word(query: Query, rng: np.random.Generator) -> Query:
    """Remove one uniformly random word from the query."""
    members = sorted(query)
    if not members:
        raise ValueError("cannot remove from an empty query")
    return query - {members[int(rng.integers(len(members)))]}


def swap_words(query: Query, vocab: list[str], rng: np.random.Generator) -> Query:
    """Exchange one word: add a random new word, then remove a random one.

    The removal is drawn from the enlarged query, so the freshly added
    word may itself be removed; the result always has the input's size.
    """
    return remove_word(add_word(query, vocab, rng), rng)


def _run_rng(seed: int | None, run_index: int) -> np.random.Generator:
    """One RNG stream per restart, derived from (seed, run index)."""
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFF_FFFF_FFFF_FFFF, run_index]))


def iqs_run(
    prototype: PrototypeDocument,
    engine: SearchEngine,
    params: IqsParams,
    store: EmbeddingStore,
) -> tuple[QueryQueue, IqsTrace]:
    """Run the full hill-climbing search and return the merged query queue
    plus a per-iteration trace.

    Each of ``params.runs`` restarts draws an initial query of uniform
    random size within the legal bounds, then mutates it ``params.itr``
    times; a mutation is kept only when its retrieved results score a
    strictly lower mean relevance error. A proposal whose results came
    back empty suppresses the add-word action for exactly the next
    iteration. Transport errors skip the iteration rather than aborting
    the run.
    """
    vocab = sorted(dict.fromkeys(prototype.candidate_vocab))
    if len(vocab) < params.minq:
        raise ValueError(
            f"candidate vocabulary has {len(vocab)} term(s); at least minq={params.minq} required"
        )
    queue = QueryQueue(params.num_queries)
    trace = IqsTrace()
    for run_index in range(params.runs):
        rng = _run_rng(params.seed, run_index)
        size_hi = min(params.maxq, len(vocab))
        size = int(rng.integers(params.minq, size_hi + 1))
        q_best: Query = frozenset(rng.choice(vocab, size=size, replace=False).tolist())
        try:
            results = engine.search(q_best, params.rlimit)
            trace.engine_calls += 1
        except TransportError as exc:
            log.warning("run %d: initial retrieval failed: %s", run_index, exc)
            trace.records.append(
                TraceRecord(run_index, 0, INIT, q_best, None, False, None, (), str(exc))
            )
            continue
        mre_best = mean_relevance_error(results, prototype, store)
        empty_last = not results
        trace.records.append(TraceRecord(run_index, 0, INIT, q_best, mre_best, False, len(results)))

        for iteration in range(1, params.itr + 1):
            addable = len(set(vocab) - q_best) > 0
            offered: list[str] = []
            if len(q_best) < params.maxq and not empty_last and addable:
                offered.append(ADD_WORD)
            if len(q_best) > params.minq:
                offered.append(REMOVE_WORD)
            if addable:
                offered.append(SWAP_WORDS)
            if not offered:
                # The query can no longer change (vocabulary exhausted at
                # minimum size); further iterations would be no-ops.
                break
            action = offered[int(rng.integers(len(offered)))]
            if action == ADD_WORD:
                q_new = add_word(q_best, vocab, rng)
            elif action == REMOVE_WORD:
                q_new = remove_word(q_best, rng)
            else:
                q_new = swap_words(q_best, vocab, rng)
            try:
                results = engine.search(q_new, params.rlimit)
                trace.engine_calls += 1
            except TransportError as exc:
                log.warning("run %d iteration %d: retrieval failed: %s", run_index, iteration, exc)
                trace.records.append(
                    TraceRecord(
                        run_index, iteration, action, q_new, None, False, None, tuple(offered), str(exc)
                    )
                )
                continue
            mre_new = mean_relevance_error(results, prototype, store)
            empty_last = not results
            accepted = mre_new < mre_best
            if accepted:
                queue.add(q_new, mre_new)
                q_best = q_new
                mre_best = mre_new
            trace.records.append(
                TraceRecord(run_index, iteration, action, q_new, mre_new, accepted, len(results), tuple(offered))
            )
    return queue, trace


def collect(queue: QueryQueue, engine: SearchEngine, per_query_cap: int) -> list[ResultDoc]:
    """Retrieve up to ``per_query_cap`` results for every queued query and
    union them by document id (first seen wins).

    Queries run in ascending score order; within the output, documents
    keep query rank then engine order. Queries that fail transport after
    retries are skipped with a warning.
    """
    if len(queue) == 0:
        raise ValueError("cannot collect from an empty query queue")
    if per_query_cap < 1:
        raise ValueError("per_query_cap must be >= 1")
    seen: set[str] = set()
    out: list[ResultDoc] = []
    for query, _ in queue:
        try:
            results = engine.search(query, per_query_cap)
        except TransportError as exc:
            log.warning("collect: query %s failed: %s", sorted(query), exc)
            continue
        for doc in results:
            if doc.id not in seen:
                seen.add(doc.id)
                out.append(doc)
    return out

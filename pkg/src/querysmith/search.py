"""Opaque search engines: an in-memory boolean inverted index simulating
recency-ordered AND retrieval, and a generic rate-limited HTTP adapter."""

from __future__ import annotations

import json
import logging
import threading
import time
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, runtime_checkable
from urllib.parse import quote

import requests

from .embeddings import EmbeddingStore
from .relevance import ResultDoc, build_result_doc
from .textprep import TokenizerConfig, collapse_entities, split_words

log = logging.getLogger(__name__)

DEFAULT_RLIMIT = 20

# A query is an order-insensitive set of 1..maxq keywords.
Query = frozenset[str]


class CorpusError(ValueError):
    """A corpus that cannot be ingested (duplicate ids, bad records)."""


class TransportError(RuntimeError):
    """A retriable transport failure (network error or non-2xx status)."""


class AdapterError(RuntimeError):
    """A malformed response payload from a remote search endpoint."""


def make_query(terms: Iterable[str]) -> Query:
    q = frozenset(terms)
    if not q:
        raise ValueError("a query needs at least one term")
    return q


@runtime_checkable
class SearchEngine(Protocol):
    """The opaque engine abstraction: keyword query in, documents out."""

    boolean: bool
    max_rlimit: int

    def search(self, query: Query, rlimit: int) -> list[ResultDoc]: ...


@dataclass
class BooleanIndex:
    """Immutable inverted index over a local corpus."""

    postings: dict[str, frozenset[str]]
    docs: dict[str, ResultDoc]
    doc_count: int


def index_tokens(text: str, config: TokenizerConfig, store: EmbeddingStore | None = None) -> set[str]:
    """Tokens a document is indexed under.

    Stopwords and out-of-store tokens are retained (a real engine indexes
    everything); store-resident multi-word entities are additionally
    indexed in their collapsed underscore form so entity query terms match
    the adjacent phrase.
    """
    tokens = split_words(text, config.lowercase)
    out = set(tokens)
    if store is not None and config.entity_max_ngram > 1:
        out.update(t for t in collapse_entities(tokens, store, config.entity_max_ngram) if "_" in t)
    return out


def build_index(
    corpus: Iterable[ResultDoc], config: TokenizerConfig, store: EmbeddingStore | None = None
) -> BooleanIndex:
    """Build a :class:`BooleanIndex` from a document stream.

    Duplicate document ids are an ingestion error.
    """
    postings: dict[str, set[str]] = {}
    docs: dict[str, ResultDoc] = {}
    for doc in corpus:
        if doc.id in docs:
            raise CorpusError(f"duplicate doc id in corpus: {doc.id!r}")
        docs[doc.id] = doc
        for token in index_tokens(doc.text, config, store):
            postings.setdefault(token, set()).add(doc.id)
    return BooleanIndex(
        postings={t: frozenset(ids) for t, ids in postings.items()},
        docs=docs,
        doc_count=len(docs),
    )


def search(index: BooleanIndex, query: Query, rlimit: int) -> list[ResultDoc]:
    """Boolean AND retrieval: documents containing every query term,
    ordered by recency.

    Ordering is timestamp descending; documents without timestamps sort
    after timestamped ones; ties break by doc id descending. At most
    ``rlimit`` documents are returned.
    """
    if rlimit < 1:
        raise ValueError("rlimit must be >= 1")
    if not query:
        raise ValueError("a query needs at least one term")
    ids: frozenset[str] | None = None
    for term in query:
        posting = index.postings.get(term, frozenset())
        ids = posting if ids is None else ids & posting
        if not ids:
            return []
    assert ids is not None
    ordered = sorted(ids, reverse=True)
    ordered.sort(key=lambda i: (index.docs[i].timestamp is None, -(index.docs[i].timestamp or 0)))
    return [index.docs[i] for i in ordered[:rlimit]]


@dataclass
class IndexEngine:
    """A :class:`SearchEngine` over a local :class:`BooleanIndex`."""

    index: BooleanIndex
    boolean: bool = True
    max_rlimit: int = 10_000

    def search(self, query: Query, rlimit: int) -> list[ResultDoc]:
        return search(self.index, query, min(rlimit, self.max_rlimit))


def read_corpus(path: str | Path, config: TokenizerConfig, store: EmbeddingStore) -> list[ResultDoc]:
    """Read a JSON Lines corpus of ``{"id", "text", "timestamp"?}`` records."""
    path = Path(path)
    docs: list[ResultDoc] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from None
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise CorpusError(f"{path}: line {lineno}: expected an object with 'id' and 'text'")
            timestamp = record.get("timestamp")
            if timestamp is not None and not isinstance(timestamp, int):
                raise CorpusError(f"{path}: line {lineno}: 'timestamp' must be an integer")
            docs.append(build_result_doc(str(record["id"]), str(record["text"]), config, store, timestamp))
    return docs


def _parse_results(
    payload: Any,
    rlimit: int,
    config: TokenizerConfig,
    store: EmbeddingStore,
) -> list[ResultDoc]:
    if not isinstance(payload, list):
        raise AdapterError(f"expected a JSON array of results, got {type(payload).__name__}")
    docs: list[ResultDoc] = []
    for item in payload[:rlimit]:
        if not isinstance(item, dict) or "id" not in item or "text" not in item:
            raise AdapterError("each result must be an object with 'id' and 'text'")
        timestamp = item.get("timestamp")
        if timestamp is not None and not isinstance(timestamp, int):
            raise AdapterError("'timestamp' must be an integer when present")
        docs.append(build_result_doc(str(item["id"]), str(item["text"]), config, store, timestamp))
    return docs


@dataclass
class HttpSearchEngine:
    """Generic GET adapter for a remote keyword search endpoint.

    The endpoint template must contain a ``{query}`` slot and may contain
    a ``{limit}`` slot. Query terms are joined with single spaces in
    sorted order (queries are order-insensitive sets) and percent-encoded.
    Requests to one endpoint are serialized with a minimum inter-request
    delay, and transport failures are retried with exponential backoff
    before surfacing as :class:`TransportError`; malformed payloads
    surface as :class:`AdapterError`.
    """

    endpoint_template: str
    config: TokenizerConfig
    store: EmbeddingStore
    min_delay: float = 1.0
    max_retries: int = 3
    timeout: float = 10.0
    session: Any = None
    boolean: bool = True
    max_rlimit: int = 100
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)
    _last_request: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self) -> None:
        if "{query}" not in self.endpoint_template:
            raise ValueError("endpoint template must contain a {query} slot")
        if self.session is None:
            self.session = requests.Session()

    def url_for(self, query: Query, rlimit: int) -> str:
        encoded = quote(" ".join(sorted(query)))
        return self.endpoint_template.replace("{query}", encoded).replace("{limit}", str(rlimit))

    def search(self, query: Query, rlimit: int) -> list[ResultDoc]:
        if rlimit < 1:
            raise ValueError("rlimit must be >= 1")
        if not query:
            raise ValueError("a query needs at least one term")
        rlimit = min(rlimit, self.max_rlimit)
        url = self.url_for(query, rlimit)
        with self._lock:
            last_error: Exception | None = None
            for attempt in range(self.max_retries + 1):
                self._throttle(attempt)
                try:
                    response = self.session.get(url, timeout=self.timeout)
                except requests.RequestException as exc:
                    last_error = exc
                    continue
                if not 200 <= response.status_code < 300:
                    last_error = TransportError(f"GET {url} -> HTTP {response.status_code}")
                    continue
                try:
                    payload = response.json()
                except ValueError as exc:
                    raise AdapterError(f"GET {url}: response is not valid JSON: {exc}") from None
                return _parse_results(payload, rlimit, self.config, self.store)
            raise TransportError(f"GET {url} failed after {self.max_retries + 1} attempt(s): {last_error}")

    def _throttle(self, attempt: int) -> None:
        delay = self.min_delay * (2**attempt if attempt else 1)
        wait = self._last_request + delay - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()


def http_search(
    endpoint_template: str,
    query: Query,
    rlimit: int,
    config: TokenizerConfig,
    store: EmbeddingStore,
    **engine_kwargs: Any,
) -> list[ResultDoc]:
    """One-shot remote search through a temporary :class:`HttpSearchEngine`."""
    engine = HttpSearchEngine(endpoint_template, config, store, **engine_kwargs)
    return engine.search(query, rlimit)

"""Relevance measures: the embedding relevance error and its mean over a
result batch, plus the lexical baselines (TF-IDF, BM25, DESM)."""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .embeddings import EmbeddingStore
from .textprep import PrototypeDocument, TokenizerConfig, bag_of_words, tokenize

MAX_RELEVANCE_ERROR = 2.0


class Measure(str, Enum):
    RE = "re"
    TFIDF = "tfidf"
    BM25 = "bm25"
    DESM = "desm"


# Ranking direction per measure: relevance error ranks ascending (lower is
# more relevant), the baselines rank descending.
ASCENDING_MEASURES = frozenset({Measure.RE})


@dataclass(frozen=True)
class ResultDoc:
    """A short retrieved document.

    ``words`` is the stopword-free, store-resident token set of ``text``
    (it may legitimately be empty).
    """

    id: str
    text: str
    words: tuple[str, ...]
    timestamp: int | None = None


@dataclass(frozen=True)
class ScoredResult:
    doc: ResultDoc
    score: float
    measure: Measure


def build_result_doc(
    doc_id: str,
    text: str,
    config: TokenizerConfig,
    store: EmbeddingStore,
    timestamp: int | None = None,
) -> ResultDoc:
    """Tokenize ``text`` and wrap it as a :class:`ResultDoc`."""
    return ResultDoc(id=doc_id, text=text, words=tuple(tokenize(text, config, store)), timestamp=timestamp)


def word_doc_distance(word: str, prototype: PrototypeDocument, store: EmbeddingStore) -> float:
    """Minimal cosine distance from ``word`` to any prototype word."""
    if not prototype.words:
        raise ValueError("prototype word set is empty")
    v = store.vector(word)
    dists = 1.0 - store.vectors(prototype.words) @ v
    np.clip(dists, 0.0, MAX_RELEVANCE_ERROR, out=dists)
    return float(dists.min())


def relevance_error(doc: ResultDoc, prototype: PrototypeDocument, store: EmbeddingStore) -> float:
    """Average, over the result's words, of the minimal cosine distance to
    the prototype's words.

    A result with no usable words gets the maximal score 2.0: its
    relevance is vacuous, which mirrors the empty-result convention of
    :func:`mean_relevance_error`.
    """
    if not prototype.words:
        raise ValueError("prototype word set is empty")
    if not doc.words:
        return MAX_RELEVANCE_ERROR
    dmat = 1.0 - store.vectors(doc.words) @ store.vectors(prototype.words).T
    np.clip(dmat, 0.0, MAX_RELEVANCE_ERROR, out=dmat)
    return float(dmat.min(axis=1).mean())


def mean_relevance_error(
    results: Sequence[ResultDoc], prototype: PrototypeDocument, store: EmbeddingStore
) -> float:
    """Mean relevance error of a result batch; exactly 2.0 for an empty
    batch (no results is maximally unhelpful)."""
    if not results:
        return MAX_RELEVANCE_ERROR
    total = 0.0
    for doc in results:
        total += relevance_error(doc, prototype, store)
    return total / len(results)


def rank_by_re(
    results: Iterable[ResultDoc], prototype: PrototypeDocument, store: EmbeddingStore
) -> list[ScoredResult]:
    """Results scored by relevance error, ascending (most relevant first).

    Equal scores are ordered by document id so rankings are deterministic.
    """
    scored = [
        ScoredResult(doc=doc, score=relevance_error(doc, prototype, store), measure=Measure.RE)
        for doc in results
    ]
    scored.sort(key=lambda s: (s.score, s.doc.id))
    return scored


@dataclass(frozen=True)
class CorpusStats:
    """Document-frequency table over a candidate result pool.

    Carries the tokenizer config it was built with so scoring uses the
    same bag-of-words rules.
    """

    doc_count: int
    doc_freq: Mapping[str, int]
    avg_doc_len: float
    config: TokenizerConfig

    @classmethod
    def from_texts(cls, texts: Iterable[str], config: TokenizerConfig) -> "CorpusStats":
        df: Counter[str] = Counter()
        total_len = 0
        count = 0
        for text in texts:
            bag = bag_of_words(text, config)
            total_len += len(bag)
            df.update(set(bag))
            count += 1
        avg = total_len / count if count else 0.0
        return cls(doc_count=count, doc_freq=dict(df), avg_doc_len=avg, config=config)

    @classmethod
    def from_docs(cls, docs: Iterable[ResultDoc], config: TokenizerConfig) -> "CorpusStats":
        return cls.from_texts((d.text for d in docs), config)


def _tfidf_weights(bag: list[str], stats: CorpusStats) -> dict[str, float]:
    weights: dict[str, float] = {}
    for term, count in Counter(bag).items():
        idf = math.log((stats.doc_count + 1) / (stats.doc_freq.get(term, 0) + 1)) + 1.0
        weights[term] = count * idf
    return weights


def tfidf_score(doc: ResultDoc, prototype: PrototypeDocument, stats: CorpusStats) -> float:
    """Cosine similarity between TF-IDF weight vectors of the result text
    and the prototype text (tf = raw count, idf = ln((N+1)/(df+1)) + 1)."""
    a = _tfidf_weights(bag_of_words(doc.text, stats.config), stats)
    b = _tfidf_weights(bag_of_words(prototype.raw_text, stats.config), stats)
    dot = sum(w * b[t] for t, w in a.items() if t in b)
    norm_a = math.sqrt(sum(w * w for w in a.values()))
    norm_b = math.sqrt(sum(w * w for w in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def bm25_score(
    doc: ResultDoc,
    prototype: PrototypeDocument,
    stats: CorpusStats,
    k1: float = 1.2,
    b: float = 0.75,
) -> float:
    """Okapi BM25 of the prototype's terms against the result document,
    with idf = ln(1 + (N - df + 0.5)/(df + 0.5))."""
    doc_bag = bag_of_words(doc.text, stats.config)
    tf = Counter(doc_bag)
    doc_len = len(doc_bag)
    avgdl = stats.avg_doc_len if stats.avg_doc_len > 0 else 1.0
    score = 0.0
    for term in dict.fromkeys(bag_of_words(prototype.raw_text, stats.config)):
        freq = tf.get(term, 0)
        if freq == 0:
            continue
        df = stats.doc_freq.get(term, 0)
        idf = math.log(1.0 + (stats.doc_count - df + 0.5) / (df + 0.5))
        score += idf * (freq * (k1 + 1.0)) / (freq + k1 * (1.0 - b + b * doc_len / avgdl))
    return score


def desm_score(doc: ResultDoc, prototype: PrototypeDocument, store: EmbeddingStore) -> float:
    """Mean cosine similarity of the prototype's words to the result's
    normalised word centroid (higher is better).

    A result with no store-resident words scores -1.0, the worst possible
    similarity.
    """
    if not prototype.words:
        raise ValueError("prototype word set is empty")
    if not doc.words:
        return -1.0
    centroid = store.vectors(doc.words).mean(axis=0)
    norm = float(np.linalg.norm(centroid))
    if norm == 0.0:
        return -1.0
    centroid = centroid / norm
    sims = store.vectors(prototype.words) @ centroid
    return float(sims.mean())

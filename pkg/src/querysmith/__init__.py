"""querysmith: iterative keyword-query optimization against opaque boolean
search engines, scored by embedding-based relevance."""

from .embeddings import (
    EmbeddingFormatError,
    EmbeddingStore,
    cosine_distance,
    load_embeddings,
    nearest_neighbors,
)
from .metrics import UndefinedMetricError, average_precision, ndcg, r_precision, roc_auc
from .optimizer import IqsParams, IqsTrace, QueryQueue, collect, iqs_run
from .relevance import (
    CorpusStats,
    Measure,
    ResultDoc,
    ScoredResult,
    bm25_score,
    build_result_doc,
    desm_score,
    mean_relevance_error,
    rank_by_re,
    relevance_error,
    tfidf_score,
    word_doc_distance,
)
from .search import (
    AdapterError,
    BooleanIndex,
    CorpusError,
    HttpSearchEngine,
    IndexEngine,
    Query,
    SearchEngine,
    TransportError,
    build_index,
    http_search,
    make_query,
    read_corpus,
    search,
)
from .textprep import (
    EmptyPrototypeError,
    PrototypeDocument,
    TokenizerConfig,
    build_prototype,
    expand_knn,
    expand_synonyms,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "BooleanIndex",
    "CorpusError",
    "CorpusStats",
    "EmbeddingFormatError",
    "EmbeddingStore",
    "EmptyPrototypeError",
    "HttpSearchEngine",
    "IndexEngine",
    "IqsParams",
    "IqsTrace",
    "Measure",
    "PrototypeDocument",
    "Query",
    "QueryQueue",
    "ResultDoc",
    "ScoredResult",
    "SearchEngine",
    "TokenizerConfig",
    "TransportError",
    "UndefinedMetricError",
    "average_precision",
    "bm25_score",
    "build_index",
    "build_prototype",
    "build_result_doc",
    "collect",
    "cosine_distance",
    "desm_score",
    "expand_knn",
    "expand_synonyms",
    "http_search",
    "iqs_run",
    "load_embeddings",
    "make_query",
    "mean_relevance_error",
    "ndcg",
    "nearest_neighbors",
    "r_precision",
    "rank_by_re",
    "read_corpus",
    "relevance_error",
    "roc_auc",
    "search",
    "tfidf_score",
    "tokenize",
    "word_doc_distance",
]

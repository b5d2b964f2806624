from dataclasses import dataclass

import numpy as np
import pytest

from querysmith import EmbeddingStore, ResultDoc, TokenizerConfig, build_result_doc
from querysmith.harness import Qrels, Topic


@pytest.fixture
def tiny_store() -> EmbeddingStore:
    """Three words: dog and cat are close, car is orthogonal to dog."""
    return EmbeddingStore({"dog": [1.0, 0.0], "cat": [0.8, 0.6], "car": [0.0, 1.0]})


@pytest.fixture
def config() -> TokenizerConfig:
    return TokenizerConfig(stopwords=frozenset({"the", "and"}))


@pytest.fixture
def make_doc(config, tiny_store):
    def _make(doc_id: str, text: str, timestamp: int | None = None):
        return build_result_doc(doc_id, text, config, tiny_store, timestamp)

    return _make


def random_unit_store(rng: np.random.Generator, n_tokens: int, dim: int) -> EmbeddingStore:
    """A store of random unit vectors with tokens w0..w{n-1}."""
    vectors = rng.normal(size=(n_tokens, dim))
    return EmbeddingStore({f"w{i}": vectors[i] for i in range(n_tokens)})


@dataclass
class PlantedDataset:
    """A synthetic topic: a tight embedded word cluster shared by planted
    documents, drowned in documents built from orthogonal vocabulary."""

    store: EmbeddingStore
    config: TokenizerConfig
    docs: list[ResultDoc]
    topic: Topic
    qrels: Qrels
    planted_ids: set[str]


def build_planted_dataset(
    seed: int = 0,
    n_docs: int = 5000,
    n_planted: int = 50,
    topic_vocab: int = 8,
    distractor_vocab: int = 60,
    judged_irrelevant: int = 200,
    dim: int = 24,
) -> PlantedDataset:
    rng = np.random.default_rng(seed)
    half = dim // 2
    entries: dict[str, np.ndarray] = {}
    for i in range(topic_vocab):
        noise = np.zeros(dim)
        noise[1:half] = rng.normal(size=half - 1) * 0.1
        entries[f"topic{i}"] = np.eye(dim)[0] + noise
    for i in range(distractor_vocab):
        vec = np.zeros(dim)
        vec[half:] = rng.normal(size=dim - half)
        entries[f"noise{i}"] = vec
    store = EmbeddingStore(entries)
    config = TokenizerConfig(stopwords=frozenset({"the", "a"}), entity_max_ngram=1)

    docs: list[ResultDoc] = []
    planted_ids: set[str] = set()
    judgments: dict[tuple[str, str], int] = {}
    topic_id = "T1"
    for i in range(n_planted):
        k = int(rng.integers(2, 5))
        words = rng.choice([f"topic{j}" for j in range(topic_vocab)], size=k, replace=False)
        doc_id = f"P{i:04d}"
        planted_ids.add(doc_id)
        judgments[(topic_id, doc_id)] = 1
        docs.append(
            build_result_doc(doc_id, " ".join(words), config, store, 1_000_000 + i)
        )
    for i in range(n_docs - n_planted):
        k = int(rng.integers(3, 9))
        words = rng.choice([f"noise{j}" for j in range(distractor_vocab)], size=k, replace=True)
        doc_id = f"N{i:05d}"
        docs.append(build_result_doc(doc_id, " ".join(words), config, store, i))
        if i < judged_irrelevant:
            judgments[(topic_id, doc_id)] = 0
    topic = Topic(
        id=topic_id,
        query="topic0 topic1 topic2",
        narrative="topic0 topic1 topic2 topic3 topic4",
    )
    return PlantedDataset(
        store=store,
        config=config,
        docs=docs,
        topic=topic,
        qrels=Qrels(judgments),
        planted_ids=planted_ids,
    )


@pytest.fixture(scope="session")
def small_planted() -> PlantedDataset:
    return build_planted_dataset(seed=1, n_docs=400, n_planted=20, judged_irrelevant=80)

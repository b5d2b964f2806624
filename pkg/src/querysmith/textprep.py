"""Text preparation: tokenization, stopword and word-class filtering,
multi-word entity collapsing, and candidate-vocabulary expansion."""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .embeddings import EmbeddingStore, nearest_neighbors

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Word classes kept when a word-class lexicon is active. Words absent
# from the lexicon are kept as well.
CONTENT_CLASSES = frozenset({"noun", "verb", "adjective", "number"})

EXPANSION_KINDS = frozenset({"synonyms", "knn"})

DEFAULT_KNN_K = 3


class EmptyPrototypeError(ValueError):
    """The prototype text yields no usable words, so downstream relevance
    scoring is undefined."""


def default_stopwords() -> frozenset[str]:
    """The bundled English stopword list."""
    text = resources.files("querysmith").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Stopword file: one lowercase token per line."""
    words = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            token = line.strip().lower()
            if token:
                words.add(token)
    return frozenset(words)


def load_synonym_lexicon(path: str | Path) -> dict[str, tuple[str, ...]]:
    """Synonym lexicon file: lines of ``word<TAB>syn1,syn2,...``."""
    lexicon: dict[str, tuple[str, ...]] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError(f"{path}: line {lineno}: expected 'word<TAB>syn1,syn2,...'")
            word, _, rest = line.partition("\t")
            syns = tuple(s.strip() for s in rest.split(",") if s.strip())
            lexicon[word.strip()] = syns
    return lexicon


def load_wordclass_lexicon(path: str | Path) -> dict[str, str]:
    """Word-class lexicon file: lines of ``word<TAB>class``."""
    lexicon: dict[str, str] = {}
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ValueError(f"{path}: line {lineno}: expected 'word<TAB>class'")
            word, _, cls = line.partition("\t")
            lexicon[word.strip()] = cls.strip().lower()
    return lexicon


@dataclass(frozen=True)
class TokenizerConfig:
    """Settings shared by every tokenization call.

    ``stopwords`` must be lowercase. ``wordclass_lexicon`` maps a token to
    one of noun/verb/adjective/number/other; when present, prototype words
    outside the content classes are dropped (unknown tokens are kept).
    """

    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    wordclass_lexicon: Mapping[str, str] | None = None
    entity_max_ngram: int = 3
    lowercase: bool = True

    def __post_init__(self) -> None:
        if self.entity_max_ngram < 1:
            raise ValueError("entity_max_ngram must be >= 1")


@dataclass
class PrototypeDocument:
    """The reference document whose topic retrieved results should match.

    ``words`` is the stopword-free, store-resident word set; the candidate
    vocabulary adds any requested expansions and always contains ``words``.
    """

    raw_text: str
    words: list[str]
    candidate_vocab: list[str]


def split_words(text: str, lowercase: bool = True) -> list[str]:
    """Split raw text into letter/digit runs.

    URLs and @-mentions are removed whole; everything else is split on
    non-letter/non-digit boundaries (which also strips ``#`` from
    hashtags, keeping the tag body). No filtering is applied.
    """
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    if lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


def collapse_entities(tokens: list[str], store: EmbeddingStore, max_ngram: int) -> list[str]:
    """Greedily merge adjacent tokens into underscore-joined multi-word
    entities whenever the joined form exists in the store."""
    if max_ngram < 2:
        return list(tokens)
    out: list[str] = []
    i = 0
    n = len(tokens)
    while i < n:
        width_found = 1
        for width in range(min(max_ngram, n - i), 1, -1):
            joined = "_".join(tokens[i : i + width])
            if joined in store:
                out.append(joined)
                width_found = width
                break
        else:
            out.append(tokens[i])
        i += width_found
    return out


def tokenize(text: str, config: TokenizerConfig, store: EmbeddingStore) -> list[str]:
    """Turn raw text into an ordered, duplicate-free token list.

    Applies, in order: URL/mention removal, lowercasing, boundary
    splitting, entity collapsing, stopword removal, embedding-store
    filtering, and first-occurrence deduplication. An empty result is
    legal. No stemming is performed.
    """
    tokens = split_words(text, config.lowercase)
    tokens = collapse_entities(tokens, store, config.entity_max_ngram)
    seen: set[str] = set()
    out: list[str] = []
    for tok in tokens:
        if tok.lower() in config.stopwords:
            continue
        if tok not in store:
            continue
        if tok in seen:
            continue
        seen.add(tok)
        out.append(tok)
    return out


def bag_of_words(text: str, config: TokenizerConfig) -> list[str]:
    """Stopword-free token bag with duplicates kept.

    Unlike :func:`tokenize` this performs no embedding-store filtering or
    entity collapsing; it feeds the lexical baselines, which must not
    depend on embedding coverage.
    """
    return [t for t in split_words(text, config.lowercase) if t.lower() not in config.stopwords]


def expand_synonyms(
    words: Iterable[str], lexicon: Mapping[str, tuple[str, ...]]
) -> list[str]:
    """Union of ``words`` with every lexicon synonym of each word.

    Original words are always retained and come first; a word absent from
    the lexicon simply contributes no synonyms.
    """
    out = list(dict.fromkeys(words))
    seen = set(out)
    for word in list(out):
        for syn in lexicon.get(word, ()):
            if syn not in seen:
                seen.add(syn)
                out.append(syn)
    return out


def expand_knn(words: Iterable[str], store: EmbeddingStore, k: int) -> list[str]:
    """Union of the store-resident ``words`` with the ``k`` nearest
    embedding-space neighbours of each.

    Words absent from the store contribute nothing and are dropped; in
    the normal pipeline they have already been filtered out upstream.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    present = [w for w in dict.fromkeys(words) if w in store]
    out = list(present)
    seen = set(out)
    for word in present:
        for neighbor, _ in nearest_neighbors(store, word, k):
            if neighbor not in seen:
                seen.add(neighbor)
                out.append(neighbor)
    return out


def build_prototype(
    text: str,
    config: TokenizerConfig,
    store: EmbeddingStore,
    expansions: Iterable[str] = (),
    synonym_lexicon: Mapping[str, tuple[str, ...]] | None = None,
    knn_k: int = DEFAULT_KNN_K,
) -> PrototypeDocument:
    """Build a :class:`PrototypeDocument` from raw text.

    ``expansions`` may contain ``"synonyms"`` and/or ``"knn"``; each is
    applied to the prototype's word set (not chained), and expansion
    tokens absent from the store are discarded. Raises
    :class:`EmptyPrototypeError` when no usable words remain.
    """
    kinds = set(expansions)
    unknown = kinds - EXPANSION_KINDS
    if unknown:
        raise ValueError(f"unknown expansion kind(s): {sorted(unknown)}")
    words = tokenize(text, config, store)
    if config.wordclass_lexicon is not None:
        lex = config.wordclass_lexicon
        words = [w for w in words if w not in lex or lex[w] in CONTENT_CLASSES]
    if not words:
        raise EmptyPrototypeError("prototype text yields no usable words")

    vocab = list(words)
    seen = set(vocab)
    if "synonyms" in kinds:
        if synonym_lexicon is None:
            raise ValueError("synonym expansion requested without a synonym lexicon")
        for tok in expand_synonyms(words, synonym_lexicon):
            if tok not in seen and tok in store:
                seen.add(tok)
                vocab.append(tok)
    if "knn" in kinds:
        for tok in expand_knn(words, store, knn_k):
            if tok not in seen:
                seen.add(tok)
                vocab.append(tok)
    return PrototypeDocument(raw_text=text, words=words, candidate_vocab=vocab)

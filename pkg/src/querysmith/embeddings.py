"""Word-embedding store: text-format vector loading, cosine distance, and
exact nearest-neighbour lookup over the vocabulary."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 500_000


class EmbeddingFormatError(ValueError):
    """An embedding file that cannot be parsed.

    Raised for a wrong field count, a non-numeric value, or a
    dimensionality that changes between lines. The message names the
    offending line number.
    """


class EmbeddingStore:
    """Immutable map from token to an L2-normalised vector.

    Vectors are normalised once at construction so that cosine distance
    between stored tokens reduces to ``1 - dot`` in scoring loops.
    Tokens are held in lexicographic order, which makes nearest-neighbour
    ties resolve deterministically. Zero-norm input vectors cannot be
    normalised and are skipped with a counted warning.
    """

    def __init__(
        self,
        entries: Mapping[str, Sequence[float]] | Iterable[tuple[str, Sequence[float]]],
    ) -> None:
        pairs = entries.items() if isinstance(entries, Mapping) else entries
        by_token: dict[str, np.ndarray] = {}
        skipped = 0
        dim: int | None = None
        for token, values in pairs:
            vec = np.asarray(values, dtype=np.float64)
            if vec.ndim != 1 or vec.shape[0] == 0:
                raise ValueError(f"vector for token {token!r} must be a flat non-empty sequence")
            if dim is None:
                dim = int(vec.shape[0])
            elif vec.shape[0] != dim:
                raise EmbeddingFormatError(
                    f"vector for token {token!r} has dim {vec.shape[0]}, expected {dim}"
                )
            if token in by_token:
                continue  # first occurrence wins
            norm = float(np.linalg.norm(vec))
            if norm < 1e-12:
                skipped += 1
                continue
            by_token[token] = vec / norm
        self._tokens: list[str] = sorted(by_token)
        self._index: dict[str, int] = {t: i for i, t in enumerate(self._tokens)}
        if self._tokens:
            self._matrix = np.vstack([by_token[t] for t in self._tokens])
        else:
            self._matrix = np.zeros((0, dim or 0), dtype=np.float64)
        self.dim: int = int(dim or 0)
        self.skipped_zero_norm: int = skipped
        if skipped:
            log.warning("skipped %d zero-norm vector(s) while building embedding store", skipped)

    @property
    def token_count(self) -> int:
        return len(self._tokens)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: object) -> bool:
        return token in self._index

    def tokens(self) -> list[str]:
        """All stored tokens in lexicographic order."""
        return list(self._tokens)

    def vector(self, token: str) -> np.ndarray:
        """Unit vector for ``token``; raises ``KeyError`` when absent."""
        try:
            row = self._index[token]
        except KeyError:
            raise KeyError(f"token not present in embedding store: {token!r}") from None
        return self._matrix[row]

    def get(self, token: str) -> np.ndarray | None:
        """Unit vector for ``token``, or ``None`` when absent."""
        row = self._index.get(token)
        return None if row is None else self._matrix[row]

    def vectors(self, tokens: Iterable[str]) -> np.ndarray:
        """Stacked unit vectors for ``tokens`` (all must be present)."""
        rows = [self._index[t] for t in tokens]
        return self._matrix[rows]


def cosine_distance(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine distance ``1 - cos(u, v)``, clamped to [0, 2].

    Both vectors must share a dimension and have nonzero norm; violating
    either is a contract error.
    """
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    d = 1.0 - float(np.dot(a, b)) / (na * nb)
    return min(2.0, max(0.0, d))


def nearest_neighbors(store: EmbeddingStore, token: str, k: int) -> list[tuple[str, float]]:
    """The ``k`` nearest stored tokens to ``token`` by cosine distance.

    Returns at most ``min(k, token_count - 1)`` pairs ``(token, distance)``
    in ascending distance order, never including the query token itself.
    Exact ties are broken by lexicographic token order. Raises ``KeyError``
    when the query token is absent.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    v = store.vector(token)
    dists = 1.0 - store._matrix @ v
    np.clip(dists, 0.0, 2.0, out=dists)
    # Tokens are stored lexicographically, so a stable sort on distance
    # breaks ties lexicographically.
    order = np.argsort(dists, kind="stable")
    out: list[tuple[str, float]] = []
    for idx in order:
        name = store._tokens[idx]
        if name == token:
            continue
        out.append((name, float(dists[idx])))
        if len(out) == k:
            break
    return out


def load_embeddings(path: str | Path, max_tokens: int | None = DEFAULT_MAX_TOKENS) -> EmbeddingStore:
    """Load a text-format embedding file into an :class:`EmbeddingStore`.

    The format is one token plus its vector components per line, space
    separated. An optional first line holding exactly two integers
    ("count dim") is treated as a header. When ``max_tokens`` is given,
    only the first ``max_tokens`` data lines are read; vector files are
    conventionally sorted by token frequency, so truncation keeps the
    frequent vocabulary.
    """
    if max_tokens is not None and max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    path = Path(path)
    pairs: list[tuple[str, np.ndarray]] = []
    seen: set[str] = set()
    dim: int | None = None
    first_data_line = True
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if first_data_line and len(parts) == 2 and _is_int(parts[0]) and _is_int(parts[1]):
                dim = int(parts[1])
                if dim < 1:
                    raise EmbeddingFormatError(f"{path}: header at line {lineno} declares dim {dim}")
                first_data_line = False
                continue
            first_data_line = False
            token, values = parts[0], parts[1:]
            if dim is None:
                if not values:
                    raise EmbeddingFormatError(f"{path}: line {lineno} has no vector values")
                dim = len(values)
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}: line {lineno} has {len(values)} values, expected {dim}"
                )
            try:
                vec = np.array([float(x) for x in values], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingFormatError(f"{path}: line {lineno}: {exc}") from None
            if token in seen:
                continue
            seen.add(token)
            pairs.append((token, vec))
            if max_tokens is not None and len(pairs) >= max_tokens:
                break
    return EmbeddingStore(pairs)


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True

"""Substitution candidates: synonym lexicon plus embedding nearest neighbors.

The candidate set S(x) for a word is the union of its synonyms and its K
nearest neighbors in a static word-embedding space. All structures are
immutable after load and safe for concurrent reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus

__all__ = [
    "SynonymLexicon",
    "EmbeddingSpace",
    "CandidateSet",
    "LexiconError",
    "load_synonyms",
    "load_embeddings",
    "nearest_neighbors",
    "candidate_set",
    "mean_synonym_count",
    "CandidateSource",
]


class LexiconError(ValueError):
    """Raised for malformed lexicon or embedding files."""


@dataclass(frozen=True)
class SynonymLexicon:
    entries: dict[str, tuple[str, ...]]

    def synonyms(self, word: str) -> tuple[str, ...]:
        """Synonym list for `word`; empty for unknown words."""
        return self.entries.get(word, ())

    def __len__(self) -> int:
        return len(self.entries)


def load_synonyms(path) -> SynonymLexicon:
    """Parse `word<TAB>syn1,syn2,...` lines. Self-references are dropped."""
    entries: dict[str, tuple[str, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            word, sep, rest = line.partition("\t")
            if not sep:
                raise LexiconError(f"{path}:{lineno}: missing tab separator")
            word = word.strip().lower()
            if not word:
                raise LexiconError(f"{path}:{lineno}: empty headword")
            if word in entries:
                raise LexiconError(f"{path}:{lineno}: duplicate headword {word!r}")
            syns = []
            for raw in rest.split(","):
                syn = raw.strip().lower()
                if syn and syn != word and syn not in syns:
                    syns.append(syn)
            entries[word] = tuple(syns)
    return SynonymLexicon(entries=entries)


class EmbeddingSpace:
    """Static word vectors with a dense matrix view for neighbor queries.

    Words are kept lexicographically sorted so that stable distance sorts
    break ties alphabetically.
    """

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise LexiconError("embedding space is empty")
        dims = {len(v) for v in vectors.values()}
        if len(dims) != 1:
            raise LexiconError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.dimension = dims.pop()
        self._words = sorted(vectors)
        self._index = {w: i for i, w in enumerate(self._words)}
        self._matrix = np.array([vectors[w] for w in self._words], dtype=np.float64)
        if not np.isfinite(self._matrix).all():
            raise LexiconError("embedding vectors must be finite")

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self._words)

    def vector(self, word: str) -> np.ndarray:
        return self._matrix[self._index[word]]

    def words(self) -> list[str]:
        return list(self._words)

    def distances_from(self, word: str, metric: str = "euclidean") -> np.ndarray:
        """Distance from `word` to every word in the space (self included)."""
        v = self.vector(word)
        if metric == "euclidean":
            return np.linalg.norm(self._matrix - v, axis=1)
        if metric == "cosine":
            norms = np.linalg.norm(self._matrix, axis=1) * np.linalg.norm(v)
            # zero vectors get maximal distance
            with np.errstate(invalid="ignore", divide="ignore"):
                sims = (self._matrix @ v) / norms
            sims = np.where(np.isfinite(sims), sims, -1.0)
            return 1.0 - sims
        raise LexiconError(f"unknown metric {metric!r}")


def load_embeddings(path) -> EmbeddingSpace:
    """Parse `word v1 v2 ... vd` lines, space-separated decimals."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise LexiconError(f"{path}:{lineno}: no vector components")
            word = parts[0].lower()
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise LexiconError(f"{path}:{lineno}: non-numeric component") from None
            vectors[word] = vec
    return EmbeddingSpace(vectors)


def nearest_neighbors(
    space: EmbeddingSpace,
    word: str,
    k: int,
    metric: str = "euclidean",
) -> list[str]:
    """The k closest words to `word`, distance-ascending, ties lexicographic.

    Words absent from the space yield an empty list; fewer than k neighbors
    are returned when the vocabulary is small.
    """
    if k < 1:
        raise LexiconError(f"k must be >= 1, got {k}")
    if word not in space:
        return []
    dists = space.distances_from(word, metric=metric)
    # stable sort over the lexicographically sorted word list: ties stay
    # alphabetical
    order = np.argsort(dists, kind="stable")
    words = space.words()
    out = []
    for idx in order:
        cand = words[idx]
        if cand == word:
            continue
        out.append(cand)
        if len(out) == k:
            break
    return out


@dataclass(frozen=True)
class CandidateSet:
    source_word: str
    candidates: tuple[str, ...]

    def __post_init__(self):
        if self.source_word in self.candidates:
            raise LexiconError(f"{self.source_word!r} contained in own candidates")

    def __len__(self) -> int:
        return len(self.candidates)


def candidate_set(
    word: str,
    lexicon: SynonymLexicon,
    space: EmbeddingSpace | None,
    k: int,
    metric: str = "euclidean",
) -> CandidateSet:
    """S(x) = synonyms(x) union kNN(x), deduplicated, x itself removed."""
    merged = set(lexicon.synonyms(word))
    if space is not None:
        merged.update(nearest_neighbors(space, word, k, metric=metric))
    merged.discard(word)
    return CandidateSet(source_word=word, candidates=tuple(sorted(merged)))


def mean_synonym_count(
    lexicon: SynonymLexicon,
    corpus: Corpus,
    per_token: bool = False,
) -> int:
    """K = rounded mean synonym-set size over the corpus words, minimum 1.

    Averages over distinct word types by default; `per_token` weights each
    occurrence instead. Rounding is half-up.
    """
    if len(corpus) == 0:
        raise LexiconError("corpus is empty")
    if per_token:
        sizes = [
            len(lexicon.synonyms(tok)) for seq in corpus for tok in seq.tokens
        ]
    else:
        types = sorted({tok for seq in corpus for tok in seq.tokens})
        sizes = [len(lexicon.synonyms(w)) for w in types]
    mean = sum(sizes) / len(sizes)
    return max(1, math.floor(mean + 0.5))


class CandidateSource:
    """Caching view over (lexicon, space, K): word -> sorted candidate tuple.

    Lexicon structures are immutable, so the cache never invalidates.
    """

    def __init__(
        self,
        lexicon: SynonymLexicon,
        space: EmbeddingSpace | None,
        k: int,
        metric: str = "euclidean",
    ):
        self.lexicon = lexicon
        self.space = space
        self.k = k
        self.metric = metric
        self._cache: dict[str, tuple[str, ...]] = {}

    def candidates(self, word: str) -> tuple[str, ...]:
        cached = self._cache.get(word)
        if cached is None:
            cached = candidate_set(
                word, self.lexicon, self.space, self.k, metric=self.metric
            ).candidates
            self._cache[word] = cached
        return cached

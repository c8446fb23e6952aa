"""Corpus loading, tokenization and word-frequency statistics.

The frequency table maps every training-set word to the natural log of its
occurrence count. Words never seen in training score 0.0, which aliases with
count-1 words (ln 1 = 0); downstream consumers rely only on strict
inequalities between log frequencies, so the alias is harmless.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

__all__ = [
    "Sequence",
    "Corpus",
    "FrequencyTable",
    "FrequencyThreshold",
    "CorpusError",
    "tokenize",
    "load_corpus",
    "load_stopwords",
    "build_frequency_table",
    "percentile_threshold",
]

SPLITS = ("train", "validation", "test")

# A token is a maximal run of word characters, or a single punctuation mark.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    """Raised for malformed corpus files or misused corpus operations."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split, separating punctuation into standalone tokens.

    "don't look" -> ["don", "'", "t", "look"]. Deterministic; may return [].
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Sequence:
    """A tokenized, labeled input sequence."""

    tokens: tuple[str, ...]
    label: int
    id: int

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError(f"sequence {self.id}: empty token list")
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise CorpusError(f"sequence {self.id}: bad token {tok!r}")

    def text(self) -> str:
        return " ".join(self.tokens)

    def with_tokens(self, tokens) -> "Sequence":
        """Copy of this sequence with replaced tokens (label/id kept)."""
        return Sequence(tokens=tuple(tokens), label=self.label, id=self.id)


@dataclass(frozen=True)
class Corpus:
    split: str
    sequences: tuple[Sequence, ...]
    num_classes: int

    def __post_init__(self):
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r}")
        seen_ids = set()
        for seq in self.sequences:
            if seq.label < 0 or seq.label >= self.num_classes:
                raise CorpusError(
                    f"sequence {seq.id}: label {seq.label} outside "
                    f"0..{self.num_classes - 1}"
                )
            if seq.id in seen_ids:
                raise CorpusError(f"duplicate sequence id {seq.id}")
            seen_ids.add(seq.id)

    def __len__(self) -> int:
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)


def load_corpus(
    path,
    fmt: str = "tsv",
    split: str = "train",
    num_classes: int | None = None,
) -> Corpus:
    """Load a `label<TAB>text` file, one record per line.

    Labels must be integers 0..C-1; C is inferred as max(label)+1 unless
    given. Blank lines are skipped; any other malformed line raises
    CorpusError with its line number.
    """
    if fmt != "tsv":
        raise CorpusError(f"unknown corpus format {fmt!r}")
    sequences = []
    next_id = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            label_str, sep, text = line.partition("\t")
            if not sep:
                raise CorpusError(f"{path}:{lineno}: missing tab separator")
            try:
                label = int(label_str)
            except ValueError:
                raise CorpusError(
                    f"{path}:{lineno}: non-integer label {label_str!r}"
                ) from None
            if label < 0:
                raise CorpusError(f"{path}:{lineno}: negative label {label}")
            tokens = tokenize(text)
            if not tokens:
                raise CorpusError(f"{path}:{lineno}: empty text after tokenization")
            sequences.append(Sequence(tokens=tuple(tokens), label=label, id=next_id))
            next_id += 1
    if not sequences:
        raise CorpusError(f"{path}: empty corpus")
    top = max(seq.label for seq in sequences)
    if num_classes is None:
        num_classes = top + 1
    elif top >= num_classes:
        raise CorpusError(f"{path}: label {top} outside 0..{num_classes - 1}")
    return Corpus(split=split, sequences=tuple(sequences), num_classes=num_classes)


def load_stopwords(path) -> frozenset[str]:
    """One lowercase word per line; blank lines ignored."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word:
                words.add(word.lower())
    return frozenset(words)


@dataclass(frozen=True)
class FrequencyTable:
    """Word -> raw training count, with log_e lookups defaulting to 0.0."""

    counts: dict[str, int]
    log_freq: dict[str, float] = field(init=False, repr=False)

    def __post_init__(self):
        for word, count in self.counts.items():
            if count < 1:
                raise CorpusError(f"count for {word!r} must be >= 1, got {count}")
        object.__setattr__(
            self,
            "log_freq",
            {word: math.log(count) for word, count in self.counts.items()},
        )

    def phi(self, word: str) -> float:
        """log_e training frequency; exactly 0.0 for out-of-vocabulary words."""
        return self.log_freq.get(word, 0.0)

    def count(self, word: str) -> int:
        return self.counts.get(word, 0)

    def __contains__(self, word: str) -> bool:
        return word in self.counts

    def vocabulary(self) -> frozenset[str]:
        return frozenset(self.counts)


def build_frequency_table(corpus: Corpus) -> FrequencyTable:
    """Token-occurrence counts over the training split."""
    if corpus.split != "train":
        raise CorpusError(
            f"frequency table must be built from the train split, got {corpus.split!r}"
        )
    counts: dict[str, int] = {}
    for seq in corpus:
        for tok in seq.tokens:
            counts[tok] = counts.get(tok, 0) + 1
    return FrequencyTable(counts=counts)


@dataclass(frozen=True)
class FrequencyThreshold:
    delta: float
    percentile_q: int

    def __post_init__(self):
        if self.delta < 0:
            raise CorpusError(f"delta must be nonnegative, got {self.delta}")


def percentile_threshold(
    table: FrequencyTable,
    q: int,
    words=None,
) -> FrequencyThreshold:
    """Nearest-rank q-th percentile of the vocabulary's log frequencies.

    The percentile is taken over distinct vocabulary types, one entry per
    word. `words` optionally restricts the universe (e.g. to words that have
    replacement candidates); by default all stored words count.
    """
    if not 0 <= q <= 100:
        raise CorpusError(f"percentile q must be in 0..100, got {q}")
    if words is None:
        values = sorted(table.log_freq.values())
    else:
        values = sorted(table.phi(w) for w in words if w in table)
    if not values:
        raise CorpusError("empty vocabulary: cannot take a percentile")
    # nearest-rank: smallest value with at least q% of the mass at or below it
    rank = math.ceil(q / 100 * len(values))
    rank = min(max(rank, 1), len(values))
    return FrequencyThreshold(delta=values[rank - 1], percentile_q=q)

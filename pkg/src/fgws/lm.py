"""Interpolated Kneser-Ney trigram language model.

Stands in for a large pretrained LM inside the genetic attack's plausibility
filter: candidate substitutions are scored by the log-perplexity of a short
window around the replacement, lower is more plausible. Trained on the
training split only, so the whole pipeline stays self-contained.

Lower-order distributions use continuation counts derived from the trigram
table, and the unigram level is interpolated with a uniform floor over
V + 1 cells (the extra cell absorbs unknown words), so every query has
nonzero probability and the model is properly normalized over
vocabulary + unknown.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

from .corpus import Corpus

__all__ = ["TrigramLM", "LanguageModelError"]

BOS = "<s>"

DISCOUNT = 0.75


class LanguageModelError(ValueError):
    pass


class TrigramLM:
    def __init__(self, corpus: Corpus, discount: float = DISCOUNT):
        if not 0.0 < discount < 1.0:
            raise LanguageModelError(f"discount must be in (0,1), got {discount}")
        self.discount = discount
        trigrams = Counter()
        for seq in corpus:
            padded = (BOS, BOS) + seq.tokens
            for i in range(2, len(padded)):
                trigrams[padded[i - 2], padded[i - 1], padded[i]] += 1
        if not trigrams:
            raise LanguageModelError("no trigrams in training corpus")

        self._tri = defaultdict(dict)  # (u,v) -> {w: count}
        for (u, v, w), c in trigrams.items():
            self._tri[u, v][w] = c
        self._tri_ctx_total = {ctx: sum(ws.values()) for ctx, ws in self._tri.items()}

        # continuation counts: cont2[v][w] = #{u : c(u,v,w) > 0}
        cont2 = defaultdict(Counter)
        for (u, v, w) in trigrams:
            cont2[v][w] += 1
        self._cont2 = {v: dict(ws) for v, ws in cont2.items()}
        self._cont2_total = {v: sum(ws.values()) for v, ws in self._cont2.items()}

        cont1 = Counter()
        for ws in self._cont2.values():
            for w in ws:
                cont1[w] += 1
        self._cont1 = dict(cont1)
        self._cont1_total = sum(cont1.values())

        self.vocabulary = frozenset(
            tok for seq in corpus for tok in seq.tokens
        )
        # +1 cell for unknown words
        self._uniform = 1.0 / (len(self.vocabulary) + 1)

    def _p_unigram(self, w: str) -> float:
        D, total = self.discount, self._cont1_total
        c = self._cont1.get(w, 0)
        lam = D * len(self._cont1) / total
        return max(c - D, 0.0) / total + lam * self._uniform

    def _p_bigram(self, w: str, v: str) -> float:
        ws = self._cont2.get(v)
        if not ws:
            return self._p_unigram(w)
        D, total = self.discount, self._cont2_total[v]
        lam = D * len(ws) / total
        return max(ws.get(w, 0) - D, 0.0) / total + lam * self._p_unigram(w)

    def prob(self, w: str, context: tuple[str, str]) -> float:
        """P(w | u, v) for a two-word context."""
        u, v = context
        ws = self._tri.get((u, v))
        if not ws:
            return self._p_bigram(w, v)
        D, total = self.discount, self._tri_ctx_total[u, v]
        lam = D * len(ws) / total
        return max(ws.get(w, 0) - D, 0.0) / total + lam * self._p_bigram(w, v)

    def log_perplexity(self, tokens) -> float:
        """Mean negative log probability of a standalone token window."""
        tokens = tuple(tokens)
        if not tokens:
            raise LanguageModelError("cannot score an empty window")
        padded = (BOS, BOS) + tokens
        total = 0.0
        for i in range(2, len(padded)):
            total -= math.log(self.prob(padded[i], (padded[i - 2], padded[i - 1])))
        return total / len(tokens)

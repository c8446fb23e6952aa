"""Word-substitution attacks against a probabilistic text classifier.

Four attacks share one result shape: Random and Prioritized greedily walk
random positions, PWWS ranks positions by saliency-weighted confidence drop,
and Genetic runs a population search over embedding neighbors filtered by a
trigram language model. All are black-box: they only ever call
model.predict_proba, and every call is counted.

Substitution budget: non-PWWS attacks replace at most floor(fraction * n)
words, with a minimum allowance of one so very short inputs stay attackable.
PWWS is exempt by design. An optional equifrequent band restricts candidates
to |phi(new) - phi(old)| <= beta, which is the constraint studied as a
countermeasure.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import softmax

from .classifier import UNKNOWN_TOKEN
from .corpus import Corpus, FrequencyTable, Sequence
from .lexicon import EmbeddingSpace
from .lm import TrigramLM

__all__ = [
    "ATTACK_TAGS",
    "AttackConfig",
    "AttackResult",
    "AttackCampaign",
    "AttackResources",
    "AttackError",
    "replacement_cap",
    "equifrequent_filter",
    "word_saliency",
    "attack_random",
    "attack_prioritized",
    "attack_pwws",
    "attack_genetic",
    "attack_sequence",
    "run_campaign",
    "draw_subset",
]

ATTACK_TAGS = ("random", "prioritized", "genetic", "pwws")


class AttackError(ValueError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    """Shared knobs for all four attacks; genetic-only fields are ignored
    by the greedy attacks."""

    attack: str
    max_replace_fraction: float = 0.20
    stopwords: frozenset = frozenset()
    seed: int = 0
    skip_stopwords: bool = True
    population_size: int = 60
    num_generations: int = 20
    embedding_distance_bound: float = 0.5
    lm_window: int = 5
    lm_top_k: int = 4
    equifrequent_band: float | None = None

    def __post_init__(self):
        if self.attack not in ATTACK_TAGS:
            raise AttackError(f"unknown attack {self.attack!r}; choose from {ATTACK_TAGS}")
        if not 0.0 < self.max_replace_fraction <= 1.0:
            raise AttackError("max_replace_fraction must be in (0, 1]")
        if self.population_size < 2:
            raise AttackError("population_size must be at least 2")
        if self.num_generations < 1:
            raise AttackError("num_generations must be at least 1")
        if self.lm_window < 1 or self.lm_top_k < 1:
            raise AttackError("lm_window and lm_top_k must be at least 1")
        if self.equifrequent_band is not None and self.equifrequent_band < 0:
            raise AttackError("equifrequent_band must be nonnegative")


@dataclass(frozen=True)
class AttackResult:
    original: Sequence
    perturbed: Sequence
    substitutions: tuple  # (position, replaced word, substituted word)
    success: bool
    confidence_before: float
    confidence_after: float
    queries: int


@dataclass(frozen=True)
class AttackCampaign:
    attack: str
    results: tuple  # AttackResult per attacked (correctly classified) input
    subset_size: int
    num_attacked: int
    num_successful: int
    clean_accuracy: float
    after_attack_accuracy: float
    total_queries: int


@dataclass(frozen=True)
class AttackResources:
    """Immutable bundle of everything an attack might consult.

    candidates: synonym source for random/prioritized/pwws (anything with a
    candidates(word) or synonyms(word) method); space + lm feed the genetic
    attack; table is only needed when the equifrequent band is active.
    """

    candidates: object = None
    space: EmbeddingSpace | None = None
    lm: TrigramLM | None = None
    table: FrequencyTable | None = None


class _CountingModel:
    """Counts predict_proba calls so query budgets are reported honestly."""

    def __init__(self, model):
        self._model = model
        self.num_classes = model.num_classes
        self.queries = 0

    def predict_proba(self, tokens):
        self.queries += 1
        return self._model.predict_proba(tokens)


def replacement_cap(n: int, fraction: float) -> int:
    """floor(fraction * n), but never below one replacement."""
    return max(1, int(fraction * n))


def equifrequent_filter(candidates, source_word, table: FrequencyTable, beta: float):
    """Keep candidates whose log frequency is within beta of the source's."""
    if beta < 0:
        raise AttackError("beta must be nonnegative")
    base = table.phi(source_word)
    return tuple(w for w in candidates if abs(table.phi(w) - base) <= beta)


def _sequence_rng(config: AttackConfig, X: Sequence):
    # one stream per (campaign seed, sequence id): parallel runs stay replayable
    return np.random.default_rng([config.seed, X.id])


def _pool(source, word):
    if hasattr(source, "candidates"):
        return source.candidates(word)
    return source.synonyms(word)


def _filtered_candidates(word, source, config: AttackConfig, table):
    cands = _pool(source, word)
    if config.equifrequent_band is not None:
        if table is None:
            raise AttackError("equifrequent band requires a frequency table")
        cands = equifrequent_filter(cands, word, table, config.equifrequent_band)
    return tuple(cands)


def _skippable(token, config: AttackConfig) -> bool:
    return config.skip_stopwords and token in config.stopwords


def _check_correct(probs, y):
    if int(np.argmax(probs)) != y:
        raise AttackError("attacks expect an input the model classifies correctly")


def _finish(X: Sequence, tokens, subs, y, before, after, queries) -> AttackResult:
    return AttackResult(
        original=X,
        perturbed=X.with_tokens(tuple(tokens)),
        substitutions=tuple(subs),
        success=int(np.argmax(after)) != y,
        confidence_before=float(before[y]),
        confidence_after=float(after[y]),
        queries=queries,
    )


def attack_random(model, X: Sequence, y: int, source, config: AttackConfig,
                  rng=None, table: FrequencyTable | None = None) -> AttackResult:
    """Substitute random synonyms at random positions until the label flips,
    the cap is hit, or positions run out."""
    counter = _CountingModel(model)
    rng = _sequence_rng(config, X) if rng is None else rng
    before = counter.predict_proba(X.tokens)
    _check_correct(before, y)
    tokens = list(X.tokens)
    cap = replacement_cap(len(tokens), config.max_replace_fraction)
    untried = [
        i for i, tok in enumerate(tokens)
        if not _skippable(tok, config) and _filtered_candidates(tok, source, config, table)
    ]
    subs, cur = [], before
    while untried and len(subs) < cap:
        i = untried.pop(int(rng.integers(len(untried))))
        cands = _filtered_candidates(tokens[i], source, config, table)
        new = cands[int(rng.integers(len(cands)))]
        subs.append((i, tokens[i], new))
        tokens[i] = new
        cur = counter.predict_proba(tokens)
        if int(np.argmax(cur)) != y:
            break
    return _finish(X, tokens, subs, y, before, cur, counter.queries)


def attack_prioritized(model, X: Sequence, y: int, source, config: AttackConfig,
                       rng=None, table: FrequencyTable | None = None) -> AttackResult:
    """Random position order, but each position takes the synonym with the
    largest confidence drop, and only if the drop is positive."""
    counter = _CountingModel(model)
    rng = _sequence_rng(config, X) if rng is None else rng
    before = counter.predict_proba(X.tokens)
    _check_correct(before, y)
    tokens = list(X.tokens)
    cap = replacement_cap(len(tokens), config.max_replace_fraction)
    untried = [
        i for i, tok in enumerate(tokens)
        if not _skippable(tok, config) and _filtered_candidates(tok, source, config, table)
    ]
    subs, cur = [], before
    while untried and len(subs) < cap:
        i = untried.pop(int(rng.integers(len(untried))))
        best = None  # (drop, candidate, probs)
        for c in _filtered_candidates(tokens[i], source, config, table):
            probs = counter.predict_proba(tokens[:i] + [c] + tokens[i + 1:])
            drop = float(cur[y] - probs[y])
            if best is None or drop > best[0]:
                best = (drop, c, probs)
        if best is None or best[0] <= 0:
            continue
        subs.append((i, tokens[i], best[1]))
        tokens[i] = best[1]
        cur = best[2]
        if int(np.argmax(cur)) != y:
            break
    return _finish(X, tokens, subs, y, before, cur, counter.queries)


def word_saliency(model, X: Sequence, y: int, base_probs=None) -> np.ndarray:
    """S_i = f(X)_y - f(X with position i replaced by the unknown token)_y."""
    tokens = X.tokens
    base = model.predict_proba(tokens) if base_probs is None else base_probs
    sal = np.empty(len(tokens), dtype=np.float64)
    for i in range(len(tokens)):
        probed = tokens[:i] + (UNKNOWN_TOKEN,) + tokens[i + 1:]
        sal[i] = base[y] - model.predict_proba(probed)[y]
    return sal


def attack_pwws(model, X: Sequence, y: int, source, config: AttackConfig,
                rng=None, table: FrequencyTable | None = None) -> AttackResult:
    """Saliency-weighted greedy substitution.

    Per position the best synonym is the one with the largest confidence
    drop on the original input; positions are then applied in descending
    softmax(saliency) * drop order until the label flips. No replacement
    cap: the attack is deterministic, so rng is accepted only for interface
    symmetry.
    """
    counter = _CountingModel(model)
    before = counter.predict_proba(X.tokens)
    _check_correct(before, y)
    tokens = list(X.tokens)
    sal = word_saliency(counter, X, y, base_probs=before)
    weights = softmax(sal)
    plans = []  # (score, position, synonym)
    for i, tok in enumerate(tokens):
        if _skippable(tok, config):
            continue
        best = None
        for c in _filtered_candidates(tok, source, config, table):
            probs = counter.predict_proba(X.tokens[:i] + (c,) + X.tokens[i + 1:])
            drop = float(before[y] - probs[y])
            if best is None or drop > best[0]:
                best = (drop, c)
        if best is not None and best[0] > 0:
            plans.append((float(weights[i]) * best[0], i, best[1]))
    plans.sort(key=lambda p: (-p[0], p[1]))
    subs, cur = [], before
    for _, i, c in plans:
        subs.append((i, tokens[i], c))
        tokens[i] = c
        cur = counter.predict_proba(tokens)
        if int(np.argmax(cur)) != y:
            break
    return _finish(X, tokens, subs, y, before, cur, counter.queries)


class _Member(NamedTuple):
    tokens: tuple
    probs: object  # probability vector; None until evaluated


def _embedding_candidates(space: EmbeddingSpace, word: str, bound: float):
    if word not in space:
        return ()
    dists = space.distances_from(word)
    return tuple(
        w for w, d in zip(space.words(), dists) if d <= bound and w != word
    )


def attack_genetic(model, X: Sequence, y: int, space: EmbeddingSpace,
                   lm: TrigramLM, config: AttackConfig, rng=None,
                   table: FrequencyTable | None = None) -> AttackResult:
    """Population search over embedding neighbors.

    Perturb picks a random eligible position, takes neighbors within the
    distance bound, keeps the lm_top_k most plausible under the trigram LM
    scored on a +/- lm_window window, and applies the one maximizing the
    target-class probability. Generations combine elitism with
    fitness-proportional crossover; children are repaired to the cap before
    mutation. Inputs shorter than two tokens are returned untouched; there
    is no meaningful window to score.
    """
    counter = _CountingModel(model)
    rng = _sequence_rng(config, X) if rng is None else rng
    before = counter.predict_proba(X.tokens)
    _check_correct(before, y)
    n = len(X.tokens)
    if n < 2:
        return _finish(X, list(X.tokens), [], y, before, before, counter.queries)
    # untargeted flip steered toward the strongest competitor class
    order = np.argsort(before)
    target = int(order[-1]) if int(order[-1]) != y else int(order[-2])
    cap = replacement_cap(n, config.max_replace_fraction)

    def perturb(tokens, probs):
        substituted = {i for i in range(n) if tokens[i] != X.tokens[i]}
        pool = [
            i for i, tok in enumerate(tokens)
            if not _skippable(tok, config)
            and tok in space
            and (len(substituted) < cap or i in substituted)
        ]
        if not pool:
            return _Member(tokens, probs)
        i = pool[int(rng.integers(len(pool)))]
        cands = _embedding_candidates(space, tokens[i], config.embedding_distance_bound)
        if config.equifrequent_band is not None:
            if table is None:
                raise AttackError("equifrequent band requires a frequency table")
            cands = equifrequent_filter(cands, X.tokens[i], table, config.equifrequent_band)
        if not cands:
            return _Member(tokens, probs)
        lo, hi = max(0, i - config.lm_window), min(n, i + config.lm_window + 1)

        def window_logperp(c):
            return lm.log_perplexity(tokens[lo:i] + (c,) + tokens[i + 1:hi])

        ranked = sorted(cands, key=window_logperp)[:config.lm_top_k]
        best = None
        for c in ranked:
            cand_tokens = tokens[:i] + (c,) + tokens[i + 1:]
            p = counter.predict_proba(cand_tokens)
            if best is None or p[target] > best.probs[target]:
                best = _Member(cand_tokens, p)
        return best

    def make(tokens, probs=None):
        m = perturb(tokens, probs)
        if m.probs is None:
            return _Member(m.tokens, counter.predict_proba(m.tokens))
        return m

    members = [make(X.tokens, before) for _ in range(config.population_size)]
    best = members[0]
    for gen in range(config.num_generations):
        fitness = np.array([float(m.probs[target]) for m in members])
        best = members[int(np.argmax(fitness))]
        if int(np.argmax(best.probs)) != y:
            break
        if gen == config.num_generations - 1:
            break
        total = float(fitness.sum())
        sel = fitness / total if total > 0 else np.full(len(members), 1.0 / len(members))
        nxt = [best]
        while len(nxt) < config.population_size:
            pa, pb = rng.choice(len(members), size=2, p=sel)
            ta, tb = members[pa].tokens, members[pb].tokens
            mask = rng.integers(0, 2, size=n)
            child = tuple(ta[j] if mask[j] == 0 else tb[j] for j in range(n))
            child = _repair(child, X.tokens, cap, rng)
            nxt.append(make(child))
        members = nxt
    subs = [
        (i, X.tokens[i], best.tokens[i]) for i in range(n)
        if best.tokens[i] != X.tokens[i]
    ]
    return _finish(X, list(best.tokens), subs, y, before, best.probs, counter.queries)


def _repair(tokens, original, cap, rng):
    """Revert random substituted positions until the child is within cap."""
    subs = [i for i in range(len(tokens)) if tokens[i] != original[i]]
    if len(subs) <= cap:
        return tokens
    tokens = list(tokens)
    for j in rng.choice(len(subs), size=len(subs) - cap, replace=False):
        tokens[subs[j]] = original[subs[j]]
    return tuple(tokens)


def attack_sequence(model, seq: Sequence, resources: AttackResources,
                    config: AttackConfig, rng=None) -> AttackResult:
    """Dispatch one attack on one correctly classified sequence."""
    if config.attack == "genetic":
        if resources.space is None or resources.lm is None:
            raise AttackError("genetic attack needs an embedding space and a language model")
        return attack_genetic(model, seq, seq.label, resources.space, resources.lm,
                              config, rng=rng, table=resources.table)
    if resources.candidates is None:
        raise AttackError(f"{config.attack} attack needs a synonym source")
    fn = {"random": attack_random, "prioritized": attack_prioritized,
          "pwws": attack_pwws}[config.attack]
    return fn(model, seq, seq.label, resources.candidates, config,
              rng=rng, table=resources.table)


def run_campaign(model, subset, resources: AttackResources, config: AttackConfig,
                 threads: int | None = None) -> AttackCampaign:
    """Attack every correctly classified sequence in the subset.

    Originally misclassified inputs are never attacked; they count as wrong
    in after_attack_accuracy. Per-sequence RNG streams keyed on
    (config.seed, sequence id) make the outcome independent of thread count.
    """
    sequences = list(subset)
    if not sequences:
        raise AttackError("empty attack subset")
    attacked = [
        seq for seq in sequences
        if int(np.argmax(model.predict_proba(seq.tokens))) == seq.label
    ]

    def one(seq):
        return attack_sequence(model, seq, resources, config,
                               rng=_sequence_rng(config, seq))

    if threads is not None and threads <= 1:
        results = [one(seq) for seq in attacked]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, attacked))
    survived = sum(1 for r in results if not r.success)
    return AttackCampaign(
        attack=config.attack,
        results=tuple(results),
        subset_size=len(sequences),
        num_attacked=len(attacked),
        num_successful=sum(1 for r in results if r.success),
        clean_accuracy=len(attacked) / len(sequences),
        after_attack_accuracy=survived / len(sequences),
        total_queries=sum(r.queries for r in results),
    )


def draw_subset(corpus: Corpus, size: int, rng) -> list:
    """Seeded subset in corpus order; the whole corpus if size covers it."""
    if size >= len(corpus):
        return list(corpus.sequences)
    idx = sorted(rng.choice(len(corpus), size=size, replace=False).tolist())
    return [corpus.sequences[i] for i in idx]

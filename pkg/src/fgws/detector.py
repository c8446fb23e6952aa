"""Frequency-guided detection of word-substitution adversarial examples.

The transform replaces every word with training log-frequency below delta by
the most frequent word among its semantic candidates, when that candidate is
strictly more frequent. An input is flagged as adversarial when the model's
confidence on its own predicted class drops by more than gamma after the
transform. The naive baseline replaces OOV words with random in-vocabulary
candidates instead.

Threshold tuning follows the validation procedure: delta comes from a
percentile grid over training word frequencies, scored by detection F1
against adversarial examples crafted with the Prioritized attack; gamma is
the smallest value keeping the clean false-positive rate within budget.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, AttackError, run_campaign, AttackResources
from .corpus import Corpus, FrequencyTable, FrequencyThreshold, Sequence, percentile_threshold

__all__ = [
    "DetectorConfig",
    "DetectionResult",
    "DetectorError",
    "DeltaTuning",
    "eligible_positions",
    "fgws_transform",
    "fgws_detect",
    "nws_transform",
    "nws_detect",
    "detect_sequences",
    "gamma_from_scores",
    "tune_gamma",
    "tune_delta",
    "idempotence_guaranteed",
]

DEFAULT_Q_GRID = tuple(range(0, 101, 10))


class DetectorError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    delta: FrequencyThreshold
    gamma: float
    neighbor_count: int = 0  # K embedding neighbors merged into S(x)
    fpr_budget: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise DetectorError("gamma must be in [0, 1]")
        if not 0.0 < self.fpr_budget < 1.0:
            raise DetectorError("fpr_budget must be in (0, 1)")
        if self.neighbor_count < 0:
            raise DetectorError("neighbor_count must be nonnegative")


@dataclass(frozen=True)
class DetectionResult:
    input: Sequence
    transformed: Sequence
    eligible_positions: tuple
    substitutions: tuple  # (position, replaced word, substituted word)
    predicted_label: int  # label the model assigned to the raw input
    score: float  # confidence drop on that label after the transform
    flagged: bool
    restored_label: int  # label the model assigns to the transformed input


def _cut(delta) -> float:
    return delta.delta if isinstance(delta, FrequencyThreshold) else float(delta)


def eligible_positions(X: Sequence, table: FrequencyTable, delta) -> tuple:
    cut = _cut(delta)
    return tuple(i for i, tok in enumerate(X.tokens) if table.phi(tok) < cut)


def fgws_transform(X: Sequence, table: FrequencyTable, source, delta):
    """Replace each low-frequency word by its most frequent candidate.

    Three-step rule: a position is eligible when phi(token) < delta; the
    candidate is argmax phi over the word's candidate set (candidates come
    lexicographically sorted, so ties pick the smallest word); the swap
    happens only when it strictly raises phi. Returns the transformed
    sequence and the applied substitutions.
    """
    cut = _cut(delta)
    tokens = list(X.tokens)
    subs = []
    for i, tok in enumerate(tokens):
        phi = table.phi(tok)
        if phi >= cut:
            continue
        best = None
        for w in source.candidates(tok):
            p = table.phi(w)
            if best is None or p > best[1]:
                best = (w, p)
        if best is not None and best[1] > phi:
            subs.append((i, tok, best[0]))
            tokens[i] = best[0]
    return X.with_tokens(tuple(tokens)), tuple(subs)


def _detection(model, X, transformed, subs, eligible, gamma) -> DetectionResult:
    probs = model.predict_proba(X.tokens)
    y = int(np.argmax(probs))
    tprobs = model.predict_proba(transformed.tokens)
    score = float(probs[y] - tprobs[y])
    return DetectionResult(
        input=X,
        transformed=transformed,
        eligible_positions=eligible,
        substitutions=subs,
        predicted_label=y,
        score=score,
        flagged=score > gamma,
        restored_label=int(np.argmax(tprobs)),
    )


def fgws_detect(model, X: Sequence, config: DetectorConfig,
                table: FrequencyTable, source) -> DetectionResult:
    transformed, subs = fgws_transform(X, table, source, config.delta)
    eligible = eligible_positions(X, table, config.delta)
    return _detection(model, X, transformed, subs, eligible, config.gamma)


def nws_transform(X: Sequence, vocabulary, source, rng):
    """Replace every OOV word with a random in-vocabulary candidate.

    OOV words without in-vocabulary candidates stay, as do all known words.
    Returns the transformed sequence and the applied substitutions.
    """
    tokens = list(X.tokens)
    subs = []
    for i, tok in enumerate(tokens):
        if tok in vocabulary:
            continue
        cands = [w for w in source.candidates(tok) if w in vocabulary]
        if not cands:
            continue
        new = cands[int(rng.integers(len(cands)))]
        subs.append((i, tok, new))
        tokens[i] = new
    return X.with_tokens(tuple(tokens)), tuple(subs)


def nws_detect(model, X: Sequence, config: DetectorConfig, vocabulary,
               source, rng) -> DetectionResult:
    transformed, subs = nws_transform(X, vocabulary, source, rng)
    oov = tuple(i for i, tok in enumerate(X.tokens) if tok not in vocabulary)
    return _detection(model, X, transformed, subs, oov, config.gamma)


def detect_sequences(model, sequences, config: DetectorConfig,
                     table: FrequencyTable, source, method: str = "fgws",
                     seed: int = 0, threads: int | None = None) -> list:
    """Run one detector over many sequences, thread-count independent.

    The NWS baseline draws per-sequence RNG streams from (seed, id); FGWS
    is fully deterministic.
    """
    if method not in ("fgws", "nws"):
        raise DetectorError(f"unknown detection method {method!r}")
    vocabulary = table.vocabulary() if method == "nws" else None

    def one(seq):
        if method == "fgws":
            return fgws_detect(model, seq, config, table, source)
        rng = np.random.default_rng([seed, seq.id])
        return nws_detect(model, seq, config, vocabulary, source, rng)

    sequences = list(sequences)
    if threads is not None and threads <= 1:
        return [one(seq) for seq in sequences]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, sequences))


def gamma_from_scores(scores, fpr_budget: float, clamp: bool = True) -> float:
    """Smallest gamma with fraction(scores strictly above) <= budget.

    With m = floor(budget * n) and scores sorted descending, that is the
    (m+1)-th score. Detection confidence drops live in [0, 1], so the value
    is clamped there by default; clamping can only lower the above-gamma
    count, so the budget still holds.
    """
    scores = sorted((float(s) for s in scores), reverse=True)
    if not scores:
        raise DetectorError("no scores to tune gamma on")
    m = int(fpr_budget * len(scores))
    if m >= len(scores):
        # degenerate budget covering everything: sit just below the minimum
        gamma = scores[-1] - 1e-12
    else:
        gamma = scores[m]
    if clamp:
        gamma = min(max(gamma, 0.0), 1.0)
    return float(gamma)


def tune_gamma(model, clean_sequences, delta, table: FrequencyTable, source,
               fpr_budget: float = 0.10) -> float:
    """Pick gamma so at most fpr_budget of clean sequences get flagged."""
    if not 0.0 < fpr_budget < 1.0:
        raise DetectorError("fpr_budget must be in (0, 1)")
    scores = []
    for seq in clean_sequences:
        transformed, subs = fgws_transform(seq, table, source, delta)
        probs = model.predict_proba(seq.tokens)
        y = int(np.argmax(probs))
        scores.append(float(probs[y] - model.predict_proba(transformed.tokens)[y]))
    return gamma_from_scores(scores, fpr_budget)


@dataclass(frozen=True)
class DeltaTuning:
    q_grid: tuple
    per_q: tuple  # dicts: q, delta, gamma, f1, tpr, fpr, precision
    chosen_q: int
    chosen_delta: float
    chosen_gamma: float


def _plain_f1(adv_flags, clean_flags):
    tp = sum(adv_flags)
    fp = sum(clean_flags)
    tpr = tp / len(adv_flags)
    fpr = fp / len(clean_flags) if clean_flags else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    f1 = 2 * precision * tpr / (precision + tpr) if precision + tpr else 0.0
    return f1, tpr, fpr, precision


def tune_delta(model, validation: Corpus, source, table: FrequencyTable,
               attack_config: AttackConfig, q_grid=DEFAULT_Q_GRID,
               fpr_budget: float = 0.10, percentile_words=None,
               fixed_gamma: float | None = None,
               threads: int | None = None) -> DeltaTuning:
    """Grid-search the frequency percentile q on validation data.

    Adversarial examples come from one Prioritized run over every correctly
    classified validation sequence. For each q, delta is the q-th percentile
    of training log frequencies, gamma is re-tuned to the FPR budget (or
    held at fixed_gamma), and detection F1 is scored against (successful
    adversarial, all clean) validation sets. Ties prefer smaller q.
    """
    campaign = run_campaign(model, validation.sequences, AttackResources(candidates=source),
                            attack_config, threads=threads)
    adversarial = [r.perturbed for r in campaign.results if r.success]
    if not adversarial:
        raise DetectorError(
            "the Prioritized attack produced no successful validation examples; "
            "tune against a weaker model or a larger validation set"
        )
    clean = list(validation.sequences)

    def evaluate(q):
        threshold = percentile_threshold(table, q, words=percentile_words)
        gamma = (
            tune_gamma(model, clean, threshold, table, source, fpr_budget)
            if fixed_gamma is None else fixed_gamma
        )
        config = DetectorConfig(delta=threshold, gamma=gamma, fpr_budget=fpr_budget)
        adv_flags = [
            fgws_detect(model, seq, config, table, source).flagged
            for seq in adversarial
        ]
        clean_flags = [
            fgws_detect(model, seq, config, table, source).flagged
            for seq in clean
        ]
        f1, tpr, fpr, precision = _plain_f1(adv_flags, clean_flags)
        return {
            "q": int(q),
            "delta": threshold.delta,
            "gamma": gamma,
            "f1": f1,
            "tpr": tpr,
            "fpr": fpr,
            "precision": precision,
        }

    q_grid = tuple(sorted(int(q) for q in q_grid))
    if not q_grid:
        raise DetectorError("empty percentile grid")
    if threads is not None and threads <= 1:
        rows = [evaluate(q) for q in q_grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(evaluate, q_grid))
    best = None
    for row in rows:  # ascending grid order, strict > keeps the smaller q on ties
        if best is None or row["f1"] > best["f1"]:
            best = row
    return DeltaTuning(
        q_grid=q_grid,
        per_q=tuple(rows),
        chosen_q=best["q"],
        chosen_delta=best["delta"],
        chosen_gamma=best["gamma"],
    )


def idempotence_guaranteed(substitutions, table: FrequencyTable, delta) -> bool:
    """True when every introduced word clears delta, so re-running the
    transform would change nothing."""
    cut = _cut(delta)
    return all(table.phi(new) >= cut for _, _, new in substitutions)

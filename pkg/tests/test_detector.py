"""Detector unit tests.

The transform is checked against a brute-force per-position oracle over
randomized tables, candidate maps and thresholds, including thresholds that
sit exactly on a word's log frequency (eligibility is strict). Threshold
tuning is replayed by an independent grid scan.
"""

import math

import numpy as np
import pytest

from fgws import (
    AttackConfig, CandidateSource, DetectorConfig, DetectorError,
    FrequencyTable, FrequencyThreshold, Sequence, detect_sequences,
    fgws_detect, fgws_transform, gamma_from_scores, idempotence_guaranteed,
    nws_transform, percentile_threshold, tune_delta, tune_gamma,
)
from fgws.detector import eligible_positions

from oracles import fgws_transform_oracle


class WeightModel:
    """P(class 1) = sigmoid(2 * sum of token weights); OOV weighs 0."""

    num_classes = 2

    def __init__(self, weights):
        self.weights = dict(weights)

    def predict_proba(self, tokens):
        s = sum(self.weights.get(t, 0.0) for t in tokens)
        z = np.array([-s, s], dtype=np.float64)
        e = np.exp(z - z.max())
        return e / e.sum()


class DictSource:
    """Candidate stub. Tuples are stored sorted, matching the real source."""

    def __init__(self, mapping):
        self._map = {k: tuple(sorted(v)) for k, v in mapping.items()}

    def candidates(self, word):
        return self._map.get(word, ())


def seq(tokens, label=0, id=0):
    return Sequence(tuple(tokens), label, id)


# ---------------------------------------------------------------- transform


def test_fgws_transform_hand_case():
    table = FrequencyTable(counts={"movie": 100, "flick": 3, "film": 40, "fun": 7})
    source = DictSource({"flick": ("movie", "film"), "fun": ("joy",)})
    x = seq(["flick", "fun", "movie"])
    out, subs = fgws_transform(x, table, source, delta=math.log(10))
    # flick -> movie (most frequent candidate); fun keeps: joy is OOV (phi 0)
    assert out.tokens == ("movie", "fun", "movie")
    assert subs == ((0, "flick", "movie"),)
    assert out.id == x.id and out.label == x.label


def test_fgws_transform_strict_eligibility_boundary():
    table = FrequencyTable(counts={"a": 10, "b": 100})
    source = DictSource({"a": ("b",)})
    x = seq(["a"])
    # delta exactly at phi("a"): not eligible
    _, subs = fgws_transform(x, table, source, delta=math.log(10))
    assert subs == ()
    _, subs = fgws_transform(x, table, source, delta=math.log(10) + 1e-9)
    assert subs == ((0, "a", "b"),)


def test_fgws_transform_requires_strict_improvement():
    table = FrequencyTable(counts={"a": 10, "b": 10, "c": 9})
    source = DictSource({"a": ("b", "c")})
    # best candidate ties phi("a"); no swap
    _, subs = fgws_transform(seq(["a"]), table, source, delta=5.0)
    assert subs == ()


def test_fgws_transform_tie_prefers_lexicographic_min():
    table = FrequencyTable(counts={"zz": 50, "aa": 50, "mid": 2})
    source = DictSource({"mid": ("zz", "aa")})
    _, subs = fgws_transform(seq(["mid"]), table, source, delta=3.0)
    assert subs == ((0, "mid", "aa"),)


def test_fgws_transform_accepts_threshold_object():
    table = FrequencyTable(counts={"a": 2, "b": 90})
    source = DictSource({"a": ("b",)})
    thr = FrequencyThreshold(delta=1.0, percentile_q=50)
    out, subs = fgws_transform(seq(["a"]), table, source, thr)
    assert out.tokens == ("b",)


def test_fgws_transform_matches_oracle_randomized():
    rng = np.random.default_rng(20240)
    vocab = [f"w{i:02d}" for i in range(30)]
    oov = [f"x{i:02d}" for i in range(8)]
    universe = vocab + oov
    for trial in range(1000):
        counts = {w: int(rng.integers(1, 401)) for w in vocab}
        table = FrequencyTable(counts=counts)
        mapping = {}
        for w in universe:
            if rng.random() < 0.8:
                k = int(rng.integers(1, 6))
                mapping[w] = rng.choice(universe, size=k, replace=False).tolist()
        source = DictSource(mapping)
        tokens = rng.choice(universe, size=int(rng.integers(1, 15))).tolist()
        # thresholds include exact phi values to exercise strict comparisons
        if trial % 3 == 0:
            delta = float(table.phi(str(rng.choice(universe))))
        else:
            delta = float(rng.uniform(0.0, math.log(401)))
        got_seq, got_subs = fgws_transform(seq(tokens, id=trial), table, source, delta)
        want_tokens, want_subs = fgws_transform_oracle(
            tokens, table.phi, source.candidates, delta)
        assert got_seq.tokens == want_tokens, (trial, tokens, delta)
        assert got_subs == want_subs, (trial, tokens, delta)


def test_eligible_positions():
    table = FrequencyTable(counts={"hi": 100, "lo": 2})
    x = seq(["hi", "lo", "unseen", "hi"])
    assert eligible_positions(x, table, math.log(50)) == (1, 2)
    assert eligible_positions(x, table, 0.0) == ()


# ---------------------------------------------------------------- detection


FIG_TABLE = FrequencyTable(counts={
    "a": 400, "and": 380, "sweet": 320, "smart": 295, "comedy": 210,
    "romantic": 160, "playful": 47, "odoriferous": 6,
})
FIG_SOURCE = DictSource({
    "impertinent": ("smart",),
    "odoriferous": ("sweet",),
    "smart": ("impertinent",),
    "sweet": ("odoriferous",),
})
FIG_MODEL = WeightModel({"smart": 2.0, "sweet": 2.0,
                         "impertinent": -1.5, "odoriferous": -1.5})


def test_fgws_detect_restores_attacked_review():
    # adversarially rewritten positive review: rare/OOV words flipped it
    adv = seq("a impertinent odoriferous and playful romantic comedy".split(),
              label=1, id=3)
    cfg = DetectorConfig(delta=math.log(40), gamma=0.5)
    det = fgws_detect(FIG_MODEL, adv, cfg, FIG_TABLE, FIG_SOURCE)
    assert det.substitutions == ((1, "impertinent", "smart"),
                                 (2, "odoriferous", "sweet"))
    assert det.predicted_label == 0
    assert det.restored_label == 1
    assert det.flagged and det.score > 0.5
    # clean original slips through the same detector
    clean = seq("a smart sweet and playful romantic comedy".split(), label=1, id=4)
    det = fgws_detect(FIG_MODEL, clean, cfg, FIG_TABLE, FIG_SOURCE)
    assert not det.flagged
    assert det.substitutions == ()
    assert det.restored_label == det.predicted_label == 1


def test_fgws_detect_score_and_flag_strictness():
    table = FrequencyTable(counts={"good": 50, "bd": 2})
    source = DictSource({"bd": ("good",)})
    model = WeightModel({"good": 0.7, "bd": -0.7})
    x = seq(["bd"], id=9)
    probs = model.predict_proba(["bd"])
    tprobs = model.predict_proba(["good"])
    expected = float(probs[0] - tprobs[0])
    cfg = DetectorConfig(delta=1.0, gamma=0.0)
    det = fgws_detect(model, x, cfg, table, source)
    assert det.score == pytest.approx(expected, abs=1e-15)
    # gamma exactly at the score: strictly-greater rule says clean
    on_edge = DetectorConfig(delta=1.0, gamma=det.score)
    assert not fgws_detect(model, x, on_edge, table, source).flagged
    below = DetectorConfig(delta=1.0, gamma=det.score - 1e-9)
    assert fgws_detect(model, x, below, table, source).flagged


def test_fgws_detect_score_can_be_negative():
    # transform raising confidence on the predicted class yields score < 0
    table = FrequencyTable(counts={"great": 90, "fine": 2})
    source = DictSource({"fine": ("great",)})
    model = WeightModel({"great": 1.5, "fine": 0.3})
    det = fgws_detect(model, seq(["fine"], id=1), DetectorConfig(delta=1.0, gamma=0.0),
                      table, source)
    assert det.score < 0.0
    assert not det.flagged


# ---------------------------------------------------------------- naive baseline


def test_nws_transform_replaces_only_oov():
    table = FrequencyTable(counts={"good": 5, "bad": 5, "ok": 5})
    source = DictSource({
        "unseen": ("good", "zzz"),   # zzz itself OOV: never picked
        "bad": ("good",),            # in vocabulary: untouched
        "ghost": ("phantom",),       # no in-vocab candidates: untouched
    })
    x = seq(["unseen", "bad", "ghost", "ok"], id=2)
    rng = np.random.default_rng([0, 2])
    out, subs = nws_transform(x, table.vocabulary(), source, rng)
    assert subs == ((0, "unseen", "good"),)
    assert out.tokens == ("good", "bad", "ghost", "ok")


def test_nws_transform_draws_within_candidates_deterministically():
    vocab = frozenset({"a", "b", "c"})
    source = DictSource({"oov": ("a", "b", "c")})
    x = seq(["oov", "oov", "oov"], id=5)
    draws = nws_transform(x, vocab, source, np.random.default_rng([7, 5]))[0].tokens
    again = nws_transform(x, vocab, source, np.random.default_rng([7, 5]))[0].tokens
    assert draws == again
    assert all(t in vocab for t in draws)


def test_detect_sequences_nws_streams_keyed_by_sequence_id():
    table = FrequencyTable(counts={"a": 3, "b": 3, "c": 3})
    source = DictSource({"oov1": ("a", "b", "c"), "oov2": ("a", "b", "c")})
    model = WeightModel({"a": 0.5, "b": -0.5})
    s1 = seq(["oov1", "oov2", "oov1"], id=11)
    s2 = seq(["oov2", "oov1", "oov2"], id=12)
    cfg = DetectorConfig(delta=1.0, gamma=0.1)
    fwd = detect_sequences(model, [s1, s2], cfg, table, source, method="nws", seed=3)
    rev = detect_sequences(model, [s2, s1], cfg, table, source, method="nws", seed=3)
    by_id = {d.input.id: d for d in rev}
    for det in fwd:
        assert det.transformed.tokens == by_id[det.input.id].transformed.tokens


def test_detect_sequences_thread_count_invariance():
    table = FrequencyTable(counts={"a": 3, "b": 30, "q": 2})
    source = DictSource({"q": ("a", "b"), "oov": ("a", "b")})
    model = WeightModel({"a": 0.3, "b": -0.8, "q": 0.9})
    seqs = [seq(["q", "oov", "a"], id=i) for i in range(20)]
    cfg = DetectorConfig(delta=2.0, gamma=0.05)
    for method in ("fgws", "nws"):
        one = detect_sequences(model, seqs, cfg, table, source, method=method,
                               seed=1, threads=1)
        four = detect_sequences(model, seqs, cfg, table, source, method=method,
                                seed=1, threads=4)
        assert [d.transformed.tokens for d in one] == [d.transformed.tokens for d in four]
        assert [d.score for d in one] == [d.score for d in four]


def test_detect_sequences_rejects_unknown_method():
    with pytest.raises(DetectorError, match="unknown detection method"):
        detect_sequences(WeightModel({}), [], DetectorConfig(delta=1.0, gamma=0.0),
                         FrequencyTable(counts={"a": 1}), DictSource({}), method="mws")


# ---------------------------------------------------------------- gamma


def test_gamma_from_scores_counting_properties():
    rng = np.random.default_rng(88)
    for _ in range(300):
        n = int(rng.integers(1, 60))
        scores = rng.uniform(-0.2, 1.2, size=n).round(int(rng.integers(0, 4))).tolist()
        budget = float(rng.uniform(0.01, 0.99))
        m = int(budget * n)
        gamma = gamma_from_scores(scores, budget, clamp=False)
        above = sum(s > gamma for s in scores)
        assert above <= m
        if m < n:
            # minimality: anything lower would admit at least m+1 scores
            assert sum(s >= gamma for s in scores) >= m + 1


def test_gamma_from_scores_clamps_into_unit_interval():
    assert gamma_from_scores([-0.4, -0.2, -0.1], 0.5) == 0.0
    assert gamma_from_scores([1.7, 1.5, 1.2], 0.5) == 1.0
    raw = gamma_from_scores([-0.4, -0.2, -0.1], 0.5, clamp=False)
    assert raw == -0.2


def test_gamma_from_scores_degenerate_budget_sits_below_minimum():
    scores = [0.5, 0.3, 0.2]
    gamma = gamma_from_scores(scores, 1.0, clamp=False)
    assert gamma < 0.2
    assert sum(s > gamma for s in scores) == 3 <= int(1.0 * len(scores))


def test_gamma_from_scores_rejects_empty():
    with pytest.raises(DetectorError, match="no scores"):
        gamma_from_scores([], 0.1)


def test_tune_gamma_keeps_clean_fpr_within_budget(toy_model, toy_table, toy_corpora, toy_lexicons):
    _, val_c, _ = toy_corpora
    synonyms, _, _ = toy_lexicons
    source = CandidateSource(synonyms, None, 0)
    thr = percentile_threshold(toy_table, 50)
    budget = 0.10
    gamma = tune_gamma(toy_model, val_c.sequences, thr, toy_table, source, budget)
    cfg = DetectorConfig(delta=thr, gamma=gamma, fpr_budget=budget)
    dets = detect_sequences(toy_model, val_c.sequences, cfg, toy_table, source)
    assert sum(d.flagged for d in dets) <= int(budget * len(val_c))
    assert 0.0 <= gamma <= 1.0


# ---------------------------------------------------------------- delta tuning


def _tuning_setting():
    """Small corpus where the grid scan is replayable by hand."""
    from fgws import Corpus
    table = FrequencyTable(counts={
        "fine": 200, "nice": 150, "warm": 90, "meh": 40,
        "poor": 12, "grim": 4, "the": 300, "film": 250,
    })
    source = DictSource({
        "fine": ("meh", "nice", "poor"),
        "nice": ("fine", "grim"),
        "warm": ("meh", "poor"),
        "meh": ("warm",),
        "poor": ("fine", "warm"),
        "grim": ("nice",),
    })
    model = WeightModel({"fine": 1.0, "nice": 0.8, "warm": 0.6,
                         "meh": -0.2, "poor": -0.9, "grim": -1.3})
    rows = [
        (["the", "fine", "film", "nice"], 1),
        (["the", "nice", "warm", "film"], 1),
        (["fine", "warm", "the", "film", "nice"], 1),
        (["the", "poor", "film", "grim"], 0),
        (["grim", "meh", "the", "film"], 0),
        (["the", "poor", "meh", "film"], 0),
        (["nice", "fine", "warm", "the"], 1),
        (["poor", "grim", "meh", "the"], 0),
    ]
    seqs = tuple(Sequence(tuple(t), lab, i) for i, (t, lab) in enumerate(rows))
    val = Corpus(split="validation", sequences=seqs, num_classes=2)
    cfg = AttackConfig(attack="prioritized", seed=5, max_replace_fraction=0.5)
    return model, val, source, table, cfg


def test_tune_delta_matches_independent_grid_scan():
    from fgws import AttackResources, run_campaign
    model, val, source, table, atk = _tuning_setting()
    q_grid = tuple(range(0, 101, 10))
    budget = 0.25
    tuning = tune_delta(model, val, source, table, atk, q_grid=q_grid,
                        fpr_budget=budget, threads=1)

    # replay: same campaign, then a from-scratch scan with plain counting
    campaign = run_campaign(model, val.sequences,
                            AttackResources(candidates=source), atk, threads=1)
    adversarial = [r.perturbed for r in campaign.results if r.success]
    assert adversarial
    best = None
    for q in q_grid:
        thr = percentile_threshold(table, q)
        gamma = tune_gamma(model, val.sequences, thr, table, source, budget)
        cfg = DetectorConfig(delta=thr, gamma=gamma)

        def flag(s):
            toks, _ = fgws_transform_oracle(s.tokens, table.phi,
                                            source.candidates, thr.delta)
            probs = model.predict_proba(s.tokens)
            y = int(np.argmax(probs))
            return float(probs[y] - model.predict_proba(list(toks))[y]) > gamma

        tp = sum(flag(s) for s in adversarial)
        fp = sum(flag(s) for s in val.sequences)
        tpr = tp / len(adversarial)
        prec = tp / (tp + fp) if tp + fp else 0.0
        f1 = 2 * prec * tpr / (prec + tpr) if prec + tpr else 0.0
        if best is None or f1 > best[1]:
            best = (q, f1, thr.delta, gamma)

    assert tuning.chosen_q == best[0]
    assert tuning.chosen_delta == pytest.approx(best[2], abs=0)
    assert tuning.chosen_gamma == pytest.approx(best[3], abs=0)
    chosen_row = next(r for r in tuning.per_q if r["q"] == tuning.chosen_q)
    assert chosen_row["f1"] == pytest.approx(best[1], abs=1e-12)
    assert tuning.q_grid == q_grid
    assert len(tuning.per_q) == len(q_grid)


def test_tune_delta_tie_prefers_smaller_q():
    model, val, source, table, atk = _tuning_setting()
    # adjacent grid points land on the same percentile value, so their rows
    # tie exactly; the chosen q must be the first of its F1 class
    tuning = tune_delta(model, val, source, table, atk, fpr_budget=0.25, threads=1)
    top = max(r["f1"] for r in tuning.per_q)
    first = min(r["q"] for r in tuning.per_q if r["f1"] == top)
    assert tuning.chosen_q == first


def test_tune_delta_fixed_gamma_skips_retuning():
    model, val, source, table, atk = _tuning_setting()
    tuning = tune_delta(model, val, source, table, atk, fpr_budget=0.25,
                        fixed_gamma=0.07, threads=1)
    assert all(r["gamma"] == 0.07 for r in tuning.per_q)
    assert tuning.chosen_gamma == 0.07


def test_tune_delta_thread_count_invariance():
    model, val, source, table, atk = _tuning_setting()
    one = tune_delta(model, val, source, table, atk, fpr_budget=0.25, threads=1)
    three = tune_delta(model, val, source, table, atk, fpr_budget=0.25, threads=3)
    assert one == three


def test_tune_delta_without_successes_advises_weaker_model():
    model, val, source, table, atk = _tuning_setting()
    with pytest.raises(DetectorError, match="weaker model or a larger validation"):
        tune_delta(model, val, DictSource({}), table, atk, threads=1)


def test_tune_delta_rejects_empty_grid():
    model, val, source, table, atk = _tuning_setting()
    with pytest.raises(DetectorError, match="empty percentile grid"):
        tune_delta(model, val, source, table, atk, q_grid=(), threads=1)


# ---------------------------------------------------------------- misc


def test_idempotence_guaranteed():
    table = FrequencyTable(counts={"hi": 100, "lo": 2})
    cut = math.log(50)
    assert idempotence_guaranteed([(0, "x", "hi")], table, cut)
    assert not idempotence_guaranteed([(0, "x", "hi"), (1, "y", "lo")], table, cut)
    assert idempotence_guaranteed([], table, cut)


def test_detector_config_validation():
    with pytest.raises(DetectorError, match="gamma"):
        DetectorConfig(delta=1.0, gamma=1.2)
    with pytest.raises(DetectorError, match="gamma"):
        DetectorConfig(delta=1.0, gamma=-0.1)
    with pytest.raises(DetectorError, match="fpr_budget"):
        DetectorConfig(delta=1.0, gamma=0.5, fpr_budget=0.0)
    with pytest.raises(DetectorError, match="neighbor_count"):
        DetectorConfig(delta=1.0, gamma=0.5, neighbor_count=-1)

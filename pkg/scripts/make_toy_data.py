#!/usr/bin/env python3
"""Generate the bundled toy sentiment corpus and its lexical resources.

The corpus is engineered, not scraped: every sentiment word belongs to a
seven-member synonym group spanning frequency tiers (anchor, two mids, two
lows, one rare, one word held out of training entirely), and training
counts are dealt exactly so that (a) rarer synonyms carry weaker or mildly
inverted class evidence, which is what makes substitution attacks reach
for them, and (b) six groups contain an equal-count "polar pair" so the
equifrequent-band constraint has somewhere to go. Group members sit within
0.5 of each other in the embedding space and far from everyone else.

Writes data/toy/{train,validation,test}.tsv, synonyms.tsv, embeddings.txt,
stopwords.txt. Run with --check to train the bundled naive Bayes model and
print attack/detection diagnostics (slow-ish; imports the package).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

SEED = 20240811
OUT_DIR = Path(__file__).resolve().parent.parent / "data" / "toy"

N_TRAIN_PER_CLASS = 1000
N_EVAL_PER_CLASS = 100  # per split, per class

# (word, count in class-0 docs, count in class-1 docs). Member order runs
# high frequency to held-out; within a group all counts are pairwise
# distinct except the deliberate equal-count polar pairs at positions 2-3
# of six groups (one class-leaning word, one neutral). Rare members lean
# slightly against their group, which is what makes them the payoff
# substitution for a confidence-dropping attack. The two low tiers (counts
# 9..26) sit well below the mid/polar tiers (counts 36+), leaving a clean
# log-frequency gap for the detector threshold.
POS_GROUPS = [
    [("great", 40, 300), ("excellent", 16, 114), ("superb", 7, 49),
     ("stellar", 3, 19), ("sterling", 2, 11), ("peerless", 3, 2),
     ("transcendent", 0, 0)],
    [("good", 38, 262), ("enjoyable", 14, 96), ("decent", 6, 34),
     ("passable", 20, 20), ("pleasant", 2, 10), ("agreeable", 4, 2),
     ("salutary", 0, 0)],
    [("funny", 30, 230), ("hilarious", 12, 84), ("witty", 6, 46),
     ("amusing", 3, 15), ("droll", 2, 9), ("jocular", 3, 1),
     ("sidesplitting", 0, 0)],
    [("charming", 28, 202), ("delightful", 11, 77), ("endearing", 5, 31),
     ("quaint", 18, 18), ("graceful", 2, 12), ("winsome", 3, 2),
     ("beguiling", 0, 0)],
    [("moving", 26, 184), ("touching", 10, 70), ("stirring", 6, 40),
     ("poignant", 4, 20), ("heartfelt", 2, 8), ("affecting", 4, 2),
     ("luminous", 0, 0)],
    [("clever", 22, 168), ("inventive", 9, 61), ("sharp", 5, 38),
     ("shrewd", 2, 14), ("nimble", 1, 8), ("sagacious", 3, 1),
     ("perspicacious", 0, 0)],
]
NEG_GROUPS = [
    [("bad", 290, 40), ("awful", 110, 15), ("terrible", 51, 7),
     ("dreadful", 22, 4), ("abysmal", 11, 2), ("execrable", 2, 3),
     ("atrocious", 0, 0)],
    [("boring", 255, 35), ("tedious", 92, 13), ("dull", 37, 7),
     ("leisurely", 22, 22), ("monotonous", 10, 2), ("soporific", 2, 4),
     ("somnolent", 0, 0)],
    [("weak", 220, 30), ("flimsy", 81, 11), ("feeble", 32, 6),
     ("gentle", 19, 19), ("shaky", 9, 2), ("anemic", 1, 3),
     ("enervated", 0, 0)],
    [("sloppy", 198, 27), ("shoddy", 75, 10), ("lousy", 41, 7),
     ("campy", 24, 24), ("clumsy", 12, 2), ("slipshod", 2, 3),
     ("slapdash", 0, 0)],
    [("forced", 180, 25), ("artificial", 68, 10), ("contrived", 35, 7),
     ("stylized", 21, 21), ("stilted", 8, 2), ("mannered", 2, 4),
     ("hackneyed", 0, 0)],
    [("annoying", 162, 23), ("irritating", 60, 8), ("grating", 32, 5),
     ("tiresome", 17, 3), ("vexing", 7, 2), ("galling", 1, 3),
     ("exasperating", 0, 0)],
]
GROUPS = [(1, g) for g in POS_GROUPS] + [(0, g) for g in NEG_GROUPS]

# sampling weights for validation/test sentiment slots, by member index
EVAL_TIER_P = [0.44, 0.22, 0.13, 0.10, 0.08, 0.02, 0.01]
# Cross-polarity mentions stick to common words. Down in the rare tiers a
# cross word would be rewritten toward its group anchor by the detector's
# transform, drifting clean predictions for no modelling gain.
CROSS_TIER_P = [0.46, 0.26, 0.16, 0.12, 0.0, 0.0, 0.0]

STOPWORDS = """
the a an and or but of to in on at by for with from as is was were are be
been it its this that these those i we you he she they them his her their
my our your me us had has have do does did not no so too very just than
then there here when while if because about into over under again once out
up down off all any both each few more most other some such only own same
s t can will don now
""".split()

NOUNS = """
movie film picture story plot script acting cast director editing scenes
pacing dialogue ending opening characters villain romance humor soundtrack
premise finale twist act runtime performance performances audience crowd
critics review tone mood writing effects visuals costumes camera
""".split()

VERBS = ["was", "felt", "seemed", "looked", "stayed", "turned", "kept"]

NAME_PARTS_A = ["mar", "del", "kor", "ash", "bel", "tor", "hal", "ren",
                "cal", "vos", "lan", "pem", "gar", "sol", "fen", "dra"]
NAME_PARTS_B = ["lowe", "ner", "stein", "berg", "rick", "dane", "mont",
                "well", "ford", "by", "ton", "ham", "dale", "mer"]


def _names(n: int = 120):
    combos = [a + b for a in NAME_PARTS_A for b in NAME_PARTS_B]
    return combos[:n]


def _word_counts(cls: int):
    """(word, count) pairs for occurrences assigned to class `cls`."""
    out = []
    for polarity, group in GROUPS:
        for word, c0, c1 in group:
            count = c0 if cls == 0 else c1
            if count:
                out.append((word, count, polarity == cls))
    return out


def _deal_quotas(rng, n_docs: int, total: int, base: int, cap: int):
    """Per-doc word quotas summing exactly to `total`."""
    quotas = [base] * n_docs
    extra = total - base * n_docs
    if extra < 0:
        raise SystemExit(f"pool smaller than base quota: {total} < {base * n_docs}")
    while extra:
        i = int(rng.integers(n_docs))
        if quotas[i] < cap:
            quotas[i] += 1
            extra -= 1
    return quotas


def _sentence(rng, adjs, noun):
    verb = VERBS[int(rng.integers(len(VERBS)))]
    lead = rng.random()
    if lead < 0.2:
        head = f"i thought the {noun} {verb}"
    elif lead < 0.35:
        head = f"overall the {noun} {verb}"
    elif lead < 0.5:
        head = f"this {noun} {verb}"
    else:
        head = f"the {noun} {verb}"
    if len(adjs) == 1:
        return f"{head} {adjs[0]}"
    if len(adjs) == 2:
        return f"{head} {adjs[0]} and {adjs[1]}"
    return f"{head} {adjs[0]} , {adjs[1]} and {adjs[2]}"


_CROSS_JOINERS = [
    "though the {n} {v} {a}",
    "even if the {n} {v} {a}",
    "but the {n} {v} {a}",
]

_CLOSERS = [
    "that is about it .",
    "make of it what you will .",
    "not much else to say .",
    "i have seen this sort of thing before .",
    "the rest is padding .",
]


def _doc(rng, same, cross, name_pool):
    """One review from this doc's dealt sentiment words."""
    nouns = list(rng.choice(NOUNS, size=4, replace=False))
    same = list(same)
    rng.shuffle(same)
    parts = []
    first = same[: min(len(same), int(rng.integers(1, 4)))]
    rest = same[len(first):]
    parts.append(_sentence(rng, first, nouns[0]))
    for i, word in enumerate(cross):
        tpl = _CROSS_JOINERS[int(rng.integers(len(_CROSS_JOINERS)))]
        parts.append(", " + tpl.format(
            n=nouns[1 + i % 2], v=VERBS[int(rng.integers(len(VERBS)))], a=word))
    parts.append(".")
    if rest:
        parts.append(_sentence(rng, rest, nouns[3]) + " .")
    if name_pool and rng.random() < 0.25:
        name = name_pool.pop()
        parts.append(f"{name} carried the {nouns[2]} from start to finish .")
    if rng.random() < 0.4:
        parts.append(_CLOSERS[int(rng.integers(len(_CLOSERS)))])
    return " ".join(parts)


def make_train(rng):
    docs = []
    names = _names()
    # 60 names per class at counts 1..3: a low-frequency tail for the
    # percentile grid, including the phi = 0 singleton edge
    name_pools = {
        0: [n for i, n in enumerate(names[:60]) for _ in range(1 + i % 3)],
        1: [n for i, n in enumerate(names[60:]) for _ in range(1 + i % 3)],
    }
    for cls in (0, 1):
        name_pool = name_pools[cls]
        rng.shuffle(name_pool)
        same_pool, cross_pool = [], []
        for word, count, is_same in _word_counts(cls):
            (same_pool if is_same else cross_pool).extend([word] * count)
        rng.shuffle(same_pool)
        rng.shuffle(cross_pool)
        same_q = _deal_quotas(rng, N_TRAIN_PER_CLASS, len(same_pool), 2, 5)
        cross_q = _deal_quotas(rng, N_TRAIN_PER_CLASS, len(cross_pool), 0, 2)
        si = ci = 0
        for d in range(N_TRAIN_PER_CLASS):
            same = same_pool[si:si + same_q[d]]
            cross = cross_pool[ci:ci + cross_q[d]]
            si += same_q[d]
            ci += cross_q[d]
            docs.append((cls, _doc(rng, same, cross, name_pool)))
    rng.shuffle(docs)
    return docs


def _sample_word(rng, cls: int, same: bool):
    groups = [g for pol, g in GROUPS if (pol == cls) == same]
    group = groups[int(rng.integers(len(groups)))]
    tier_p = EVAL_TIER_P if same else CROSS_TIER_P
    member = int(rng.choice(len(group), p=tier_p))
    return group[member][0]


def make_eval_split(rng, n_per_class: int):
    docs = []
    for cls in (0, 1):
        for _ in range(n_per_class):
            k_same = int(rng.choice([2, 3, 4], p=[0.62, 0.28, 0.10]))
            k_cross = int(rng.choice([0, 1, 2], p=[0.64, 0.31, 0.05]))
            same = [_sample_word(rng, cls, True) for _ in range(k_same)]
            cross = [_sample_word(rng, cls, False) for _ in range(k_cross)]
            docs.append((cls, _doc(rng, same, cross, [])))
    rng.shuffle(docs)
    return docs


def make_embeddings(rng):
    """16-d vectors: one far-apart center per group, tight member offsets."""
    dim = 16
    lines = []
    for gi, (_, group) in enumerate(GROUPS):
        center = np.zeros(dim)
        center[gi] = 3.0
        center[(gi + 5) % dim] = -2.0
        for mi, (word, _, _) in enumerate(group):
            off = rng.normal(size=dim)
            off *= (0.02 + 0.024 * mi) / np.linalg.norm(off)
            vec = center + off
            comps = " ".join(f"{x:.6f}" for x in vec)
            lines.append(f"{word} {comps}")
    return lines


def make_synonyms():
    lines = []
    for _, group in GROUPS:
        words = [w for w, _, _ in group]
        for w in words:
            others = [o for o in words if o != w]
            lines.append(f"{w}\t{','.join(others)}")
    return lines


def write_all(out_dir: Path):
    rng = np.random.default_rng(SEED)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = {
        "train": make_train(rng),
        "validation": make_eval_split(rng, N_EVAL_PER_CLASS),
        "test": make_eval_split(rng, N_EVAL_PER_CLASS),
    }
    for name, docs in splits.items():
        path = out_dir / f"{name}.tsv"
        with open(path, "w", encoding="utf-8") as fh:
            for cls, text in docs:
                fh.write(f"{cls}\t{text}\n")
        print(f"wrote {path} ({len(docs)} docs)")
    (out_dir / "synonyms.tsv").write_text(
        "\n".join(make_synonyms()) + "\n", encoding="utf-8")
    (out_dir / "embeddings.txt").write_text(
        "\n".join(make_embeddings(rng)) + "\n", encoding="utf-8")
    (out_dir / "stopwords.txt").write_text(
        "\n".join(STOPWORDS) + "\n", encoding="utf-8")
    print(f"wrote lexicon files under {out_dir}")


def check(out_dir: Path):
    """Train the bundled model and report the dynamics the suite relies on."""
    from fgws import (
        AttackConfig, AttackResources, DetectorConfig, build_frequency_table,
        detect_sequences, load_corpus, load_embeddings, load_stopwords,
        load_synonyms, percentile_threshold, run_campaign, train, accuracy,
        tune_delta, CandidateSource,
    )
    from fgws.lm import TrigramLM
    from fgws.stats import frequency_analysis, restored_accuracy

    train_c = load_corpus(out_dir / "train.tsv", split="train")
    val_c = load_corpus(out_dir / "validation.tsv", split="validation")
    test_c = load_corpus(out_dir / "test.tsv", split="test")
    model = train(train_c, "naive-bayes", {})
    print(f"accuracy train={accuracy(model, train_c):.3f} "
          f"val={accuracy(model, val_c):.3f} test={accuracy(model, test_c):.3f}")

    table = build_frequency_table(train_c)
    lexicon = load_synonyms(out_dir / "synonyms.tsv")
    space = load_embeddings(out_dir / "embeddings.txt")
    stop = load_stopwords(out_dir / "stopwords.txt")
    lm = TrigramLM(train_c)
    res = AttackResources(candidates=lexicon, space=space, lm=lm, table=table)
    source = CandidateSource(lexicon, space, k=6)

    print("delta by percentile:",
          {q: round(percentile_threshold(table, q).delta, 3)
           for q in (20, 30, 40, 50, 60, 70)})
    tuning = tune_delta(model, val_c, source, table,
                        AttackConfig(attack="prioritized", stopwords=stop, seed=7),
                        threads=1)
    per_q = {r["q"]: round(r["f1"], 3) for r in tuning.per_q}
    print(f"tuned q={tuning.chosen_q} delta={tuning.chosen_delta:.3f} "
          f"gamma={tuning.chosen_gamma:.4f}  f1 by q: {per_q}")
    threshold = percentile_threshold(table, tuning.chosen_q)
    gamma = tuning.chosen_gamma

    det_cfg = DetectorConfig(delta=threshold, gamma=gamma)
    clean_dets = detect_sequences(model, test_c.sequences, det_cfg, table,
                                  source, threads=1)
    clean_acc = accuracy(model, test_c)
    trans_acc = sum(d.restored_label == d.input.label
                    for d in clean_dets) / len(clean_dets)
    print(f"clean transform delta={100 * abs(clean_acc - trans_acc):.1f}pts "
          f"fpr={100 * sum(d.flagged for d in clean_dets) / len(clean_dets):.1f}%")

    subset = list(test_c.sequences)
    for tag in ("random", "prioritized", "pwws", "genetic"):
        cfg = AttackConfig(attack=tag, stopwords=stop, seed=7,
                           population_size=20, num_generations=8, lm_top_k=6)
        camp = run_campaign(model, subset, res, cfg, threads=1)
        row = frequency_analysis(camp, table)
        adv = [r.perturbed for r in camp.results if r.success]
        dets = detect_sequences(model, adv, det_cfg, table, source, threads=1)
        rest = restored_accuracy(camp, dets) if adv else float("nan")
        flagged = 100 * sum(d.flagged for d in dets) / max(1, len(dets))
        print(f"{tag:11s} success={camp.num_successful}/{camp.num_attacked} "
              f"after={100 * camp.after_attack_accuracy:.1f}% "
              f"d={row.d:.2f} d_nonoov={row.nonoov_d:.2f} "
              f"restored={rest:.1f}% tpr~{flagged:.1f}%")

    cfg = AttackConfig(attack="pwws", stopwords=stop, seed=7, equifrequent_band=0.0)
    camp0 = run_campaign(model, subset, res, cfg, threads=1)
    row0 = frequency_analysis(camp0, table)
    npairs = sum(len(r.substitutions) for r in camp0.results)
    print(f"pwws beta=0  success={camp0.num_successful} pairs={npairs} d={row0.d}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(OUT_DIR))
    ap.add_argument("--check", action="store_true",
                    help="train and attack the generated corpus, print diagnostics")
    args = ap.parse_args()
    out_dir = Path(args.out)
    write_all(out_dir)
    if args.check:
        check(out_dir)


if __name__ == "__main__":
    sys.exit(main())

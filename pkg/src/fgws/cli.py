"""Command-line front end.

Every subcommand writes its results to files, keeps progress chatter on
standard error, and prints exactly one machine-readable summary JSON line to
standard output (shape documented by SUMMARY_SCHEMA). Exit codes: 0 success,
1 usage error, 2 data or validation error, 3 runtime failure.

A --config run-config JSON can stand in for any input-path flag; explicit
flags win. Every subcommand accepts --seed (determinism) and --threads
(worker cap; never changes results).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attacks import (
    ATTACK_TAGS,
    AttackConfig,
    AttackResources,
    draw_subset,
    run_campaign,
)
from .classifier import MODEL_FAMILIES, accuracy, load_model, save_model, train
from .corpus import (
    SPLITS,
    build_frequency_table,
    load_corpus,
    load_stopwords,
    percentile_threshold,
)
from .detector import (
    DetectorConfig,
    detect_sequences,
    tune_delta,
    gamma_from_scores,
)
from .lexicon import CandidateSource, load_embeddings, load_synonyms
from .lm import TrigramLM
from .pipeline import (
    PipelineError,
    _dumps,
    attack_result_from_dict,
    campaign_summary,
    attack_result_to_dict,
    detection_from_dict,
    detection_to_dict,
    load_run_config,
    read_campaign,
    read_jsonl,
    run_all,
    write_jsonl,
)
from . import report as report_files
from .stats import bootstrap_eval, fpr_sweep, frequency_analysis, restored_accuracy

__all__ = ["main", "SUMMARY_SCHEMA"]

SUMMARY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "fgws CLI summary",
    "description": "One-line JSON printed to stdout by every subcommand.",
    "type": "object",
    "required": ["format_version", "command", "status", "outputs", "details"],
    "additionalProperties": False,
    "properties": {
        "format_version": {"const": 1},
        "command": {
            "enum": ["train", "attack", "tune", "detect", "eval",
                     "freq-stats", "sweep", "run-all"],
        },
        "status": {"const": "ok"},
        "seed": {"type": ["integer", "null"]},
        "outputs": {"type": "object", "additionalProperties": {"type": "string"}},
        "details": {"type": "object"},
    },
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _summary(command, seed, outputs, details) -> dict:
    return {
        "format_version": 1,
        "command": command,
        "status": "ok",
        "seed": seed,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "details": details,
    }


def _load_config(args):
    if getattr(args, "config", None) is None:
        return None
    return load_run_config(args.config, seed_override=getattr(args, "seed", None))


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    if cfg is not None:
        return cfg.seed
    return 0


def _path(args, cfg, flag: str, key: str, required: bool = True):
    value = getattr(args, flag)
    if value is not None:
        return Path(value)
    if cfg is not None:
        return cfg.paths[key]
    if required:
        raise _UsageError(f"--{flag.replace('_', '-')} is required (or supply --config)")
    return None


def _load_stopword_set(args, cfg):
    p = _path(args, cfg, "stopwords", "stopwords", required=False)
    return load_stopwords(p) if p is not None else frozenset()


def _settings(cfg) -> dict:
    from .pipeline import DEFAULT_SETTINGS
    return cfg.settings if cfg is not None else DEFAULT_SETTINGS


def _attack_config_from_args(args, cfg, stopwords, seed) -> AttackConfig:
    a = _settings(cfg)["attacks"]
    g = a["genetic"]
    pick = lambda flag, fallback: fallback if getattr(args, flag, None) is None else getattr(args, flag)
    return AttackConfig(
        attack=args.attack,
        max_replace_fraction=pick("max_replace_fraction", a["max_replace_fraction"]),
        stopwords=stopwords,
        seed=seed,
        skip_stopwords=not getattr(args, "attack_stopwords", False),
        population_size=pick("population_size", g["population_size"]),
        num_generations=pick("num_generations", g["num_generations"]),
        embedding_distance_bound=pick("distance_bound", g["embedding_distance_bound"]),
        lm_window=pick("lm_window", g["lm_window"]),
        lm_top_k=pick("lm_top_k", g["lm_top_k"]),
        equifrequent_band=getattr(args, "equifrequent_band", None),
    )


def _candidate_source(args, cfg, table):
    """Synonym lexicon merged with K embedding neighbors, per the detector's
    candidate-set definition."""
    lexicon = load_synonyms(_path(args, cfg, "synonyms", "synonyms"))
    det = _settings(cfg)["detector"]
    k = det["neighbor_count"] if args.neighbors is None else args.neighbors
    space = None
    emb = _path(args, cfg, "embeddings", "embeddings", required=k > 0)
    if emb is not None:
        space = load_embeddings(emb)
    return CandidateSource(lexicon, space, k=k, metric=det["metric"])


def _split_floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise _UsageError(f"bad numeric list {text!r}") from exc


def _split_ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise _UsageError(f"bad integer list {text!r}") from exc


# ---------------------------------------------------------------- handlers


def cmd_train(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    corpus = load_corpus(_path(args, cfg, "train", "train"), split="train")
    hyper = dict(_settings(cfg)["model"]["hyperparams"])
    family = args.family or _settings(cfg)["model"]["family"]
    model = train(corpus, family, hyper)
    save_model(model, args.out)
    _log(f"trained {family} on {len(corpus)} sequences")
    return _summary("train", seed, {"model": args.out}, {
        "family": family,
        "num_classes": model.num_classes,
        "vocabulary_size": len(model.vocabulary),
        "train_accuracy": accuracy(model, corpus),
    })


def _load_attack_inputs(args, cfg, seed):
    model = load_model(args.model)
    corpus = load_corpus(_path(args, cfg, "infile", "test"), split=args.split,
                         num_classes=model.num_classes)
    subset = list(corpus.sequences)
    if args.subset_size is not None:
        subset = draw_subset(corpus, args.subset_size,
                             np.random.default_rng([seed, 101]))
    return model, subset


def cmd_attack(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    model, subset = _load_attack_inputs(args, cfg, seed)
    stopwords = _load_stopword_set(args, cfg)
    config = _attack_config_from_args(args, cfg, stopwords, seed)
    lexicon = space = lm = table = None
    if args.attack in ("random", "prioritized", "pwws"):
        lexicon = load_synonyms(_path(args, cfg, "synonyms", "synonyms"))
    if args.attack == "genetic":
        space = load_embeddings(_path(args, cfg, "embeddings", "embeddings"))
        lm = TrigramLM(load_corpus(_path(args, cfg, "train", "train"), split="train"))
    if config.equifrequent_band is not None:
        table = build_frequency_table(
            load_corpus(_path(args, cfg, "train", "train"), split="train"))
    resources = AttackResources(candidates=lexicon, space=space, lm=lm, table=table)
    campaign = run_campaign(model, subset, resources, config, threads=args.threads)
    write_jsonl(args.out, (attack_result_to_dict(r) for r in campaign.results))
    summary = campaign_summary(campaign, seed)
    summary_path = args.summary_out or f"{args.out}.summary.json"
    Path(summary_path).write_text(_dumps(summary) + "\n", encoding="utf-8")
    _log(f"{args.attack}: {campaign.num_successful}/{campaign.num_attacked} successful")
    return _summary("attack", seed, {"results": args.out, "summary": summary_path},
                    summary)


def cmd_tune(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    model = load_model(args.model)
    train_corpus = load_corpus(_path(args, cfg, "train", "train"), split="train")
    validation = load_corpus(_path(args, cfg, "validation", "validation"),
                             split="validation", num_classes=model.num_classes)
    table = build_frequency_table(train_corpus)
    source = _candidate_source(args, cfg, table)
    stopwords = _load_stopword_set(args, cfg)
    det = _settings(cfg)["detector"]
    budget = det["fpr_budget"] if args.fpr_budget is None else args.fpr_budget
    q_grid = det["q_grid"] if args.q_grid is None else _split_ints(args.q_grid)
    universe = None
    if det["percentile_universe"] == "candidate-bearing":
        universe = [w for w in table.vocabulary() if source.candidates(w)]
    attack_config = AttackConfig(attack="prioritized", stopwords=stopwords, seed=seed)
    tuning = tune_delta(model, validation, source, table, attack_config,
                        q_grid=q_grid, fpr_budget=budget, percentile_words=universe,
                        fixed_gamma=det["fixed_gamma"] if det["gamma_policy"] == "fixed" else None,
                        threads=args.threads)
    placeholder = DetectorConfig(
        delta=percentile_threshold(table, tuning.chosen_q, words=universe),
        gamma=0.0, fpr_budget=budget)
    nws_scores = [d.score for d in detect_sequences(
        model, validation.sequences, placeholder, table, source,
        method="nws", seed=seed, threads=args.threads)]
    payload = {
        "q_grid": list(tuning.q_grid),
        "per_q": list(tuning.per_q),
        "chosen": {"q": tuning.chosen_q, "delta": tuning.chosen_delta,
                   "gamma": tuning.chosen_gamma},
        "nws_gamma": gamma_from_scores(nws_scores, budget),
        "gamma_policy": det["gamma_policy"],
        "percentile_universe": det["percentile_universe"],
    }
    Path(args.out).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _log(f"chose q={tuning.chosen_q} delta={tuning.chosen_delta:.4f} "
         f"gamma={tuning.chosen_gamma:.4f}")
    return _summary("tune", seed, {"tuning": args.out}, payload["chosen"])


def _detect_threshold(args, table, universe=None):
    """delta/gamma from flags, falling back to a tuning artifact."""
    delta = gamma = None
    if args.tuning is not None:
        blob = json.loads(Path(args.tuning).read_text(encoding="utf-8"))
        delta = blob["chosen"]["delta"]
        gamma = blob["nws_gamma"] if args.method == "nws" else blob["chosen"]["gamma"]
    if args.delta_q is not None:
        delta = percentile_threshold(table, args.delta_q, words=universe).delta
    if args.delta is not None:
        delta = args.delta
    if args.gamma is not None:
        gamma = args.gamma
    if delta is None or gamma is None:
        raise _UsageError("detect needs --gamma plus --delta/--delta-q, or --tuning")
    return float(delta), float(gamma)


def cmd_detect(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    model = load_model(args.model)
    table = build_frequency_table(
        load_corpus(_path(args, cfg, "train", "train"), split="train"))
    source = _candidate_source(args, cfg, table)
    delta, gamma = _detect_threshold(args, table)
    config = DetectorConfig(delta=delta, gamma=gamma)
    infile = Path(args.infile)
    if infile.suffix == ".jsonl":
        # adversarial side of an attack artifact
        results = [attack_result_from_dict(d) for d in read_jsonl(infile)]
        if args.successful_only:
            results = [r for r in results if r.success]
        sequences = [r.perturbed for r in results]
    else:
        sequences = list(load_corpus(infile, split=args.split,
                                     num_classes=model.num_classes).sequences)
    dets = detect_sequences(model, sequences, config, table, source,
                            method=args.method, seed=seed, threads=args.threads)
    write_jsonl(args.out, (detection_to_dict(d, args.method) for d in dets))
    flagged = sum(1 for d in dets if d.flagged)
    _log(f"{args.method}: flagged {flagged}/{len(dets)}")
    return _summary("detect", seed, {"detections": args.out}, {
        "method": args.method,
        "delta": delta,
        "gamma": gamma,
        "num_sequences": len(dets),
        "num_flagged": flagged,
    })


def cmd_eval(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    adv = [detection_from_dict(d) for d in read_jsonl(args.adv)]
    clean = [detection_from_dict(d) for d in read_jsonl(args.clean)]
    restored = after = None
    if args.campaign is not None and args.campaign_summary is not None:
        campaign = read_campaign(args.campaign, args.campaign_summary)
        restored = restored_accuracy(campaign, adv)
        after = 100.0 * campaign.after_attack_accuracy
    metrics = bootstrap_eval(adv, clean, n_resamples=args.resamples, seed=seed,
                             restored_accuracy=restored, after_attack_accuracy=after)
    payload = {
        "tpr": metrics.tpr, "fpr": metrics.fpr, "precision": metrics.precision,
        "f1": metrics.f1, "restored_accuracy": metrics.restored_accuracy,
        "after_attack_accuracy": metrics.after_attack_accuracy,
        "n_resamples": args.resamples,
    }
    Path(args.out).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _log(f"F1 {metrics.f1:.2f} (TPR {metrics.tpr:.2f}, FPR {metrics.fpr:.2f})")
    return _summary("eval", seed, {"metrics": args.out}, payload)


def cmd_freq_stats(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    campaign = read_campaign(args.campaign, args.campaign_summary)
    table = build_frequency_table(
        load_corpus(_path(args, cfg, "train", "train"), split="train"))
    row = frequency_analysis(campaign, table, successful_only=args.successful_only)
    report_files.write_freq_stats_csv([row], args.out)
    outputs = {"table": args.out}
    if args.hist_csv is not None and args.hist_svg is not None:
        phis = [(table.phi(old), table.phi(new))
                for r in campaign.results for _, old, new in r.substitutions]
        report_files.frequency_histogram(
            [p[0] for p in phis], [p[1] for p in phis],
            f"{campaign.attack}: replaced vs substitutions",
            args.hist_csv, args.hist_svg)
        outputs["histogram_csv"] = args.hist_csv
        outputs["histogram_svg"] = args.hist_svg
    details = report_files._sanitize(
        {c: getattr(row, c) for c in row.__dataclass_fields__})
    _log(f"{campaign.attack}: replaced mean {row.replaced_mean:.2f}, "
         f"substitution mean {row.subst_mean:.2f}, d={row.d:.2f}")
    return _summary("freq-stats", seed, outputs, details)


def cmd_sweep(args) -> dict:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    clean_scores = [d["score"] for d in read_jsonl(args.clean)]
    adv_scores = [d["score"] for d in read_jsonl(args.adv)]
    budgets = _split_floats(args.budgets)
    rows = fpr_sweep(clean_scores, adv_scores, budgets)
    curves = {args.tag: rows}
    report_files.write_sweep_csv(curves, args.out_csv)
    report_files.sweep_figure(curves, args.out_svg)
    _log("TPR at budgets: " + ", ".join(f"{r['budget']:g}->{r['tpr']:.1f}" for r in rows))
    return _summary("sweep", seed, {"curve": args.out_csv, "figure": args.out_svg},
                    {"tag": args.tag, "rows": rows})


def cmd_run_all(args) -> dict:
    if args.config is None:
        raise _UsageError("run-all requires --config")
    cfg = load_run_config(args.config, seed_override=args.seed)
    manifest = run_all(cfg, threads=args.threads, log=_log)
    out_dir = cfg.paths["output_dir"]
    return _summary("run-all", cfg.seed, {
        "output_dir": str(out_dir),
        "manifest": str(out_dir / "manifest.json"),
        "report": str(out_dir / "report" / "report.json"),
    }, {
        "config_hash": manifest.config_hash,
        "num_artifacts": len(manifest.artifacts),
        "stages": list(manifest.timings),
    })


# ---------------------------------------------------------------- parser


def _add_common(p):
    p.add_argument("--config", default=None,
                   help="run config JSON supplying default paths and settings")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed (default: config seed, else 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="max worker threads; results do not depend on it")


def build_parser() -> _Parser:
    parser = _Parser(prog="fgws",
                     description="Word-substitution attacks on text classifiers "
                                 "and their frequency-guided detection.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("train", help="train a built-in classifier")
    p.add_argument("--train", default=None, help="training split TSV")
    p.add_argument("--family", choices=MODEL_FAMILIES, default=None)
    p.add_argument("--out", required=True, help="model JSON path")
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("attack", help="run one attack over a test subset")
    p.add_argument("--attack", choices=ATTACK_TAGS, required=True)
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument("--in", dest="infile", default=None, help="input TSV")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", required=True, help="attack results JSON-lines")
    p.add_argument("--summary-out", default=None,
                   help="campaign summary JSON (default: <out>.summary.json)")
    p.add_argument("--subset-size", type=int, default=None)
    p.add_argument("--synonyms", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--stopwords", default=None)
    p.add_argument("--train", default=None, help="training TSV (genetic/equifrequent)")
    p.add_argument("--max-replace-fraction", type=float, default=None)
    p.add_argument("--equifrequent-band", type=float, default=None,
                   help="restrict substitutions to |phi(new)-phi(old)| <= band")
    p.add_argument("--attack-stopwords", action="store_true",
                   help="let attacks replace stopwords too")
    p.add_argument("--population-size", type=int, default=None)
    p.add_argument("--num-generations", type=int, default=None)
    p.add_argument("--distance-bound", type=float, default=None)
    p.add_argument("--lm-window", type=int, default=None)
    p.add_argument("--lm-top-k", type=int, default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("tune", help="tune delta (percentile grid) and gamma")
    p.add_argument("--model", required=True)
    p.add_argument("--train", default=None)
    p.add_argument("--validation", default=None)
    p.add_argument("--synonyms", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--stopwords", default=None)
    p.add_argument("--neighbors", type=int, default=None, help="K embedding neighbors")
    p.add_argument("--q-grid", default=None, help="comma-separated percentiles")
    p.add_argument("--fpr-budget", type=float, default=None)
    p.add_argument("--out", required=True, help="tuning JSON path")
    _add_common(p)
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser("detect", help="run a detector over clean or attacked inputs")
    p.add_argument("--method", choices=("fgws", "nws"), required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True,
                   help="TSV of sequences, or attack results .jsonl")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--successful-only", action="store_true",
                   help="with a .jsonl input, keep only successful attacks")
    p.add_argument("--train", default=None)
    p.add_argument("--synonyms", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--neighbors", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--delta", type=float, default=None, help="raw log-frequency threshold")
    p.add_argument("--delta-q", type=int, default=None,
                   help="percentile of training log frequencies")
    p.add_argument("--tuning", default=None, help="tuning JSON from the tune step")
    p.add_argument("--out", required=True, help="detections JSON-lines")
    _add_common(p)
    p.set_defaults(handler=cmd_detect)

    p = sub.add_parser("eval", help="bootstrap detection metrics from artifacts")
    p.add_argument("--adv", required=True, help="adversarial detections .jsonl")
    p.add_argument("--clean", required=True, help="clean detections .jsonl")
    p.add_argument("--campaign", default=None, help="attack results .jsonl")
    p.add_argument("--campaign-summary", default=None)
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--out", required=True, help="metrics JSON path")
    _add_common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("freq-stats",
                       help="replaced-vs-substitution frequency statistics")
    p.add_argument("--campaign", required=True, help="attack results .jsonl")
    p.add_argument("--campaign-summary", required=True)
    p.add_argument("--train", default=None)
    p.add_argument("--successful-only", action="store_true")
    p.add_argument("--out", required=True, help="stats CSV path")
    p.add_argument("--hist-csv", default=None)
    p.add_argument("--hist-svg", default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_freq_stats)

    p = sub.add_parser("sweep", help="TPR at a ladder of false-positive budgets")
    p.add_argument("--clean", required=True,
                   help="clean validation detections .jsonl (gamma source)")
    p.add_argument("--adv", required=True, help="adversarial detections .jsonl")
    p.add_argument("--budgets", default="0.01,0.05,0.10,0.20")
    p.add_argument("--tag", default="attack", help="label for the curve")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-svg", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("run-all", help="full pipeline from one config")
    _add_common(p)
    p.set_defaults(handler=cmd_run_all)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    try:
        summary = args.handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end orchestration: train, attack, tune, detect, evaluate, report.

One JSON config drives the whole run. Every stage persists its results as
JSON-lines or JSON under the configured output directory, so each later
stage (and any audit) can be replayed from files alone, and the final
manifest records a content hash per artifact: reruns with the same config
must reproduce every hash bit for bit.

Artifact layout under output_dir:
    model.json
    attacks/<tag>.jsonl, attacks/<tag>.summary.json
    tuning.json
    detections/<tag>.<method>.jsonl        adversarial inputs
    detections/clean.<method>.jsonl        clean test subset
    detections/validation_clean.fgws.jsonl sweep baseline
    report/freq_stats.csv, detection.csv, sweep.csv, report.json
    report/hist_<tag>.csv/.svg, sweep.svg
    manifest.json
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import report as report_files
from .attacks import (
    ATTACK_TAGS,
    AttackCampaign,
    AttackConfig,
    AttackResources,
    AttackResult,
    draw_subset,
    run_campaign,
)
from .classifier import MODEL_FAMILIES, accuracy, save_model, train
from .corpus import (
    FrequencyThreshold,
    Sequence,
    build_frequency_table,
    load_corpus,
    load_stopwords,
    percentile_threshold,
)
from .detector import (
    DetectionResult,
    DetectorConfig,
    detect_sequences,
    fgws_detect,
    gamma_from_scores,
    idempotence_guaranteed,
    tune_delta,
)
from .lexicon import CandidateSource, load_embeddings, load_synonyms
from .lm import TrigramLM
from .stats import bootstrap_eval, fpr_sweep, frequency_analysis, restored_accuracy

__all__ = [
    "ConfigError",
    "PipelineError",
    "RunConfig",
    "RunManifest",
    "load_run_config",
    "config_hash",
    "write_jsonl",
    "read_jsonl",
    "attack_result_to_dict",
    "attack_result_from_dict",
    "detection_to_dict",
    "detection_from_dict",
    "campaign_summary",
    "read_campaign",
    "unperturbed_effect",
    "run_all",
    "load_manifest",
]

_SUBSET_STREAM = 101  # keeps the subset draw off the per-sequence attack streams

DEFAULT_SETTINGS = {
    "model": {"family": "naive-bayes", "hyperparams": {}},
    "attacks": {
        "subset_size": 200,
        "max_replace_fraction": 0.20,
        "skip_stopwords": True,
        "equifrequent_band": None,
        "genetic": {
            "population_size": 60,
            "num_generations": 20,
            "embedding_distance_bound": 0.5,
            "lm_window": 5,
            "lm_top_k": 4,
        },
    },
    "detector": {
        "neighbor_count": 6,
        "metric": "euclidean",
        "q_grid": list(range(0, 101, 10)),
        "fpr_budget": 0.10,
        "gamma_policy": "per-q",  # "fixed" pins gamma to fixed_gamma for every q
        "fixed_gamma": None,
        "percentile_universe": "all",  # or "candidate-bearing"
        "sweep_budgets": [0.01, 0.05, 0.10, 0.20],
    },
    "eval": {"n_resamples": 10000},
}

_REQUIRED_PATHS = (
    "train", "validation", "test", "embeddings", "synonyms", "stopwords", "output_dir",
)


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int
    paths: dict  # name -> resolved Path
    settings: dict  # defaults merged with the user config
    raw: dict  # exactly what the file said; basis of the config hash


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    artifacts: dict  # relative path -> sha256
    timings: dict  # stage -> seconds


def _merge(defaults: dict, user: dict, prefix: str) -> dict:
    out = dict(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        dotted = prefix + key
        if (
            isinstance(defaults[key], dict)
            and isinstance(value, dict)
            and dotted != "model.hyperparams"  # family-specific, opaque here
        ):
            out[key] = _merge(defaults[key], value, dotted + ".")
        else:
            out[key] = value
    return out


def load_run_config(path, seed_override: int | None = None) -> RunConfig:
    """Parse and validate a run config; paths resolve relative to the file.

    A seed override replaces the file's seed before anything else, so the
    config hash reflects the seed the run actually used.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    if "seed" not in raw:
        raise ConfigError("config key 'seed' is mandatory")
    if not isinstance(raw["seed"], int) or isinstance(raw["seed"], bool):
        raise ConfigError("seed must be an integer")
    paths_raw = raw.get("paths")
    if not isinstance(paths_raw, dict):
        raise ConfigError("config key 'paths' (object) is mandatory")
    for key in _REQUIRED_PATHS:
        if key not in paths_raw:
            raise ConfigError(f"paths.{key} is missing")
    for key in paths_raw:
        if key not in _REQUIRED_PATHS:
            raise ConfigError(f"unknown path key paths.{key!r}")
    base = path.resolve().parent
    paths = {k: (base / str(v)).resolve() for k, v in paths_raw.items()}
    for key in _REQUIRED_PATHS:
        if key != "output_dir" and not paths[key].exists():
            raise ConfigError(f"paths.{key}: {paths[key]} does not exist")
    rest = {k: v for k, v in raw.items() if k not in ("seed", "paths")}
    settings = _merge(DEFAULT_SETTINGS, rest, "")
    if settings["model"]["family"] not in MODEL_FAMILIES:
        raise ConfigError(f"model.family must be one of {MODEL_FAMILIES}")
    det = settings["detector"]
    if det["gamma_policy"] not in ("per-q", "fixed"):
        raise ConfigError("detector.gamma_policy must be 'per-q' or 'fixed'")
    if det["gamma_policy"] == "fixed" and det["fixed_gamma"] is None:
        raise ConfigError("detector.fixed_gamma is required with gamma_policy 'fixed'")
    if det["percentile_universe"] not in ("all", "candidate-bearing"):
        raise ConfigError("detector.percentile_universe must be 'all' or 'candidate-bearing'")
    if settings["attacks"]["subset_size"] < 1:
        raise ConfigError("attacks.subset_size must be at least 1")
    return RunConfig(seed=raw["seed"], paths=paths, settings=settings, raw=raw)


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _np_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def _dumps(record) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), default=_np_default)


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(_dumps(record))
            fh.write("\n")


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2, default=_np_default))
        fh.write("\n")


def attack_result_to_dict(r: AttackResult) -> dict:
    return {
        "id": r.original.id,
        "label": r.original.label,
        "original": list(r.original.tokens),
        "perturbed": list(r.perturbed.tokens),
        "substitutions": [[i, old, new] for i, old, new in r.substitutions],
        "success": bool(r.success),
        "confidence_before": r.confidence_before,
        "confidence_after": r.confidence_after,
        "queries": r.queries,
    }


def attack_result_from_dict(d: dict) -> AttackResult:
    original = Sequence(tuple(d["original"]), d["label"], d["id"])
    return AttackResult(
        original=original,
        perturbed=original.with_tokens(tuple(d["perturbed"])),
        substitutions=tuple((i, old, new) for i, old, new in d["substitutions"]),
        success=bool(d["success"]),
        confidence_before=float(d["confidence_before"]),
        confidence_after=float(d["confidence_after"]),
        queries=int(d["queries"]),
    )


def campaign_summary(campaign: AttackCampaign, seed: int) -> dict:
    return {
        "attack": campaign.attack,
        "seed": seed,
        "subset_size": campaign.subset_size,
        "num_attacked": campaign.num_attacked,
        "num_successful": campaign.num_successful,
        "clean_accuracy": campaign.clean_accuracy,
        "after_attack_accuracy": campaign.after_attack_accuracy,
        "total_queries": campaign.total_queries,
    }


def read_campaign(jsonl_path, summary_path) -> AttackCampaign:
    """Rebuild a campaign from its two persisted artifacts."""
    summary = json.loads(Path(summary_path).read_text(encoding="utf-8"))
    results = tuple(attack_result_from_dict(d) for d in read_jsonl(jsonl_path))
    return AttackCampaign(
        attack=summary["attack"],
        results=results,
        subset_size=summary["subset_size"],
        num_attacked=summary["num_attacked"],
        num_successful=summary["num_successful"],
        clean_accuracy=summary["clean_accuracy"],
        after_attack_accuracy=summary["after_attack_accuracy"],
        total_queries=summary["total_queries"],
    )


def detection_from_dict(d: dict) -> DetectionResult:
    inp = Sequence(tuple(d["input"]), d["label"], d["id"])
    return DetectionResult(
        input=inp,
        transformed=inp.with_tokens(tuple(d["transformed"])),
        eligible_positions=tuple(d["eligible_positions"]),
        substitutions=tuple((i, old, new) for i, old, new in d["substitutions"]),
        predicted_label=int(d["predicted_label"]),
        score=float(d["score"]),
        flagged=bool(d["flagged"]),
        restored_label=int(d["restored_label"]),
    )


def detection_to_dict(det, method: str) -> dict:
    return {
        "id": det.input.id,
        "label": det.input.label,
        "method": method,
        "input": list(det.input.tokens),
        "transformed": list(det.transformed.tokens),
        "eligible_positions": list(det.eligible_positions),
        "substitutions": [[i, old, new] for i, old, new in det.substitutions],
        "predicted_label": det.predicted_label,
        "score": det.score,
        "flagged": bool(det.flagged),
        "restored_label": det.restored_label,
    }


def unperturbed_effect(model, sequences, config: DetectorConfig, table, source) -> float:
    """Accuracy change, in percentage points, from running the transform on
    clean data: accuracy(transformed) - accuracy(raw)."""
    sequences = list(sequences)
    before = after = 0
    for seq in sequences:
        det = fgws_detect(model, seq, config, table, source)
        before += det.predicted_label == seq.label
        after += det.restored_label == seq.label
    return 100.0 * (after - before) / len(sequences)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _attack_config(tag: str, settings: dict, stopwords, seed: int) -> AttackConfig:
    a = settings["attacks"]
    g = a["genetic"]
    return AttackConfig(
        attack=tag,
        max_replace_fraction=a["max_replace_fraction"],
        stopwords=stopwords,
        seed=seed,
        skip_stopwords=a["skip_stopwords"],
        population_size=g["population_size"],
        num_generations=g["num_generations"],
        embedding_distance_bound=g["embedding_distance_bound"],
        lm_window=g["lm_window"],
        lm_top_k=g["lm_top_k"],
        equifrequent_band=a["equifrequent_band"],
    )


def run_all(config: RunConfig, threads: int | None = None, log=None) -> RunManifest:
    """Run every stage and return the manifest; artifacts persist as they
    are produced, so a failing stage leaves the earlier ones on disk."""
    if log is None:
        log = lambda msg: print(msg, file=sys.stderr, flush=True)
    out = config.paths["output_dir"]
    for sub in ("attacks", "detections", "report"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    settings = config.settings
    det_settings = settings["detector"]
    seed = config.seed
    artifacts = {}
    timings = {}

    def emit(relpath: str):
        artifacts[relpath] = _sha256(out / relpath)

    def stage(name, fn):
        log(f"[{name}] start")
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise PipelineError(f"stage {name!r} failed: {exc}") from exc
        timings[name] = time.perf_counter() - t0
        log(f"[{name}] done in {timings[name]:.2f}s")
        return result

    state = {}

    def load_inputs():
        state["train"] = load_corpus(config.paths["train"], split="train")
        n_classes = state["train"].num_classes
        state["validation"] = load_corpus(
            config.paths["validation"], split="validation", num_classes=n_classes)
        state["test"] = load_corpus(config.paths["test"], split="test", num_classes=n_classes)
        state["stopwords"] = load_stopwords(config.paths["stopwords"])
        state["lexicon"] = load_synonyms(config.paths["synonyms"])
        state["space"] = load_embeddings(config.paths["embeddings"])

    def train_model():
        model = train(state["train"], settings["model"]["family"],
                      settings["model"]["hyperparams"])
        save_model(model, out / "model.json")
        emit("model.json")
        state["model"] = model
        state["accuracy"] = {
            split: accuracy(model, state[split]) for split in ("train", "validation", "test")
        }
        state["table"] = build_frequency_table(state["train"])
        state["lm"] = TrigramLM(state["train"])
        state["det_source"] = CandidateSource(
            state["lexicon"], state["space"],
            k=det_settings["neighbor_count"], metric=det_settings["metric"])
        state["resources"] = AttackResources(
            candidates=state["lexicon"], space=state["space"],
            lm=state["lm"], table=state["table"])

    def attack_stage():
        subset = draw_subset(state["test"], settings["attacks"]["subset_size"],
                             np.random.default_rng([seed, _SUBSET_STREAM]))
        state["subset"] = subset
        state["campaigns"] = {}
        for tag in ATTACK_TAGS:
            cfg = _attack_config(tag, settings, state["stopwords"], seed)
            campaign = run_campaign(state["model"], subset, state["resources"], cfg,
                                    threads=threads)
            write_jsonl(out / "attacks" / f"{tag}.jsonl",
                        (attack_result_to_dict(r) for r in campaign.results))
            emit(f"attacks/{tag}.jsonl")
            _write_json(out / "attacks" / f"{tag}.summary.json",
                        campaign_summary(campaign, seed))
            emit(f"attacks/{tag}.summary.json")
            state["campaigns"][tag] = campaign
            log(f"[attack] {tag}: {campaign.num_successful}/{campaign.num_attacked} "
                f"successful, after-attack accuracy {campaign.after_attack_accuracy:.3f}")

    def tuning_stage():
        universe = None
        if det_settings["percentile_universe"] == "candidate-bearing":
            universe = [w for w in state["table"].vocabulary()
                        if state["det_source"].candidates(w)]
        fixed_gamma = (det_settings["fixed_gamma"]
                       if det_settings["gamma_policy"] == "fixed" else None)
        tuning = tune_delta(
            state["model"], state["validation"], state["det_source"], state["table"],
            _attack_config("prioritized", settings, state["stopwords"], seed),
            q_grid=det_settings["q_grid"], fpr_budget=det_settings["fpr_budget"],
            percentile_words=universe, fixed_gamma=fixed_gamma, threads=threads)
        threshold = FrequencyThreshold(tuning.chosen_delta, tuning.chosen_q)
        # the naive baseline has no delta; only its gamma needs the budget
        placeholder = DetectorConfig(delta=threshold, gamma=0.0,
                                     neighbor_count=det_settings["neighbor_count"],
                                     fpr_budget=det_settings["fpr_budget"])
        nws_scores = [
            d.score for d in detect_sequences(
                state["model"], state["validation"].sequences, placeholder,
                state["table"], state["det_source"], method="nws", seed=seed,
                threads=threads)
        ]
        nws_gamma = gamma_from_scores(nws_scores, det_settings["fpr_budget"])
        state["threshold"] = threshold
        state["tuning"] = {
            "q_grid": list(tuning.q_grid),
            "per_q": list(tuning.per_q),
            "chosen": {"q": tuning.chosen_q, "delta": tuning.chosen_delta,
                       "gamma": tuning.chosen_gamma},
            "nws_gamma": nws_gamma,
            "gamma_policy": det_settings["gamma_policy"],
            "percentile_universe": det_settings["percentile_universe"],
        }
        _write_json(out / "tuning.json", state["tuning"])
        emit("tuning.json")
        log(f"[tune] q*={tuning.chosen_q} delta*={tuning.chosen_delta:.4f} "
            f"gamma*={tuning.chosen_gamma:.4f} nws_gamma={nws_gamma:.4f}")

    def detection_stage():
        threshold = state["threshold"]
        budget = det_settings["fpr_budget"]
        configs = {
            "fgws": DetectorConfig(delta=threshold, gamma=state["tuning"]["chosen"]["gamma"],
                                   neighbor_count=det_settings["neighbor_count"],
                                   fpr_budget=budget),
            "nws": DetectorConfig(delta=threshold, gamma=state["tuning"]["nws_gamma"],
                                  neighbor_count=det_settings["neighbor_count"],
                                  fpr_budget=budget),
        }
        state["det_configs"] = configs
        state["detections"] = {}
        for tag, campaign in state["campaigns"].items():
            adversarial = [r.perturbed for r in campaign.results if r.success]
            for method, cfg in configs.items():
                dets = detect_sequences(state["model"], adversarial, cfg, state["table"],
                                        state["det_source"], method=method, seed=seed,
                                        threads=threads)
                write_jsonl(out / "detections" / f"{tag}.{method}.jsonl",
                            (detection_to_dict(d, method) for d in dets))
                emit(f"detections/{tag}.{method}.jsonl")
                state["detections"][tag, method] = dets
        for method, cfg in configs.items():
            dets = detect_sequences(state["model"], state["subset"], cfg, state["table"],
                                    state["det_source"], method=method, seed=seed,
                                    threads=threads)
            write_jsonl(out / "detections" / f"clean.{method}.jsonl",
                        (detection_to_dict(d, method) for d in dets))
            emit(f"detections/clean.{method}.jsonl")
            state["detections"]["clean", method] = dets
        val_clean = detect_sequences(state["model"], state["validation"].sequences,
                                     configs["fgws"], state["table"], state["det_source"],
                                     method="fgws", seed=seed, threads=threads)
        write_jsonl(out / "detections" / "validation_clean.fgws.jsonl",
                    (detection_to_dict(d, "fgws") for d in val_clean))
        emit("detections/validation_clean.fgws.jsonl")
        state["detections"]["validation_clean", "fgws"] = val_clean

    def report_stage():
        table = state["table"]
        threshold = state["threshold"]
        freq_rows = []
        detection_rows = []
        sweep_curves = {}
        report = {
            "format_version": 1,
            "config_hash": config_hash(config.raw),
            "seed": seed,
            "clean_accuracy": dict(state["accuracy"]),
            "tuning": state["tuning"],
            "campaigns": {},
            "frequency": {},
            "detection": [],
            "sweep": {},
            "bootstrap_tpr_averaged": False,  # adversarial set is fixed
        }
        val_scores = [d.score for d in state["detections"]["validation_clean", "fgws"]]
        for tag in ATTACK_TAGS:
            campaign = state["campaigns"][tag]
            report["campaigns"][tag] = campaign_summary(campaign, seed)
            phis = [(table.phi(old), table.phi(new))
                    for r in campaign.results for _, old, new in r.substitutions]
            if len(phis) >= 2:
                row = frequency_analysis(campaign, table)
                freq_rows.append(row)
                report["frequency"][tag] = {
                    c: getattr(row, c) for c in row.__dataclass_fields__
                }
                report_files.frequency_histogram(
                    [p[0] for p in phis], [p[1] for p in phis],
                    f"{tag}: replaced vs substitutions",
                    out / "report" / f"hist_{tag}.csv", out / "report" / f"hist_{tag}.svg")
                emit(f"report/hist_{tag}.csv")
                emit(f"report/hist_{tag}.svg")
            else:
                report["frequency"][tag] = None
                log(f"[report] {tag}: too few substitution pairs for frequency analysis")
            for method in ("fgws", "nws"):
                adv = state["detections"][tag, method]
                clean = state["detections"]["clean", method]
                if not adv:
                    detection_rows.append({"attack": tag, "method": method})
                    continue
                metrics = bootstrap_eval(
                    adv, clean, n_resamples=settings["eval"]["n_resamples"], seed=seed,
                    restored_accuracy=restored_accuracy(campaign, adv),
                    after_attack_accuracy=100.0 * campaign.after_attack_accuracy)
                detection_rows.append({
                    "attack": tag, "method": method, "tpr": metrics.tpr,
                    "fpr": metrics.fpr, "precision": metrics.precision,
                    "f1": metrics.f1, "restored_accuracy": metrics.restored_accuracy,
                    "after_attack_accuracy": metrics.after_attack_accuracy,
                })
            adv_scores = [d.score for d in state["detections"][tag, "fgws"]]
            if adv_scores:
                sweep_curves[tag] = fpr_sweep(val_scores, adv_scores,
                                              det_settings["sweep_budgets"])
        report["detection"] = detection_rows
        report["sweep"] = sweep_curves
        report_files.write_freq_stats_csv(freq_rows, out / "report" / "freq_stats.csv")
        emit("report/freq_stats.csv")
        report_files.write_detection_csv(detection_rows, out / "report" / "detection.csv")
        emit("report/detection.csv")
        report_files.write_sweep_csv(sweep_curves, out / "report" / "sweep.csv")
        emit("report/sweep.csv")
        report_files.sweep_figure(sweep_curves, out / "report" / "sweep.svg")
        emit("report/sweep.svg")
        report["unperturbed_effect_points"] = unperturbed_effect(
            state["model"], state["subset"], state["det_configs"]["fgws"],
            table, state["det_source"])
        fgws_dets = state["detections"]["clean", "fgws"] + [
            d for tag in ATTACK_TAGS for d in state["detections"][tag, "fgws"]
        ]
        report["fgws_idempotence_guaranteed_fraction"] = (
            sum(idempotence_guaranteed(d.substitutions, table, threshold) for d in fgws_dets)
            / len(fgws_dets)
        )
        report_files.write_json_report(report, out / "report" / "report.json")
        emit("report/report.json")
        state["report"] = report

    stage("load-inputs", load_inputs)
    stage("train", train_model)
    stage("attack", attack_stage)
    stage("tune", tuning_stage)
    stage("detect", detection_stage)
    stage("report", report_stage)

    manifest = RunManifest(config_hash=config_hash(config.raw),
                           artifacts=artifacts, timings=timings)
    _write_json(out / "manifest.json", {
        "format_version": 1,
        "config_hash": manifest.config_hash,
        "artifacts": manifest.artifacts,
        "timings": manifest.timings,
    })
    return manifest


def load_manifest(path) -> RunManifest:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(config_hash=blob["config_hash"],
                       artifacts=blob["artifacts"], timings=blob["timings"])

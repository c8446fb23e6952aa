"""Command-line interface tests.

Each command runs in-process through main() so exit codes and the one-line
stdout summary are asserted directly; one subprocess test exercises the
installed console script. The detect scenario mirrors the worked example: a
review with two rare-word substitutions is restored and flagged at
gamma 0.5 with the delta from the 90th frequency percentile.
"""

import json
import subprocess
import sys

import jsonschema
import pytest

from fgws.cli import SUMMARY_SCHEMA, main

from conftest import DATA, write_tsv


def run_cli(capsys, args, expect=0):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    assert code == expect, f"exit {code} != {expect}\nstderr: {err}"
    if expect != 0:
        assert out.strip() == ""   # summaries only on success
        return err
    lines = out.strip().splitlines()
    assert len(lines) == 1, f"stdout must be a single summary line: {lines}"
    payload = json.loads(lines[0])
    jsonschema.validate(payload, SUMMARY_SCHEMA)
    return payload


def test_summary_schema_is_valid_draft7():
    jsonschema.Draft7Validator.check_schema(SUMMARY_SCHEMA)


# ---------------------------------------------------------------- usage errors


def test_no_arguments_is_usage_error(capsys):
    run_cli(capsys, [], expect=1)


def test_unknown_subcommand_is_usage_error(capsys):
    err = run_cli(capsys, ["explode"], expect=1)
    assert "invalid choice" in err


def test_missing_required_flag_is_usage_error(capsys):
    run_cli(capsys, ["detect", "--model", "m.json"], expect=1)


def test_run_all_requires_config(capsys):
    err = run_cli(capsys, ["run-all"], expect=1)
    assert "requires --config" in err


def test_detect_without_thresholds_is_usage_error(capsys, tmp_path, fig_dir):
    err = run_cli(capsys, [
        "detect", "--method", "fgws", "--model", fig_dir / "model.json",
        "--in", fig_dir / "adv.tsv", "--train", fig_dir / "train.tsv",
        "--synonyms", fig_dir / "synonyms.tsv", "--neighbors", 0,
        "--out", tmp_path / "d.jsonl",
    ], expect=1)
    assert "detect needs" in err


def test_bad_numeric_list_is_usage_error(capsys, tmp_path, fig_dir):
    run_cli(capsys, [
        "sweep", "--clean", fig_dir / "det_clean.jsonl",
        "--adv", fig_dir / "det_clean.jsonl", "--budgets", "0.1,zero",
        "--out-csv", tmp_path / "s.csv", "--out-svg", tmp_path / "s.svg",
    ], expect=1)


# ---------------------------------------------------------------- data errors


def test_malformed_corpus_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("1 no tab here\n")
    run_cli(capsys, ["train", "--train", bad, "--out", tmp_path / "m.json"], expect=2)


def test_missing_model_exits_2(capsys, tmp_path, fig_dir):
    run_cli(capsys, [
        "detect", "--method", "fgws", "--model", tmp_path / "absent.json",
        "--in", fig_dir / "adv.tsv", "--train", fig_dir / "train.tsv",
        "--synonyms", fig_dir / "synonyms.tsv", "--neighbors", 0,
        "--gamma", 0.5, "--delta-q", 90, "--out", tmp_path / "d.jsonl",
    ], expect=2)


def test_empty_detection_file_exits_2(capsys, tmp_path, fig_dir):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    run_cli(capsys, [
        "eval", "--adv", empty, "--clean", fig_dir / "det_clean.jsonl",
        "--out", tmp_path / "m.json",
    ], expect=2)


def test_failing_pipeline_stage_exits_3(capsys, tmp_path):
    # single-class train split: validation labels fall outside its range
    write_tsv(tmp_path / "train.tsv", [(0, "hello world")] * 3)
    config = {
        "seed": 1,
        "paths": {
            "train": str(tmp_path / "train.tsv"),
            "validation": str(DATA / "validation.tsv"),
            "test": str(DATA / "test.tsv"),
            "synonyms": str(DATA / "synonyms.tsv"),
            "embeddings": str(DATA / "embeddings.txt"),
            "stopwords": str(DATA / "stopwords.txt"),
            "output_dir": str(tmp_path / "out"),
        },
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    err = run_cli(capsys, ["run-all", "--config", path], expect=3)
    assert "stage" in err


# ---------------------------------------------------------------- worked example


@pytest.fixture(scope="module")
def fig_dir(tmp_path_factory):
    """Corpus shaped like the worked detection example, plus a trained model.

    'smart' and 'sweet' are the only positive signals; 'odoriferous' is a
    rare negative word and 'impertinent' never occurs in training. The
    90th-percentile delta lands above both, below the frequent fillers.
    """
    d = tmp_path_factory.mktemp("cli-fig")
    pos = "a smart sweet and playful romantic comedy"
    neg = "a dreary dull and playful romantic comedy"
    write_tsv(d / "train.tsv",
              [(1, pos)] * 15 + [(0, neg)] * 15
              + [(0, "an odoriferous dreadful mess")] * 3)
    write_tsv(d / "adv.tsv", [
        (1, "a impertinent odoriferous and playful romantic comedy"),
        (1, pos),
    ])
    (d / "synonyms.tsv").write_text(
        "impertinent\tsmart\nodoriferous\tsweet\n"
        "smart\timpertinent\nsweet\todoriferous\n")
    assert main(["train", "--train", str(d / "train.tsv"),
                 "--out", str(d / "model.json")]) == 0
    # clean-side detections for eval/sweep inputs
    assert main(["detect", "--method", "fgws", "--model", str(d / "model.json"),
                 "--in", str(d / "train.tsv"), "--split", "test",
                 "--train", str(d / "train.tsv"),
                 "--synonyms", str(d / "synonyms.tsv"), "--neighbors", "0",
                 "--gamma", "0.5", "--delta-q", "90",
                 "--out", str(d / "det_clean.jsonl")]) == 0
    return d


def test_detect_restores_and_flags_substituted_review(capsys, tmp_path, fig_dir):
    out = tmp_path / "det.jsonl"
    payload = run_cli(capsys, [
        "detect", "--method", "fgws", "--model", fig_dir / "model.json",
        "--in", fig_dir / "adv.tsv", "--train", fig_dir / "train.tsv",
        "--synonyms", fig_dir / "synonyms.tsv", "--neighbors", 0,
        "--gamma", 0.5, "--delta-q", 90, "--out", out,
    ])
    assert payload["details"]["num_flagged"] == 1
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    attacked, clean = rows
    assert attacked["flagged"] is True
    assert attacked["score"] > 0.5
    assert attacked["predicted_label"] == 0
    assert attacked["restored_label"] == 1
    assert attacked["substitutions"] == [[1, "impertinent", "smart"],
                                         [2, "odoriferous", "sweet"]]
    assert attacked["transformed"][1:3] == ["smart", "sweet"]
    assert clean["flagged"] is False
    assert clean["substitutions"] == []


def test_detect_explicit_delta_overrides_tuning_artifact(capsys, tmp_path, fig_dir):
    tuning = tmp_path / "tuning.json"
    tuning.write_text(json.dumps({
        "chosen": {"q": 50, "delta": 99.0, "gamma": 0.9}, "nws_gamma": 0.9}))
    payload = run_cli(capsys, [
        "detect", "--method", "fgws", "--model", fig_dir / "model.json",
        "--in", fig_dir / "adv.tsv", "--train", fig_dir / "train.tsv",
        "--synonyms", fig_dir / "synonyms.tsv", "--neighbors", 0,
        "--tuning", tuning, "--delta", 0.25, "--gamma", 0.5,
        "--out", tmp_path / "d.jsonl",
    ])
    assert payload["details"]["delta"] == 0.25
    assert payload["details"]["gamma"] == 0.5


def test_detect_delta_q_matches_percentile(capsys, tmp_path, fig_dir):
    from fgws import build_frequency_table, load_corpus, percentile_threshold
    table = build_frequency_table(load_corpus(fig_dir / "train.tsv", split="train"))
    payload = run_cli(capsys, [
        "detect", "--method", "fgws", "--model", fig_dir / "model.json",
        "--in", fig_dir / "adv.tsv", "--train", fig_dir / "train.tsv",
        "--synonyms", fig_dir / "synonyms.tsv", "--neighbors", 0,
        "--gamma", 0.5, "--delta-q", 90, "--out", tmp_path / "d.jsonl",
    ])
    assert payload["details"]["delta"] == percentile_threshold(table, 90).delta


def test_detect_threads_do_not_change_output(capsys, tmp_path, fig_dir):
    outs = []
    for threads in (1, 3):
        out = tmp_path / f"d{threads}.jsonl"
        run_cli(capsys, [
            "detect", "--method", "fgws", "--model", fig_dir / "model.json",
            "--in", fig_dir / "adv.tsv", "--train", fig_dir / "train.tsv",
            "--synonyms", fig_dir / "synonyms.tsv", "--neighbors", 0,
            "--gamma", 0.5, "--delta-q", 90, "--out", out,
            "--threads", threads,
        ])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_console_script_entry_point(fig_dir, tmp_path):
    help_run = subprocess.run(["fgws", "--help"], capture_output=True, text=True)
    assert help_run.returncode == 0
    assert "usage: fgws" in help_run.stdout
    train_run = subprocess.run(
        ["fgws", "train", "--train", str(fig_dir / "train.tsv"),
         "--out", str(tmp_path / "m.json")],
        capture_output=True, text=True)
    assert train_run.returncode == 0, train_run.stderr
    payload = json.loads(train_run.stdout)
    jsonschema.validate(payload, SUMMARY_SCHEMA)
    assert (tmp_path / "m.json").exists()


# ---------------------------------------------------------------- toy-data flow


@pytest.fixture(scope="module")
def flow(tmp_path_factory):
    return tmp_path_factory.mktemp("cli-flow")


def _toy(*pairs):
    args = []
    for flag, name in pairs:
        args += [flag, DATA / name]
    return args


def test_flow_train(capsys, flow):
    payload = run_cli(capsys, [
        "train", "--train", DATA / "train.tsv", "--family", "naive-bayes",
        "--out", flow / "model.json", "--seed", 7,
    ])
    assert payload["details"]["family"] == "naive-bayes"
    assert payload["details"]["train_accuracy"] > 0.9
    assert (flow / "model.json").exists()


def test_flow_attack(capsys, flow):
    payload = run_cli(capsys, [
        "attack", "--attack", "prioritized", "--model", flow / "model.json",
        "--in", DATA / "test.tsv", "--subset-size", 40,
        "--synonyms", DATA / "synonyms.tsv", "--stopwords", DATA / "stopwords.txt",
        "--out", flow / "adv.jsonl", "--seed", 7,
    ])
    details = payload["details"]
    assert details["attack"] == "prioritized"
    assert details["subset_size"] == 40
    assert 0 < details["num_successful"] <= details["num_attacked"] <= 40
    assert (flow / "adv.jsonl.summary.json").exists()
    assert len((flow / "adv.jsonl").read_text().splitlines()) == details["num_attacked"]


def test_flow_tune(capsys, flow):
    payload = run_cli(capsys, [
        "tune", "--model", flow / "model.json",
        "--train", DATA / "train.tsv", "--validation", DATA / "validation.tsv",
        "--synonyms", DATA / "synonyms.tsv", "--stopwords", DATA / "stopwords.txt",
        "--neighbors", 0, "--q-grid", "30,50,70", "--out", flow / "tuning.json",
        "--seed", 7,
    ])
    chosen = payload["details"]
    assert chosen["q"] in (30, 50, 70)
    blob = json.loads((flow / "tuning.json").read_text())
    assert len(blob["per_q"]) == 3
    assert blob["chosen"] == chosen
    assert 0.0 <= blob["nws_gamma"] <= 1.0


def test_flow_detect_both_sides(capsys, flow):
    for name, infile, extra in (
        ("det_adv.jsonl", flow / "adv.jsonl", ["--successful-only"]),
        ("det_clean.jsonl", DATA / "test.tsv", []),
    ):
        payload = run_cli(capsys, [
            "detect", "--method", "fgws", "--model", flow / "model.json",
            "--in", infile, "--train", DATA / "train.tsv",
            "--synonyms", DATA / "synonyms.tsv", "--neighbors", 0,
            "--tuning", flow / "tuning.json", "--out", flow / name, "--seed", 7,
        ] + extra)
        assert payload["details"]["num_sequences"] > 0
    adv_rows = [json.loads(l) for l in (flow / "det_adv.jsonl").read_text().splitlines()]
    summary = json.loads((flow / "adv.jsonl.summary.json").read_text())
    assert len(adv_rows) == summary["num_successful"]
    # the tuned detector should catch most prioritized attacks
    assert sum(r["flagged"] for r in adv_rows) / len(adv_rows) > 0.5


def test_flow_eval(capsys, flow):
    payload = run_cli(capsys, [
        "eval", "--adv", flow / "det_adv.jsonl", "--clean", flow / "det_clean.jsonl",
        "--campaign", flow / "adv.jsonl",
        "--campaign-summary", flow / "adv.jsonl.summary.json",
        "--resamples", 500, "--out", flow / "metrics.json", "--seed", 7,
    ])
    metrics = json.loads((flow / "metrics.json").read_text())
    assert metrics == payload["details"]
    assert 0.0 <= metrics["fpr"] <= 100.0
    assert metrics["f1"] > 50.0
    assert metrics["restored_accuracy"] is not None
    assert metrics["after_attack_accuracy"] is not None


def test_flow_freq_stats(capsys, flow):
    payload = run_cli(capsys, [
        "freq-stats", "--campaign", flow / "adv.jsonl",
        "--campaign-summary", flow / "adv.jsonl.summary.json",
        "--train", DATA / "train.tsv", "--out", flow / "freq.csv",
        "--hist-csv", flow / "hist.csv", "--hist-svg", flow / "hist.svg",
    ])
    assert payload["details"]["d"] > 0.5   # substitutions are rarer words
    assert payload["details"]["num_pairs"] >= 2
    assert (flow / "freq.csv").read_text().count("\n") == 2  # header + one row
    assert "<svg" in (flow / "hist.svg").read_text()


def test_flow_sweep(capsys, flow):
    payload = run_cli(capsys, [
        "sweep", "--clean", flow / "det_clean.jsonl", "--adv", flow / "det_adv.jsonl",
        "--budgets", "0.05,0.10,0.20", "--tag", "prioritized",
        "--out-csv", flow / "sweep.csv", "--out-svg", flow / "sweep.svg",
    ])
    rows = payload["details"]["rows"]
    assert [r["budget"] for r in rows] == [0.05, 0.10, 0.20]
    assert rows[0]["tpr"] <= rows[-1]["tpr"]
    assert "<svg" in (flow / "sweep.svg").read_text()


def test_run_all_cli_smoke(capsys, tmp_path):
    # tiny settings keep the full pipeline to a few seconds
    config = {
        "seed": 5,
        "paths": {
            "train": str(DATA / "train.tsv"),
            "validation": str(DATA / "validation.tsv"),
            "test": str(DATA / "test.tsv"),
            "synonyms": str(DATA / "synonyms.tsv"),
            "embeddings": str(DATA / "embeddings.txt"),
            "stopwords": str(DATA / "stopwords.txt"),
            "output_dir": str(tmp_path / "out"),
        },
        "attacks": {"subset_size": 25,
                    "genetic": {"population_size": 12, "num_generations": 4}},
        "detector": {"q_grid": [30, 50, 70]},
        "eval": {"n_resamples": 300},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    payload = run_cli(capsys, ["run-all", "--config", path, "--threads", 2])
    assert payload["seed"] == 5
    assert payload["details"]["stages"] == [
        "load-inputs", "train", "attack", "tune", "detect", "report"]
    out = tmp_path / "out"
    assert (out / "manifest.json").exists()
    report = json.loads((out / "report" / "report.json").read_text())
    assert report["config_hash"] == payload["details"]["config_hash"]

"""Shared fixtures.

The session-scoped `toy_run` executes the bundled end-to-end config once
into a temp directory; acceptance and pipeline tests read its artifacts.
Everything else is small enough to build per test.
"""

import json
from pathlib import Path

import pytest

from fgws import (
    RunConfig, build_frequency_table, load_corpus, load_embeddings,
    load_run_config, load_stopwords, load_synonyms, run_all, train,
)

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data" / "toy"
TOY_CONFIG = ROOT / "configs" / "toy.json"


@pytest.fixture(scope="session")
def toy_paths():
    return {
        "train": DATA / "train.tsv",
        "validation": DATA / "validation.tsv",
        "test": DATA / "test.tsv",
        "synonyms": DATA / "synonyms.tsv",
        "embeddings": DATA / "embeddings.txt",
        "stopwords": DATA / "stopwords.txt",
    }


@pytest.fixture(scope="session")
def toy_corpora(toy_paths):
    train_c = load_corpus(toy_paths["train"], split="train")
    val_c = load_corpus(toy_paths["validation"], split="validation",
                        num_classes=train_c.num_classes)
    test_c = load_corpus(toy_paths["test"], split="test",
                         num_classes=train_c.num_classes)
    return train_c, val_c, test_c


@pytest.fixture(scope="session")
def toy_model(toy_corpora):
    return train(toy_corpora[0], "naive-bayes", {})


@pytest.fixture(scope="session")
def toy_table(toy_corpora):
    return build_frequency_table(toy_corpora[0])


@pytest.fixture(scope="session")
def toy_lexicons(toy_paths):
    return (load_synonyms(toy_paths["synonyms"]),
            load_embeddings(toy_paths["embeddings"]),
            load_stopwords(toy_paths["stopwords"]))


def run_toy_pipeline(out_dir: Path, threads=1):
    """run_all on the bundled config, redirected into out_dir."""
    cfg = load_run_config(TOY_CONFIG)
    redirected = RunConfig(seed=cfg.seed,
                           paths={**cfg.paths, "output_dir": out_dir},
                           settings=cfg.settings, raw=cfg.raw)
    manifest = run_all(redirected, threads=threads, log=lambda _: None)
    return redirected, manifest


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy-run")
    config, manifest = run_toy_pipeline(out, threads=1)
    report = json.loads((out / "report" / "report.json").read_text())
    return {"config": config, "manifest": manifest, "out": out, "report": report}


def write_tsv(path: Path, rows):
    path.write_text("".join(f"{label}\t{text}\n" for label, text in rows),
                    encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, after the test summary."""
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid or "criterion" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            parts = name.split("_")  # test criterion NN slug...
            num = int(parts[2])
            slug = " ".join(parts[3:])
            status = "PASS" if outcome == "passed" else "FAIL"
            # a criterion is green only if every phase of it passed
            if results.get(num, (None, None))[0] != "FAIL":
                results[num] = (status, slug)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            status, slug = results[num]
            terminalreporter.write_line(f"criterion {num:2d}: {status}  {slug}")

"""End-to-end command line runs on a small corpus.

Everything here goes through main(argv) in-process so exit codes and
artifacts are checked exactly as a shell user would see them.
"""

import json

import pytest

from argcloze.cli import main
from argcloze.vocab import SPECIAL_TOKENS

GEN_ARGS = ["--event-types", "3", "--roles-per-type", "2",
            "--sentences", "60", "--seed", "5"]
FAST_TRAIN = ["--steps", "30", "--pretrain-steps", "40", "--batch-size", "16"]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    data = tmp_path_factory.mktemp("data")
    assert main(["generate", "--out", str(data)] + GEN_ARGS) == 0
    return data


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("train")
    rc = main(
        ["train", "--data", str(corpus_dir), "--out", str(out),
         "--mode", "pseudo", "--pseudo-length", "4"] + FAST_TRAIN
    )
    assert rc == 0
    return out


def test_generate_writes_the_corpus(corpus_dir, capsys):
    for name in ("ontology.json", "corpus.jsonl", "splits.json"):
        assert (corpus_dir / name).exists()
    other = corpus_dir.parent / "again"
    assert main(["generate", "--out", str(other)] + GEN_ARGS) == 0
    assert "60 mentions" in capsys.readouterr().out
    for name in ("ontology.json", "corpus.jsonl", "splits.json"):
        assert (other / name).read_bytes() == (corpus_dir / name).read_bytes()


def test_train_writes_checkpoint_logs_and_summary(trained_dir):
    assert (trained_dir / "checkpoint.npz").exists()

    log_rows = [
        json.loads(line)
        for line in (trained_dir / "log.jsonl").read_text().splitlines()
    ]
    assert len(log_rows) == 30
    for row in log_rows:
        assert row["l_total"] == row["l_eae"] + row["l_mlm"]
        assert row["mode"] == "pseudo"

    pre_rows = (trained_dir / "pretrain_log.jsonl").read_text().splitlines()
    assert len(pre_rows) == 40

    summary = json.loads((trained_dir / "summary.json").read_text())
    assert summary["frozen"] is True
    assert summary["steps"] == 30
    assert 0.0 <= summary["dev"]["f1"] <= 1.0

    projection = json.loads((trained_dir / "projection.json").read_text())
    assert projection["metric"] == "cosine"
    assert [s["slot"] for s in projection["slots"]] == [1, 2, 3, 4]
    assert all(s["token"] not in SPECIAL_TOKENS for s in projection["slots"])


def test_eval_scores_a_split(trained_dir, corpus_dir, tmp_path, capsys):
    rc = main(
        ["eval", "--checkpoint", str(trained_dir / "checkpoint.npz"),
         "--data", str(corpus_dir), "--split", "test",
         "--predictions", "--out", str(tmp_path)]
    )
    assert rc == 0
    assert "test: P " in capsys.readouterr().out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["split"] == "test"
    assert report["n_candidates"] > 0
    assert 0.0 <= report["f1"] <= 1.0
    predictions = json.loads((tmp_path / "predictions.json").read_text())
    assert len(predictions) == report["n_candidates"]


def test_eval_without_splits_needs_split_all(trained_dir, corpus_dir, tmp_path):
    bare = tmp_path / "bare"
    bare.mkdir()
    for name in ("ontology.json", "corpus.jsonl"):
        (bare / name).write_bytes((corpus_dir / name).read_bytes())
    ckpt = str(trained_dir / "checkpoint.npz")
    args = ["eval", "--checkpoint", ckpt, "--data", str(bare),
            "--out", str(tmp_path / "out")]
    assert main(args + ["--split", "test"]) == 1
    assert main(args + ["--split", "all"]) == 0


def test_project_reports_nearest_tokens(trained_dir, tmp_path, capsys):
    rc = main(
        ["project", "--checkpoint", str(trained_dir / "checkpoint.npz"),
         "--metric", "l2", "--out", str(tmp_path)]
    )
    assert rc == 0
    assert "[u1] ->" in capsys.readouterr().out
    projection = json.loads((tmp_path / "projection.json").read_text())
    assert projection["metric"] == "l2"
    assert len(projection["slots"]) == 4


def test_output_dir_env_var_is_honored(trained_dir, tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("ARGCLOZE_OUTPUT_DIR", str(target))
    rc = main(["project", "--checkpoint", str(trained_dir / "checkpoint.npz")])
    assert rc == 0
    assert (target / "projection.json").exists()


def test_usage_problems_exit_1(corpus_dir, tmp_path):
    assert main(["train"]) == 1                      # missing --data
    assert main(["no-such-command"]) == 1
    assert main(["train", "--data", str(corpus_dir), "--steps", "not-a-number",
                 "--out", str(tmp_path)]) == 1


def test_mode_template_mismatch_exits_1(corpus_dir, tmp_path):
    template = tmp_path / "template.json"
    template.write_text(json.dumps(
        {"kind": "manual", "pattern": "role of {arg} is {MASK}"}
    ))
    rc = main(
        ["train", "--data", str(corpus_dir), "--out", str(tmp_path / "out"),
         "--mode", "pseudo", "--template", str(template),
         "--steps", "3", "--pretrain-steps", "0"]
    )
    assert rc == 1


def test_missing_checkpoint_exits_2(corpus_dir, tmp_path):
    rc = main(
        ["eval", "--checkpoint", str(tmp_path / "nope.npz"),
         "--data", str(corpus_dir), "--out", str(tmp_path)]
    )
    assert rc == 2


def test_divergent_training_exits_2(corpus_dir, tmp_path):
    rc = main(
        ["train", "--data", str(corpus_dir), "--out", str(tmp_path),
         "--mode", "base", "--learning-rate", "1e6",
         "--steps", "10", "--pretrain-steps", "0"]
    )
    assert rc == 2


def test_base_checkpoints_hold_no_prompts(corpus_dir, tmp_path):
    out = tmp_path / "base"
    rc = main(
        ["train", "--data", str(corpus_dir), "--out", str(out),
         "--mode", "base", "--steps", "5", "--pretrain-steps", "0"]
    )
    assert rc == 0
    assert not (out / "projection.json").exists()
    rc = main(["project", "--checkpoint", str(out / "checkpoint.npz"),
               "--out", str(tmp_path / "proj")])
    assert rc == 1


def test_small_sweep_artifacts(corpus_dir, tmp_path, capsys):
    out = tmp_path / "sweep"
    rc = main(
        ["sweep", "--data", str(corpus_dir), "--out", str(out),
         "--k", "2,1", "--seeds", "2", "--steps", "5",
         "--pretrain-steps", "5", "--batch-size", "8", "--pseudo-length", "4"]
    )
    assert rc == 0
    assert "median" in capsys.readouterr().out
    sweep = json.loads((out / "sweep.json").read_text())
    assert sweep["seeds"] == [0, 1]
    assert sorted(sweep["summary"]) == ["1", "2"]  # k values, sorted ascending
    assert len(sweep["rows"]) == 4
    for row in sweep["rows"]:
        assert set(row) >= {"k", "seed", "f1", "n_test"}
        assert row["n_test"] > 0
    episodes = json.loads((out / "episodes.json").read_text())
    assert len(episodes) == 4
    for ep in episodes:
        assert set(ep["train_ids"]).isdisjoint(ep["test_ids"])

import csv
import json

import pytest

from pairnilm import dataio
from pairnilm.cli import main

FAST = ["--hidden", "6", "--max-iterations", "20", "--patience", "3"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    argv = ["synth", "--houses", "4", "--instances", "1", "--periods", "6",
            "--fs", "1500", "--fg", "50", "--seed", "2", str(out)]
    assert main(argv) == 0
    return out


def test_synth_default_layout(tmp_path):
    assert main(["synth", "--periods", "2", str(tmp_path / "c")]) == 0
    meta = json.loads((tmp_path / "c" / "metadata.json").read_text())
    assert len(meta) == 144
    assert len(list((tmp_path / "c").glob("*.csv"))) == 144


def test_synth_same_seed_same_digest(corpus, tmp_path):
    argv = ["synth", "--houses", "4", "--instances", "1", "--periods", "6",
            "--fs", "1500", "--fg", "50", "--seed", "2", str(tmp_path / "again")]
    assert main(argv) == 0
    assert dataio.corpus_digest(tmp_path / "again") == dataio.corpus_digest(corpus)


def test_bad_output_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", str(blocker / "sub")]) != 0
    assert "error:" in capsys.readouterr().err


def test_missing_corpus(tmp_path):
    assert main(["crossval", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 1


def test_crossval_both_rules(corpus, tmp_path):
    for rule in ("weighted", "majority"):
        out = tmp_path / rule
        assert main(["crossval", str(corpus), "--voting", rule, "--out", str(out)] + FAST) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["voting"] == rule
        assert rep["alpha"] is not None and rep["kappa"] is not None
        assert len(rep["per_house"]) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["outputs"]) == {"report.json", "report.txt"}
        assert manifest["corpus_digest"] == dataio.corpus_digest(corpus)


def test_crossval_prior_knowledge(corpus, tmp_path):
    assert main(["crossval", str(corpus), "--prior-knowledge", "--out", str(tmp_path / "pk")] + FAST) == 0
    assert json.loads((tmp_path / "pk" / "report.json").read_text())["prior_knowledge"] is True


def test_rerun_reproduces(corpus, tmp_path, capsys):
    out = tmp_path / "cv"
    assert main(["crossval", str(corpus), "--out", str(out)] + FAST) == 0
    capsys.readouterr()
    assert main(["rerun", str(out / "manifest.json")]) == 0
    assert "bit-identically" in capsys.readouterr().out


def test_size_study_identity(corpus, tmp_path):
    cv = tmp_path / "cv"
    st = tmp_path / "st"
    assert main(["crossval", str(corpus), "--out", str(cv)] + FAST) == 0
    assert main(["study", "size", str(corpus), "--values", "1.0", "--out", str(st)] + FAST) == 0
    rows = list(csv.DictReader((st / "study_size.csv").open()))
    rep = json.loads((cv / "report.json").read_text())
    assert len(rows) == 1 and float(rows[0]["alpha"]) == rep["alpha"]


def test_phase_study_rows(corpus, tmp_path):
    assert main(["study", "phase", str(corpus), "--values", "0,30,60", "--out", str(tmp_path / "p")] + FAST) == 0
    rows = list(csv.DictReader((tmp_path / "p" / "study_phase.csv").open()))
    assert [r["x"] for r in rows] == ["0", "30", "60"]


def test_freq_study_rejects_fractional_period(corpus, tmp_path, capsys):
    code = main(["study", "freq", str(corpus), "--values", "725", "--out", str(tmp_path / "f")] + FAST)
    assert code == 1
    assert "not an integer" in capsys.readouterr().err


def test_train_predict(corpus, tmp_path):
    model = tmp_path / "model"
    assert main(["train", str(corpus), "--out", str(model)] + FAST) == 0
    assert (model / "ensemble.json").exists()
    preds = tmp_path / "p.csv"
    assert main(["predict", str(model), str(corpus), "--out", str(preds)]) == 0
    rows = list(csv.DictReader(preds.open()))
    assert len(rows) == 16 and all(r["predicted"] for r in rows)

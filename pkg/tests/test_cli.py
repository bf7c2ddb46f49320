import filecmp
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ecgrecon.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, run
from ecgrecon.dataio import read_csv, read_weight_tensors
from ecgrecon.leads import LEAD_NAMES

SUBCOMMANDS = ("synth", "mask", "train", "reconstruct", "eval", "report")


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert run(["synth", "--n", "8", "--seed", "7", "--out", str(d)]) == EXIT_OK
    return d


def test_synth_layout(corpus):
    man = json.loads((corpus / "manifest.json").read_text())
    assert len(man["records"]) == 8
    assert sorted(man["train"] + man["val"] + man["test"]) == sorted(man["records"])
    gt = json.loads((corpus / "ground_truth.json").read_text())
    assert set(gt) == set(man["records"])
    rec = read_csv(corpus / (man["records"][0] + ".csv"))
    assert rec.samples.shape == (12, 512)
    assert rec.sampling_rate == pytest.approx(51.2)


def test_synth_byte_identical(corpus, tmp_path):
    assert run(["synth", "--n", "8", "--seed", "7", "--out", str(tmp_path)]) == EXIT_OK
    names = sorted(os.listdir(corpus))
    assert names == sorted(os.listdir(tmp_path))
    _, mismatch, errors = filecmp.cmpfiles(corpus, tmp_path, names, shallow=False)
    assert mismatch == [] and errors == []


def test_synth_raw_rate(tmp_path):
    assert run(["synth", "--n", "1", "--raw", "--out", str(tmp_path)]) == EXIT_OK
    rec = read_csv(next(tmp_path.glob("*.csv")))
    assert rec.sampling_rate == 500 and rec.n_samples == 5000


def test_mask_keeps_primer(corpus, tmp_path):
    src = next(corpus.glob("*.csv"))
    out = tmp_path / "m.csv"
    assert run(["mask", str(src), "--config", "C3", "--seed", "2", "--out", str(out)]) == EXIT_OK
    orig, masked = read_csv(src), read_csv(out)
    doc = json.loads((tmp_path / "m.mask.json").read_text())
    assert doc["config"] == "C3"
    keep = np.zeros((12, 512), bool)
    for i, name in enumerate(LEAD_NAMES):
        for s, e in doc["primer"][name]:
            keep[i, s:e] = True
    assert keep.sum() == 12 * 128  # each lead keeps one quarter
    np.testing.assert_array_equal(masked.samples[keep], orig.samples[keep])
    noise = masked.samples[~keep]
    assert noise.min() >= 0 and noise.max() < 1


def test_reconstruct_copypaste(corpus, tmp_path):
    src = next(corpus.glob("*.csv"))
    m = tmp_path / "m.csv"
    run(["mask", str(src), "--config", "C_I", "--out", str(m)])
    out = tmp_path / "r.csv"
    assert run(["reconstruct", str(m), "--method", "copypaste", "--out", str(out)]) == EXIT_OK
    r = read_csv(out)
    np.testing.assert_array_equal(r.samples[0], read_csv(src).samples[0])
    # lead I is copied to every other lead
    np.testing.assert_array_equal(r.samples, np.repeat(r.samples[:1], 12, axis=0))


def test_reconstruct_needs_mask(corpus, tmp_path):
    src = next(corpus.glob("*.csv"))
    assert run(["reconstruct", str(src), "--method", "copypaste", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE
    assert run(["reconstruct", str(src), "--config", "C1", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


def test_eval_copypaste(corpus, tmp_path):
    out = tmp_path / "metrics.csv"
    assert run(["eval", "--data", str(corpus), "--split", "all", "--method", "copypaste",
                "--configs", "C_I,C3", "--out", str(out)]) == EXIT_OK
    summary = json.loads((tmp_path / "metrics.summary.json").read_text())
    assert set(summary) >= {"C_I", "C3"} or "configs" in summary
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 2 * 8 * 12


def test_train_and_model_reconstruct(corpus, tmp_path):
    w = tmp_path / "w.ecgr"
    assert run(["train", "--data", str(corpus), "--epochs", "1", "--batch", "16",
                "--pairs-per-epoch", "16", "--out", str(w)]) == EXIT_OK
    assert "enc0.conv2d.weight" in read_weight_tensors(w)
    log = (tmp_path / "w.epochs.csv").read_text().splitlines()
    assert len(log) == 2
    src = next(corpus.glob("*.csv"))
    m = tmp_path / "m.csv"
    run(["mask", str(src), "--config", "C2", "--out", str(m)])
    out = tmp_path / "r.csv"
    assert run(["reconstruct", str(m), "--weights", str(w), "--out", str(out)]) == EXIT_OK
    assert read_csv(out).samples.shape == (12, 512)


def test_report(corpus, tmp_path):
    met = tmp_path / "metrics.csv"
    run(["eval", "--data", str(corpus), "--split", "all", "--method", "copypaste",
         "--configs", "C3", "--no-clinical", "--out", str(met)])
    out = tmp_path / "rep"
    assert run(["report", "--metrics", str(met), "--out", str(out), "--data", str(corpus),
                "--split", "all"]) == EXIT_OK
    md = (out / "report.md").read_text()
    assert "### C3" in md and "| Lead |" in md
    svgs = list(out.glob("C3_*.svg"))
    assert len(svgs) == 1
    assert svgs[0].read_text().startswith("<svg")


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help(cmd, capsys):
    assert run([cmd, "--help"]) == EXIT_OK
    assert "usage: ecgrecon " + cmd in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["synth", "--bogus"], ["mask", "x.csv"],
                                  ["train", "--data", "d", "--model", "huge"], ["synth", "--hr", "fast"]])
def test_usage_errors(argv, capsys):
    assert run(argv) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_data_errors(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not a record\n")
    assert run(["mask", str(bad), "--config", "C1", "--out", str(tmp_path / "o.csv")]) == EXIT_DATA
    assert run(["mask", str(tmp_path / "missing.csv"), "--config", "C1", "--out", "o.csv"]) == EXIT_DATA
    assert run(["eval", "--data", str(tmp_path / "nope"), "--method", "copypaste"]) == EXIT_DATA
    assert run(["reconstruct", str(bad), "--config", "C1", "--method", "copypaste",
                "--out", str(tmp_path / "o.csv")]) == EXIT_DATA
    assert "ecgrecon:" in capsys.readouterr().err


def test_unknown_mask_name_is_data_error(corpus, tmp_path):
    src = next(corpus.glob("*.csv"))
    assert run(["mask", str(src), "--config", "C9", "--out", str(tmp_path / "o.csv")]) == EXIT_DATA


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "ecgrecon.cli", "eval", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--configs" in r.stdout

"""Acceptance criteria, one test each.

Every test prints (and records for the end-of-run summary) a single
``[PASS]``/``[FAIL]`` line with its runtime against the budget.
"""

import filecmp
import itertools
import os
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from ecgrecon import autodiff as ad
from ecgrecon import fiducials as F
from ecgrecon import kernels
from ecgrecon import metrics as M
from ecgrecon.baseline import copy_paste
from ecgrecon.cli import run as cli
from ecgrecon.dataio import build_dataset, load_weights, save_weights, split_records
from ecgrecon.leads import LEAD_NAMES, assemble_record
from ecgrecon.loss import LossParams, loss_components, mse_loss, pearson_loss
from ecgrecon.masking import MaskConfig, apply_mask, mask_catalog, primer_mask, retained_fraction
from ecgrecon.model import DESK_CONFIG, Model, ModelConfig
from ecgrecon.preprocess import preprocess_record
from ecgrecon.synth import SynthConfig, synth_generate
from ecgrecon.train import TrainConfig, train

sys.path.insert(0, os.path.dirname(__file__))
from test_autodiff import CASES  # noqa: E402
from test_model import model_fd_error  # noqa: E402

LEAD_II = 1


@contextmanager
def criterion(record_property, number, title, budget_s):
    detail = {}
    t0 = time.perf_counter()
    status = "FAIL"
    try:
        yield detail
        elapsed = time.perf_counter() - t0
        assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - t0
        info = ", ".join(f"{k}={v}" for k, v in detail.items())
        line = f"[{status}] criterion {number}: {title} ({elapsed:.1f} s of {budget_s} s) {info}".rstrip()
        print(line)
        record_property("acceptance", line)


def _working(n, seed):
    recs, truths = synth_generate(SynthConfig(num_records=n, seed=seed))
    return [preprocess_record(r) for r in recs], truths


# 1 -------------------------------------------------------------------------------

def test_c01_mask_geometry(record_property):
    with criterion(record_property, 1, "Segment(1) keeps 1/12 of a 12x512 record", 1) as d:
        mask = primer_mask(MaskConfig.segment(1), 512)
        kept = retained_fraction(mask)
        d["retained"] = f"{kept:.5f}"
        assert abs(kept - 1 / 12) <= 2 / 512
        assert 1 - kept >= 0.915
        # each lead keeps exactly one contiguous window, and the windows tile time
        assert np.array_equal(mask.keep.sum(axis=0), np.ones(512, dtype=int))


# 2 -------------------------------------------------------------------------------

def test_c02_augmentation_cardinality(record_property):
    with criterion(record_property, 2, "4498 ids x 17 masks = 76466 pairs", 5) as d:
        ids = [f"id{i:05d}" for i in range(4498)]
        pairs = build_dataset(ids, seed=0)
        d["pairs"] = len(pairs)
        assert len(pairs) == 76466
        assert len({(p.source_id, p.config_name) for p in pairs}) == 76466


# 3 -------------------------------------------------------------------------------

def test_c03_gradient_correctness(record_property):
    seeds = range(20)
    with criterion(record_property, 3, "finite-difference gradients, 20 seeds", 120) as d:
        worst_op = 0.0
        for name, seed in itertools.product(sorted(CASES), seeds):
            fn, inputs = CASES[name](np.random.default_rng([seed, 3]))
            worst_op = max(worst_op, ad.fd_check(fn, inputs, h=1e-5, seed=seed))
        worst_model = max(model_fd_error(seed) for seed in seeds)
        d["ops"] = f"{worst_op:.2e}"
        d["model"] = f"{worst_model:.2e}"
        assert worst_op < 1e-3
        assert worst_model < 1e-3


# 4 -------------------------------------------------------------------------------

def test_c04_loss_identities(record_property):
    with criterion(record_property, 4, "loss identities", 30) as d:
        r = np.random.default_rng(4)
        x_hat = r.uniform(-1, 1, (8, 12, 512))
        x = r.uniform(-1, 1, (8, 12, 512))
        comp, _, _ = loss_components(x_hat, x, LossParams(alpha=0.0))
        assert comp.data.tobytes() == mse_loss(x_hat, x).data.tobytes()

        a = r.standard_normal((10_000, 1, 64)) * r.uniform(0.01, 10, (10_000, 1, 1))
        b = r.standard_normal((10_000, 1, 64))
        b[: 2_500] = a[: 2_500] * r.uniform(0.1, 3, (2_500, 1, 1))   # near-perfect pairs
        b[2_500: 5_000] = -a[2_500: 5_000]                          # anti-correlated pairs
        vals = np.array([float(pearson_loss(a[k:k + 1], b[k:k + 1]).data) for k in range(10_000)])
        d["pearson_range"] = f"[{vals.min():.3g}, {vals.max():.3g}]"
        assert np.all((vals >= 0) & (vals <= 2))

        worst = 0.0
        for k in range(200):
            y = r.standard_normal((1, 12, 128))
            yh = r.standard_normal((1, 12, 128))
            base = float(pearson_loss(yh, y).data)
            scale = r.uniform(0.1, 10, (1, 12, 1))
            shift = r.uniform(-5, 5, (1, 12, 1))
            worst = max(worst, abs(float(pearson_loss(yh * scale + shift, y).data) - base))
        d["affine_change"] = f"{worst:.1e}"
        assert worst < 1e-6


# 5 -------------------------------------------------------------------------------

def monotone_paths(n, m, corners=True):
    """Incidence matrix (cells x paths) of monotone alignment paths.

    With ``corners=False`` a path never turns directly between a horizontal
    and a vertical step. Local costs are non-negative, so replacing such a
    turn with one diagonal step never raises the cost: the minimum over the
    reduced set equals the minimum over all paths.
    """
    out = []

    def go(i, j, last, cells):
        if (i, j) == (n - 1, m - 1):
            out.append(cells)
            return
        for step, (di, dj) in (("D", (1, 1)), ("V", (1, 0)), ("H", (0, 1))):
            if i + di < n and j + dj < m:
                if not corners and {last, step} == {"H", "V"}:
                    continue
                go(i + di, j + dj, step, cells + [(i + di) * m + j + dj])

    go(0, 0, None, [0])
    inc = np.zeros((n * m, len(out)), dtype=np.float32)
    for k, cells in enumerate(out):
        inc[cells, k] = 1
    return inc


def _enumerated_costs(a, b, paths):
    n, m = a.shape[1], b.shape[1]
    d = np.abs(a[:, None, :, None] - b[None, :, None, :]).astype(np.float32).reshape(-1, n * m)
    return (d @ paths).min(axis=1)  # integer sums <= 33: exact in float32


def test_c05_dtw_exhaustive(record_property):
    with criterion(record_property, 5, "DTW equals path enumeration, all pairs len<=6 over {0..3}", 60) as d:
        seqs = {L: np.array(list(itertools.product(range(4), repeat=L)), dtype=np.float64)
                for L in range(1, 7)}
        # the turn-free reduction agrees with full enumeration where that is affordable
        for n, m in itertools.product(range(1, 5), repeat=2):
            full, reduced = monotone_paths(n, m), monotone_paths(n, m, corners=False)
            assert np.array_equal(_enumerated_costs(seqs[n], seqs[m], full),
                                  _enumerated_costs(seqs[n], seqs[m], reduced))
        checked = mismatched = 0
        for n, m in itertools.product(range(1, 7), repeat=2):
            paths = monotone_paths(n, m, corners=False)
            A, B = seqs[n], seqs[m]
            step = max(1, (1 << 18) // len(B))
            for lo in range(0, len(A), step):
                a = A[lo:lo + step]
                oracle = _enumerated_costs(a, B, paths)
                cost, length = kernels.dtw_many(np.repeat(a, len(B), axis=0), np.tile(B, (len(a), 1)))
                mismatched += int(np.count_nonzero(cost != oracle))
                assert np.all((length >= max(n, m)) & (length <= n + m - 1))
                checked += cost.size
        d["pairs"] = checked
        d["backend"] = kernels.BACKEND
        assert checked == sum(4 ** n for n in range(1, 7)) ** 2
        assert mismatched == 0


# 6 -------------------------------------------------------------------------------

def test_c06_fiducial_accuracy(record_property):
    with criterion(record_property, 6, "R recall and QT accuracy on 200 records at 51.2 Hz", 120) as d:
        recs, truths = _working(200, seed=0)
        fs = recs[0].sampling_rate
        found = n_true = qt_ok = n_beats = 0
        for rec, gt in zip(recs, truths):
            x = rec.samples[LEAD_II]
            peaks = np.asarray(F.detect_r_peaks(x, fs)) / fs
            for t in gt.r_times:
                n_true += 1
                found += bool(peaks.size) and np.min(np.abs(peaks - t)) <= 0.03
            for a in F.annotate(x, fs):
                if np.min(np.abs(gt.r_times - a.r_index / fs)) > 0.03:
                    continue
                n_beats += 1
                if a.q_onset_index is not None and a.t_end_index is not None:
                    qt_ok += abs((a.t_end_index - a.q_onset_index) / fs - gt.qt_s) <= 0.02
            assert M.delta_qt(rec, rec, "II") == 0.0
        recall, qt_rate = found / n_true, qt_ok / n_beats
        d["recall"] = f"{recall:.3f}"
        d["qt_within_20ms"] = f"{qt_rate:.3f}"
        d["beats"] = n_beats
        assert recall >= 0.95
        assert qt_rate >= 0.95


# 7 -------------------------------------------------------------------------------

def _c3_masked_pcc(reconstructor, records):
    rep = M.evaluate(reconstructor, records, ["C3"], seed=0, masked_region_only=True, clinical=False)[0]
    return rep.mean("pcc")


@pytest.mark.slow
def test_c07_desk_training(record_property):
    with criterion(record_property, 7, "desk-scale training smoke", 1800) as d:
        recs, _ = _working(512, seed=0)
        recs = [r.replace(samples=r.samples.astype(np.float32)) for r in recs]
        split = split_records(recs)
        pairs = build_dataset(split["train"], seed=0)
        held_out = split["test"]
        results = {}
        for alpha in (0.1, 0.0):
            cfg = TrainConfig(epochs=30, batch_size=16, alpha=alpha, seed=0, pairs_per_epoch=256)
            model, hist = train(Model.build(DESK_CONFIG, init_seed=0), pairs, cfg)
            results[alpha] = (hist, _c3_masked_pcc(model, held_out))
        hist, pcc = results[0.1]
        noise = _c3_masked_pcc(M.noise_reconstructor(seed=0), held_out)
        d["epoch1"] = f"{hist[0].composite:.4f}"
        d["final"] = f"{hist[-1].composite:.4f}"
        d["pcc_a0.1"] = f"{pcc:.3f}"
        d["pcc_a0"] = f"{results[0.0][1]:.3f}"
        d["pcc_noise"] = f"{noise:.3f}"
        assert hist[-1].composite < 0.5 * hist[0].composite
        assert pcc >= 0.6
        assert abs(noise) < 0.1 and pcc > noise
        assert pcc >= results[0.0][1]


# 8 -------------------------------------------------------------------------------

def test_c08_copypaste_contract(record_property):
    with criterion(record_property, 8, "CopyPaste keeps primers on 17 configs x 64 records", 10) as d:
        recs, _ = _working(64, seed=8)
        checked = 0
        for cfg in mask_catalog():
            mask = primer_mask(cfg, 512)
            for i, rec in enumerate(recs):
                masked = apply_mask(rec, mask, rng_seed=i)
                out = copy_paste(masked)
                assert np.array_equal(out.samples[mask.keep], rec.samples[mask.keep])
                if cfg.name == "C_I":
                    assert np.array_equal(out.samples, np.repeat(rec.samples[:1], 12, axis=0))
                checked += 1
        d["cases"] = checked
        assert checked == 17 * 64


# 9 -------------------------------------------------------------------------------

def test_c09_model_shape_and_size(record_property):
    with criterion(record_property, 9, "model maps 12x512 into (-1,1); size in range", 10) as d:
        model = Model.build(ModelConfig(), init_seed=0)
        n = model.parameter_count()
        x = np.random.default_rng(9).uniform(-1, 1, (2, 12, 512)).astype(np.float32)
        y = model.reconstruct_batch(x)
        d["params"] = n
        assert y.shape == (2, 12, 512)
        assert np.all(np.abs(y) < 1)
        assert 3e6 <= n <= 1.2e7


# 10 ------------------------------------------------------------------------------

def _pipeline(root):
    data, work = root / "data", root / "work"
    work.mkdir()
    assert cli(["synth", "--n", "24", "--seed", "10", "--out", str(data)]) == 0
    first = sorted(p for p in os.listdir(data) if p.endswith(".csv"))[0]
    assert cli(["mask", str(data / first), "--config", "C3", "--seed", "1",
                "--out", str(work / "masked.csv")]) == 0
    assert cli(["train", "--data", str(data), "--epochs", "2", "--batch", "16", "--seed", "3",
                "--pairs-per-epoch", "32", "--out", str(work / "w.ecgr")]) == 0
    assert cli(["eval", "--data", str(data), "--weights", str(work / "w.ecgr"), "--configs", "C3,C_II",
                "--split", "test", "--out", str(work / "metrics.csv")]) == 0
    return data, work


def test_c10_persistence_and_determinism(record_property, tmp_path):
    with criterion(record_property, 10, "weights round-trip and pipeline reruns byte-identical", 300) as d:
        model = Model.build(DESK_CONFIG, init_seed=10)
        save_weights(model, tmp_path / "m.ecgr")
        back = load_weights(tmp_path / "m.ecgr")
        for k, v in model.state_dict().items():
            assert np.asarray(v, dtype=np.float32).tobytes() == back.state_dict()[k].tobytes()
        x = np.random.default_rng(10).uniform(-1, 1, (1, 12, 512)).astype(np.float32)
        assert model.reconstruct_batch(x).tobytes() == back.reconstruct_batch(x).tobytes()

        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        runs = [_pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")]
        compared = 0
        for sub in (0, 1):
            left, right = runs[0][sub], runs[1][sub]
            names = sorted(os.listdir(left))
            assert names == sorted(os.listdir(right))
            _, mismatch, errors = filecmp.cmpfiles(left, right, names, shallow=False)
            assert mismatch == [] and errors == []
            compared += len(names)
        d["files"] = compared


# 11 ------------------------------------------------------------------------------

def _einthoven_ok(samples):
    s = np.asarray(samples)
    err = np.abs(s[0] + s[2] - s[1])
    return bool(np.all(err <= 4 * np.spacing(np.maximum(np.abs(s[0]), np.abs(s[1])) + 1e-30)))


def test_c11_einthoven(record_property):
    with criterion(record_property, 11, "I + III = II within 4 ulp", 5) as d:
        r = np.random.default_rng(11)
        n = 0
        for dtype in (np.float64, np.float32):
            for _ in range(200):
                leads = [r.standard_normal(500) * 10 ** r.uniform(-3, 3) for _ in range(8)]
                assert _einthoven_ok(assemble_record(leads, 500, dtype=dtype).samples)
                n += 1
        recs, _ = synth_generate(SynthConfig(num_records=16, seed=11))
        for rec in recs:
            assert _einthoven_ok(rec.samples)
            n += 1
        d["records"] = n

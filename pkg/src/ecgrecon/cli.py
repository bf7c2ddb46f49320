"""Command-line interface: ``ecgrecon <command> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .leads import InvalidInputError, LEAD_NAMES

log = logging.getLogger("ecgrecon")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _floats(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from None
    return lo, hi


# -- corpus on disk ------------------------------------------------------------------

def _corpus_ids(directory):
    man = os.path.join(directory, "manifest.json")
    if os.path.exists(man):
        with open(man, encoding="utf-8") as f:
            doc = json.load(f)
        if "records" in doc:
            return doc["records"], doc
        return doc.get("train", []) + doc.get("val", []) + doc.get("test", []), doc
    ids = sorted(os.path.splitext(n)[0] for n in os.listdir(directory) if n.endswith(".csv"))
    return ids, None


def load_corpus(directory, split="all"):
    """Records of a corpus directory, preprocessed to the working grid if needed."""
    from .dataio import read_csv, split_ids
    from .preprocess import preprocess_record
    if not os.path.isdir(directory):
        raise InvalidInputError(f"no corpus directory {directory!r}")
    ids, doc = _corpus_ids(directory)
    if split != "all":
        splits = doc if doc and split in doc else split_ids(ids)
        ids = splits[split]
    out = []
    for rid in ids:
        rec = read_csv(os.path.join(directory, rid + ".csv"), record_id=rid)
        if rec.n_samples != 512:
            rec = preprocess_record(rec)
        out.append(rec)
    if not out:
        raise InvalidInputError(f"{directory}: no records in split {split!r}")
    return out


# -- commands ----------------------------------------------------------------------

def cmd_synth(a):
    from .dataio import split_ids, write_csv
    from .preprocess import preprocess_record
    from .synth import SynthConfig, synth_generate
    cfg = SynthConfig(num_records=a.n, heart_rate_bpm=a.hr, qt_s=a.qt, qrs_s=a.qrs,
                      baseline_wander_amp=a.wander, noise_std=a.noise, seed=a.seed)
    records, truths = synth_generate(cfg)
    os.makedirs(a.out, exist_ok=True)
    gt = {}
    for rec, t in zip(records, truths):
        out = rec if a.raw else preprocess_record(rec)
        write_csv(out, os.path.join(a.out, rec.id + ".csv"))
        gt[rec.id] = t.to_dict()
    with open(os.path.join(a.out, "ground_truth.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(gt, f, indent=2, sort_keys=True)
        f.write("\n")
    ids = [r.id for r in records]
    doc = {"records": ids, **split_ids(ids)}
    with open(os.path.join(a.out, "manifest.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(records)} records to {a.out}")


def _mask_to_json(masked, config_name, seed):
    from .report import _runs
    return {"config": config_name, "seed": seed, "source_id": masked.source_id,
            "n_samples": int(masked.samples.shape[1]),
            "primer": {name: [[int(s), int(e)] for s, e in _runs(masked.mask.keep[i])]
                       for i, name in enumerate(LEAD_NAMES)}}


def _mask_from_json(doc):
    from .masking import PrimerMask
    keep = np.zeros((len(LEAD_NAMES), doc["n_samples"]), dtype=bool)
    for i, name in enumerate(LEAD_NAMES):
        for s, e in doc["primer"][name]:
            keep[i, s:e] = True
    return PrimerMask(keep, doc["config"])


def cmd_mask(a):
    from .dataio import read_csv, write_csv
    from .leads import EcgRecord
    from .masking import MaskConfig, apply_mask, primer_mask
    rec = read_csv(a.input)
    cfg = MaskConfig.parse(a.config, seed=a.seed)
    masked = apply_mask(rec, primer_mask(cfg, rec.n_samples), rng_seed=a.seed)
    write_csv(EcgRecord(masked.samples, rec.sampling_rate, id=rec.id), a.out)
    mask_path = a.mask_out or os.path.splitext(a.out)[0] + ".mask.json"
    with open(mask_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_mask_to_json(masked, cfg.name, a.seed), f, indent=2)
        f.write("\n")


def _model_config(name):
    from .model import DESK_CONFIG, ModelConfig
    return {"desk": DESK_CONFIG, "full": ModelConfig()}[name]


def cmd_train(a):
    from dataclasses import replace

    from .dataio import build_dataset, save_weights
    from .loss import LossParams
    from .model import Model
    from .train import TrainConfig, alpha_sweep, train
    lp = LossParams.parse(a.alpha)
    cfg = TrainConfig(epochs=a.epochs, batch_size=a.batch, lr=a.lr, alpha=lp.alpha,
                      pearson_only=lp.pearson_only, seed=a.seed,
                      checkpoint_every=a.checkpoint_every, pairs_per_epoch=a.pairs_per_epoch)
    train_recs = [r.replace(samples=r.samples.astype(np.float32)) for r in load_corpus(a.data, "train")]
    pairs = build_dataset(train_recs, seed=a.seed)
    mcfg = _model_config(a.model)
    if a.sweep:
        eval_recs = load_corpus(a.data, "test")
        rows = alpha_sweep(mcfg, pairs, eval_recs, config=replace(cfg), init_seed=a.seed, seed=a.seed)
        with open(a.out, "w", encoding="utf-8", newline="\n") as f:
            f.write("| alpha | PCC | RMSE | MAE | DTW | final composite |\n|---|---|---|---|---|---|\n")
            for r in rows:
                f.write(f"| {r['alpha']} | {r['pcc']:.3f} | {r['rmse']:.3f} | {r['mae_mean']:.3f} "
                        f"| {r['dtw']:.3f} | {r['final_composite']:.4f} |\n")
        print(f"wrote sweep table to {a.out}")
        return
    val = None
    if a.validate:
        val = build_dataset(load_corpus(a.data, "val"), seed=a.seed + 1)
    model = Model.build(mcfg, init_seed=a.seed)
    ckpt = a.checkpoint_dir or (os.path.splitext(a.out)[0] + ".ckpt" if a.checkpoint_every else None)
    model, hist = train(model, pairs, cfg, val_pairs=val, checkpoint_dir=ckpt,
                        log_path=a.log or os.path.splitext(a.out)[0] + ".epochs.csv",
                        progress=lambda e: print(f"epoch {e.epoch}: composite {e.composite:.5f} "
                                                 f"mse {e.mse:.5f} pearson {e.pearson:.5f}", flush=True))
    save_weights(model, a.out)
    print(f"wrote {a.out}")


def _reconstructor(method, weights):
    if method == "copypaste":
        return "copypaste"
    if not weights:
        raise UsageError("--weights is required with --method model")
    from .dataio import load_weights
    return load_weights(weights)


def cmd_reconstruct(a):
    from .baseline import copy_paste
    from .dataio import read_csv, write_csv
    from .masking import MaskConfig, MaskedEcg, primer_mask
    rec = read_csv(a.input)
    mask_path = a.mask or os.path.splitext(a.input)[0] + ".mask.json"
    if os.path.exists(mask_path):
        with open(mask_path, encoding="utf-8") as f:
            mask = _mask_from_json(json.load(f))
    elif a.config:
        cfg = MaskConfig.parse(a.config, seed=a.seed)
        mask = primer_mask(cfg, rec.n_samples)
    else:
        raise UsageError("need --mask (or a .mask.json next to the input) or --config")
    masked = MaskedEcg(rec.samples, mask, rec.id, rec.sampling_rate)
    rc = _reconstructor(a.method, a.weights)
    if rc == "copypaste":
        out = copy_paste(masked)
    else:
        out = rc.forward(masked)
    write_csv(out.replace(id=rec.id), a.out)


def _threads(a):
    if a.threads is not None:
        return a.threads
    env = os.environ.get("ECGR_THREADS", "")
    return int(env) if env.isdigit() and int(env) > 0 else 1


def _configs(text):
    from .masking import MaskConfig, mask_catalog
    if text in ("all", "catalog"):
        return mask_catalog()
    return [MaskConfig.parse(c.strip()) for c in text.split(",") if c.strip()]


def cmd_eval(a):
    from .metrics import evaluate, write_report_csv, write_summary_json
    records = load_corpus(a.data, a.split)
    rc = _reconstructor(a.method, a.weights)
    reports = evaluate(rc, records, _configs(a.configs), seed=a.seed,
                       masked_region_only=a.masked_only, clinical=not a.no_clinical,
                       threads=_threads(a))
    write_report_csv(reports, a.out)
    summary = a.summary or os.path.splitext(a.out)[0] + ".summary.json"
    write_summary_json(reports, summary)
    for r in reports:
        print(f"{r.config_name}: pcc {r.aggregates['pcc'][0]:.3f} rmse {r.aggregates['rmse'][0]:.3f}")


def cmd_report(a):
    from .metrics import masked_inputs, read_report_csv, reconstruct_all
    from .report import markdown_report, traces_svg
    reports = read_report_csv(a.metrics)
    os.makedirs(a.out, exist_ok=True)
    with open(os.path.join(a.out, "report.md"), "w", encoding="utf-8", newline="\n") as f:
        f.write(markdown_report(reports))
    if a.data:
        records = load_corpus(a.data, a.split)[: max(1, a.examples)]
        rc = _reconstructor(a.method, a.weights)
        for rep in reports:
            masked = masked_inputs(records, rep.config_name, a.seed)
            for rec, m, y in zip(records, masked, reconstruct_all(rc, masked)):
                name = f"{rep.config_name}_{rec.id}.svg"
                with open(os.path.join(a.out, name), "w", encoding="utf-8", newline="\n") as f:
                    f.write(traces_svg(rec, y, m.mask.keep, title=f"{rep.config_name} / {rec.id}"))
    print(f"wrote report to {a.out}")


# -- parser ------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="ecgrecon", description="12-lead ECG reconstruction from partial recordings.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--n", type=int, default=8, help="number of records")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="corpus", help="output directory")
    s.add_argument("--hr", type=_floats, default=(50.0, 90.0), help="heart rate range LO,HI (bpm)")
    s.add_argument("--qt", type=_floats, default=(0.36, 0.44), help="QT range LO,HI (s)")
    s.add_argument("--qrs", type=_floats, default=(0.08, 0.11), help="QRS range LO,HI (s)")
    s.add_argument("--wander", type=float, default=0.05, help="baseline wander amplitude")
    s.add_argument("--noise", type=float, default=0.01, help="white noise std")
    s.add_argument("--raw", action="store_true", help="keep 500 Hz instead of the 512-point grid")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("mask", help="mask one record")
    s.add_argument("input", help="record CSV")
    s.add_argument("--config", required=True, help="C1..C5, C_<lead>, C_Rdm or C_real-life")
    s.add_argument("--seed", type=int, default=0, help="noise fill (and C_Rdm) seed")
    s.add_argument("--out", required=True, help="masked CSV")
    s.add_argument("--mask-out", help="mask JSON (default: <out>.mask.json)")
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("train", help="train a model on a corpus")
    s.add_argument("--data", required=True, help="corpus directory")
    s.add_argument("--alpha", default="0.1", help="Pearson weight, or 'inf' for Pearson only")
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch", type=int, default=16)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model", choices=("desk", "full"), default="desk")
    s.add_argument("--pairs-per-epoch", type=int, default=None)
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.add_argument("--checkpoint-dir")
    s.add_argument("--log", help="epoch log CSV (default: <out>.epochs.csv)")
    s.add_argument("--validate", action="store_true", help="score the val split every epoch")
    s.add_argument("--sweep", action="store_true",
                   help="train once per alpha in {0, 0.1, 0.5, 1, inf}; --out gets a markdown table")
    s.add_argument("--out", default="weights.ecgr")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("reconstruct", help="reconstruct one masked record")
    s.add_argument("input", help="masked CSV")
    s.add_argument("--method", choices=("model", "copypaste"), default="model")
    s.add_argument("--weights")
    s.add_argument("--mask", help="mask JSON written by 'mask'")
    s.add_argument("--config", help="mask configuration, when no mask JSON is available")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("eval", help="score a reconstructor over mask configurations")
    s.add_argument("--data", required=True)
    s.add_argument("--configs", default="all", help="comma-separated names, or 'all'")
    s.add_argument("--method", choices=("model", "copypaste"), default="model")
    s.add_argument("--weights")
    s.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--masked-only", action="store_true", help="distortion metrics on masked cells only")
    s.add_argument("--no-clinical", action="store_true", help="skip fiducial-based metrics")
    s.add_argument("--threads", type=int, default=None, help="worker threads (default: $ECGR_THREADS or 1)")
    s.add_argument("--out", default="metrics.csv")
    s.add_argument("--summary", help="JSON summary (default: <out>.summary.json)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="markdown tables and SVG traces from a metric CSV")
    s.add_argument("--metrics", required=True)
    s.add_argument("--out", default="report")
    s.add_argument("--data", help="corpus for example traces")
    s.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    s.add_argument("--method", choices=("model", "copypaste"), default="copypaste")
    s.add_argument("--weights")
    s.add_argument("--examples", type=int, default=1, help="traces per configuration")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_report)
    return p


def run(argv=None):
    """Run one command and return its exit status (``--help`` returns 0)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "ecgrecon: error: a command is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as e:  # argparse after --help
        return EXIT_OK if e.code in (None, 0) else EXIT_USAGE
    except UsageError as e:
        print(str(e).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, ValueError, OSError, KeyError) as e:
        print(f"ecgrecon: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main(argv=None):
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())

"""Distortion and clinical metrics, and per-configuration evaluation reports.

``dtw`` here is classic dynamic time warping (absolute-difference cost,
unit steps, no window), not soft-DTW.
"""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import fiducials, kernels
from .baseline import copy_paste
from .leads import LEAD_NAMES, N_LEADS, EcgRecord, InvalidInputError, lead_ordinal
from .masking import MaskConfig, apply_mask, mask_seed, primer_mask

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("pcc", "rmse", "mae_mean", "mae_max", "dtw",
                  "delta_qt_s", "delta_qrs_s", "r_detect_pct", "sqi_avg_qrs")
CSV_COLUMNS = ("config", "record", "lead") + METRIC_COLUMNS
CLINICAL = ("delta_qt_s", "delta_qrs_s", "r_detect_pct", "sqi_avg_qrs")
R_MATCH_S = 0.05


def _vectors(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise InvalidInputError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidInputError("empty input")
    return a, b


def pcc(a, b, eps=1e-12):
    """Pearson correlation; 0 when either vector is (numerically) constant."""
    a, b = _vectors(a, b)
    da, db = a - a.mean(), b - b.mean()
    den = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if den <= eps:
        return 0.0
    return float(np.clip(np.dot(da, db) / den, -1.0, 1.0))


def rmse(a, b):
    a, b = _vectors(a, b)
    d = np.abs(a - b)
    s = d.max()
    if s == 0 or not np.isfinite(s):
        return float(s)
    # scaled so tiny differences do not underflow when squared
    return float(s * np.sqrt(np.mean((d / s) ** 2)))


def mae(a, b, mode="mean"):
    """Mean (default) or maximum absolute error."""
    a, b = _vectors(a, b)
    d = np.abs(a - b)
    if mode == "mean":
        return float(d.mean())
    if mode == "max":
        return float(d.max())
    raise ValueError(f"unknown mode {mode!r}")


def dtw(a, b, normalize=True):
    """DTW distance; divided by the optimal path's length when ``normalize``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidInputError("empty input")
    cost, length = kernels.dtw(a, b)
    return cost / length if normalize else cost


# -- clinical ------------------------------------------------------------------

def _lead(record, lead):
    return np.asarray(record.samples[lead_ordinal(lead)], dtype=np.float64)


def delta_qt(recon, orig, lead):
    """``|mean QT(recon) - mean QT(orig)|`` in seconds; ``nan`` if either fails."""
    return abs(fiducials.mean_qt(_lead(recon, lead), recon.sampling_rate)
               - fiducials.mean_qt(_lead(orig, lead), orig.sampling_rate))


def delta_qrs(recon, orig, lead):
    """``|mean QRS(recon) - mean QRS(orig)|`` in seconds; ``nan`` if either fails."""
    return abs(fiducials.mean_qrs(_lead(recon, lead), recon.sampling_rate)
               - fiducials.mean_qrs(_lead(orig, lead), orig.sampling_rate))


def match_peaks(ref, test, tol):
    """Number of ``ref`` peaks with a distinct ``test`` peak within ``tol`` samples."""
    test = sorted(test)
    used = np.zeros(len(test), dtype=bool)
    hits = 0
    for r in ref:
        best, best_d = None, None
        for k, t in enumerate(test):
            if used[k]:
                continue
            d = abs(t - r)
            if d <= tol and (best_d is None or d < best_d):
                best, best_d = k, d
        if best is not None:
            used[best] = True
            hits += 1
    return hits


def r_detect_pct(recon, orig, lead, _orig_peaks=None):
    """Percentage of the original R peaks found again in the reconstruction."""
    fs = orig.sampling_rate
    ref = fiducials.detect_r_peaks(_lead(orig, lead), fs) if _orig_peaks is None else _orig_peaks
    if not ref:
        return float("nan")
    got = fiducials.detect_r_peaks(_lead(recon, lead), recon.sampling_rate)
    return min(100.0, 100.0 * match_peaks(ref, got, R_MATCH_S * fs) / len(ref))


def sqi_avg_qrs(record, lead):
    """Beat-shape consistency in [0, 1].

    Windows of +/-0.1 s around each R are z-scored and correlated with their
    mean; the score is ``(mean r + 1) / 2``. One beat scores 1, none ``nan``.
    """
    x = _lead(record, lead)
    return _sqi(x, record.sampling_rate, fiducials.detect_r_peaks(x, record.sampling_rate))


def _sqi(x, fs, peaks):
    half = int(round(0.1 * fs))
    peaks = [r for r in peaks if r - half >= 0 and r + half < x.size]
    if not peaks:
        return float("nan")
    if len(peaks) == 1:
        return 1.0
    beats = np.stack([x[r - half:r + half + 1] for r in peaks])
    sd = beats.std(axis=1, keepdims=True)
    z = np.where(sd > 0, (beats - beats.mean(axis=1, keepdims=True)) / np.where(sd > 0, sd, 1), 0)
    template = z.mean(axis=0)
    r = np.mean([pcc(b, template) for b in z])
    return float(np.clip((r + 1) / 2, 0.0, 1.0))


# -- reports ---------------------------------------------------------------------

@dataclass
class MetricReport:
    """Scores of one mask configuration.

    ``rows`` holds one dict per (record, lead); ``per_lead`` maps each lead
    name to the mean of every metric; ``aggregates`` maps each metric to
    ``(mean, std)`` over all rows; ``failures`` counts rows where a
    clinical metric could not be computed (those are left out of the means).
    """

    config_name: str
    rows: list = field(default_factory=list)
    per_lead: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def finalize(self):
        self.per_lead, self.aggregates, self.failures = {}, {}, {}
        for name in LEAD_NAMES:
            sel = [r for r in self.rows if r["lead"] == name]
            if sel:
                self.per_lead[name] = {m: _nanmean([r[m] for r in sel]) for m in METRIC_COLUMNS}
        for m in METRIC_COLUMNS:
            vals = np.array([r[m] for r in self.rows], dtype=np.float64)
            ok = vals[np.isfinite(vals)]
            self.failures[m] = int(vals.size - ok.size)
            self.aggregates[m] = ((float(ok.mean()), float(ok.std())) if ok.size
                                  else (float("nan"), float("nan")))
        if any(self.failures[m] for m in CLINICAL):
            log.info("%s: undetectable fiducials excluded: %s", self.config_name,
                     {m: self.failures[m] for m in CLINICAL if self.failures[m]})
        return self

    def mean(self, metric="pcc", leads=None):
        sel = [r[metric] for r in self.rows if leads is None or r["lead"] in leads]
        return _nanmean(sel)


def _nanmean(vals):
    v = np.asarray(vals, dtype=np.float64)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else float("nan")


def noise_reconstructor(seed=0):
    """A reconstructor that ignores its input and emits fresh U[-1, 1) noise."""
    rng = np.random.default_rng(seed)

    def run(masked):
        return EcgRecord(rng.uniform(-1, 1, size=masked.samples.shape), masked.sampling_rate,
                         id=masked.source_id)
    run.batchable = False
    return run


def _mask_config(c):
    return c if isinstance(c, MaskConfig) else MaskConfig.parse(c)


def masked_inputs(records, config, seed=0):
    """Mask every record under one configuration (deterministic in ``seed``)."""
    config = _mask_config(config)
    out = []
    for i, rec in enumerate(records):
        s = mask_seed(seed, i, config.name)
        cfg = MaskConfig.random(seed=s) if config.kind == "random" else config
        out.append(apply_mask(rec, primer_mask(cfg, rec.n_samples), rng_seed=s))
    return out


def reconstruct_all(reconstructor, masked, batch_size=32):
    """Run a reconstructor (``"copypaste"``, a model, or a callable) over inputs."""
    if isinstance(reconstructor, str):
        if reconstructor != "copypaste":
            raise ValueError(f"unknown method {reconstructor!r}")
        return [copy_paste(m) for m in masked]
    if hasattr(reconstructor, "reconstruct_batch"):
        out = []
        for i in range(0, len(masked), batch_size):
            chunk = masked[i:i + batch_size]
            y = reconstructor.reconstruct_batch(np.stack([m.samples for m in chunk]))
            out.extend(EcgRecord(np.asarray(yy, dtype=np.float64), m.sampling_rate, id=m.source_id)
                       for yy, m in zip(y, chunk))
        return out
    return [reconstructor(m) for m in masked]


class _OrigCache:
    """Fiducial summaries of original leads, shared across configurations."""

    def __init__(self):
        self._d = {}

    def get(self, i, rec, lead):
        key = (i, lead)
        # a race only recomputes the same deterministic value
        if key not in self._d:
            self._d[key] = fiducials.lead_summary(_lead(rec, lead), rec.sampling_rate)
        return self._d[key]


def score_lead(recon, orig, lead, keep=None, clinical=True, orig_summary=None):
    """All metrics of one lead as a dict keyed by ``METRIC_COLUMNS``."""
    a, b = _lead(recon, lead), _lead(orig, lead)
    if keep is not None:
        sel = ~np.asarray(keep, dtype=bool)
        a, b = a[sel], b[sel]
    row = dict.fromkeys(METRIC_COLUMNS, float("nan"))
    if a.size:
        row.update(pcc=pcc(a, b), rmse=rmse(a, b), mae_mean=mae(a, b, "mean"),
                   mae_max=mae(a, b, "max"), dtw=dtw(a, b))
    if clinical:
        if orig_summary is None:
            orig_summary = fiducials.lead_summary(_lead(orig, lead), orig.sampling_rate)
        qt_o, qrs_o, peaks_o = orig_summary
        qt_r, qrs_r, peaks_r = fiducials.lead_summary(_lead(recon, lead), recon.sampling_rate)
        row["delta_qt_s"] = abs(qt_r - qt_o)
        row["delta_qrs_s"] = abs(qrs_r - qrs_o)
        if peaks_o:
            tol = R_MATCH_S * orig.sampling_rate
            row["r_detect_pct"] = min(100.0, 100.0 * match_peaks(peaks_o, peaks_r, tol) / len(peaks_o))
        row["sqi_avg_qrs"] = _sqi(_lead(recon, lead), recon.sampling_rate, peaks_r)
    return row


def evaluate(reconstructor, records, configs, seed=0, masked_region_only=False,
             clinical=True, leads=None, batch_size=32, threads=1):
    """Mask, reconstruct and score every record under every configuration.

    Parameters
    ----------
    reconstructor : "copypaste", Model, or callable(MaskedEcg) -> EcgRecord
    records : list of EcgRecord
        Preprocessed originals.
    configs : iterable of MaskConfig or names
    seed : int
        Fixes mask draws and noise fills.
    masked_region_only : bool
        Score distortion metrics on masked cells only (clinical metrics
        always use the full lead).
    clinical : bool
        Compute fiducial-based metrics (slower).
    threads : int
        Records are scored on a pool of this size; rows keep record order.

    Returns
    -------
    list of MetricReport, in ``configs`` order.
    """
    leads = LEAD_NAMES if leads is None else [LEAD_NAMES[lead_ordinal(x)] for x in leads]
    cache = _OrigCache()
    reports = []
    for c in configs:
        cfg = _mask_config(c)
        masked = masked_inputs(records, cfg, seed)
        recons = reconstruct_all(reconstructor, masked, batch_size)
        rep = MetricReport(cfg.name)

        def score_record(i, cfg=cfg, masked=masked, recons=recons):
            rec, m, y = records[i], masked[i], recons[i]
            rows = []
            for name in leads:
                li = lead_ordinal(name)
                keep = m.mask.keep[li] if masked_region_only else None
                summ = cache.get(i, rec, name) if clinical else None
                row = score_lead(y, rec, name, keep, clinical, summ)
                rows.append({"config": cfg.name, "record": rec.id, "lead": name, **row})
            return rows

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                per_record = list(pool.map(score_record, range(len(records))))
        else:
            per_record = [score_record(i) for i in range(len(records))]
        for rows in per_record:
            rep.rows.extend(rows)
        reports.append(rep.finalize())
    return reports


def correlation_matrix(reconstructor, records, seed=0):
    """12x12 matrix: entry (i, j) is the mean PCC of lead j given only lead i."""
    out = np.zeros((N_LEADS, N_LEADS))
    for i in range(N_LEADS):
        masked = masked_inputs(records, MaskConfig.for_lead(i), seed)
        recons = reconstruct_all(reconstructor, masked)
        for j in range(N_LEADS):
            out[i, j] = np.mean([pcc(y.samples[j], r.samples[j]) for y, r in zip(recons, records)])
    return out


# -- serialization ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, str):
        return v
    return "nan" if not np.isfinite(v) else repr(float(v))


def write_report_csv(reports, path):
    """One row per (config, record, lead)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            for row in rep.rows:
                w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_report_csv(path):
    """Rows of a metric CSV grouped back into finalized reports."""
    by_config = {}
    with open(path, newline="", encoding="utf-8") as f:
        rd = csv.DictReader(f)
        missing = set(CSV_COLUMNS) - set(rd.fieldnames or ())
        if missing:
            raise InvalidInputError(f"metric CSV lacks columns {sorted(missing)}")
        for row in rd:
            rep = by_config.setdefault(row["config"], MetricReport(row["config"]))
            rep.rows.append({**{k: row[k] for k in ("config", "record", "lead")},
                             **{m: float(row[m]) for m in METRIC_COLUMNS}})
    return [r.finalize() for r in by_config.values()]


def summary_dict(reports):
    def clean(v):
        return None if isinstance(v, float) and not math.isfinite(v) else v

    return {
        "dtw": "classic DTW, absolute-difference cost, normalized by path length",
        "mae": "mae_mean is the mean absolute error, mae_max the maximum",
        "configs": {
            r.config_name: {
                "per_lead": {k: {m: clean(v) for m, v in d.items()} for k, d in r.per_lead.items()},
                "aggregates": {m: {"mean": clean(a), "std": clean(s)} for m, (a, s) in r.aggregates.items()},
                "failures": r.failures,
            }
            for r in reports
        },
    }


def write_summary_json(reports, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary_dict(reports), f, indent=2, sort_keys=True)
        f.write("\n")

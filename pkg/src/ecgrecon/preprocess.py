"""Normalization, zero-phase bandpass and anti-aliased decimation."""

import logging
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as ss

from .leads import EcgRecord

log = logging.getLogger(__name__)


class PreprocessConfigError(ValueError):
    pass


class DegenerateScopeWarning(UserWarning):
    """A normalization scope had max == min and was mapped to zeros."""


@dataclass(frozen=True)
class PreprocessConfig:
    low_cut_hz: float = 0.05
    high_cut_hz: float = 150.0
    target_points: int = 512
    filter_order: int = 4
    normalize_scope: str = "per-record"  # or "per-lead"

    def __post_init__(self):
        if not 0 < self.low_cut_hz < self.high_cut_hz:
            raise PreprocessConfigError("need 0 < low_cut_hz < high_cut_hz")
        if self.target_points < 2:
            raise PreprocessConfigError("target_points must be >= 2")
        if self.normalize_scope not in ("per-record", "per-lead"):
            raise PreprocessConfigError(f"unknown scope {self.normalize_scope!r}")


def _minmax(x):
    lo, hi = x.min(), x.max()
    if hi == lo:
        warnings.warn("constant normalization scope mapped to zeros", DegenerateScopeWarning,
                      stacklevel=3)
        return np.zeros_like(x)
    y = 2.0 * (x - lo) / (hi - lo) - 1.0
    # exact extremes despite rounding
    y[x == lo] = -1.0
    y[x == hi] = 1.0
    return np.clip(y, -1.0, 1.0)


def minmax_normalize(record, scope="per-record"):
    """Affinely map the record (or each lead) onto [-1, 1]."""
    x = np.asarray(record.samples, dtype=np.float64)
    if scope == "per-record":
        y = _minmax(x)
    elif scope == "per-lead":
        y = np.stack([_minmax(row) for row in x])
    else:
        raise PreprocessConfigError(f"unknown scope {scope!r}")
    return record.replace(samples=y.astype(record.samples.dtype), normalized=True)


def _check_rate(fs, high):
    if fs <= 2 * high:
        raise PreprocessConfigError(
            f"sampling rate {fs} Hz cannot carry a {high} Hz upper cut-off; "
            "bandpass at the source rate before downsampling")


def bandpass(x, fs, config=PreprocessConfig()):
    """Forward-backward Butterworth bandpass; output has the input's length."""
    _check_rate(fs, config.high_cut_hz)
    sos = ss.butter(config.filter_order, [config.low_cut_hz, config.high_cut_hz],
                    btype="bandpass", fs=fs, output="sos")
    return _sosfiltfilt(sos, x)


def _highpass(x, fs, config):
    sos = ss.butter(config.filter_order, config.low_cut_hz, btype="highpass", fs=fs,
                    output="sos")
    return _sosfiltfilt(sos, x)


def _sosfiltfilt(sos, x):
    # Mirror (even) padding over the whole record: a record usually ends
    # part-way through a beat, and the default odd extension would turn that
    # end value into a baseline step that the 0.05 Hz edge rings on for seconds.
    x = np.asarray(x, dtype=np.float64)
    if not np.any(x):
        return np.zeros_like(x)
    padlen = x.shape[-1] - 1
    return ss.sosfiltfilt(sos, x, axis=-1, padtype="even", padlen=padlen)


def downsample(x, target_points=512):
    """Polyphase windowed-sinc resampling to exactly ``target_points`` samples.

    The anti-alias lowpass sits at the output Nyquist. Edges are padded with
    a fitted line so constants and slow trends survive unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if target_points > n:
        raise PreprocessConfigError("upsampling is not supported")
    if target_points == n:
        return x.copy()
    ratio = Fraction(target_points, n)
    y = ss.resample_poly(x, ratio.numerator, ratio.denominator, axis=-1, padtype="line")
    return y[..., :target_points]


def preprocess_record(record, config=PreprocessConfig()):
    """Normalize, filter at the source rate, decimate, then re-normalize.

    Removing the DC component moves the extremes off +/-1, so the min-max
    map is applied once more after decimation to hand the model data on the
    same [-1, 1] scale as its Tanh output. A record whose rate cannot carry
    the upper cut-off (typically one that was already decimated) is only
    high-passed; there is nothing left above its Nyquist to remove.
    """
    rec = minmax_normalize(record, config.normalize_scope)
    fs = rec.sampling_rate
    x = rec.samples.astype(np.float64)
    if fs > 2 * config.high_cut_hz:
        x = bandpass(x, fs, config)
    else:
        log.debug("record %s at %.1f Hz: high-pass only", record.id, fs)
        x = _highpass(x, fs, config)
    y = downsample(x, config.target_points)
    new_fs = fs * config.target_points / rec.n_samples
    out = EcgRecord(y, new_fs, id=record.id, meta=dict(record.meta))
    out = minmax_normalize(out, config.normalize_scope)
    return out.replace(samples=out.samples.astype(record.samples.dtype))

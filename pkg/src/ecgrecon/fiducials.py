"""R-peak, Q-onset, S-offset and T-end detection.

R peaks come from a Pan-Tompkins pipeline. Wave boundaries use the
tangent method: take the steepest point on the relevant edge of a wave and
extend its tangent to the isoelectric level measured on the PR segment.

Detectors work on any sampling rate. Index-returning functions give ``None``
when a point cannot be located; interval functions give ``nan``.
"""

import functools
from dataclasses import dataclass

import numpy as np
from scipy import signal

REFRACTORY_S = 0.2
BEAT_BEFORE_S = 0.4
BEAT_AFTER_S = 0.6
Q_SEARCH_S = 0.08
S_SEARCH_S = 0.12
T_SEARCH_S = (0.15, 0.45)
# PR segment used as the isoelectric reference, relative to R
BASELINE_S = (-0.12, -0.06)
# a T wave smaller than this fraction of the QRS deflection counts as absent
MIN_T_RATIO = 0.05


@dataclass
class BeatAnnotation:
    """Fiducials of one beat as absolute sample indices."""

    r_index: int
    q_index: object = None
    t_end_index: object = None
    window: tuple = (0, 0)
    q_onset_index: object = None
    s_offset_index: object = None


# -- R peaks ------------------------------------------------------------------

def _moving_average(x, width):
    width = max(1, int(width))
    return np.convolve(x, np.ones(width) / width, mode="same")


def _pan_tompkins_energy(x, fs):
    high = min(15.0, 0.45 * fs)
    sos = signal.butter(2, [5.0, high], btype="bandpass", fs=fs, output="sos")
    y = signal.sosfiltfilt(sos, x)
    d = np.gradient(y) * fs
    return _moving_average(d * d, round(0.15 * fs))


def _threshold_peaks(energy, fs):
    """Adaptive dual-level thresholding of the integrated energy."""
    refr = max(1, int(round(REFRACTORY_S * fs)))
    cand, _ = signal.find_peaks(energy, distance=refr)
    if cand.size == 0:
        return []
    learn = energy[: int(2 * fs)]
    spk = 0.25 * learn.max()
    npk = 0.5 * learn.mean()
    peaks = []
    rr = []
    for c in cand:
        v = energy[c]
        thr = npk + 0.25 * (spk - npk)
        if v > thr:
            if peaks and c - peaks[-1] < refr:
                if v > energy[peaks[-1]]:
                    peaks[-1] = c
                continue
            # search back for a missed beat when the gap is unusually long
            if peaks and len(rr) >= 2 and c - peaks[-1] > 1.66 * np.mean(rr[-8:]):
                lo, hi = peaks[-1] + refr, c - refr
                missed = [k for k in cand if lo <= k <= hi and energy[k] > 0.5 * thr]
                if missed:
                    best = max(missed, key=lambda k: energy[k])
                    rr.append(best - peaks[-1])
                    peaks.append(best)
            if peaks:
                rr.append(c - peaks[-1])
            peaks.append(c)
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk
    return peaks


def qrs_polarity(x, peaks, fs):
    """+1 when the dominant QRS deflection is upward, -1 otherwise."""
    if len(peaks) == 0:
        return 1
    half = max(1, int(round(0.06 * fs)))
    ups, downs = [], []
    for p in peaks:
        seg = x[max(0, p - half): p + half + 1]
        ref = _baseline(x, p, fs)
        ups.append(seg.max() - ref)
        downs.append(ref - seg.min())
    return 1 if np.median(ups) >= np.median(downs) else -1


def detect_r_peaks(x, fs):
    """R-peak sample indices of one lead.

    Parameters
    ----------
    x : array, shape (N,)
    fs : float
        Sampling rate in Hz.

    Returns
    -------
    list of int
        Strictly increasing, at least 200 ms apart. Empty for signals shorter
        than 2 s or without QRS activity.
    """
    x = np.asarray(x, dtype=np.float64)
    if fs <= 0:
        raise ValueError("fs must be positive")
    if x.size < 2 * fs or not np.all(np.isfinite(x)) or np.ptp(x) == 0:
        return []
    energy = _pan_tompkins_energy(x, fs)
    if energy.max() <= 1e-12 * max(1.0, np.abs(x).max()) ** 2:
        return []
    coarse = _threshold_peaks(energy, fs)
    sign = qrs_polarity(x, coarse, fs)
    half = max(1, int(round(0.075 * fs)))
    refined = []
    for c in coarse:
        lo, hi = max(0, c - half), min(x.size, c + half + 1)
        refined.append(lo + int(np.argmax(sign * x[lo:hi])))
    refr = int(round(REFRACTORY_S * fs))
    out = []
    for r in refined:
        if out and r - out[-1] < refr:
            if sign * x[r] > sign * x[out[-1]]:
                out[-1] = r
            continue
        out.append(r)
    return [int(r) for r in out]


def segment_beats(lead, r_peaks, fs):
    """``(start, end)`` windows from 0.4 s before to 0.6 s after each R.

    Bounds are ``floor(r - 0.4 fs)`` and ``floor(r + 0.6 fs)``, end exclusive.
    Beats whose window would leave the record are dropped.
    """
    n = len(lead)
    out = []
    for r in r_peaks:
        start = int(np.floor(r - BEAT_BEFORE_S * fs))
        end = int(np.floor(r + BEAT_AFTER_S * fs))
        if start >= 0 and end <= n:
            out.append((start, end))
    return out


# -- wave boundaries -----------------------------------------------------------

def _baseline(x, r, fs):
    lo = max(0, r + int(np.floor(BASELINE_S[0] * fs)))
    hi = max(lo + 1, r + int(np.ceil(BASELINE_S[1] * fs)))
    return float(np.median(x[lo:hi]))


def _smooth_deriv(x, fs, width_s):
    """Smoothed value and first difference (per sample) of ``x``.

    A quadratic Savitzky-Golay fit over ``width_s`` seconds; at low rates,
    where the window would span fewer than 5 samples, the raw signal and
    central differences are used.
    """
    w = int(round(width_s * fs)) | 1
    if w < 5 or w > x.size:
        return x, np.gradient(x)
    c0, c1 = _savgol_pair(w)
    xp = np.pad(x, w // 2, mode="edge")
    return np.convolve(xp, c0, mode="valid"), np.convolve(xp, c1, mode="valid")


@functools.lru_cache(maxsize=32)
def _savgol_pair(w):
    return (signal.savgol_coeffs(w, 2, use="conv"),
            signal.savgol_coeffs(w, 2, deriv=1, use="conv"))


def _tangent_crossing(x, p, slope, level):
    """Where the tangent at sample ``p`` meets ``level`` (fractional index)."""
    return p + (level - x[p]) / slope


def detect_q(beat, r_index, fs):
    """Q trough: first minimum within the 80 ms preceding R.

    Parameters
    ----------
    beat : array
        Samples of one beat window, QRS pointing upward.
    r_index : int
        Position of R inside ``beat``.
    """
    beat = np.asarray(beat, dtype=np.float64)
    lo = max(0, r_index - int(round(Q_SEARCH_S * fs)))
    if lo >= r_index:
        return None
    return lo + int(np.argmin(beat[lo:r_index]))


def _q_onset(beat, r_index, fs, baseline=None):
    beat = np.asarray(beat, dtype=np.float64)
    q = detect_q(beat, r_index, fs)
    if q is None:
        return None
    b = _baseline(beat, r_index, fs) if baseline is None else baseline
    lo = max(1, q - int(round(0.06 * fs)))
    if lo >= q:
        return None
    y, d = _smooth_deriv(beat, fs, 0.012)
    p = lo + int(np.argmin(d[lo:q + 1]))
    if d[p] >= 0 or y[p] >= b:
        # no descending Q limb: the onset is the trough itself
        return q
    t = _tangent_crossing(y, p, d[p], b)
    return int(np.clip(round(t), lo - 1, q))


def _s_offset(beat, r_index, fs, baseline=None):
    beat = np.asarray(beat, dtype=np.float64)
    hi = min(beat.size, r_index + int(round(S_SEARCH_S * fs)) + 1)
    if hi <= r_index + 1:
        return None
    s = r_index + 1 + int(np.argmin(beat[r_index + 1:hi]))
    b = _baseline(beat, r_index, fs) if baseline is None else baseline
    end = min(beat.size - 1, s + int(round(0.06 * fs)))
    if end <= s:
        return None
    y, d = _smooth_deriv(beat, fs, 0.012)
    p = s + int(np.argmax(d[s:end + 1]))
    if d[p] <= 0 or y[p] >= b:
        return s
    t = _tangent_crossing(y, p, d[p], b)
    return int(np.clip(round(t), s, end + 1))


def _t_end(beat, r_index, fs, baseline=None):
    beat = np.asarray(beat, dtype=np.float64)
    lo = r_index + int(round(T_SEARCH_S[0] * fs))
    hi = min(beat.size, r_index + int(round(T_SEARCH_S[1] * fs)) + 1)
    if hi - lo < 3:
        return None
    b = _baseline(beat, r_index, fs) if baseline is None else baseline
    qrs_amp = abs(beat[r_index] - b)
    dev = beat[lo:hi] - b
    k = int(np.argmax(np.abs(dev)))
    if qrs_amp == 0 or abs(dev[k]) < MIN_T_RATIO * qrs_amp:
        return None
    y = beat if dev[k] > 0 else 2 * b - beat
    peak = lo + k
    y, d = _smooth_deriv(y, fs, 0.04)
    # the falling edge may run past the search window; allow 100 ms of slack
    stop = min(y.size, hi + int(round(0.1 * fs)))
    if stop - peak < 2:
        return None
    # stay on the falling edge that starts at the peak: stop once the signal
    # climbs back by a tenth of the T amplitude (e.g. into the next P wave)
    seg = y[peak:stop]
    rebound = np.flatnonzero(seg - np.minimum.accumulate(seg) > 0.1 * abs(dev[k]))
    if rebound.size:
        stop = peak + int(rebound[0])
    if stop - peak < 2:
        return None
    p = peak + int(np.argmin(d[peak:stop]))
    if d[p] >= 0:
        return None
    t = _tangent_crossing(y, p, d[p], b)
    if not np.isfinite(t) or t < p:
        return None
    return int(min(round(t), y.size - 1))


# Below this rate wave boundaries are located on a band-limited upsampled copy
# and mapped back to the nearest sample of the input grid.
FINE_RATE = 250.0


def _upsample_factor(fs):
    return 1 if fs >= FINE_RATE else int(np.ceil(2 * FINE_RATE / fs))


def _upsample(x, u):
    return x if u == 1 else signal.resample_poly(x, u, 1)


def _to_coarse(i, u):
    return None if i is None else int(round(i / u))


def detect_q_onset(beat, r_index, fs):
    """QRS onset: tangent on the leading edge of the Q wave, extended to the baseline."""
    beat = np.asarray(beat, dtype=np.float64)
    u = _upsample_factor(fs)
    return _to_coarse(_q_onset(_upsample(beat, u), r_index * u, fs * u), u)


def detect_s_offset(beat, r_index, fs):
    """QRS offset: tangent on the S upstroke, extended forward to the baseline."""
    beat = np.asarray(beat, dtype=np.float64)
    u = _upsample_factor(fs)
    return _to_coarse(_s_offset(_upsample(beat, u), r_index * u, fs * u), u)


def detect_t_end(beat, r_index, fs):
    """T-wave end by the tangent method, or ``None`` when T is absent.

    The steepest point on the falling edge of the T wave (inverted T waves
    are flipped first) is searched 150-450 ms after R; its tangent is
    extended to the PR-segment baseline.
    """
    beat = np.asarray(beat, dtype=np.float64)
    u = _upsample_factor(fs)
    return _to_coarse(_t_end(_upsample(beat, u), r_index * u, fs * u), u)


# -- per-lead summaries --------------------------------------------------------

def remove_isoelectric_drift(x, r_peaks, fs):
    """Subtract a line interpolated through the PR-segment level of each beat.

    With fewer than two beats the lead is returned unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(r_peaks) < 2:
        return x
    knots = [r + 0.5 * sum(BASELINE_S) * fs for r in r_peaks]
    levels = [_baseline(x, r, fs) for r in r_peaks]
    return x - np.interp(np.arange(x.size), knots, levels)


def annotate(x, fs, r_peaks=None):
    """Annotate every complete beat of one lead.

    The lead is flipped when its QRS points downward so that the same
    detectors apply to every lead.
    """
    x = np.asarray(x, dtype=np.float64)
    peaks = detect_r_peaks(x, fs) if r_peaks is None else list(r_peaks)
    y = remove_isoelectric_drift(x, peaks, fs) * qrs_polarity(x, peaks, fs)
    u = _upsample_factor(fs)
    yf, fsf = _upsample(y, u), fs * u
    out = []
    for (start, end), r in zip(*_windows_with_peaks(x, peaks, fs)):
        # beat located on the fine grid, R re-centred there
        lo, hi = start * u, end * u
        beat = yf[lo:hi]
        c = (r - start) * u
        a, z = max(0, c - u // 2), min(beat.size, c + u // 2 + 1)
        rf = a + int(np.argmax(beat[a:z]))
        b = _baseline(beat, rf, fsf)
        q = detect_q(y[start:end], r - start, fs)

        def place(i):
            return None if i is None else start + _to_coarse(i, u)

        out.append(BeatAnnotation(
            r_index=r, q_index=None if q is None else start + q,
            t_end_index=place(_t_end(beat, rf, fsf, b)), window=(start, end),
            q_onset_index=place(_q_onset(beat, rf, fsf, b)),
            s_offset_index=place(_s_offset(beat, rf, fsf, b))))
    return out


def _windows_with_peaks(x, peaks, fs):
    wins, kept = [], []
    for r in peaks:
        w = segment_beats(x, [r], fs)
        if w:
            wins.append(w[0])
            kept.append(r)
    return wins, kept


def qt_intervals(x, fs, r_peaks=None):
    """Per-beat QT intervals in seconds (onset to T end); failures omitted."""
    out = []
    for a in annotate(x, fs, r_peaks):
        if a.q_onset_index is not None and a.t_end_index is not None and a.t_end_index > a.r_index:
            out.append((a.t_end_index - a.q_onset_index) / fs)
    return out


def mean_qt(x, fs):
    """Mean QT interval of a lead in seconds, ``nan`` if no beat succeeds."""
    qts = qt_intervals(x, fs)
    return float(np.mean(qts)) if qts else float("nan")


def lead_summary(x, fs):
    """``(mean_qt, mean_qrs, r_peaks)`` of one lead from a single pass."""
    x = np.asarray(x, dtype=np.float64)
    peaks = detect_r_peaks(x, fs)
    beats = annotate(x, fs, peaks)
    return _mean_qt(beats, fs), _mean_qrs(beats, fs), peaks


def _mean_qt(beats, fs):
    qts = [(a.t_end_index - a.q_onset_index) / fs for a in beats
           if a.q_onset_index is not None and a.t_end_index is not None and a.t_end_index > a.r_index]
    return float(np.mean(qts)) if qts else float("nan")


def _mean_qrs(beats, fs):
    vals = [(a.s_offset_index - a.q_onset_index) / fs for a in beats
            if a.q_onset_index is not None and a.s_offset_index is not None
            and a.s_offset_index > a.q_onset_index]
    return float(np.mean(vals)) if vals else float("nan")


def qrs_duration(beat, r_index, fs):
    """QRS width of one beat in seconds (onset to offset), ``nan`` on failure."""
    beat = np.asarray(beat, dtype=np.float64)
    if np.ptp(beat) == 0:
        return float("nan")
    on = detect_q_onset(beat, r_index, fs)
    off = detect_s_offset(beat, r_index, fs)
    if on is None or off is None or off <= on:
        return float("nan")
    return (off - on) / fs


def mean_qrs(x, fs):
    """Mean QRS duration of a lead in seconds, ``nan`` if no beat succeeds."""
    return _mean_qrs(annotate(x, fs), fs)

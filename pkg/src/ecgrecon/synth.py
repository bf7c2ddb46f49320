"""Synthetic 12-lead ECGs with analytically known fiducial points.

Each beat is a sum of Gaussian bumps (P, Q, R, S, T). Two independent
source channels with their own wave amplitudes play the role of leads I and
II; III, aVR, aVL and aVF are derived from them, so Einthoven's identities
hold exactly. Precordial leads are fixed linear mixes of the two sources
plus a beat-synchronous component of their own.

Wave placement is parametrized so that the fiducial points have closed
forms. With ``qrs`` the QRS duration and ``qt`` the QT interval, relative to
the R peak at ``t_r``:

* Q trough at ``t_r - 0.3*qrs`` with width ``0.1*qrs``; its tangent at the
  steepest point reaches the baseline at ``t_r - 0.5*qrs`` (Q onset),
* S trough at ``t_r + 0.3*qrs`` with width ``0.1*qrs``; S offset at
  ``t_r + 0.5*qrs``,
* T peak at ``onset + qt - 2*sigma_t``, so the tangent on its falling edge
  meets the baseline at ``onset + qt`` (T end).
"""

from dataclasses import dataclass, field

import numpy as np

from .leads import assemble_record

FS = 500.0
DURATION = 10.0

# per-wave amplitudes (mV) of the two sources: P, Q, R, S, T
_SOURCE_AMPS = np.array([
    [0.08, -0.06, 0.70, -0.12, 0.18],   # lead I
    [0.13, -0.09, 1.10, -0.20, 0.28],   # lead II
])
# precordial mixing weights on (source I, source II)
_PRECORDIAL_MIX = np.array([
    [-0.55, 0.10],
    [-0.60, 0.45],
    [-0.10, 0.70],
    [0.55, 0.65],
    [0.95, 0.45],
    [1.00, 0.25],
])
# amplitude scale of each precordial's own component
_OWN_SCALE = np.array([0.35, 0.35, 0.25, 0.2, 0.15, 0.12])


@dataclass(frozen=True)
class SynthConfig:
    num_records: int = 8
    heart_rate_bpm: tuple = (50.0, 90.0)
    qt_s: tuple = (0.36, 0.44)
    qrs_s: tuple = (0.08, 0.11)
    baseline_wander_amp: float = 0.05
    noise_std: float = 0.01
    seed: int = 0
    fs: float = FS
    duration_s: float = DURATION
    rr_jitter: float = 0.02
    t_width_s: float = 0.04

    def __post_init__(self):
        for name in ("heart_rate_bpm", "qt_s", "qrs_s"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a non-empty positive range")
        if self.num_records < 0:
            raise ValueError("num_records must be >= 0")


@dataclass
class GroundTruth:
    """Fiducial times in seconds for one record."""

    r_times: np.ndarray
    q_onset_times: np.ndarray
    t_end_times: np.ndarray
    s_offset_times: np.ndarray
    qt_s: float
    qrs_s: float
    heart_rate_bpm: float
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "r_times": [float(v) for v in self.r_times],
            "q_onset_times": [float(v) for v in self.q_onset_times],
            "t_end_times": [float(v) for v in self.t_end_times],
            "s_offset_times": [float(v) for v in self.s_offset_times],
            "qt_s": float(self.qt_s),
            "qrs_s": float(self.qrs_s),
            "heart_rate_bpm": float(self.heart_rate_bpm),
        }


def _wave_geometry(qrs, qt, t_width):
    """Offsets from the R peak and widths for P, Q, R, S, T."""
    onset = -0.5 * qrs
    centers = np.array([onset - 0.12, -0.3 * qrs, 0.0, 0.3 * qrs, onset + qt - 2 * t_width])
    widths = np.array([0.02, 0.1 * qrs, 0.1 * qrs, 0.1 * qrs, t_width])
    return centers, widths


def beat_waveform(t, r_times, amps, qrs, qt, t_width=0.04):
    """Sum of Gaussian P-QRS-T complexes centred on ``r_times``."""
    centers, widths = _wave_geometry(qrs, qt, t_width)
    out = np.zeros_like(t)
    for tr in r_times:
        for c, w, a in zip(centers, widths, amps):
            if a == 0:
                continue
            mu = tr + c
            lo, hi = np.searchsorted(t, [mu - 6 * w, mu + 6 * w])
            seg = t[lo:hi]
            out[lo:hi] += a * np.exp(-0.5 * ((seg - mu) / w) ** 2)
    return out


def _r_times(rng, hr, duration, jitter):
    rr = 60.0 / hr
    t = rng.uniform(0.1, 0.1 + rr)
    times = []
    while t < duration + rr:
        times.append(t)
        t += rr * (1.0 + jitter * rng.standard_normal())
    return np.array(times)


def synth_record(rng, config, record_id, hr=None, qt=None, qrs=None):
    """One synthetic record and its ground truth, drawing from ``rng``."""
    fs, dur = config.fs, config.duration_s
    hr = rng.uniform(*config.heart_rate_bpm) if hr is None else hr
    qt = rng.uniform(*config.qt_s) if qt is None else qt
    qrs = rng.uniform(*config.qrs_s) if qrs is None else qrs
    n = int(round(fs * dur))
    t = np.arange(n) / fs
    r_all = _r_times(rng, hr, dur, config.rr_jitter)

    src_amps = _SOURCE_AMPS * rng.uniform(0.8, 1.2, size=_SOURCE_AMPS.shape)
    sources = [beat_waveform(t, r_all, a, qrs, qt, config.t_width_s) for a in src_amps]
    mix = _PRECORDIAL_MIX * rng.uniform(0.85, 1.15, size=_PRECORDIAL_MIX.shape)
    own_amps = rng.standard_normal((6, 5)) * _OWN_SCALE[:, None] * np.array([0.1, 0.1, 1.0, 0.3, 0.3])

    stored = list(sources)
    for k in range(6):
        own = beat_waveform(t, r_all, own_amps[k], qrs, qt, config.t_width_s)
        stored.append(mix[k, 0] * sources[0] + mix[k, 1] * sources[1] + own)

    if config.baseline_wander_amp > 0:
        f = rng.uniform(0.1, 0.3)
        phase = rng.uniform(0, 2 * np.pi, size=8)
        amp = config.baseline_wander_amp * rng.uniform(0.5, 1.0, size=8)
        stored = [s + a * np.sin(2 * np.pi * f * t + p) for s, a, p in zip(stored, amp, phase)]
    if config.noise_std > 0:
        stored = [s + config.noise_std * rng.standard_normal(n) for s in stored]

    rec = assemble_record(stored, fs, id=record_id)

    onset = r_all - 0.5 * qrs
    offset = r_all + 0.5 * qrs
    t_end = onset + qt
    p_start = r_all + _wave_geometry(qrs, qt, config.t_width_s)[0][0] - 0.06
    inside = (p_start >= 0) & (t_end <= dur)
    gt = GroundTruth(r_times=r_all[inside], q_onset_times=onset[inside],
                     t_end_times=t_end[inside], s_offset_times=offset[inside],
                     qt_s=qt, qrs_s=qrs, heart_rate_bpm=hr)
    rec.meta["ground_truth"] = gt
    return rec, gt


def synth_generate(config=SynthConfig()):
    """Generate ``config.num_records`` records and their ground truth.

    Record ``i`` draws from its own generator seeded by ``(seed, i)``, so a
    corpus is a prefix of any larger corpus with the same seed.
    """
    records, truths = [], []
    for i in range(config.num_records):
        rng = np.random.default_rng([config.seed, i])
        rec, gt = synth_record(rng, config, f"syn{config.seed:04d}-{i:05d}")
        records.append(rec)
        truths.append(gt)
    return records, truths

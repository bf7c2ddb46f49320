"""12-lead ECG data model and derived-lead algebra.

Lead order is fixed everywhere in the package::

    I, II, III, aVR, aVL, aVF, V1, V2, V3, V4, V5, V6
"""

from dataclasses import dataclass, field

import numpy as np

LEAD_NAMES = ("I", "II", "III", "aVR", "aVL", "aVF",
              "V1", "V2", "V3", "V4", "V5", "V6")
N_LEADS = len(LEAD_NAMES)
STORED_LEADS = ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")

_ORDINAL = {name: i for i, name in enumerate(LEAD_NAMES)}
_ORDINAL_CI = {name.lower(): i for i, name in enumerate(LEAD_NAMES)}


class InvalidInputError(ValueError):
    """Raised when signals handed to the data model are malformed."""


def lead_ordinal(name):
    """Return the canonical ordinal of a lead name (case-insensitive)."""
    if isinstance(name, (int, np.integer)):
        if not 0 <= int(name) < N_LEADS:
            raise InvalidInputError(f"lead ordinal out of range: {name}")
        return int(name)
    try:
        return _ORDINAL[name]
    except KeyError:
        pass
    try:
        return _ORDINAL_CI[str(name).lower()]
    except KeyError:
        raise InvalidInputError(f"unknown lead: {name!r}") from None


def lead_name(ordinal):
    if not 0 <= int(ordinal) < N_LEADS:
        raise InvalidInputError(f"lead ordinal out of range: {ordinal}")
    return LEAD_NAMES[int(ordinal)]


@dataclass
class EcgRecord:
    """A 12-lead ECG.

    Parameters
    ----------
    samples : array, shape (12, N)
        Lead voltages in canonical order.
    sampling_rate : float
        Samples per second.
    id : str
        Opaque record identifier.
    normalized : bool
        Set once the record went through min-max normalization; every entry
        must then lie in [-1, 1].
    """

    samples: np.ndarray
    sampling_rate: float
    id: str = ""
    normalized: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[0] != N_LEADS:
            raise InvalidInputError(f"expected shape (12, N), got {s.shape}")
        if s.shape[1] == 0:
            raise InvalidInputError("record has no samples")
        if not np.all(np.isfinite(s)):
            raise InvalidInputError("record contains non-finite samples")
        if self.sampling_rate <= 0:
            raise InvalidInputError("sampling_rate must be positive")
        if self.normalized and (s.min() < -1.0 or s.max() > 1.0):
            raise InvalidInputError("normalized record has entries outside [-1, 1]")
        self.samples = s

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.n_samples / self.sampling_rate

    def lead(self, name):
        return self.samples[lead_ordinal(name)]

    def replace(self, **changes):
        kw = dict(samples=self.samples, sampling_rate=self.sampling_rate,
                  id=self.id, normalized=self.normalized, meta=dict(self.meta))
        kw.update(changes)
        return EcgRecord(**kw)


def _as_vector(v, what):
    a = np.asarray(v)
    if a.ndim != 1:
        raise InvalidInputError(f"{what} must be one-dimensional")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{what} contains non-finite values")
    return a


def derive_augmented_leads(lead_i, lead_ii):
    """Compute III, aVR, aVL and aVF from leads I and II.

    Returns
    -------
    tuple of 4 arrays
        ``(III, aVR, aVL, aVF)``. ``I + III == II`` holds up to one rounding
        of the subtraction.
    """
    i = _as_vector(lead_i, "lead I")
    ii = _as_vector(lead_ii, "lead II")
    if i.shape != ii.shape:
        raise InvalidInputError(f"lead length mismatch: {i.shape[0]} vs {ii.shape[0]}")
    iii = ii - i
    avr = -(i + ii) / 2
    avl = i - ii / 2
    avf = ii - i / 2
    return iii, avr, avl, avf


def assemble_record(eight_leads, sampling_rate, id="", dtype=np.float64):
    """Build a 12-lead record from the 8 independently stored leads.

    Parameters
    ----------
    eight_leads : sequence of 8 arrays or mapping
        Leads I, II, V1..V6 in that order, or a mapping keyed by lead name.
    sampling_rate : float
    """
    if isinstance(eight_leads, dict):
        missing = [n for n in STORED_LEADS if n not in eight_leads]
        if missing:
            raise InvalidInputError(f"missing leads: {missing}")
        eight_leads = [eight_leads[n] for n in STORED_LEADS]
    if len(eight_leads) != len(STORED_LEADS):
        raise InvalidInputError(f"expected 8 leads, got {len(eight_leads)}")
    vecs = [_as_vector(np.asarray(v, dtype=dtype), STORED_LEADS[k])
            for k, v in enumerate(eight_leads)]
    n = vecs[0].shape[0]
    if any(v.shape[0] != n for v in vecs):
        raise InvalidInputError("all 8 leads must have equal length")
    i, ii, *precordial = vecs
    iii, avr, avl, avf = derive_augmented_leads(i, ii)
    samples = np.stack([i, ii, iii, avr, avl, avf, *precordial]).astype(dtype, copy=False)
    return EcgRecord(samples, float(sampling_rate), id=id)

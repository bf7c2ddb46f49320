"""Primer masks and noise-filled incomplete ECGs.

A primer mask is a boolean ``(12, N)`` matrix where ``True`` marks samples
that stay available and ``False`` marks samples to reconstruct. Masked
cells are refilled with uniform noise on [0, 1] before the record reaches
a reconstructor.
"""

from dataclasses import dataclass

import numpy as np

from .leads import LEAD_NAMES, N_LEADS, EcgRecord, InvalidInputError, lead_ordinal

# C1..C5 -> number of time groups the 10 s strip is cut into
SEGMENT_GROUPS = {1: 12, 2: 6, 3: 4, 4: 3, 5: 2}


@dataclass(frozen=True)
class MaskConfig:
    """One masking scheme.

    ``kind`` is one of ``"segment"`` (with ``k`` in 1..5), ``"lead"`` (with
    ``lead`` a canonical ordinal), ``"random"`` (with ``seed``) or
    ``"real-life"``.
    """

    kind: str
    k: int = 0
    lead: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind == "segment" and self.k not in SEGMENT_GROUPS:
            raise InvalidInputError(f"segment mask index must be 1..5, got {self.k}")
        if self.kind == "lead" and not 0 <= self.lead < N_LEADS:
            raise InvalidInputError(f"lead ordinal out of range: {self.lead}")
        if self.kind not in ("segment", "lead", "random", "real-life"):
            raise InvalidInputError(f"unknown mask kind {self.kind!r}")

    @property
    def groups(self):
        return SEGMENT_GROUPS[self.k]

    @property
    def name(self):
        if self.kind == "segment":
            return f"C{self.k}"
        if self.kind == "lead":
            return f"C_{LEAD_NAMES[self.lead]}"
        if self.kind == "random":
            return "C_Rdm"
        return "C_real-life"

    @classmethod
    def segment(cls, k):
        return cls("segment", k=k)

    @classmethod
    def for_lead(cls, lead):
        return cls("lead", lead=lead_ordinal(lead))

    @classmethod
    def random(cls, seed=0):
        return cls("random", seed=seed)

    @classmethod
    def real_life(cls):
        return cls("real-life")

    @classmethod
    def parse(cls, name, seed=0):
        """Inverse of :attr:`name`; ``C_Rdm`` takes its seed from ``seed``."""
        s = name.strip()
        if s == "C_Rdm":
            return cls.random(seed)
        if s == "C_real-life":
            return cls.real_life()
        if s.startswith("C_"):
            return cls.for_lead(s[2:])
        if s.startswith("C") and s[1:].isdigit():
            return cls.segment(int(s[1:]))
        raise InvalidInputError(f"unknown mask configuration {name!r}")


@dataclass
class PrimerMask:
    keep: np.ndarray
    config_name: str = ""

    @property
    def shape(self):
        return self.keep.shape


@dataclass
class MaskedEcg:
    samples: np.ndarray
    mask: PrimerMask
    source_id: str = ""
    sampling_rate: float = 51.2


def mask_catalog():
    """The 17 training masks: C1..C5 then one lead mask per canonical lead."""
    return ([MaskConfig.segment(k) for k in range(1, 6)]
            + [MaskConfig.for_lead(i) for i in range(N_LEADS)])


def segment_window(lead, groups, n):
    """Column range ``[start, stop)`` kept for ``lead`` when cut into ``groups``."""
    g = lead // (N_LEADS // groups)
    return int(round(g * n / groups)), int(round((g + 1) * n / groups))


def primer_mask(config, n, n_leads=N_LEADS):
    if n_leads != N_LEADS:
        raise InvalidInputError("only 12-lead masks are defined")
    keep = np.zeros((N_LEADS, n), dtype=bool)
    if config.kind in ("segment", "real-life"):
        groups = SEGMENT_GROUPS[config.k if config.kind == "segment" else 3]
        if n < groups:
            raise InvalidInputError(f"need at least {groups} samples, got {n}")
        for lead in range(N_LEADS):
            a, b = segment_window(lead, groups, n)
            keep[lead, a:b] = True
        if config.kind == "real-life":
            keep[lead_ordinal("II")] = True
    elif config.kind == "lead":
        keep[config.lead] = True
    else:
        rng = np.random.default_rng(config.seed)
        for lead in range(N_LEADS):
            while True:
                s, e = np.sort(rng.integers(0, n + 1, size=2))
                if e - s >= 1:
                    break
            keep[lead, s:e] = True
    return PrimerMask(keep, config.name)


def apply_mask(record, mask, rng_seed=0):
    """Keep primer cells, replace everything else with U[0, 1) noise.

    Noise is drawn for every cell from one seeded generator in row-major
    order, so the fill only depends on ``rng_seed`` and the record shape.
    """
    x = record.samples if isinstance(record, EcgRecord) else np.asarray(record)
    keep = mask.keep if isinstance(mask, PrimerMask) else np.asarray(mask, dtype=bool)
    if x.shape != keep.shape:
        raise InvalidInputError(f"mask shape {keep.shape} != record shape {x.shape}")
    noise = np.random.default_rng(rng_seed).random(x.shape).astype(x.dtype)
    out = np.where(keep, x, noise)
    pm = mask if isinstance(mask, PrimerMask) else PrimerMask(keep)
    sid = record.id if isinstance(record, EcgRecord) else ""
    fs = record.sampling_rate if isinstance(record, EcgRecord) else 51.2
    return MaskedEcg(out, pm, sid, fs)


def retained_fraction(mask):
    keep = mask.keep if isinstance(mask, PrimerMask) else np.asarray(mask)
    return float(keep.sum()) / keep.size


def mask_seed(seed, record_index, config_name):
    """Seed of the mask draw and noise fill for one (record, config) cell.

    Stable across processes (no use of ``hash``).
    """
    tag = sum(ord(ch) * 131 ** i for i, ch in enumerate(config_name)) % (2 ** 32)
    return int(np.random.SeedSequence([seed, record_index, tag]).generate_state(1)[0])

"""Copy-paste reconstruction: repeat what is known to fill what is not."""

import numpy as np

from .leads import EcgRecord, InvalidInputError


def copy_paste(masked):
    """Fill masked cells by cyclic repetition of the primers.

    A lead with a primer is continued periodically, forward and backward,
    from its primer window: cell ``j`` takes primer value
    ``(j - start) mod len(primer)``. A lead without a primer receives a copy
    of the filled reference lead, the lowest-ordinal lead that has one.

    Parameters
    ----------
    masked : MaskedEcg

    Returns
    -------
    EcgRecord
        Primer cells equal the input exactly.
    """
    x = np.asarray(masked.samples)
    keep = np.asarray(masked.mask.keep, dtype=bool)
    if x.shape != keep.shape:
        raise InvalidInputError(f"mask {keep.shape} does not match samples {x.shape}")
    if not keep.any():
        raise InvalidInputError("no primer cells to copy from")
    out = x.copy()
    n = x.shape[1]
    has_primer = keep.any(axis=1)
    for lead in np.flatnonzero(has_primer):
        idx = np.flatnonzero(keep[lead])
        primer = x[lead, idx]
        filled = primer[(np.arange(n) - idx[0]) % idx.size]
        out[lead] = np.where(keep[lead], x[lead], filled)
    ref = int(np.flatnonzero(has_primer)[0])
    out[~has_primer] = out[ref]
    return EcgRecord(out, getattr(masked, "sampling_rate", 51.2), id=getattr(masked, "source_id", ""))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecgrecon.baseline import copy_paste
from ecgrecon.leads import EcgRecord, InvalidInputError
from ecgrecon.masking import MaskConfig, MaskedEcg, PrimerMask, apply_mask, mask_catalog, primer_mask


def test_tiling_example():
    x = np.zeros((12, 4))
    x[0] = [1, 2, 9, 9]
    keep = np.zeros((12, 4), bool)
    keep[0, :2] = True
    out = copy_paste(MaskedEcg(x, PrimerMask(keep)))
    np.testing.assert_array_equal(out.samples[0], [1, 2, 1, 2])
    # leads without primer copy lead I
    np.testing.assert_array_equal(out.samples[5], [1, 2, 1, 2])


def test_backward_wrap():
    x = np.arange(12 * 6, dtype=float).reshape(12, 6)
    keep = np.zeros((12, 6), bool)
    keep[:, 2:4] = True
    out = copy_paste(MaskedEcg(x, PrimerMask(keep)))
    # cell j takes primer[(j - 2) % 2]
    np.testing.assert_array_equal(out.samples[0], [2, 3, 2, 3, 2, 3])


def test_lead_mask_copies_reference(working_records):
    rec = working_records[0]
    out = copy_paste(apply_mask(rec, primer_mask(MaskConfig.for_lead("I"), 512), 1))
    for lead in range(12):
        np.testing.assert_array_equal(out.samples[lead], rec.samples[0])


def test_identity_mask(working_records):
    rec = working_records[1]
    out = copy_paste(apply_mask(rec, PrimerMask(np.ones((12, 512), bool)), 1))
    np.testing.assert_array_equal(out.samples, rec.samples)


def test_no_primer_rejected():
    with pytest.raises(InvalidInputError):
        copy_paste(MaskedEcg(np.zeros((12, 5)), PrimerMask(np.zeros((12, 5), bool))))


def test_shape_mismatch():
    with pytest.raises(InvalidInputError):
        copy_paste(MaskedEcg(np.zeros((12, 5)), PrimerMask(np.ones((12, 4), bool))))


def test_all_catalog_primers_preserved(working_records):
    for rec in working_records:
        for cfg in mask_catalog():
            m = primer_mask(cfg, 512)
            out = copy_paste(apply_mask(rec, m, 0))
            np.testing.assert_array_equal(out.samples[m.keep], rec.samples[m.keep])


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.integers(24, 300))
def test_segment_periodicity(seed, k, n):
    r = np.random.default_rng(seed)
    rec = EcgRecord(r.uniform(-1, 1, (12, n)), 51.2)
    m = primer_mask(MaskConfig.segment(k), n)
    out = copy_paste(apply_mask(rec, m, seed)).samples
    for lead in range(12):
        idx = np.flatnonzero(m.keep[lead])
        start, period = idx[0], idx.size
        j = np.arange(n)
        np.testing.assert_array_equal(out[lead], rec.samples[lead, start + (j - start) % period])


@given(st.integers(0, 2 ** 32 - 1))
def test_random_mask_deterministic(seed):
    r = np.random.default_rng(seed)
    rec = EcgRecord(r.uniform(-1, 1, (12, 64)), 51.2)
    masked = apply_mask(rec, primer_mask(MaskConfig.random(seed), 64), seed)
    a, b = copy_paste(masked), copy_paste(masked)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.samples[masked.mask.keep], rec.samples[masked.mask.keep])

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ecgrecon.leads import LEAD_NAMES, EcgRecord, InvalidInputError
from ecgrecon.masking import (SEGMENT_GROUPS, MaskConfig, PrimerMask, apply_mask, mask_catalog,
                              mask_seed, primer_mask, retained_fraction)


def _runs(row):
    k = np.concatenate([[0], row.astype(int), [0]])
    d = np.diff(k)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def test_c3_windows():
    keep = primer_mask(MaskConfig.segment(3), 512).keep
    expected = {"I": (0, 128), "aVR": (128, 256), "V1": (256, 384), "V4": (384, 512)}
    for lead, (a, b) in expected.items():
        row = keep[LEAD_NAMES.index(lead)]
        assert _runs(row) == [(a, b)]


def test_lead_mask():
    keep = primer_mask(MaskConfig.for_lead("I"), 512).keep
    assert keep[0].all() and not keep[1:].any()


def test_c1_fraction():
    m = primer_mask(MaskConfig.segment(1), 512)
    lengths = m.keep.sum(axis=1)
    assert set(lengths) <= {42, 43}
    assert abs(retained_fraction(m) - 1 / 12) <= 2 / 512


def test_real_life():
    keep = primer_mask(MaskConfig.real_life(), 512).keep
    c3 = primer_mask(MaskConfig.segment(3), 512).keep
    assert keep[1].all()
    np.testing.assert_array_equal(np.delete(keep, 1, axis=0), np.delete(c3, 1, axis=0))


def test_catalog():
    cat = mask_catalog()
    assert len(cat) == 17
    assert [c.name for c in cat[:5]] == ["C1", "C2", "C3", "C4", "C5"]
    assert [c.name for c in cat[5:]] == [f"C_{n}" for n in LEAD_NAMES]


def test_parse_roundtrip():
    for c in mask_catalog() + [MaskConfig.random(5), MaskConfig.real_life()]:
        assert MaskConfig.parse(c.name, seed=c.seed) == c
    with pytest.raises(InvalidInputError):
        MaskConfig.parse("C9")
    with pytest.raises(InvalidInputError):
        MaskConfig.parse("bogus")


def test_retained_fractions():
    assert retained_fraction(primer_mask(MaskConfig.for_lead("V2"), 512)) == pytest.approx(1 / 12)
    assert abs(retained_fraction(primer_mask(MaskConfig.segment(5), 512)) - 0.5) <= 1 / 512
    assert retained_fraction(PrimerMask(np.ones((12, 8), bool))) == 1.0


def _record(rng, n=512):
    return EcgRecord(rng.uniform(-1, 1, size=(12, n)), 51.2, id="r", normalized=True)


def test_apply_identity_mask(rng):
    rec = _record(rng)
    out = apply_mask(rec, PrimerMask(np.ones((12, 512), bool)), 3)
    np.testing.assert_array_equal(out.samples, rec.samples)
    assert out.source_id == "r"


def test_apply_all_masked(rng):
    rec = _record(rng)
    out = apply_mask(rec, PrimerMask(np.zeros((12, 512), bool)), 3)
    assert out.samples.min() >= 0 and out.samples.max() <= 1
    assert np.mean(out.samples == rec.samples) < 0.01


def test_apply_deterministic(rng):
    rec = _record(rng)
    m = primer_mask(MaskConfig.segment(2), 512)
    a, b = apply_mask(rec, m, 9), apply_mask(rec, m, 9)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert apply_mask(rec, m, 10).samples.tobytes() != a.samples.tobytes()


def test_apply_shape_mismatch(rng):
    with pytest.raises(InvalidInputError):
        apply_mask(_record(rng), PrimerMask(np.ones((12, 10), bool)))


@given(st.integers(1, 5), st.integers(12, 2000))
def test_segment_partition(k, n):
    keep = primer_mask(MaskConfig.segment(k), n).keep
    g = SEGMENT_GROUPS[k]
    per = 12 // g
    for lead in range(12):
        assert len(_runs(keep[lead])) == 1
    # one representative lead per group tiles [0, n) exactly
    tiles = keep[::per]
    np.testing.assert_array_equal(tiles.sum(axis=0), 1)
    assert abs(retained_fraction(PrimerMask(keep)) - 1 / g) <= 2 / n


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
def test_apply_preserves_primers(seed, k):
    r = np.random.default_rng(seed)
    rec = _record(r)
    m = primer_mask(MaskConfig.segment(k), 512)
    out = apply_mask(rec, m, seed)
    np.testing.assert_array_equal(out.samples[m.keep], rec.samples[m.keep])
    assert out.samples[~m.keep].min() >= 0 and out.samples[~m.keep].max() <= 1


@given(st.integers(0, 2 ** 32 - 1))
def test_random_mask_reproducible(seed):
    a = primer_mask(MaskConfig.random(seed), 512).keep
    b = primer_mask(MaskConfig.random(seed), 512).keep
    np.testing.assert_array_equal(a, b)
    for row in a:
        assert len(_runs(row)) == 1
    c = primer_mask(MaskConfig.random(seed + 1), 512).keep
    assert not np.array_equal(a, c)


def test_mask_seed_stable():
    assert mask_seed(0, 0, "C3") == mask_seed(0, 0, "C3")
    assert len({mask_seed(0, i, c.name) for i in range(4) for c in mask_catalog()}) == 68

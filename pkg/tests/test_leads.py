import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ecgrecon.leads import (LEAD_NAMES, EcgRecord, InvalidInputError, assemble_record,
                            derive_augmented_leads, lead_name, lead_ordinal)


def test_lead_order():
    assert LEAD_NAMES == ("I", "II", "III", "aVR", "aVL", "aVF",
                          "V1", "V2", "V3", "V4", "V5", "V6")


def test_name_ordinal_roundtrip():
    for i, name in enumerate(LEAD_NAMES):
        assert lead_ordinal(name) == i
        assert lead_name(i) == name
    assert lead_ordinal("avf") == 5
    with pytest.raises(InvalidInputError):
        lead_ordinal("V7")
    with pytest.raises(InvalidInputError):
        lead_name(12)


def test_derived_constants():
    iii, avr, avl, avf = derive_augmented_leads(np.ones(4), np.full(4, 3.0))
    np.testing.assert_array_equal(iii, 2.0)
    np.testing.assert_array_equal(avr, -2.0)
    np.testing.assert_array_equal(avl, -0.5)
    np.testing.assert_array_equal(avf, 2.5)


def test_derived_zeros():
    for v in derive_augmented_leads(np.zeros(7), np.zeros(7)):
        np.testing.assert_array_equal(v, 0.0)


def test_einthoven_random(rng):
    i, ii = rng.standard_normal(16), rng.standard_normal(16)
    iii = derive_augmented_leads(i, ii)[0]
    assert np.max(np.abs(i + iii - ii)) <= 4 * np.finfo(float).eps * np.max(np.abs(ii) + np.abs(i))


def test_length_mismatch():
    with pytest.raises(InvalidInputError):
        derive_augmented_leads(np.zeros(3), np.zeros(4))


def test_assemble_zero_and_shape():
    rec = assemble_record([np.zeros(5000)] * 8, 500)
    assert rec.samples.shape == (12, 5000)
    assert not rec.samples.any()


def test_assemble_iii_from_constants(rng):
    leads = [np.ones(10), np.full(10, 3.0)] + [rng.standard_normal(10) for _ in range(6)]
    rec = assemble_record(leads, 500)
    np.testing.assert_array_equal(rec.lead("III"), 2.0)
    np.testing.assert_array_equal(rec.lead("V3"), leads[4])


def test_assemble_from_mapping(rng):
    names = ("I", "II", "V1", "V2", "V3", "V4", "V5", "V6")
    d = {n: rng.standard_normal(6) for n in names}
    rec = assemble_record(d, 250)
    np.testing.assert_array_equal(rec.lead("V6"), d["V6"])
    del d["V2"]
    with pytest.raises(InvalidInputError):
        assemble_record(d, 250)


def test_assemble_errors():
    with pytest.raises(InvalidInputError):
        assemble_record([np.zeros(4)] * 7 + [np.zeros(5)], 500)
    bad = [np.zeros(4)] * 8
    bad[3] = np.array([0, np.nan, 0, 0])
    with pytest.raises(InvalidInputError):
        assemble_record(bad, 500)


def test_record_validation():
    with pytest.raises(InvalidInputError):
        EcgRecord(np.zeros((11, 4)), 500)
    with pytest.raises(InvalidInputError):
        EcgRecord(np.zeros((12, 0)), 500)
    with pytest.raises(InvalidInputError):
        EcgRecord(np.full((12, 4), np.inf), 500)
    with pytest.raises(InvalidInputError):
        EcgRecord(np.full((12, 4), 2.0), 500, normalized=True)


@given(arrays(np.float32, 32, elements=st.floats(-10, 10, width=32)),
       arrays(np.float32, 32, elements=st.floats(-10, 10, width=32)))
def test_einthoven_float32_within_4ulp(i, ii):
    rec = assemble_record([i, ii] + [np.zeros(32)] * 6, 500, dtype=np.float32)
    s = rec.samples
    err = np.abs(s[0] + s[2] - s[1])
    assert np.all(err <= 4 * np.spacing(np.maximum(np.abs(s[1]), np.abs(s[0])) + 1e-30))


@given(arrays(np.float64, 20, elements=st.floats(-5, 5)))
def test_assemble_deterministic(v):
    a = assemble_record([v] * 8, 500)
    b = assemble_record([v] * 8, 500)
    np.testing.assert_array_equal(a.samples, b.samples)

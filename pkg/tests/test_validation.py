from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cloudshift.schema import build_model, derive_default_mapping, storage_from_conceptual
from cloudshift.store.base import BlobHandle
from cloudshift.validation import (
    CHECKS,
    INTEGER_KINDS,
    Record,
    Recommendation,
    ValidationAborted,
    ValidationError,
    consistency_check,
    format_check,
    integrity_check,
    length_check,
    range_check,
    range_violations,
    run_all,
)
from seeded import ORG_DOC, clean_corpus, dept, emp, seeded_corpus

GiB = 1 << 30


@pytest.fixture
def org():
    model = build_model(ORG_DOC)
    storage = storage_from_conceptual(model)
    return model, storage, derive_default_mapping(model, storage)


# -- single-check examples -------------------------------------------------------


def test_personnel_missing_key_is_a_format_violation(personnel):
    recs = [Record("Personnel", {"LastName": "Memon"})]
    (v,) = format_check(recs, personnel.conceptual)
    assert (v.check, v.property) == ("format", "PersonalID")


def test_personnel_well_formed(personnel):
    recs = [Record("Personnel", {"PersonalID": f"P{i}", "LastName": "Shah"}) for i in range(100)]
    assert format_check(recs, personnel.conceptual) == []


def test_unknown_property_flagged(personnel):
    (v,) = format_check([Record("Personnel", {"PersonalID": "P1", "Zip": "71000"})], personnel.conceptual)
    assert v.property == "Zip"


def test_duplicate_key(org):
    model, _, _ = org
    (v,) = consistency_check([dept("P1"), dept("P1")], model)
    assert v.check == "consistency" and v.record_key == "P1"


def test_unique_keys_clean(org):
    assert consistency_check(clean_corpus(), org[0]) == []


def brute_force_dangling(records):
    dept_ids = [r.values["DeptID"] for r in records if r.entity == "Department"]
    out = []
    for r in records:
        if r.entity == "Employee" and r.values.get("DeptID") is not None:
            if not any(d == r.values["DeptID"] for d in dept_ids):
                out.append(r.values["EmpID"])
    return out


def test_dangling_reference_matches_join(org):
    recs = clean_corpus(3, 10) + [emp("E99", dept_id="D404")]
    found = [v.record_key for v in consistency_check(recs, org[0])]
    assert found == brute_force_dangling(recs) == ["E99"]


def test_length_boundary_is_inclusive(personnel):
    m, s, c = personnel.mapping, personnel.storage, personnel.conceptual
    assert length_check([Record("Personnel", {"PersonalID": "P1", "LastName": "x" * 50})], m, s, c) == []
    (v,) = length_check([Record("Personnel", {"PersonalID": "P1", "LastName": "x" * 60})], m, s, c)
    assert (v.check, v.property) == ("length", "LastName")


def test_length_counts_utf8_bytes(personnel):
    # 26 two-byte characters = 52 bytes
    rec = Record("Personnel", {"PersonalID": "P1", "LastName": "é" * 26})
    assert len(length_check([rec], personnel.mapping, personnel.storage, personnel.conceptual)) == 1


def test_blob_over_size_cap(personnel):
    huge = BlobHandle("Personnel", "P1", "Picture", 9 * GiB, 0)
    rec = Record("Personnel", {"PersonalID": "P1", "Picture": huge})
    (v,) = length_check([rec], personnel.mapping, personnel.storage, personnel.conceptual, size_cap_bytes=8 * GiB)
    assert v.property == "Picture"


def brute_force_kind(values):
    lo, hi = min(values), max(values)
    for name, kmin, kmax in INTEGER_KINDS:
        if kmin <= lo and hi <= kmax:
            return name
    return None


def test_range_recommendations_match_scan(org):
    recs = [dept(f"D{i}", budget=b) for i, b in enumerate([0, 17, 200, 3])]
    recs += [emp("E1", name="Twelve chars")]
    recs += [emp("E2", name="short")]
    rec = range_check(recs, org[0])
    assert rec["Department.Budget"] == Recommendation(brute_force_kind([0, 17, 200, 3])) == Recommendation("uint8")
    assert rec["Employee.Name"] == Recommendation("varchar", 12)
    assert range_check([], org[0]) == {}


@given(st.lists(st.integers(-(1 << 63), (1 << 63) - 1), min_size=1, max_size=30))
def test_range_kind_is_smallest_cover(values):
    model = build_model(ORG_DOC)
    recs = [dept(f"D{i}", budget=v) for i, v in enumerate(values)]
    got = range_check(recs, model)["Department.Budget"].storage_kind
    assert got == brute_force_kind(values)
    widths = [n for n, lo, hi in INTEGER_KINDS if lo <= min(values) and max(values) <= hi]
    assert got == widths[0]


def test_integrity_self_contained(org):
    assert integrity_check(clean_corpus(), org[0]) == []


def test_integrity_reference_to_excluded_record(org):
    model = org[0]
    d1, d1_dup = dept("D1"), dept("D1", title="Copy")
    e = emp("E1", dept_id="D2")
    d2 = dept("D2")
    # two-pass oracle: the consistency pass excludes nothing referenced by E1 unless D2 is gone
    excluded = [d2]
    kept = [d1, e]
    (v,) = integrity_check(kept, model, excluded=excluded)
    assert v.record_key == "E1" and "excluded" in v.detail
    assert integrity_check([d1, d1_dup, d2, e], model) == []


def test_unreadable_stream(org):
    def broken():
        yield dept("D1")
        raise OSError("disk gone")

    with pytest.raises(ValidationError):
        format_check(broken(), org[0])


# -- seeded-fault corpus -----------------------------------------------------------


def test_seeded_faults_each_found_by_its_check(org):
    model, storage, mapping = org
    recs, expected = seeded_corpus()
    report = run_all(recs, model, mapping, storage)
    assert len(report.violations) == 5
    assert {v.record_key: v.check for v in report.violations} == expected
    assert report.by_check() == {c: 1 for c in CHECKS}
    assert report.records_excluded == 5 <= report.records_scanned


def test_clean_corpus_is_clean(org):
    model, storage, mapping = org
    report = run_all(clean_corpus(), model, mapping, storage)
    assert report.ok and report.records_excluded == 0 and report.records_scanned == 100


def test_fail_policy_aborts_at_first_finding(org):
    model, storage, mapping = org
    recs, _ = seeded_corpus()
    with pytest.raises(ValidationAborted) as info:
        run_all(recs, model, mapping, storage, policy="fail")
    assert info.value.report.aborted_at == "format"
    assert [v.check for v in info.value.report.violations] == ["format"]


def test_report_serialization_is_deterministic(org):
    model, storage, mapping = org
    a = run_all(seeded_corpus(3)[0], model, mapping, storage).to_json()
    b = run_all(seeded_corpus(3)[0], model, mapping, storage).to_json()
    assert a == b
    assert json.loads(a)["records_scanned"] == 105


@given(st.integers(0, 10_000), st.integers(0, 200))
def test_clean_record_never_adds_violations(seed, n):
    model = build_model(ORG_DOC)
    storage = storage_from_conceptual(model)
    mapping = derive_default_mapping(model, storage)
    recs, _ = seeded_corpus(seed)
    before = len(run_all(recs, model, mapping, storage).violations)
    extra = emp(f"Enew{n}", dept_id=f"D{n % 5}", name="Clean Record")
    after = len(run_all(recs + [extra], model, mapping, storage).violations)
    assert after <= before


def test_integer_outside_int64_is_a_range_violation(org):
    recs = [dept("D1", budget=(1 << 63) - 1), dept("D2", budget=1 << 63), dept("D3", budget=-(1 << 63))]
    assert [v.record_key for v in range_violations(recs, org[0])] == ["D2"]

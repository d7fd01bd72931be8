"""Shared test data: a two-entity model and a corpus seeded with one fault per check."""

from __future__ import annotations

import random

from cloudshift.validation import Record

ORG_DOC = {
    "entities": [
        {
            "name": "Department",
            "properties": [
                {"name": "DeptID", "kind": "text", "max_length": 10, "is_key": True, "required": True},
                {"name": "Title", "kind": "text", "max_length": 40},
                {"name": "Budget", "kind": "integer"},
            ],
        },
        {
            "name": "Employee",
            "properties": [
                {"name": "EmpID", "kind": "text", "max_length": 10, "is_key": True, "required": True},
                {"name": "Name", "kind": "text", "max_length": 50, "required": True},
                {"name": "DeptID", "kind": "text", "max_length": 10},
                {"name": "Photo", "kind": "binary_blob"},
            ],
            "associations": [
                {"name": "works_in", "from_entity": "Employee", "from_property": "DeptID",
                 "to_entity": "Department", "to_property": "DeptID"}
            ],
        },
    ]
}


def dept(key, budget=1000, title="Ops"):
    return Record("Department", {"DeptID": key, "Title": title, "Budget": budget})


def emp(key, dept_id="D1", name="Ada Lovelace", **extra):
    return Record("Employee", {"EmpID": key, "Name": name, "DeptID": dept_id, **extra})


def clean_corpus(n_depts=5, n_emps=95):
    depts = [dept(f"D{i}", budget=i * 100) for i in range(n_depts)]
    emps = [emp(f"E{i}", dept_id=f"D{i % n_depts}", name=f"Employee {i}") for i in range(n_emps)]
    return depts + emps


def seeded_corpus(seed=11):
    """Clean corpus plus exactly one fault per check, shuffled; returns (records, expected {key: check})."""
    recs = clean_corpus()
    faults = {
        "E_fmt": ("format", Record("Employee", {"EmpID": "E_fmt", "DeptID": "D1"})),  # Name missing
        "D1": ("consistency", dept("D1", title="Duplicate")),
        "E_len": ("length", emp("E_len", name="N" * 60)),
        "D_big": ("range", dept("D_big", budget=1 << 70)),
        # references a department that only the range check removes
        "E_int": ("integrity", emp("E_int", dept_id="D_big")),
    }
    recs = recs + [r for _, r in faults.values()]
    random.Random(seed).shuffle(recs)
    return recs, {k: c for k, (c, _) in faults.items()}

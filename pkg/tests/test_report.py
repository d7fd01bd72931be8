from __future__ import annotations

import csv
import json
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cloudshift.bench import EfficiencyRow, aggregate
from cloudshift.engine import CATEGORIES
from cloudshift.report import (
    CSV_COLUMNS,
    ReportSchemaError,
    emit,
    load_directory,
    read_efficiency_csv,
    render_svg,
    representative,
    summarize,
    write_efficiency_csv,
)

SVG = "{http://www.w3.org/2000/svg}"


def rows_for(category, n, offset=0):
    return [EfficiencyRow.from_deltas(f"{category}-{i:04d}", category, (i * 37) % 50 - 10 + offset, 7) for i in range(n)]


def test_csv_header_and_round_trip(tmp_path):
    rows = rows_for("image_small", 25)
    path = write_efficiency_csv(tmp_path / "efficiency_image_small.csv", rows)
    with open(path, newline="") as fh:
        assert tuple(next(csv.reader(fh))) == CSV_COLUMNS == ("item_id", "STE", "TTE", "TTTE")
    assert read_efficiency_csv(path) == rows


def test_missing_column_is_a_schema_error(tmp_path):
    path = tmp_path / "efficiency_text_small.csv"
    path.write_text("item_id,STE,TTE\na,1,2\n")
    with pytest.raises(ReportSchemaError, match="TTTE"):
        read_efficiency_csv(path)


def test_non_additive_csv_row_rejected(tmp_path):
    path = tmp_path / "efficiency_image_large.csv"
    path.write_text("item_id,STE,TTE,TTTE\nrow5,-269,11171,3153\n")
    with pytest.raises(ReportSchemaError):
        read_efficiency_csv(path)


def test_empty_csv(tmp_path):
    write_efficiency_csv(tmp_path / "efficiency_text_small.csv", [])
    loaded = load_directory(tmp_path)
    assert loaded == {"text_small": []}
    report = aggregate(loaded["text_small"])
    assert report.items == 0 and report.success_rate == 0
    assert "(no rows)" in summarize(loaded, report)


def test_four_categories_give_four_ten_row_tables(tmp_path):
    by_cat = {c: rows_for(c, 100) for c in CATEGORIES}
    emit(tmp_path, by_cat)
    loaded = load_directory(tmp_path)
    assert list(loaded) == list(CATEGORIES)
    text = summarize(loaded, aggregate([r for rows in loaded.values() for r in rows]))
    for c in CATEGORIES:
        assert sum(1 for line in text.splitlines() if line.startswith(f"{c}-")) == 10
    doc = json.loads((tmp_path / "aggregate.json").read_text())
    assert sorted(doc["categories"]) == sorted(CATEGORIES)
    assert doc["items"] == 400


def test_chart_has_success_and_failure_bar_per_category():
    report = aggregate(rows_for("image_large", 10) + rows_for("text_small", 4, offset=-100))
    root = ET.fromstring(render_svg(report))
    bars = {(r.get("data-category"), r.get("data-outcome")): int(r.get("data-count")) for r in root.iter(f"{SVG}rect") if r.get("data-category")}
    assert set(bars) == {(c, o) for c in CATEGORIES for o in ("success", "failure")}
    assert bars[("text_small", "failure")] == 4
    assert bars[("image_small", "success")] == 0


@given(st.lists(st.integers(-1000, 1000), max_size=60), st.integers(1, 12))
def test_representative_rows_are_ordered_and_bounded(totals, n):
    rows = [EfficiencyRow.from_deltas(f"i{k}", "text_small", t, 0) for k, t in enumerate(totals)]
    picked = representative(rows, n)
    assert len(picked) == min(n, len(rows))
    assert [r.total_eff_ms for r in picked] == sorted(r.total_eff_ms for r in picked)
    if rows and n > 1 and len(rows) > n:
        assert picked[0].total_eff_ms == min(totals) and picked[-1].total_eff_ms == max(totals)

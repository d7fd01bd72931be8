from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .bench import AggregateReport, EfficiencyRow, aggregate, classify
from .engine import CATEGORIES

CSV_COLUMNS = ("item_id", "STE", "TTE", "TTTE")
REPRESENTATIVE_ROWS = 10


class ReportSchemaError(ValueError):
    pass


def csv_path(out_dir: str | Path, category: str) -> Path:
    return Path(out_dir) / f"efficiency_{category}.csv"


def write_efficiency_csv(path: str | Path, rows: Iterable[EfficiencyRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.item_id, r.save_eff_ms, r.transfer_eff_ms, r.total_eff_ms])
    return path


def read_efficiency_csv(path: str | Path, category: str | None = None) -> list[EfficiencyRow]:
    path = Path(path)
    if category is None:
        category = path.stem.removeprefix("efficiency_")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ReportSchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            try:
                rows.append(EfficiencyRow(rec["item_id"], category, int(rec["STE"]), int(rec["TTE"]), int(rec["TTTE"])))
            except (TypeError, ValueError) as exc:
                raise ReportSchemaError(f"{path.name}:{n}: {exc}") from exc
    return rows


def representative(rows: Sequence[EfficiencyRow], n: int = REPRESENTATIVE_ROWS) -> list[EfficiencyRow]:
    """``n`` rows spread evenly over the total-efficiency ordering (all rows if there are fewer)."""
    ordered = sorted(rows, key=lambda r: (r.total_eff_ms, r.item_id))
    if len(ordered) <= n:
        return ordered
    if n == 1:
        return [ordered[len(ordered) // 2]]
    return [ordered[round(i * (len(ordered) - 1) / (n - 1))] for i in range(n)]


def format_table(category: str, rows: Sequence[EfficiencyRow]) -> str:
    lines = [f"{category}", f"{'item_id':<24}{'STE':>10}{'TTE':>10}{'TTTE':>10}  outcome"]
    for r in rows:
        lines.append(f"{r.item_id:<24}{r.save_eff_ms:>10}{r.transfer_eff_ms:>10}{r.total_eff_ms:>10}  {classify(r)}")
    if not rows:
        lines.append("(no rows)")
    return "\n".join(lines)


def format_aggregate(report: AggregateReport) -> str:
    lines = [f"{'category':<14}{'success':>9}{'failure':>9}"]
    for cat, c in report.categories.items():
        lines.append(f"{cat:<14}{c.success_count:>9}{c.failure_count:>9}")
    lines.append(f"success rate: {report.success_count}/{report.items} = {report.success_rate:.2f}")
    return "\n".join(lines)


def render_svg(report: AggregateReport, width: int = 640, height: int = 360) -> str:
    """Grouped bar chart: one success and one failure bar per category."""
    pad_l, pad_r, pad_t, pad_b = 48, 16, 32, 48
    plot_w, plot_h = width - pad_l - pad_r, height - pad_t - pad_b
    cats = list(report.categories)
    peak = max([1] + [max(c.success_count, c.failure_count) for c in report.categories.values()])
    group_w = plot_w / max(1, len(cats))
    bar_w = group_w * 0.35
    colors = {"success": "#3a7d44", "failure": "#c0392b"}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-size="14">Successful and failed cases per category</text>',
        f'<line x1="{pad_l}" y1="{pad_t + plot_h}" x2="{pad_l + plot_w}" y2="{pad_t + plot_h}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + plot_h}" stroke="black"/>',
        f'<text x="{pad_l - 6}" y="{pad_t + 4}" text-anchor="end" font-size="10">{peak}</text>',
        f'<text x="{pad_l - 6}" y="{pad_t + plot_h}" text-anchor="end" font-size="10">0</text>',
    ]
    for i, cat in enumerate(cats):
        c = report.categories[cat]
        x0 = pad_l + i * group_w + group_w * 0.15
        for j, (outcome, value) in enumerate((("success", c.success_count), ("failure", c.failure_count))):
            h = plot_h * value / peak
            x = x0 + j * bar_w
            y = pad_t + plot_h - h
            out.append(
                f'<rect data-category="{escape(cat)}" data-outcome="{outcome}" data-count="{value}" '
                f'x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" fill="{colors[outcome]}"/>'
            )
            out.append(f'<text x="{x + bar_w / 2:.1f}" y="{y - 3:.1f}" text-anchor="middle" font-size="10">{value}</text>')
        out.append(
            f'<text x="{x0 + bar_w:.1f}" y="{pad_t + plot_h + 16}" text-anchor="middle" font-size="11">{escape(cat)}</text>'
        )
    lx = pad_l + plot_w - 150
    for j, outcome in enumerate(("success", "failure")):
        out.append(f'<rect x="{lx + j * 75}" y="{height - 18}" width="10" height="10" fill="{colors[outcome]}"/>')
        out.append(f'<text x="{lx + j * 75 + 14}" y="{height - 9}" font-size="10">{outcome}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit(out_dir: str | Path, rows_by_category: dict[str, list[EfficiencyRow]], report: AggregateReport | None = None) -> AggregateReport:
    """Write the per-category CSVs, aggregate.json and aggregate.svg; return the aggregate."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for cat, rows in rows_by_category.items():
        write_efficiency_csv(csv_path(out, cat), rows)
    if report is None:
        report = aggregate([r for rows in rows_by_category.values() for r in rows])
    (out / "aggregate.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "aggregate.svg").write_text(render_svg(report), encoding="utf-8")
    return report


def load_directory(in_dir: str | Path) -> dict[str, list[EfficiencyRow]]:
    found = {p.stem.removeprefix("efficiency_"): p for p in sorted(Path(in_dir).glob("efficiency_*.csv"))}
    ordered = [c for c in CATEGORIES if c in found] + [c for c in found if c not in CATEGORIES]
    return {c: read_efficiency_csv(found[c], c) for c in ordered}


def summarize(rows_by_category: dict[str, list[EfficiencyRow]], report: AggregateReport) -> str:
    parts = [format_table(cat, representative(rows)) for cat, rows in rows_by_category.items()]
    parts.append(format_aggregate(report))
    return "\n\n".join(parts)

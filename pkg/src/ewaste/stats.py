"""Bundled e-waste statistics plus growth and category-share reports.

Two reference series ship with the package: annual e-waste generation
for India, 2015-2019 (million metric tonnes), and the 2014 global
breakdown by equipment category (million tonnes). The published global
total for 2014 is 41.8 million tonnes while the category amounts sum to
41.9; the report prints both figures and the 0.1 discrepancy rather than
hiding it. Likewise the widely cited 3-5% annual growth claim sits next
to the ~13% rates the India series actually shows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence


class StatsError(Exception):
    pass


class GapInSeries(StatsError):
    """Series has fewer than two records or non-consecutive years."""


@dataclass(frozen=True)
class GenerationRecord:
    year: int
    amount_mmt: float  # million metric tonnes


@dataclass(frozen=True)
class CategoryRecord:
    category: str
    amount_mt: float  # million tonnes


GENERATION_INDIA = (
    GenerationRecord(2015, 1.97),
    GenerationRecord(2016, 2.22),
    GenerationRecord(2017, 2.53),
    GenerationRecord(2018, 2.86),
    GenerationRecord(2019, 3.23),
)

CATEGORIES_GLOBAL_2014 = (
    CategoryRecord("Temperature exchange equipment", 7.0),
    CategoryRecord("Screens & monitors", 6.3),
    CategoryRecord("Lamps", 1.0),
    CategoryRecord("Large Equipment", 11.8),
    CategoryRecord("Small equipment", 12.8),
    CategoryRecord("Small IT & telecommunication equipment", 3.0),
)

REPORTED_GLOBAL_TOTAL_2014 = 41.8
CLAIMED_ANNUAL_GROWTH = (0.03, 0.05)


def builtin_tables() -> tuple[list[GenerationRecord], list[CategoryRecord]]:
    """The bundled generation and category series, as fresh lists."""
    return list(GENERATION_INDIA), list(CATEGORIES_GLOBAL_2014)


def _check_series(series: Sequence[GenerationRecord]) -> list[GenerationRecord]:
    ordered = sorted(series, key=lambda r: r.year)
    if len(ordered) < 2:
        raise GapInSeries(f"need at least 2 records, got {len(ordered)}")
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.year != prev.year + 1:
            raise GapInSeries(f"years {prev.year} and {cur.year} are not consecutive")
    return ordered


def yoy_growth(series: Sequence[GenerationRecord]) -> list[tuple[int, float]]:
    """Year-over-year growth rates: amount(y)/amount(y-1) - 1."""
    ordered = _check_series(series)
    return [(cur.year, cur.amount_mmt / prev.amount_mmt - 1)
            for prev, cur in zip(ordered, ordered[1:])]


def cagr(series: Sequence[GenerationRecord]) -> float:
    """Compound annual growth rate: (last/first)^(1/years) - 1."""
    ordered = _check_series(series)
    years = ordered[-1].year - ordered[0].year
    return (ordered[-1].amount_mmt / ordered[0].amount_mmt) ** (1 / years) - 1


@dataclass(frozen=True)
class CategoryReport:
    total: float
    shares: tuple[tuple[str, float], ...]  # (category, fraction of total)


def category_report(records: Sequence[CategoryRecord]) -> CategoryReport:
    """Total amount and per-category shares (shares sum to 1)."""
    if not records:
        raise StatsError("category report needs at least one record")
    total = math.fsum(r.amount_mt for r in records)
    shares = tuple((r.category, r.amount_mt / total) for r in records)
    return CategoryReport(total, shares)


def build_report() -> dict:
    """Assemble the full statistics report as plain data."""
    generation, categories = builtin_tables()
    cat = category_report(categories)
    return {
        "generation_series": {
            "label": "India",
            "unit": "million metric tonnes",
            "records": [{"year": r.year, "amount": r.amount_mmt} for r in generation],
        },
        "yoy_growth": [{"year": y, "rate": rate} for y, rate in yoy_growth(generation)],
        "cagr": cagr(generation),
        "claimed_annual_growth_range": list(CLAIMED_ANNUAL_GROWTH),
        "categories_2014": {
            "unit": "million tonnes",
            "records": [{"category": r.category, "amount": r.amount_mt,
                         "share": share} for r, (_, share) in zip(categories, cat.shares)],
            "computed_total": cat.total,
            "reported_global_total": REPORTED_GLOBAL_TOTAL_2014,
            "total_discrepancy": cat.total - REPORTED_GLOBAL_TOTAL_2014,
        },
    }


def render_text() -> str:
    report = build_report()
    lines = []
    lines.append("E-waste generation, India (million metric tonnes)")
    for rec in report["generation_series"]["records"]:
        lines.append(f"  {rec['year']}  {rec['amount']:.2f}")
    lines.append("Year-over-year growth")
    for rec in report["yoy_growth"]:
        lines.append(f"  {rec['year']}  {rec['rate'] * 100:.2f}%")
    lo, hi = report["claimed_annual_growth_range"]
    lines.append(f"CAGR {report['cagr'] * 100:.2f}%"
                 f" (commonly claimed global rate: {lo * 100:.0f}% to {hi * 100:.0f}%)")
    lines.append("2014 global e-waste by category (million tonnes)")
    cats = report["categories_2014"]
    for rec in cats["records"]:
        lines.append(f"  {rec['category']}: {rec['amount']:.1f} ({rec['share'] * 100:.2f}%)")
    lines.append(f"Category total {cats['computed_total']:.1f}"
                 f" vs reported 2014 global total {cats['reported_global_total']:.1f}"
                 f" (discrepancy {cats['total_discrepancy']:+.1f})")
    return "\n".join(lines) + "\n"


def render_json() -> str:
    return json.dumps(build_report(), sort_keys=True, indent=2) + "\n"

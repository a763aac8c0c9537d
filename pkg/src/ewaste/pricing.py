"""Weight-based price quoting from a flat per-kilogram rate table."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping


class PricingError(Exception):
    pass


class MalformedDocument(PricingError):
    """Price-table file is not the expected JSON shape."""


class NonPositivePrice(PricingError):
    pass


class UnknownCategory(PricingError):
    pass


class NegativeWeight(PricingError):
    pass


@dataclass(frozen=True)
class PriceTable:
    """Per-category unit prices (currency per kilogram)."""

    prices: Mapping[str, float]
    currency_code: str

    def unit_price(self, category: str) -> float:
        try:
            return self.prices[category]
        except KeyError:
            raise UnknownCategory(f"no price for category {category!r}") from None

    def __contains__(self, category: str) -> bool:
        return category in self.prices


@dataclass(frozen=True)
class Quote:
    category: str
    weight_g: float
    unit_price_per_kg: float
    amount: float
    currency_code: str


def round2(value: float) -> float:
    """Round to 2 decimals, ties to even (Python's float rounding)."""
    return round(value, 2)


def quote(category: str, weight_g: float, table: PriceTable) -> Quote:
    """Price a weight of one category: round2(weight_kg * unit_price).

    Internal arithmetic is unrounded; rounding happens once at the quote
    boundary so totals are reproducible.
    """
    if weight_g < 0:
        raise NegativeWeight(f"weight must be >= 0, got {weight_g}")
    unit = table.unit_price(category)
    amount = round2(weight_g / 1000 * unit)
    return Quote(category, weight_g, unit, amount, table.currency_code)


def load_price_table(data: bytes) -> PriceTable:
    """Load and validate a price-table document.

    Expected shape: {"currency_code": "INR", "prices": {category: rate}}.
    Rejects non-positive rates.
    """
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "prices" not in doc or "currency_code" not in doc:
        raise MalformedDocument("expected object with 'prices' and 'currency_code'")
    prices = doc["prices"]
    if not isinstance(prices, dict):
        raise MalformedDocument("'prices' must be an object of category -> rate")
    for category, rate in prices.items():
        if not isinstance(rate, (int, float)) or isinstance(rate, bool) or rate <= 0:
            raise NonPositivePrice(f"price for {category!r} must be > 0, got {rate!r}")
    return PriceTable(dict(prices), doc["currency_code"])


def dump_price_table(table: PriceTable) -> bytes:
    doc = {"currency_code": table.currency_code, "prices": dict(table.prices)}
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()

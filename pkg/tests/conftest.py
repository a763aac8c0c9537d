import pytest

from ewaste import pricing


@pytest.fixture
def price_table():
    return pricing.PriceTable(
        {"circuit_board": 120.0, "sensor": 300.0, "cable": 40.0}, "INR")

"""Larger examples, deselected by default (run with ``pytest -m slow``)."""
from __future__ import annotations

import pytest
from flint import fmpz_poly

T = fmpz_poly([0, 1])

pytestmark = pytest.mark.slow


def coeffs(f: fmpz_poly) -> list[int]:
    return [int(c) for c in f.coeffs()]


def test_quintic_triple_point(runs):
    _, rep, _ = runs.get("quintic_triple_point")
    want = (1 - T) * (1 + T) * (1 + 11 * T ** 2) * (
        1 + 5 * T + 22 * T ** 2 + 62 * T ** 3 + 242 * T ** 4 + 605 * T ** 5 + 1331 * T ** 6)
    assert rep.e == 3
    assert rep.filtration["dims"] == [0, 2, 10, 12]
    assert rep.kernel_factor["poly"] == coeffs(want)
    assert not rep.failures


def test_quartic_two_nodes(runs):
    _, rep, _ = runs.get("quartic_a1")
    # Q(T/5) = (1-T)^7 (1+T)^6 (1+T^2)^2 (1+T+T^2)(1 + 2T/5 + T^2)
    want = ((1 - 5 * T) ** 7 * (1 + 5 * T) ** 6 * (1 + 25 * T ** 2) ** 2
            * (1 + 5 * T + 25 * T ** 2) * (1 + 2 * T + 25 * T ** 2))
    assert rep.e == 2 and rep.checks["nilpotency_index"] == 1
    assert rep.filtration["dims"] == [0, 0, 0, 21, 21, 21]
    assert rep.kernel_factor["poly"] == rep.charpoly["poly"] == coeffs(want)
    assert not rep.failures

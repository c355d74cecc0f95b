from __future__ import annotations

from collections import Counter

import pytest
from flint import fmpq

from conftest import load_family
from limifrob.exact_algebra import RatFunc
from limifrob.griffiths_dwork import (DworkBasisElement, Family, NotGeneralPosition, dwork_basis,
                                      dwork_basis_size_formula, gauss_manin_at_point,
                                      gauss_manin_exact, gauss_manin_matrix, reduce_to_basis)
from limifrob.polynomials import MPoly


def fermat(nvars: int, d: int) -> MPoly:
    return MPoly.diagonal(nvars, d)


def constant_pencil(n: int, d: int) -> Family:
    F = fermat(n + 2, d)
    return Family(n, d, F, F)


@pytest.mark.parametrize("n,d,by_k", [
    (1, 4, {1: 3, 2: 3}),
    (2, 4, {1: 1, 2: 19, 3: 1}),
    (3, 3, {2: 5, 3: 5}),
])
def test_basis_pole_orders(n, d, by_k):
    basis = dwork_basis(n, d)
    assert dict(Counter(b.k for b in basis)) == by_k
    assert len(basis) == dwork_basis_size_formula(n, d)


def test_basis_exponent_bounds():
    for b in dwork_basis(2, 5):
        assert max(b.w) <= 3 and sum(b.w) == 5 * b.k - 4


def test_basis_rejects_small_input():
    with pytest.raises(ValueError):
        dwork_basis(0, 4)


class TestReduction:
    def test_basis_element_is_unit_vector(self):
        fam = load_family("double_conic")
        F = Family.from_input(fam)
        basis = dwork_basis(1, 4)
        for i, b in enumerate(basis):
            col = reduce_to_basis({b.w: 1}, b.k, F)
            assert col == [RatFunc(1) if j == i else RatFunc(0) for j in range(len(basis))]

    def test_hand_griffiths_step(self):
        # x0*x1 * dP/dx0 / P^2 reduces to d(x0 x1)/dx0 / P = x1 / P on the Fermat quartic
        F = constant_pencil(1, 4)
        col = reduce_to_basis({(4, 1, 0): 4}, 2, F)
        i = dwork_basis(1, 4).index(DworkBasisElement(1, (0, 1, 0)))
        assert col[i] == RatFunc(1)
        assert sum(1 for c in col if not c.is_zero()) == 1

    def test_degree_mismatch(self):
        with pytest.raises(ValueError):
            reduce_to_basis({(1, 1, 1): 1}, 2, constant_pencil(1, 4))

    def test_singular_member_is_not_general_position(self):
        X4Y4 = MPoly.diagonal(2, 4)
        P = MPoly(3, {(a, b, 0): c for (a, b), c in X4Y4.terms.items()})
        with pytest.raises(NotGeneralPosition):
            reduce_to_basis({(0, 0, 5): 1}, 2, Family(1, 4, P, P))


@pytest.fixture(scope="module")
def conic():
    F = Family.from_input(load_family("double_conic"))
    return F, gauss_manin_matrix(F)


class TestConnection:
    def test_constant_pencil_is_flat(self):
        conn = gauss_manin_matrix(constant_pencil(1, 4))
        assert all(c.is_zero() for row in conn.numerators for c in row)

    def test_transversality(self, conic):
        _, conn = conic
        for i, bi in enumerate(conn.basis):
            for j, bj in enumerate(conn.basis):
                if bi.k > bj.k + 1:
                    assert conn.numerators[i][j].is_zero(), (bi, bj)

    def test_modular_matches_exact_engine(self, conic):
        F, conn = conic
        ex = gauss_manin_exact(F)
        assert ex.denominator == conn.denominator
        assert ex.numerators == conn.numerators

    @pytest.mark.parametrize("t0", [fmpq(3), fmpq(-2, 7)])
    def test_modular_matches_point_reduction(self, conic, t0):
        F, conn = conic
        assert conn.evaluate(t0) == gauss_manin_at_point(F, t0)

    def test_worker_count_does_not_change_result(self, conic):
        F, conn = conic
        par = gauss_manin_matrix(F, workers=2)
        assert par.denominator == conn.denominator
        assert par.numerators == conn.numerators

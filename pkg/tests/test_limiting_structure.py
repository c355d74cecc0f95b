from __future__ import annotations

from math import comb

import pytest
from flint import fmpq, fmpq_mat

from limifrob.frobenius_deformation import diagonal_frobenius
from limifrob.limiting_structure import (BoundTooLargeForPrecision, LimitingStructure, NotNilpotent,
                                         Unrecognized, check_filtration, graded_analysis,
                                         monodromy_filtration, nilpotency_index,
                                         recognize_integer_poly, reverse_charpoly, weight_bounds,
                                         weil_weight_check)
from limifrob.padic_arith import PadicScalar

DOUBLE_CONIC_Q = [1, -6, 23, -58, 115, -150, 125]


def jordan(r: int, blocks: list[int]) -> fmpq_mat:
    """Nilpotent matrix with the given Jordan block sizes, padded with zeros."""
    M = fmpq_mat(r, r)
    at = 0
    for size in blocks:
        for i in range(size - 1):
            M[at + i, at + i + 1] = 1
        at += size
    return M


class TestFiltration:
    def test_zero_monodromy_surface(self):
        filt = monodromy_filtration(fmpq_mat(21, 21), 2)
        assert filt.dims == [0, 0, 0, 21, 21, 21]

    def test_one_node_curve(self):
        N0 = jordan(20, [2])
        filt = monodromy_filtration(N0, 1)
        assert filt.dims == [0, 1, 19, 20]
        check_filtration(filt, N0)

    def test_maximal_block_surface(self):
        N0 = jordan(21, [3])
        filt = monodromy_filtration(N0, 2)
        assert filt.dims == [0, 1, 1, 20, 20, 21]
        assert filt.graded_dims() == {0: 1, 1: 0, 2: 19, 3: 0, 4: 1}
        check_filtration(filt, N0)

    def test_graded_dims_symmetric(self):
        N0 = jordan(12, [3, 2, 2])
        g = monodromy_filtration(N0, 2).graded_dims()
        assert all(g[k] == g[4 - k] for k in range(5))

    def test_too_long_block(self):
        with pytest.raises(NotNilpotent):
            monodromy_filtration(jordan(4, [3]), 1)

    def test_nilpotency_index(self):
        assert nilpotency_index(fmpq_mat(3, 3)) == 1
        assert nilpotency_index(jordan(5, [3, 2])) == 3
        with pytest.raises(NotNilpotent):
            nilpotency_index(fmpq_mat([[1]]))


class TestRecognition:
    def test_small_negative(self):
        x = PadicScalar.from_rational(fmpq(-6), 5, 10)
        assert recognize_integer_poly([x], [100]) == [-6]

    def test_bound_too_large(self):
        x = PadicScalar.from_rational(fmpq(2), 5, 2)
        with pytest.raises(BoundTooLargeForPrecision):
            recognize_integer_poly([x], [100])

    def test_out_of_bound(self):
        x = PadicScalar.from_rational(fmpq(5 ** 9), 5, 10)
        with pytest.raises(Unrecognized):
            recognize_integer_poly([x], [100])

    def test_weight_bounds_single_piece(self):
        p = 5
        b = weight_bounds({1: 6}, p)
        for i, bi in enumerate(b):
            # smallest integer >= binom(6, i) p^(i/2)
            exact2 = comb(6, i) ** 2 * p ** i
            assert (bi - 1) ** 2 < exact2 <= bi ** 2
        assert b[3] == 224 and b[6] == 125

    def test_weight_bounds_mixed(self):
        # (1 + T)(1 + 5T) for weights 0 and 2 at p = 5
        assert weight_bounds({0: 1, 2: 1}, 5) == [1, 6, 5]

    def test_double_conic_from_digits(self):
        coeffs = [PadicScalar.from_rational(fmpq(c), 5, 10) for c in DOUBLE_CONIC_Q]
        assert recognize_integer_poly(coeffs, weight_bounds({1: 6}, 5)) == DOUBLE_CONIC_Q


class TestWeil:
    def test_double_conic(self):
        assert weil_weight_check(DOUBLE_CONIC_Q, fmpq(1, 2), 5).passed

    def test_weight_zero(self):
        assert weil_weight_check([1, -1], 0, 5).passed

    def test_wrong_modulus(self):
        res = weil_weight_check([1, -3], fmpq(1, 2), 5)
        assert not res.passed
        assert res.moduli == pytest.approx([3.0])

    def test_constant(self):
        assert weil_weight_check([1], 1, 7).passed

    def test_needs_unit_constant_term(self):
        with pytest.raises(ValueError):
            weil_weight_check([2, 1], 0, 5)


def test_reverse_charpoly_diagonal():
    p = 7
    A = [[PadicScalar.from_rational(fmpq(2), p, 8), PadicScalar.zero(p, 8)],
         [PadicScalar.zero(p, 8), PadicScalar.from_rational(fmpq(3), p, 8)]]
    got = [c.to_rational_symmetric() for c in reverse_charpoly(A, p)]
    assert got == [1, -5, 6]


def test_zero_monodromy_kernel_is_everything():
    p, N = 5, 12
    F1 = diagonal_frobenius(1, 4, p, N)
    ls = LimitingStructure(1, 1, fmpq_mat(6, 6), F1, N)
    rep = graded_analysis(ls, monodromy_filtration(ls.N0, 1))
    assert rep.kernel_factor == rep.full
    assert rep.kernel_dim == 6
    assert rep.product_matches and rep.all_pure
    assert [g.k for g in rep.pieces] == [1]


def test_double_conic_run(runs):
    _, rep, art = runs.get("double_conic")
    assert art.weil.full == art.weil.kernel_factor == DOUBLE_CONIC_Q

from __future__ import annotations

import random

import pytest
from flint import fmpq, fmpq_mat, fmpq_poly

from limifrob.exact_algebra import (DimensionMismatch, FracMatrix, LaurentPoly, Matrix, NonSquare,
                                    NoSolution, NotRationalSpectrum, RatFunc, berkowitz, char_poly,
                                    gauge_transform, kernel_basis, rational_eigenvalues,
                                    rational_roots, solve_linear)

t = fmpq_poly([0, 1])


def R(num, den=None):
    return RatFunc(num, den)


def det_laplace(rows):
    """Cofactor expansion, fine for the 4x4 oracle."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    acc = RatFunc(0)
    for j in range(n):
        if rows[0][j].is_zero():
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        term = rows[0][j] * det_laplace(minor)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def cramer(A: Matrix, b):
    rows = [[RatFunc.coerce(x) for x in A.row(i)] for i in range(A.rows)]
    D = det_laplace(rows)
    out = []
    for j in range(A.cols):
        Aj = [r[:j] + [RatFunc.coerce(b[i])] + r[j + 1:] for i, r in enumerate(rows)]
        out.append(det_laplace(Aj) / D)
    return out


def random_ratfunc(rng):
    num = fmpq_poly([rng.randint(-4, 4) for _ in range(rng.randint(1, 3))])
    den = fmpq_poly([rng.randint(1, 3), rng.randint(-2, 2)])
    return RatFunc(num, den)


class TestSolveLinear:
    def test_identity(self):
        b = [R(t + 1), R(3), R(1, t - 2)]
        assert solve_linear(Matrix.identity(3, R(1), R(0)), b) == b

    def test_diagonal(self):
        A = Matrix.from_rows([[R(t), R(0)], [R(0), R(t + 1)]])
        assert solve_linear(A, [R(t * t), R(t + 1)]) == [R(t), R(1)]

    @pytest.mark.parametrize("seed", range(5))
    def test_random_against_cramer(self, seed):
        rng = random.Random(seed)
        while True:
            A = Matrix.from_rows([[random_ratfunc(rng) for _ in range(4)] for _ in range(4)])
            rows = [[RatFunc.coerce(x) for x in A.row(i)] for i in range(4)]
            if not det_laplace(rows).is_zero():
                break
        x = [random_ratfunc(rng) for _ in range(4)]
        b = [sum((A[i, j] * x[j] for j in range(4)), RatFunc(0)) for i in range(4)]
        got = solve_linear(A, b)
        assert got == x
        assert got == cramer(A, b)

    def test_inconsistent(self):
        A = Matrix.from_rows([[R(1), R(t)], [R(2), R(2 * t)]])
        with pytest.raises(NoSolution):
            solve_linear(A, [R(1), R(3)])

    def test_underdetermined_sets_free_variables_to_zero(self):
        A = Matrix.from_rows([[R(1), R(t)]])
        assert solve_linear(A, [R(t)]) == [R(t), R(0)]

    def test_shape(self):
        with pytest.raises(DimensionMismatch):
            solve_linear(Matrix.identity(2), [R(1)])


class TestCharPoly:
    def test_zero(self):
        assert char_poly(Matrix.from_rows([[0, 0], [0, 0]])) == fmpq_poly([0, 0, 1])

    def test_diagonal(self):
        assert char_poly(Matrix.from_rows([[2, 0], [0, 3]])) == fmpq_poly([6, -5, 1])

    def test_companion(self):
        # x^3 - x - 1
        C = Matrix.from_rows([[0, 0, 1], [1, 0, 1], [0, 1, 0]])
        assert char_poly(C) == fmpq_poly([-1, -1, 0, 1])

    def test_nonsquare(self):
        with pytest.raises(NonSquare):
            char_poly(Matrix.from_rows([[1, 2, 3]]))

    @pytest.mark.parametrize("seed", range(4))
    def test_berkowitz_matches_flint(self, seed):
        rng = random.Random(seed)
        n = 5
        rows = [[fmpq(rng.randint(-5, 5), rng.randint(1, 3)) for _ in range(n)] for _ in range(n)]
        want = fmpq_mat(rows).charpoly()
        got = berkowitz(rows, fmpq(0), fmpq(1))
        assert fmpq_poly(got[::-1]) == want


class TestEigenvalues:
    def test_nilpotent(self):
        assert rational_eigenvalues(Matrix.from_rows([[0, 1, 5], [0, 0, 2], [0, 0, 0]])) == [0, 0, 0]

    def test_diagonal_fractions(self):
        M = Matrix.from_rows([[fmpq(1, 2), 0, 0], [0, fmpq(1, 2), 0], [0, 0, -1]])
        assert rational_eigenvalues(M) == [-1, fmpq(1, 2), fmpq(1, 2)]

    def test_companion_constructed(self):
        # (x - 2/3)(x + 1) = x^2 + x/3 - 2/3
        C = Matrix.from_rows([[0, fmpq(2, 3)], [1, fmpq(-1, 3)]])
        assert sorted(rational_eigenvalues(C)) == [-1, fmpq(2, 3)]

    def test_irrational(self):
        with pytest.raises(NotRationalSpectrum):
            rational_eigenvalues(Matrix.from_rows([[0, 2], [1, 0]]))

    def test_rational_roots_multiplicity(self):
        f = fmpq_poly([0, 0, 1]) * fmpq_poly([-3, 2]) ** 2
        assert sorted(rational_roots(f)) == [0, 0, fmpq(3, 2), fmpq(3, 2)]


def test_kernel_basis():
    A = fmpq_mat([[1, 2, 3], [2, 4, 6]])
    ker = kernel_basis(A)
    assert len(ker) == 2
    for v in ker:
        assert all(sum(A[i, j] * v[j] for j in range(3)) == 0 for i in range(2))


class TestRatFunc:
    def test_reduction(self):
        f = RatFunc(t * t - 1, 2 * t - 2)
        assert f.num == (t + 1) / 2 and f.den == fmpq_poly([1])

    def test_laurent(self):
        v, cs = RatFunc(1, t * t - t ** 3).laurent(2)
        assert v == -2 and cs == [1, 1, 1, 1]

    def test_valuation_and_derivative(self):
        f = RatFunc(t ** 3, t + 1)
        assert f.valuation() == 3
        assert f.derivative() == RatFunc(2 * t ** 3 + 3 * t ** 2, (t + 1) ** 2)


def test_laurent_poly_roundtrip():
    L = LaurentPoly.from_terms({-2: fmpq(3), 1: fmpq(-1)})
    assert L.to_ratfunc() == RatFunc(3 - t ** 3, t ** 2)
    assert L.derivative().terms() == {-3: -6, 0: -1}


def test_gauge_transform_scalar():
    # N = c/t, H = t^k: N' = c/t - k/t
    c, k = fmpq(3), 2
    N = FracMatrix.from_ratfuncs(Matrix.from_rows([[RatFunc(c, t)]]))
    H = FracMatrix.from_ratfuncs(Matrix.from_rows([[RatFunc(t ** k)]]))
    Hinv = FracMatrix.from_ratfuncs(Matrix.from_rows([[RatFunc(1, t ** k)]]))
    out = gauge_transform(H, Hinv, N).to_ratfuncs()
    assert out[0, 0] == RatFunc(c - k, t)

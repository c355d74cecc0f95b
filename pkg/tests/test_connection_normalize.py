from __future__ import annotations

import pytest
from flint import fmpq, fmpq_mat, fmpq_poly

from limifrob.connection_normalize import (NonIntegerEigenvalue, NotRegular, laurent_factorize,
                                           normalize, pullback, ramification_index, regularize,
                                           residue, shear_to_nilpotent)
from limifrob.exact_algebra import FracMatrix, Matrix, RatFunc, gauge_transform, is_zero_qmat

t = fmpq_poly([0, 1])


def frac(rows) -> FracMatrix:
    return FracMatrix.from_ratfuncs(Matrix.from_rows([[RatFunc.coerce(x) for x in r] for r in rows]))


def horizontal_ok(H, Hinv, N_old, N_new) -> bool:
    """N_new H - H N_old + H' = 0 and H Hinv = I."""
    return (H @ Hinv == FracMatrix.identity(H.rows)
            and (N_new @ H - H @ N_old + H.derivative()).is_zero())


class TestLaurentFactorize:
    def test_unit_at_zero(self):
        G = frac([[1 + t, t], [2, 3 - t]])
        assert laurent_factorize(G) == FracMatrix.identity(2)

    def test_monomial_diagonal(self):
        G = frac([[RatFunc(1, t), 0], [0, t]])
        assert laurent_factorize(G) == G

    @pytest.mark.parametrize("G", [
        [[RatFunc(1, t ** 2), RatFunc(1, t)], [t, 1 + t]],
        [[RatFunc(t + 2, t - 1), t ** 3], [RatFunc(1, t), 5]],
        [[t, RatFunc(1, t ** 2 + 1)], [RatFunc(3, t ** 2), t - 4]],
    ])
    def test_postcondition(self, G):
        G = frac(G)
        H = laurent_factorize(G)
        assert H.is_laurent()
        L = G @ H.laurent_inverse()
        assert L.valuation() >= 0 and L.coefficient(0).det() != 0


class TestRegularize:
    def test_simple_pole_untouched(self):
        N = frac([[RatFunc(1, t), 2], [0, RatFunc(-1, t * (t - 1))]])
        H1, _, Nreg = regularize(N)
        assert H1 == FracMatrix.identity(2) and Nreg == N

    def test_double_pole(self):
        N = frac([[0, RatFunc(1, t ** 2)], [0, 0]])
        H1, H1inv, Nreg = regularize(N)
        assert Nreg.pole_order() <= 1
        assert horizontal_ok(H1, H1inv, N, Nreg)
        assert gauge_transform(H1, H1inv, N) == Nreg

    def test_irregular_input(self):
        # exp(1/t) is not regular singular
        N = frac([[RatFunc(1, t ** 2)]])
        with pytest.raises(NotRegular):
            regularize(N)


class TestPullbackAndRamification:
    def test_identity_pullback(self):
        N = frac([[RatFunc(3, t)]])
        assert pullback(N, 1) is N

    def test_scalar(self):
        c = fmpq(5, 2)
        assert pullback(frac([[RatFunc(c, t)]]), 2) == frac([[RatFunc(2 * c, t)]])

    def test_eigenvalues_scale(self):
        N = frac([[RatFunc(fmpq(1, 3), t), 1], [0, RatFunc(fmpq(-1, 2), t) + 1]])
        e, eig = ramification_index(N)
        assert e == 6 and eig == [fmpq(-1, 2), fmpq(1, 3)]
        R = residue(pullback(N, e))
        assert sorted(R[i, i] for i in range(2)) == [-3, 2]

    def test_residue_needs_simple_pole(self):
        with pytest.raises(NotRegular):
            residue(frac([[RatFunc(1, t ** 2)]]))


class TestShear:
    def test_nilpotent_already(self):
        N = frac([[0, RatFunc(1, t)], [0, 0]])
        H, _, N2 = shear_to_nilpotent(N)
        assert H == FracMatrix.identity(2) and N2 == N

    @pytest.mark.parametrize("c", [-3, 1, 4])
    def test_scalar(self, c):
        # v' + (c/s) v = 0 is solved by s^(-c); the gauge s^c makes it constant
        N = frac([[RatFunc(c, t)]])
        H, Hinv, N2 = shear_to_nilpotent(N)
        assert H == frac([[t ** c if c >= 0 else RatFunc(1, t ** -c)]])
        assert N2.is_zero()

    def test_diag_one_zero(self):
        N = frac([[RatFunc(1, t), RatFunc(1, t - 1)], [1, 0]])
        H, Hinv, N2 = shear_to_nilpotent(N)
        assert horizontal_ok(H, Hinv, N, N2)
        R = residue(N2)
        assert is_zero_qmat(R * R)

    def test_fractional(self):
        with pytest.raises(NonIntegerEigenvalue):
            shear_to_nilpotent(frac([[RatFunc(fmpq(1, 2), t)]]))


def test_normalize_end_to_end():
    # unipotent monodromy behind a double pole and a half-integer exponent
    N = frac([[RatFunc(fmpq(1, 2), t), RatFunc(1, t ** 2)], [0, RatFunc(fmpq(1, 2), t)]])
    nc = normalize(N, n=1)
    assert nc.e == 2
    assert nc.Nprime.pole_order() <= 1
    assert is_zero_qmat(nc.N0 * nc.N0)
    assert horizontal_ok(nc.H, nc.Hinv, pullback(N, nc.e), nc.Nprime)


@pytest.mark.parametrize("name,e,nilp", [("double_conic", 2, 1), ("three_cusps", 6, 1)])
def test_families(runs, name, e, nilp):
    _, rep, art = runs.get(name)
    assert art.normalized.e == e
    assert art.normalized.nilpotency_index() == nilp


def test_rank_one_monodromy_cyclic_vector(runs):
    _, rep, art = runs.get("quintic_xyz3")
    nc = art.normalized
    assert nc.e == 3 and nc.nilpotency_index() == 2
    assert "regularized via cyclic vector" in nc.steps
    assert fmpq_mat.rank(nc.N0) == 1

"""Bring a Gauss-Manin matrix into normal form at the origin.

Conventions: column j of a connection matrix holds the coordinates of the
covariant derivative of basis vector j, horizontal sections satisfy
v' + N v = 0, and a change of coordinates v_new = H v transforms the matrix to
H N H^-1 - H' H^-1 (see ``exact_algebra.gauge_transform``).

The steps are regularization to a simple pole (cyclic vector followed by a
Laurent factorization), the ramification index e, the pullback t = s^e, and
shearing of the residue until it is nilpotent.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

from flint import fmpq, fmpq_mat, fmpq_poly

from .exact_algebra import (
    FracMatrix,
    Singular,
    T,
    _lcm,
    _series_inverse,
    from_qmat,
    gauge_transform,
    kernel_basis,
    lcm_denominators,
    poly_valuation,
    qmat_power,
    rational_eigenvalues,
    shift_down,
)

log = logging.getLogger(__name__)


class NoCyclicVectorFound(ArithmeticError):
    pass


class NotRegular(ArithmeticError):
    pass


class NonIntegerEigenvalue(ArithmeticError):
    pass


@dataclass
class NormalizedConnection:
    e: int
    H: FracMatrix       # Laurent in s; v_normal = H(s) v_original(t = s^e)
    Hinv: FracMatrix
    Nprime: FracMatrix  # connection in s, simple pole at 0
    N0: fmpq_mat
    residue_eigenvalues: list[fmpq] = field(default_factory=list)
    steps: list[str] = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.N0.nrows()

    def nilpotency_index(self) -> int:
        r = self.rank
        P = fmpq_mat(r, r, [int(i == j) for i in range(r) for j in range(r)])
        for k in range(r + 1):
            if all(x == 0 for x in P.entries()):
                return k
            P = P * self.N0
        raise ArithmeticError("residue is not nilpotent")


def residue(N: FracMatrix) -> fmpq_mat:
    if N.pole_order() > 1:
        raise NotRegular("pole of order > 1")
    return N.coefficient(-1)


# ---------------------------------------------------------------------------
# Regularization.

class _Series:
    """Truncated Laurent series t^val * (poly mod t^prec) -- absolute precision val + prec."""

    __slots__ = ("val", "poly", "prec")

    def __init__(self, val, poly, prec):
        self.val, self.poly, self.prec = val, poly, prec

    @property
    def abs_prec(self):
        return self.val + self.prec

    def normalized(self):
        v = poly_valuation(self.poly)
        if v is None:
            return _Series(self.abs_prec, fmpq_poly(), 0)
        return _Series(self.val + v, shift_down(self.poly, v), self.prec - v)

    def order(self):
        s = self.normalized()
        return None if s.poly.is_zero() else s.val


def _ser_from_frac(num: fmpq_poly, den_inv: fmpq_poly, shift: int, prec: int) -> _Series:
    return _Series(shift, (num * den_inv).truncate(prec) if not num.is_zero() else fmpq_poly(), prec)


def _ser_sub_mul(a: _Series, g: _Series, b: _Series) -> _Series:
    """a - g*b, all truncated to the weakest absolute precision."""
    gb_val = g.val + b.val
    gb_abs = min(g.val + b.abs_prec, b.val + g.abs_prec)
    abs_prec = min(a.abs_prec, gb_abs)
    lo = min(a.val, gb_val)
    n = abs_prec - lo
    if n <= 0:
        return _Series(abs_prec, fmpq_poly(), 0)
    pa = a.poly * T ** (a.val - lo) if a.val > lo else a.poly
    gb = (g.poly * b.poly)
    pg = gb * T ** (gb_val - lo) if gb_val > lo else gb
    return _Series(lo, (pa - pg).truncate(n), n)


def _ser_div_unit(a: _Series, b: _Series) -> _Series:
    """a / b for b of exact order b.order() (result has order >= ord a - ord b)."""
    b = b.normalized()
    a = a.normalized()
    n = min(a.prec, b.prec)
    if n <= 0:
        raise Singular("precision exhausted in Laurent factorization")
    inv = _series_inverse(b.poly.truncate(n), n)
    return _Series(a.val - b.val, (a.poly.truncate(n) * inv).truncate(n), n)


def _cyclic_matrix(N: FracMatrix, omega: list[fmpq_poly]) -> list[FracMatrix]:
    """Columns omega, theta(omega), ..., theta^(r-1)(omega) with theta = t*d/dt + t*N."""
    r = N.rows
    v = FracMatrix([[x] for x in omega])
    tN = N.times_power(1)
    cols = [v]
    for _ in range(r - 1):
        v = v.derivative().times_power(1) + tN @ v
        cols.append(v)
    return cols


def _candidate_vectors(r: int):
    for j in range(r):
        yield [fmpq_poly([int(i == j)]) for i in range(r)]
    for j in range(r):
        yield [fmpq_poly([1]) if i == j else (T if i == (j + 1) % r else fmpq_poly()) for i in range(r)]
    for coeffs in itertools.product((1, 2, -1), repeat=min(r, 6)):
        yield [fmpq_poly([coeffs[i % len(coeffs)] * (i + 1)]) + (T ** (i % 3)) for i in range(r)]


def laurent_factorize_columns(cols: list[FracMatrix], prec: int) -> FracMatrix:
    """Y = G*L with L invertible over Q[[t]] and Y Laurent, lower triangular.

    ``cols`` are the columns of G.  Returns Y; it generates the same lattice
    over the local ring at 0 as the columns of G.
    """
    r = len(cols)
    # entries of G as truncated Laurent series with absolute precision `prec`
    G: list[list[_Series]] = []
    for c in cols:
        inv = _series_inverse(c.den, max(prec - c.shift, 1) + 1)
        G.append([_ser_from_frac(c.nums[i][0], inv, c.shift, max(prec - c.shift, 1))
                  for i in range(r)])
    # G[j][i] is row i of column j
    diag = []
    for i in range(r):
        best, bj = None, None
        for j in range(i, r):
            o = G[j][i].order()
            if o is not None and (best is None or o < best):
                best, bj = o, j
        if bj is None:
            raise Singular("columns dependent to working precision")
        G[i], G[bj] = G[bj], G[i]
        piv = G[i][i].normalized()
        # scale the column so that the pivot becomes t^best
        unit = _ser_div_unit(_Series(best, fmpq_poly([1]), piv.prec), piv)
        G[i] = [_mul(x, unit) for x in G[i]]
        G[i][i] = _Series(best, fmpq_poly([1]), G[i][i].prec)
        for j in range(i + 1, r):
            if G[j][i].order() is None:
                continue
            g = _ser_div_unit(G[j][i], G[i][i])
            G[j] = [_ser_sub_mul(a, g, b) for a, b in zip(G[j], G[i])]
        for j in range(i):
            a = G[j][i].normalized()
            if a.poly.is_zero():
                continue
            # keep the part of degree < best, clear the rest
            k = best - a.val
            if k <= 0:
                g = _Series(a.val - best, a.poly, a.prec)
            else:
                g = _Series(0, shift_down(a.poly.truncate(a.prec), k) if a.poly.length() > k else fmpq_poly(),
                            a.prec - k)
            G[j] = [_ser_sub_mul(x, g, y) for x, y in zip(G[j], G[i])]
        diag.append(best)
    # read off Laurent polynomials: below the diagonal only degrees < diag[row]
    terms: dict[tuple[int, int], tuple[int, fmpq_poly]] = {}
    for j in range(r):
        terms[j, j] = (diag[j], fmpq_poly([1]))
        for i in range(j + 1, r):
            s = G[j][i].normalized()
            keep = diag[i] - s.val
            if s.poly.is_zero() or keep <= 0:
                continue
            if s.abs_prec < diag[i]:
                raise Singular("precision exhausted in Laurent factorization")
            terms[i, j] = (s.val, s.poly.truncate(keep))
    lo = min(v for v, _ in terms.values())
    nums = [[fmpq_poly() for _ in range(r)] for _ in range(r)]
    for (i, j), (v, f) in terms.items():
        nums[i][j] = f * T ** (v - lo)
    return FracMatrix(nums, None, lo)


def _mul(a: _Series, b: _Series) -> _Series:
    n = min(a.prec, b.prec)
    return _Series(a.val + b.val, (a.poly * b.poly).truncate(n) if n > 0 else fmpq_poly(), max(n, 0))


def laurent_factorize(G: FracMatrix, prec: int | None = None) -> FracMatrix:
    """H Laurent with G*H^-1 holomorphic and invertible at 0 (G = L*H).

    Works on the transpose: column reduction of G^T gives G^T * L' = Y, so
    G = L'^-T ... via H = Y^T.
    """
    Gt = G.transpose()
    cols = [Gt.block(range(Gt.rows), range(j, j + 1)) for j in range(Gt.cols)]
    prec = prec or _default_prec(G)
    for _ in range(6):
        try:
            Y = laurent_factorize_columns(cols, prec)
        except Singular:
            prec *= 2
            continue
        H = Y.transpose()
        L = G @ H.laurent_inverse()
        if L.valuation() is not None and L.valuation() >= 0 and L.coefficient(0).det() != 0:
            return H
        prec *= 2
    raise Singular("Laurent factorization failed")


def _default_prec(G: FracMatrix) -> int:
    v = G.valuation() or 0
    return abs(v) + 4 * G.rows + 8


def regularize(N: FracMatrix, max_candidates: int = 64) -> tuple[FracMatrix, FracMatrix, FracMatrix]:
    """(H1, H1^-1, N_reg) with N_reg = H1 N H1^-1 - H1' H1^-1 having a simple pole at 0."""
    r = N.rows
    ident = FracMatrix.identity(r)
    if N.pole_order() <= 1:
        return ident, ident, N
    tried = 0
    for omega in _candidate_vectors(r):
        if tried >= max_candidates:
            break
        tried += 1
        cols = _cyclic_matrix(N, omega)
        Gm = _hstack(cols)
        t0 = fmpq(7, 3)
        try:
            if Gm.evaluate(t0).rank() < r:
                continue
        except ZeroDivisionError:
            continue
        log.info("cyclic vector found after %d candidates", tried)
        prec = _default_prec(Gm)
        for _ in range(6):
            try:
                Y = laurent_factorize_columns(cols, prec)
            except Singular:
                prec *= 2
                continue
            Hinv = Y
            H = Y.laurent_inverse()
            Nreg = gauge_transform(H, Hinv, N)
            if Nreg.pole_order() <= 1:
                return H, Hinv, Nreg
            prec *= 2
        raise NotRegular("could not reach a simple pole; input is not regular singular at 0")
    raise NoCyclicVectorFound(f"no cyclic vector among {tried} candidates")


def _hstack(cols: list[FracMatrix]) -> FracMatrix:
    """Side-by-side concatenation of single-column matrices."""
    r = cols[0].rows
    den = fmpq_poly([1])
    for c in cols:
        den = _lcm(den, c.den)
    sh = min(c.shift for c in cols)
    nums = [[None] * len(cols) for _ in range(r)]
    for j, c in enumerate(cols):
        f = (den // c.den) * T ** (c.shift - sh)
        for i in range(r):
            nums[i][j] = c.nums[i][0] * f
    return FracMatrix(nums, den, sh)


# ---------------------------------------------------------------------------
# Ramification, pullback, shearing.

def ramification_index(N_reg: FracMatrix) -> tuple[int, list[fmpq]]:
    R = residue(N_reg)
    eig = rational_eigenvalues(from_qmat(R))
    return lcm_denominators(eig), eig


def pullback(N: FracMatrix, e: int) -> FracMatrix:
    """e * s^(e-1) * N(s^e)."""
    if e == 1:
        return N
    return N.inflate(e).times_power(e - 1).scale(fmpq(e))


def _generalized_eigenspace(R: fmpq_mat, lam) -> tuple[list[list[fmpq]], list[list[fmpq]]]:
    r = R.nrows()
    A = R - lam * fmpq_mat(r, r, [int(i == j) for i in range(r) for j in range(r)])
    Ap = qmat_power(A, r)
    ker = kernel_basis(Ap)
    # image of A^r: column space
    Rr, rank = Ap.transpose().rref()
    img = [[Rr[i, j] for j in range(r)] for i in range(rank)]
    return ker, img


def shear_to_nilpotent(N: FracMatrix, max_steps: int = 10_000):
    """(H2, H2^-1, N') with N' = H2 N H2^-1 - H2' H2^-1 having nilpotent residue."""
    r = N.rows
    H = FracMatrix.identity(r)
    Hinv = FracMatrix.identity(r)
    steps = 0
    while True:
        R = residue(N)
        eig = rational_eigenvalues(from_qmat(R))
        if any(x.q != 1 for x in eig):
            raise NonIntegerEigenvalue(f"residue eigenvalues {eig} are not integers")
        if all(x == 0 for x in eig):
            return H, Hinv, N
        pos = [x for x in eig if x > 0]
        lam = max(pos) if pos else min(eig)
        a = 1 if lam > 0 else -1
        ker, img = _generalized_eigenspace(R, lam)
        m = len(ker)
        Tm = fmpq_mat(r, r, [(ker + img)[j][i] for i in range(r) for j in range(r)])
        T0 = FracMatrix.constant(Tm.inv())
        T0inv = FracMatrix.constant(Tm)
        S = FracMatrix([[T if (i == j and i < m) else
                         (fmpq_poly([1]) if i == j else fmpq_poly()) for j in range(r)] for i in range(r)])
        if a == 1:
            X, Xinv = S, _diag_power(r, m, -1)
        else:
            X, Xinv = _diag_power(r, m, -1), S
        step = X @ T0
        step_inv = T0inv @ Xinv
        N = gauge_transform(step, step_inv, N)
        H = step @ H
        Hinv = Hinv @ step_inv
        steps += 1
        if steps > max_steps:
            raise ArithmeticError("shearing did not terminate")


def _diag_power(r: int, m: int, k: int) -> FracMatrix:
    """diag(t^k I_m, I_{r-m}) for k = -1."""
    assert k == -1
    nums = [[(fmpq_poly([1]) if i < m else T) if i == j else fmpq_poly() for j in range(r)] for i in range(r)]
    return FracMatrix(nums, None, -1)


def normalize(N: FracMatrix, n: int | None = None) -> NormalizedConnection:
    steps = []
    H1, H1inv, Nreg = regularize(N)
    if not (H1 == FracMatrix.identity(N.rows)):
        steps.append("regularized via cyclic vector")
    e, eig = ramification_index(Nreg)
    Ns = pullback(Nreg, e)
    H2, H2inv, Nprime = shear_to_nilpotent(Ns)
    H = H2 @ H1.inflate(e)
    Hinv = H1inv.inflate(e) @ H2inv
    N0 = residue(Nprime)
    nc = NormalizedConnection(e, H, Hinv, Nprime, N0, eig, steps)
    if n is not None and nc.nilpotency_index() > n + 1:
        raise ArithmeticError(f"N0^(n+1) != 0 (index {nc.nilpotency_index()})")
    return nc

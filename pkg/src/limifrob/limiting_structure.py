"""Monodromy weight filtration, graded Frobenius polynomials and the kernel factor.

The filtration lives on the coordinate space of the normalized basis, where
N0 and Fr0 act by matrix multiplication and satisfy N0 Fr0 = p Fr0 N0.
Subspaces are exact over Q; Frobenius data stays p-adic until integer
recognition.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import isqrt

from flint import fmpq, fmpq_mat, fmpz_poly

from .exact_algebra import berkowitz, kernel_basis, qmat_power
from .padic_arith import PadicScalar, valuation


class NotNilpotent(ValueError):
    pass


class Unrecognized(ArithmeticError):
    pass


class BoundTooLargeForPrecision(Unrecognized):
    pass


class FiltrationNotStable(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# Exact subspace helpers (subspaces are lists of column vectors over Q).

def _rref_rows(vectors: list[list[fmpq]], dim: int) -> list[list[fmpq]]:
    if not vectors:
        return []
    A = fmpq_mat(len(vectors), dim, [x for v in vectors for x in v])
    R, rank = A.rref()
    return [[R[i, j] for j in range(dim)] for i in range(rank)]


def span(vectors: list[list[fmpq]], dim: int) -> list[list[fmpq]]:
    return _rref_rows(vectors, dim)


def kernel(A: fmpq_mat) -> list[list[fmpq]]:
    return _rref_rows(kernel_basis(A), A.ncols())


def image(A: fmpq_mat) -> list[list[fmpq]]:
    cols = [[A[i, j] for i in range(A.nrows())] for j in range(A.ncols())]
    return span(cols, A.nrows())


def intersect(U: list[list[fmpq]], V: list[list[fmpq]], dim: int) -> list[list[fmpq]]:
    if not U or not V:
        return []
    a, b = len(U), len(V)
    # solve sum x_i U_i - sum y_j V_j = 0
    M = fmpq_mat(dim, a + b, [(U[j][i] if j < a else -V[j - a][i]) for i in range(dim) for j in range(a + b)])
    out = []
    for sol in kernel_basis(M):
        out.append([sum((sol[j] * U[j][i] for j in range(a)), fmpq(0)) for i in range(dim)])
    return span(out, dim)


def _apply(A: fmpq_mat, v: list[fmpq]) -> list[fmpq]:
    return [sum((A[i, j] * v[j] for j in range(len(v))), fmpq(0)) for i in range(A.nrows())]


def contained(U: list[list[fmpq]], V: list[list[fmpq]], dim: int) -> bool:
    return len(span(U + V, dim)) == len(V)


# ---------------------------------------------------------------------------
# The filtration.

@dataclass
class MonodromyFiltration:
    n: int
    dim: int
    subspaces: dict[int, list[list[fmpq]]]   # k -> basis of W_k, k = -1 .. 2n

    @property
    def dims(self) -> list[int]:
        return [len(self.subspaces[k]) for k in range(-1, 2 * self.n + 1)]

    def graded_dims(self) -> dict[int, int]:
        return {k: len(self.subspaces[k]) - len(self.subspaces[k - 1]) for k in range(0, 2 * self.n + 1)}


def nilpotency_index(N0: fmpq_mat) -> int:
    r = N0.nrows()
    P = qmat_power(N0, 0)
    for k in range(r + 1):
        if all(x == 0 for x in P.entries()):
            return k
        P = P * N0
    raise NotNilpotent("N0 is not nilpotent")


def monodromy_filtration(N0: fmpq_mat, n: int) -> MonodromyFiltration:
    """W_k = sum_j Ker N0^(k-n+j+1) cap Im N0^j."""
    r = N0.nrows()
    if nilpotency_index(N0) > n + 1:
        raise NotNilpotent(f"N0^{n + 1} != 0")
    kers = {}
    ims = {}

    def ker(a: int):
        if a <= 0:
            return []
        if a not in kers:
            kers[a] = kernel(qmat_power(N0, a))
        return kers[a]

    def im(j: int):
        if j not in ims:
            ims[j] = image(qmat_power(N0, j))
        return ims[j]

    W = {}
    for k in range(-1, 2 * n + 1):
        vecs = []
        for j in range(0, n + 1):
            vecs += intersect(ker(k - n + j + 1), im(j), r)
        W[k] = span(vecs, r)
    return MonodromyFiltration(n, r, W)


def check_filtration(filt: MonodromyFiltration, N0: fmpq_mat) -> None:
    """Monotone chain, N0 W_k inside W_(k-2), W_(-1) = 0 and W_(2n) full."""
    r, n = filt.dim, filt.n
    W = filt.subspaces
    if W[-1] or len(W[2 * n]) != r:
        raise AssertionError("filtration does not start at 0 and end at the whole space")
    for k in range(0, 2 * n + 1):
        if not contained(W[k - 1], W[k], r):
            raise AssertionError(f"W_{k - 1} is not inside W_{k}")
        lower = W.get(k - 2, [])
        if not contained([_apply(N0, v) for v in W[k]], lower, r):
            raise AssertionError(f"N0 W_{k} is not inside W_{k - 2}")


# ---------------------------------------------------------------------------
# p-adic matrices through rational bases.

def _primitive_integer(v: list[fmpq]) -> list[int]:
    from math import gcd, lcm
    L = lcm(*(int(x.q) for x in v))
    ints = [int(x * L) for x in v]
    g = 0
    for x in ints:
        g = gcd(g, x)
    return [x // g for x in ints] if g else ints


def adapted_basis(chain: list[list[list[fmpq]]], dim: int) -> tuple[list[list[int]], list[int]]:
    """Integer columns extending each subspace of an increasing chain in turn.

    Returns the columns and the block boundaries (number of columns after
    each member of the chain).
    """
    cols: list[list[fmpq]] = []
    bounds = []
    for sub in chain:
        for v in sub:
            if len(span(cols + [v], dim)) > len(cols):
                cols.append(v)
        bounds.append(len(cols))
    return [_primitive_integer(c) for c in cols], bounds


def padic_one(p: int, N: int) -> PadicScalar:
    return PadicScalar(p, 0, 1, N)


def conjugate(Fr0: list[list[PadicScalar]], T: list[list[int]]) -> list[list[PadicScalar]]:
    """T^(-1) Fr0 T for an integer matrix T given by its columns."""
    r = len(Fr0)
    p = Fr0[0][0].p
    cap = max(x.absprec for row in Fr0 for x in row) + 20
    Tq = fmpq_mat(r, r, [T[j][i] for i in range(r) for j in range(r)])
    Tinv = Tq.inv()
    big = cap + 2 * max(0, -min((valuation(x, p) or 0) for x in Tinv.entries()))

    def lift(x: fmpq) -> PadicScalar:
        return PadicScalar.from_rational(x, p, big)

    Tp = [[lift(Tq[i, j]) for j in range(r)] for i in range(r)]
    Ip = [[lift(Tinv[i, j]) for j in range(r)] for i in range(r)]
    zero = PadicScalar.zero(p, big)
    FT = [[sum((Fr0[i][k] * Tp[k][j] for k in range(r) if Tp[k][j].v is not None), zero)
           for j in range(r)] for i in range(r)]
    return [[sum((Ip[i][k] * FT[k][j] for k in range(r) if Ip[i][k].v is not None), zero)
             for j in range(r)] for i in range(r)]


def block(X, rows: range, cols: range):
    return [[X[i][j] for j in cols] for i in rows]


def reverse_charpoly(A: list[list[PadicScalar]], p: int) -> list[PadicScalar]:
    """Coefficients of det(1 - T A), constant term first."""
    if not A:
        return [padic_one(p, 10)]
    cap = max(x.absprec for row in A for x in row) + 20
    return berkowitz(A, PadicScalar.zero(p, cap), padic_one(p, cap))


# ---------------------------------------------------------------------------
# Integer recognition and Weil checks.

def weight_bounds(weights: dict, p: int) -> list[int]:
    """Coefficient bounds of prod (1 + p^(k/2) T)^(dim_k), rounded up.

    ``weights`` maps a doubled weight k to a multiplicity.  The product is
    formed exactly in Z[sqrt p] (pairs a + b sqrt p) so that a single piece
    gets the sharp bound binom(dim, i) p^(k i / 2).
    """
    poly = [(1, 0)]
    for k, mult in weights.items():
        root = (p ** (k // 2), 0) if k % 2 == 0 else (0, p ** (k // 2))
        for _ in range(mult):
            nxt = list(poly) + [(0, 0)]
            for i in range(len(poly)):
                a, b = poly[i]
                ra, rb = root
                x, y = nxt[i + 1]
                nxt[i + 1] = (x + a * ra + b * rb * p, y + a * rb + b * ra)
            poly = nxt
    return [a + _ceil_sqrt(b * b * p) for a, b in poly]


def _ceil_sqrt(x: int) -> int:
    s = isqrt(x)
    return s if s * s == x else s + 1


def recognize_integer_poly(coeffs: list[PadicScalar], bounds: list[int]) -> list[int]:
    out = []
    for i, (c, b) in enumerate(zip(coeffs, bounds)):
        p = c.p
        if 2 * b >= p ** c.absprec:
            raise BoundTooLargeForPrecision(
                f"coefficient {i}: bound {b} needs more than {c.absprec} digits")
        if c.v is not None and c.v < 0:
            raise Unrecognized(f"coefficient {i} is not integral")
        mod = p ** c.absprec
        x = c.residue() % mod
        if x > mod // 2:
            x -= mod
        if abs(x) > b:
            raise Unrecognized(f"coefficient {i} = {x} exceeds its bound {b}")
        out.append(x)
    return out


@dataclass
class WeilResult:
    passed: bool
    weight: fmpq
    moduli: list[float]
    max_relative_error: float


def weil_weight_check(Q: list[int], j, p: int, tol: float = 1e-6) -> WeilResult:
    """Every reciprocal root of Q has complex absolute value p^j."""
    j = fmpq(j)
    if Q[0] != 1:
        raise ValueError("constant term must be 1")
    f = fmpz_poly(list(Q))
    target = float(p) ** float(j)
    if f.degree() <= 0:
        return WeilResult(True, j, [], 0.0)
    moduli = []
    for root, mult in f.complex_roots():
        a = 1 / abs(root)
        moduli += [float(a.mid())] * mult
    err = max(abs(m / target - 1) for m in moduli)
    return WeilResult(err < tol, j, moduli, err)


# ---------------------------------------------------------------------------
# Full analysis.

@dataclass
class GradedPiece:
    k: int
    dim: int
    poly: list[int]
    weil: WeilResult
    precision: int


@dataclass
class WeilReport:
    pieces: list[GradedPiece]
    full: list[int]
    kernel_factor: list[int]
    kernel_dim: int
    product_matches: bool
    stability_defect: int | None
    stats: dict = field(default_factory=dict)

    @property
    def all_pure(self) -> bool:
        return all(g.weil.passed for g in self.pieces)


@dataclass
class LimitingStructure:
    n: int
    e: int
    N0: fmpq_mat
    Fr0: list[list[PadicScalar]]
    N_ach: int

    @property
    def r(self) -> int:
        return self.N0.nrows()

    @property
    def p(self) -> int:
        return self.Fr0[0][0].p


def _poly_mul(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _lower_defect(X, bounds: list[int]) -> int | None:
    """Min valuation of entries below the block diagonal (None if all vanish)."""
    worst = None
    starts = [0] + bounds[:-1]
    for bi, (s0, e0) in enumerate(zip(starts, bounds)):
        for bj, (s1, e1) in enumerate(zip(starts, bounds)):
            if bi <= bj:
                continue
            for i in range(s0, e0):
                for j in range(s1, e1):
                    x = X[i][j]
                    if x.v is not None:
                        worst = x.v if worst is None else min(worst, x.v)
    return worst


def graded_analysis(ls: LimitingStructure, filt: MonodromyFiltration) -> WeilReport:
    n, r, p = ls.n, ls.r, ls.p
    ks = list(range(-1, 2 * n + 1))
    T, bounds = adapted_basis([filt.subspaces[k] for k in ks], r)
    X = conjugate(ls.Fr0, T)
    defect = _lower_defect(X, bounds[1:])
    gd = filt.graded_dims()
    pieces = []
    prod = [1]
    for idx, k in enumerate(ks[1:], start=1):
        lo, hi = bounds[idx - 1], bounds[idx]
        if hi == lo:
            continue
        B = block(X, range(lo, hi), range(lo, hi))
        coeffs = reverse_charpoly(B, p)
        try:
            poly = recognize_integer_poly(coeffs, weight_bounds({k: hi - lo}, p))
        except Unrecognized as exc:
            raise type(exc)(f"graded piece Gr_{k}: {exc}") from exc
        prec = min(c.absprec for c in coeffs)
        pieces.append(GradedPiece(k, hi - lo, poly, weil_weight_check(poly, fmpq(k, 2), p), prec))
        prod = _poly_mul(prod, poly)
    # full characteristic polynomial: the product of the pieces, checked
    # coefficientwise against det(1 - T Fr0) to the precision available
    full_padic = reverse_charpoly(ls.Fr0, p)
    full = _trim(prod)
    full_defect = _congruence_defect(full_padic, full)
    # kernel factor: product over the pieces (Ker N0 cap W_k) / (Ker N0 cap W_(k-1))
    K = kernel(ls.N0)
    kchain = [intersect(K, filt.subspaces[k], r) for k in range(0, 2 * n + 1)]
    full_basis = [[fmpq(int(i == j)) for i in range(r)] for j in range(r)]
    TK, bK = adapted_basis(kchain + [full_basis], r)
    XK = conjugate(ls.Fr0, TK)
    kdef = _lower_defect(XK, bK)
    if kdef is not None and (defect is None or kdef < defect):
        defect = kdef
    kernel_factor = [1]
    kw = {}
    lo = 0
    for k, hi in zip(range(0, 2 * n + 1), bK):
        if hi > lo:
            kw[k] = hi - lo
            coeffs = reverse_charpoly(block(XK, range(lo, hi), range(lo, hi)), p)
            try:
                kernel_factor = _poly_mul(kernel_factor, recognize_integer_poly(coeffs, weight_bounds({k: hi - lo}, p)))
            except Unrecognized as exc:
                raise type(exc)(f"kernel piece of weight {k}/2: {exc}") from exc
        lo = hi
    return WeilReport(pieces, full, kernel_factor, len(K), full_defect is None, defect,
                      {"kernel_weights": kw, "graded_dims": gd, "charpoly_digits": min(c.absprec for c in full_padic)})


def _congruence_defect(coeffs: list[PadicScalar], poly: list[int]) -> int | None:
    """First index where an integer polynomial disagrees with p-adic coefficients."""
    poly = list(poly) + [0] * max(0, len(coeffs) - len(poly))
    if len(poly) > len(coeffs):
        return len(coeffs)
    for i, (c, a) in enumerate(zip(coeffs, poly)):
        if not c.agrees_with(PadicScalar.from_rational(fmpq(a), c.p, c.absprec + 1)):
            return i
    return None


def _trim(a: list[int]) -> list[int]:
    a = list(a)
    while len(a) > 1 and a[-1] == 0:
        a.pop()
    return a


def det_valuation(Fr0: list[list[PadicScalar]]) -> int | None:
    p = Fr0[0][0].p
    coeffs = reverse_charpoly(Fr0, p)
    return coeffs[-1].v

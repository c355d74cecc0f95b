"""Exact arithmetic over Q, Q[t], Q(t) and Q[t, 1/t], plus dense linear algebra.

Scalars are ``flint.fmpq``; univariate polynomials are ``flint.fmpq_poly``.
Everything here is exact and immutable.
"""
from __future__ import annotations

import itertools
from typing import Iterable, Sequence

from flint import fmpq, fmpq_mat, fmpq_poly, fmpz, fmpz_poly

BigRational = fmpq
UniPoly = fmpq_poly

T = fmpq_poly([0, 1])  # the polynomial variable


class NoSolution(ArithmeticError):
    pass


class DimensionMismatch(ValueError):
    pass


class NonSquare(ValueError):
    pass


class NotRationalSpectrum(ArithmeticError):
    pass


class Singular(ArithmeticError):
    pass


def Q(x, y=1) -> fmpq:
    if isinstance(x, fmpq) and y == 1:
        return x
    if isinstance(x, str):
        num, _, den = x.partition("/")
        return fmpq(int(num), int(den or 1)) / fmpq(y)
    return fmpq(x) / fmpq(y)


def poly(coeffs: Iterable) -> fmpq_poly:
    return fmpq_poly([Q(c) for c in coeffs])


def poly_valuation(f: fmpq_poly) -> int | None:
    """Order of vanishing of f at 0 (None for the zero polynomial)."""
    if f.is_zero():
        return None
    for i, c in enumerate(f.coeffs()):
        if c != 0:
            return i
    raise AssertionError


def monic(f: fmpq_poly) -> fmpq_poly:
    return f / f.leading_coefficient()


def primitive_integer_poly(f: fmpq_poly) -> fmpz_poly:
    """The primitive integer polynomial proportional to f, positive leading coefficient."""
    num = fmpz_poly([int(c * f.denom()) for c in f.coeffs()])
    g = 0
    from math import gcd

    for c in num.coeffs():
        g = gcd(g, int(c))
    num = fmpz_poly([int(c) // g for c in num.coeffs()])
    if num.leading_coefficient() < 0:
        num = -num
    return num


class RatFunc:
    """A reduced quotient num/den of polynomials over Q, den monic."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=None, _reduced=False):
        num = num if isinstance(num, fmpq_poly) else fmpq_poly([Q(num)])
        if den is None:
            den = fmpq_poly([1])
        elif not isinstance(den, fmpq_poly):
            den = fmpq_poly([Q(den)])
        if den.is_zero():
            raise ZeroDivisionError("zero denominator")
        if not _reduced:
            if num.is_zero():
                den = fmpq_poly([1])
            else:
                g = num.gcd(den)
                if g.degree() > 0:
                    num = num // g
                    den = den // g
            lc = den.leading_coefficient()
            if lc != 1:
                num = num / lc
                den = den / lc
        self.num = num
        self.den = den

    @classmethod
    def coerce(cls, x) -> "RatFunc":
        if isinstance(x, RatFunc):
            return x
        if isinstance(x, fmpq_poly):
            return cls(x, None, True)
        return cls(fmpq_poly([Q(x)]), None, True)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def __add__(self, other):
        o = RatFunc.coerce(other)
        if self.den == o.den:
            return RatFunc(self.num + o.num, self.den)
        return RatFunc(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self):
        return RatFunc(-self.num, self.den, True)

    def __sub__(self, other):
        return self + (-RatFunc.coerce(other))

    def __rsub__(self, other):
        return RatFunc.coerce(other) - self

    def __mul__(self, other):
        o = RatFunc.coerce(other)
        if o.den.is_one():
            if o.num.degree() <= 0:
                return RatFunc(self.num * o.num, self.den, True) if not o.num.is_zero() else RatFunc(fmpq_poly())
        return RatFunc(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def inverse(self) -> "RatFunc":
        if self.is_zero():
            raise ZeroDivisionError("inverse of zero rational function")
        return RatFunc(self.den, self.num)

    def __truediv__(self, other):
        return self * RatFunc.coerce(other).inverse()

    def __rtruediv__(self, other):
        return RatFunc.coerce(other) * self.inverse()

    def __eq__(self, other):
        try:
            o = RatFunc.coerce(other)
        except Exception:
            return NotImplemented
        return self.num == o.num and self.den == o.den

    def __hash__(self):
        return hash((str(self.num), str(self.den)))

    def __repr__(self):
        if self.den.is_one():
            return f"RatFunc({self.num})"
        return f"RatFunc(({self.num})/({self.den}))"

    def derivative(self) -> "RatFunc":
        return RatFunc(self.num.derivative() * self.den - self.num * self.den.derivative(), self.den * self.den)

    def __call__(self, x):
        d = self.den(x)
        if d == 0:
            raise ZeroDivisionError("pole at evaluation point")
        return self.num(x) / d

    def valuation(self) -> int | None:
        """Order at t = 0 (negative for a pole); None for zero."""
        if self.is_zero():
            return None
        return poly_valuation(self.num) - poly_valuation(self.den)

    def compose_power(self, e: int) -> "RatFunc":
        """f(t^e)."""
        return RatFunc(inflate(self.num, e), inflate(self.den, e), True) if e > 1 else self

    def laurent(self, order: int) -> tuple[int, list[fmpq]]:
        """Laurent expansion at 0: (v, [c_v, c_{v+1}, ...]) with terms below t^order."""
        vn = poly_valuation(self.num)
        if vn is None:
            return 0, []
        vd = poly_valuation(self.den)
        v = vn - vd
        a = shift_down(self.num, vn)
        b = shift_down(self.den, vd)
        n = order - v
        if n <= 0:
            return v, []
        s = series_div(a, b, n)
        return v, s


def inflate(f: fmpq_poly, e: int) -> fmpq_poly:
    if e == 1 or f.is_zero():
        return f
    out = [fmpq(0)] * (e * f.degree() + 1)
    for i, c in enumerate(f.coeffs()):
        out[e * i] = c
    return fmpq_poly(out)


def shift_down(f: fmpq_poly, k: int) -> fmpq_poly:
    return fmpq_poly(f.coeffs()[k:]) if k else f


def series_div(a: fmpq_poly, b: fmpq_poly, n: int) -> list[fmpq]:
    """First n coefficients of a/b as a power series; b(0) != 0."""
    b0 = b.coeffs()[0]
    if b0 == 0:
        raise ZeroDivisionError("series division by non-unit")
    q = a * _series_inverse(b, n)
    cs = q.coeffs()[:n]
    return cs + [fmpq(0)] * (n - len(cs))


def _series_inverse(b: fmpq_poly, n: int) -> fmpq_poly:
    # Newton iteration on truncated power series
    inv = fmpq_poly([1 / b.coeffs()[0]])
    prec = 1
    while prec < n:
        prec = min(2 * prec, n)
        bt = b.truncate(prec) if b.length() > prec else b
        e = (bt * inv).truncate(prec)
        inv = (inv * (2 - e)).truncate(prec)
    return inv


class LaurentPoly:
    """t^valuation * base with base(0) != 0 (or zero)."""

    __slots__ = ("base", "valuation")

    def __init__(self, base: fmpq_poly, valuation: int = 0):
        if not isinstance(base, fmpq_poly):
            base = fmpq_poly([Q(base)])
        if base.is_zero():
            self.base, self.valuation = base, 0
            return
        v = poly_valuation(base)
        self.base = shift_down(base, v)
        self.valuation = valuation + v

    @classmethod
    def from_terms(cls, terms: dict[int, fmpq]) -> "LaurentPoly":
        terms = {k: c for k, c in terms.items() if c != 0}
        if not terms:
            return cls(fmpq_poly())
        lo = min(terms)
        cs = [fmpq(0)] * (max(terms) - lo + 1)
        for k, c in terms.items():
            cs[k - lo] = Q(c)
        return cls(fmpq_poly(cs), lo)

    @classmethod
    def monomial(cls, k: int, c=1) -> "LaurentPoly":
        return cls(fmpq_poly([Q(c)]), k)

    def is_zero(self):
        return self.base.is_zero()

    def terms(self) -> dict[int, fmpq]:
        return {self.valuation + i: c for i, c in enumerate(self.base.coeffs()) if c != 0}

    def max_degree(self) -> int | None:
        return None if self.is_zero() else self.valuation + self.base.degree()

    def __add__(self, o):
        o = _as_laurent(o)
        if self.is_zero():
            return o
        if o.is_zero():
            return self
        v = min(self.valuation, o.valuation)
        a = self.base * T ** (self.valuation - v) if self.valuation > v else self.base
        b = o.base * T ** (o.valuation - v) if o.valuation > v else o.base
        return LaurentPoly(a + b, v)

    __radd__ = __add__

    def __neg__(self):
        return LaurentPoly(-self.base, self.valuation)

    def __sub__(self, o):
        return self + (-_as_laurent(o))

    def __rsub__(self, o):
        return _as_laurent(o) - self

    def __mul__(self, o):
        if isinstance(o, RatFunc):
            return self.to_ratfunc() * o
        o = _as_laurent(o)
        if self.is_zero() or o.is_zero():
            return LaurentPoly(fmpq_poly())
        return LaurentPoly(self.base * o.base, self.valuation + o.valuation)

    __rmul__ = __mul__

    def __eq__(self, o):
        o = _as_laurent(o)
        return self.base == o.base and (self.valuation == o.valuation or self.is_zero())

    def __hash__(self):
        return hash((str(self.base), self.valuation))

    def __repr__(self):
        return f"LaurentPoly(t^{self.valuation}*({self.base}))"

    def derivative(self) -> "LaurentPoly":
        if self.is_zero():
            return self
        # d/dt (t^v b) = t^(v-1) (v b + t b')
        return LaurentPoly(self.valuation * self.base + T * self.base.derivative(), self.valuation - 1)

    def to_ratfunc(self) -> RatFunc:
        if self.valuation >= 0:
            return RatFunc(self.base * T ** self.valuation, None, True)
        return RatFunc(self.base, T ** (-self.valuation), True)

    def compose_power(self, e: int) -> "LaurentPoly":
        return LaurentPoly(inflate(self.base, e), self.valuation * e)

    def __call__(self, x):
        return self.base(x) * Q(x) ** self.valuation


def _as_laurent(x) -> LaurentPoly:
    if isinstance(x, LaurentPoly):
        return x
    if isinstance(x, fmpq_poly):
        return LaurentPoly(x)
    return LaurentPoly(fmpq_poly([Q(x)]))


# ---------------------------------------------------------------------------
# Dense matrices: plain row-major lists of lists over any commutative ring.

class Matrix:
    """Row-major dense matrix over a ring whose elements support + - *."""

    __slots__ = ("rows", "cols", "entries")

    def __init__(self, rows: int, cols: int, entries: Sequence):
        if len(entries) != rows * cols:
            raise DimensionMismatch("entries length != rows*cols")
        self.rows, self.cols, self.entries = rows, cols, list(entries)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> "Matrix":
        rows = [list(r) for r in rows]
        nc = len(rows[0]) if rows else 0
        if any(len(r) != nc for r in rows):
            raise DimensionMismatch("ragged rows")
        return cls(len(rows), nc, [x for r in rows for x in r])

    @classmethod
    def identity(cls, n: int, one=None, zero=None) -> "Matrix":
        one = fmpq(1) if one is None else one
        zero = fmpq(0) if zero is None else zero
        return cls(n, n, [one if i == j else zero for i in range(n) for j in range(n)])

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i * self.cols + j]

    def row(self, i) -> list:
        return self.entries[i * self.cols:(i + 1) * self.cols]

    def column(self, j) -> list:
        return self.entries[j::self.cols]

    def tolist(self) -> list[list]:
        return [self.row(i) for i in range(self.rows)]

    def map(self, f) -> "Matrix":
        return Matrix(self.rows, self.cols, [f(x) for x in self.entries])

    def __matmul__(self, o: "Matrix") -> "Matrix":
        if self.cols != o.rows:
            raise DimensionMismatch("inner dimensions differ")
        out = []
        ocols = [o.column(j) for j in range(o.cols)]
        for i in range(self.rows):
            r = self.row(i)
            for c in ocols:
                acc = r[0] * c[0]
                for a, b in zip(r[1:], c[1:]):
                    acc = acc + a * b
                out.append(acc)
        return Matrix(self.rows, o.cols, out)

    def __add__(self, o):
        return Matrix(self.rows, self.cols, [a + b for a, b in zip(self.entries, o.entries)])

    def __sub__(self, o):
        return Matrix(self.rows, self.cols, [a - b for a, b in zip(self.entries, o.entries)])

    def __neg__(self):
        return self.map(lambda x: -x)

    def scale(self, c) -> "Matrix":
        return self.map(lambda x: c * x)

    def transpose(self) -> "Matrix":
        return Matrix(self.cols, self.rows, [self[i, j] for j in range(self.cols) for i in range(self.rows)])

    def __eq__(self, o):
        return isinstance(o, Matrix) and (self.rows, self.cols) == (o.rows, o.cols) and all(
            a == b for a, b in zip(self.entries, o.entries))

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols}, {self.tolist()})"


def qmat(M: Matrix) -> fmpq_mat:
    return fmpq_mat(M.rows, M.cols, [Q(x) for x in M.entries])


def from_qmat(A: fmpq_mat) -> Matrix:
    return Matrix(A.nrows(), A.ncols(), list(A.entries()))


# ---------------------------------------------------------------------------
# Linear solve over Q(t): fraction-free (Bareiss) elimination on Q[t].

def solve_linear(A: Matrix, b: Sequence) -> list[RatFunc]:
    """Solve A x = b over Q(t); free variables are set to zero.

    Rows are cleared of denominators and rational content, then reduced by
    one-step fraction-free elimination, where every division is exact.
    """
    if A.rows != len(b):
        raise DimensionMismatch(f"A has {A.rows} rows but b has length {len(b)}")
    m, n = A.rows, A.cols
    rows = []
    for i in range(m):
        r = [RatFunc.coerce(x) for x in A.row(i)] + [RatFunc.coerce(b[i])]
        den = fmpq_poly([1])
        for x in r:
            den = _lcm(den, x.den)
        pr = [x.num * (den // x.den) for x in r]
        rows.append(_remove_content(pr))
    pivots = []
    prev = fmpq_poly([1])
    rank = 0
    for col in range(n):
        piv = None
        best = None
        for i in range(rank, m):
            e = rows[i][col]
            if not e.is_zero() and (best is None or e.degree() < best):
                piv, best = i, e.degree()
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        pr = rows[rank]
        pv = pr[col]
        for i in range(m):
            if i == rank:
                continue
            ri = rows[i]
            f = ri[col]
            if f.is_zero() and i > rank:
                # fraction-free invariant still needs scaling by pivot
                rows[i] = [_exact_div(pv * x, prev) for x in ri] if i > rank else ri
                continue
            if i > rank:
                rows[i] = [_exact_div(pv * x - f * y, prev) for x, y in zip(ri, pr)]
        pivots.append(col)
        prev = pv
        rank += 1
    for i in range(rank, m):
        if not rows[i][n].is_zero():
            raise NoSolution("right-hand side outside the column span")
    # back substitution on the echelon form
    x = [RatFunc(fmpq_poly()) for _ in range(n)]
    for k in range(rank - 1, -1, -1):
        col = pivots[k]
        r = rows[k]
        acc = RatFunc(r[n])
        for j in pivots[k + 1:]:
            if not r[j].is_zero():
                acc = acc - RatFunc(r[j]) * x[j]
        x[col] = acc / RatFunc(r[col])
    return x


def _lcm(a: fmpq_poly, b: fmpq_poly) -> fmpq_poly:
    if b.is_one() or a == b:
        return a
    return monic(a * b // a.gcd(b))


def _remove_content(row: list[fmpq_poly]) -> list[fmpq_poly]:
    nz = [x for x in row if not x.is_zero()]
    if not nz:
        return row
    from math import gcd, lcm

    dens = 1
    nums = 0
    for x in nz:
        for c in x.coeffs():
            if c != 0:
                dens = lcm(dens, int(c.q))
                nums = gcd(nums, int(c.p))
    c = fmpq(dens, nums)
    return [x * c for x in row]


def _exact_div(a: fmpq_poly, b: fmpq_poly) -> fmpq_poly:
    if b.is_one():
        return a
    q, r = divmod(a, b)
    if not r.is_zero():
        raise ArithmeticError("Bareiss division not exact")
    return q


def ratfunc_matmul(A: Matrix, B: Matrix) -> Matrix:
    return A @ B


# ---------------------------------------------------------------------------
# Spectra over Q.

def char_poly(M: Matrix) -> fmpq_poly:
    """det(x I - M) via the division-free Berkowitz recurrence."""
    if M.rows != M.cols:
        raise NonSquare(f"{M.rows}x{M.cols}")
    coeffs = berkowitz([[Q(x) for x in M.row(i)] for i in range(M.rows)], fmpq(0), fmpq(1))
    return fmpq_poly(coeffs[::-1])


def berkowitz(A: list[list], zero, one) -> list:
    """Coefficients [1, c1, ..., cn] of det(xI - A) = x^n + c1 x^{n-1} + ... .

    Works over any commutative ring (no divisions)."""
    n = len(A)
    if n == 0:
        return [one]
    vect = [one, -A[0][0]]
    for r in range(1, n):
        # column/row pieces of the leading (r+1)x(r+1) block
        R = A[r][:r]
        S = [A[i][r] for i in range(r)]
        a = A[r][r]
        Asub = [row[:r] for row in A[:r]]
        # Toeplitz column: [1, -a, -R S, -R A S, -R A^2 S, ...]
        col = [one, -a]
        X = S
        for _ in range(r):
            val = zero
            for ri, xi in zip(R, X):
                val = val + ri * xi
            col.append(-val)
            X = [sum((Asub[i][j] * X[j] for j in range(r)), zero) for i in range(r)]
        # multiply the (r+2)x(r+1) lower-triangular Toeplitz matrix by vect
        new = []
        for i in range(r + 2):
            acc = zero
            for j in range(min(i, r) + 1):
                acc = acc + col[i - j] * vect[j]
            new.append(acc)
        vect = new
    return vect


def _divisors(n: int) -> list[int]:
    n = abs(int(n))
    if n == 0:
        return [0]
    fac = fmpz(n).factor()
    ds = [1]
    for p, e in fac:
        p = int(p)
        ds = [d * p ** k for d in ds for k in range(e + 1)]
    return ds


def rational_roots(f: fmpq_poly) -> list[fmpq]:
    """All rational roots of f with multiplicity (rational-root theorem)."""
    if f.is_zero():
        raise ValueError("zero polynomial")
    roots: list[fmpq] = []
    v = poly_valuation(f)
    roots += [fmpq(0)] * v
    g = primitive_integer_poly(shift_down(f, v))
    if g.degree() <= 0:
        return roots
    a0 = int(g.coeffs()[0])
    an = int(g.leading_coefficient())
    cands = set()
    for num in _divisors(a0):
        for den in _divisors(an):
            cands.add(fmpq(num, den))
            cands.add(fmpq(-num, den))
    gq = fmpq_poly([fmpq(int(c)) for c in g.coeffs()])
    for c in sorted(cands):
        lin = fmpq_poly([-c, 1])
        while gq.degree() > 0:
            q, r = divmod(gq, lin)
            if not r.is_zero():
                break
            roots.append(c)
            gq = q
    return roots


def rational_eigenvalues(M: Matrix) -> list[fmpq]:
    """Eigenvalues of M with algebraic multiplicity; all must be rational."""
    cp = char_poly(M)
    roots = rational_roots(cp)
    if len(roots) != cp.degree():
        raise NotRationalSpectrum(f"characteristic polynomial {cp} does not split over Q")
    return sorted(roots)


# ---------------------------------------------------------------------------
# Exact linear algebra over Q used by the normalization and filtration code.

def kernel_basis(A: fmpq_mat) -> list[list[fmpq]]:
    """Basis of the right kernel of A (list of column vectors)."""
    R, rank = A.rref()
    n = A.ncols()
    piv = []
    r = 0
    for j in range(n):
        if r < rank and R[r, j] != 0:
            piv.append(j)
            r += 1
    free = [j for j in range(n) if j not in piv]
    basis = []
    for f in free:
        v = [fmpq(0)] * n
        v[f] = fmpq(1)
        for i, pj in enumerate(piv):
            v[pj] = -R[i, f]
        basis.append(v)
    return basis


def column_space_basis(vectors: list[list[fmpq]], dim: int) -> list[list[fmpq]]:
    """An echelonized basis of the span of the given vectors (length dim)."""
    if not vectors:
        return []
    A = fmpq_mat(len(vectors), dim, [x for v in vectors for x in v])
    R, rank = A.rref()
    return [[R[i, j] for j in range(dim)] for i in range(rank)]


def qmat_from_columns(cols: list[list[fmpq]], dim: int) -> fmpq_mat:
    return fmpq_mat(dim, len(cols), [cols[j][i] for i in range(dim) for j in range(len(cols))])


def qmat_power(A: fmpq_mat, k: int) -> fmpq_mat:
    n = A.nrows()
    R = fmpq_mat(n, n, [fmpq(int(i == j)) for i in range(n) for j in range(n)])
    for _ in range(k):
        R = R * A
    return R


def is_zero_qmat(A: fmpq_mat) -> bool:
    return all(x == 0 for x in A.entries())


def lcm_denominators(values: Iterable[fmpq]) -> int:
    from math import lcm

    out = 1
    for v in values:
        out = lcm(out, int(Q(v).q))
    return out


def all_monomials(nvars: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total degree `degree`, lexicographically decreasing."""
    if degree < 0:
        return []
    out = []
    for c in itertools.combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for i in c:
            e[i] += 1
        out.append(tuple(e))
    out.sort(reverse=True)
    return out


# ---------------------------------------------------------------------------
# Matrices t^shift * nums / den with polynomial nums and den(0) != 0.

class FracMatrix:
    """A matrix over Q(t) with one common denominator prime to t.

    Represents t^shift * nums / den.  Laurent polynomial matrices are the
    case den = 1.
    """

    __slots__ = ("nums", "den", "shift")

    def __init__(self, nums: list[list[fmpq_poly]], den: fmpq_poly | None = None, shift: int = 0,
                 _normal: bool = False):
        den = fmpq_poly([1]) if den is None else den
        if not _normal:
            v = poly_valuation(den)
            if v is None:
                raise ZeroDivisionError("zero denominator")
            if v:
                den = shift_down(den, v)
                shift -= v
            vals = [poly_valuation(x) for row in nums for x in row]
            vals = [v for v in vals if v is not None]
            if vals and min(vals) > 0:
                m = min(vals)
                nums = [[shift_down(x, m) if not x.is_zero() else x for x in row] for row in nums]
                shift += m
            elif not vals:
                shift = 0
            if den.degree() > 0:
                g = den
                for row in nums:
                    for x in row:
                        if not x.is_zero():
                            g = g.gcd(x)
                            if g.degree() == 0:
                                break
                    if g.degree() == 0:
                        break
                if g.degree() > 0:
                    den = den // g
                    nums = [[x // g for x in row] for row in nums]
            lc = den.leading_coefficient()
            if lc != 1:
                nums = [[x / lc for x in row] for row in nums]
                den = den / lc
        self.nums, self.den, self.shift = nums, den, shift

    @property
    def rows(self) -> int:
        return len(self.nums)

    @property
    def cols(self) -> int:
        return len(self.nums[0]) if self.nums else 0

    @classmethod
    def identity(cls, r: int) -> "FracMatrix":
        return cls([[fmpq_poly([int(i == j)]) for j in range(r)] for i in range(r)], None, 0, True)

    @classmethod
    def constant(cls, A: fmpq_mat) -> "FracMatrix":
        return cls([[fmpq_poly([A[i, j]]) for j in range(A.ncols())] for i in range(A.nrows())])

    @classmethod
    def from_ratfuncs(cls, M: Matrix) -> "FracMatrix":
        den = fmpq_poly([1])
        ents = [RatFunc.coerce(x) for x in M.entries]
        for x in ents:
            den = _lcm(den, x.den)
        nums = [[ents[i * M.cols + j].num * (den // ents[i * M.cols + j].den) for j in range(M.cols)]
                for i in range(M.rows)]
        return cls(nums, den)

    @classmethod
    def from_laurent(cls, M: Matrix) -> "FracMatrix":
        ents = [_as_laurent(x) for x in M.entries]
        vals = [x.valuation for x in ents if not x.is_zero()]
        lo = min(vals) if vals else 0
        nums = [[ents[i * M.cols + j].base * T ** (ents[i * M.cols + j].valuation - lo)
                 if not ents[i * M.cols + j].is_zero() else fmpq_poly()
                 for j in range(M.cols)] for i in range(M.rows)]
        return cls(nums, None, lo)

    def to_ratfuncs(self) -> Matrix:
        sh = LaurentPoly.monomial(self.shift).to_ratfunc()
        return Matrix(self.rows, self.cols,
                      [RatFunc(x, self.den) * sh for row in self.nums for x in row])

    def to_laurent(self) -> Matrix:
        if self.den.degree() > 0:
            raise ValueError("not a Laurent polynomial matrix")
        return Matrix(self.rows, self.cols, [LaurentPoly(x, self.shift) for row in self.nums for x in row])

    def is_laurent(self) -> bool:
        return self.den.degree() == 0

    def is_zero(self) -> bool:
        return all(x.is_zero() for row in self.nums for x in row)

    def valuation(self) -> int | None:
        vals = [poly_valuation(x) for row in self.nums for x in row]
        vals = [v for v in vals if v is not None]
        return self.shift + min(vals) if vals else None

    def __matmul__(self, o: "FracMatrix") -> "FracMatrix":
        if self.cols != o.rows:
            raise DimensionMismatch("inner dimensions differ")
        ocols = list(zip(*o.nums))
        nums = []
        for row in self.nums:
            out = []
            for col in ocols:
                acc = fmpq_poly()
                for a, b in zip(row, col):
                    if not a.is_zero() and not b.is_zero():
                        acc += a * b
                out.append(acc)
            nums.append(out)
        return FracMatrix(nums, self.den * o.den, self.shift + o.shift)

    def _aligned(self, o: "FracMatrix"):
        den = _lcm(self.den, o.den)
        sh = min(self.shift, o.shift)
        fa = (den // self.den) * T ** (self.shift - sh)
        fb = (den // o.den) * T ** (o.shift - sh)
        return den, sh, fa, fb

    def __add__(self, o: "FracMatrix") -> "FracMatrix":
        den, sh, fa, fb = self._aligned(o)
        nums = [[a * fa + b * fb for a, b in zip(ra, rb)] for ra, rb in zip(self.nums, o.nums)]
        return FracMatrix(nums, den, sh)

    def __neg__(self):
        return FracMatrix([[-x for x in row] for row in self.nums], self.den, self.shift, True)

    def __sub__(self, o):
        return self + (-o)

    def __eq__(self, o):
        if not isinstance(o, FracMatrix):
            return NotImplemented
        return (self - o).is_zero()

    def scale(self, c) -> "FracMatrix":
        c = RatFunc.coerce(c) if not isinstance(c, RatFunc) else c
        return FracMatrix([[x * c.num for x in row] for row in self.nums], self.den * c.den, self.shift)

    def times_power(self, k: int) -> "FracMatrix":
        return FracMatrix(self.nums, self.den, self.shift + k, True)

    def derivative(self) -> "FracMatrix":
        # d/dt (t^s n / d) = t^(s-1) (s n d + t (n' d - n d')) / d^2
        s, d = self.shift, self.den
        dd = d.derivative()
        nums = [[s * x * d + T * (x.derivative() * d - x * dd) for x in row] for row in self.nums]
        return FracMatrix(nums, d * d, s - 1)

    def inflate(self, e: int) -> "FracMatrix":
        """Substitute t -> t^e."""
        if e == 1:
            return self
        return FracMatrix([[inflate(x, e) for x in row] for row in self.nums], inflate(self.den, e),
                          self.shift * e)

    def transpose(self) -> "FracMatrix":
        return FracMatrix([list(c) for c in zip(*self.nums)], self.den, self.shift, True)

    def block(self, rows: range, cols: range) -> "FracMatrix":
        return FracMatrix([[self.nums[i][j] for j in cols] for i in rows], self.den, self.shift)

    def laurent_coefficients(self, lo: int, hi: int) -> dict[int, fmpq_mat]:
        """Coefficient matrices of t^k for lo <= k < hi."""
        out = {k: fmpq_mat(self.rows, self.cols) for k in range(lo, hi)}
        n = hi - self.shift
        if n <= 0:
            return out
        inv = _series_inverse(self.den, n)
        for i, row in enumerate(self.nums):
            for j, x in enumerate(row):
                if x.is_zero():
                    continue
                cs = (x * inv).coeffs()[:n]
                for m, c in enumerate(cs):
                    k = m + self.shift
                    if lo <= k < hi and c != 0:
                        out[k][i, j] = c
        return out

    def coefficient(self, k: int) -> fmpq_mat:
        return self.laurent_coefficients(k, k + 1)[k]

    def evaluate(self, t0) -> fmpq_mat:
        t0 = Q(t0)
        dv = self.den(t0)
        f = t0 ** self.shift / dv
        return fmpq_mat(self.rows, self.cols, [x(t0) * f for row in self.nums for x in row])

    def pole_order(self) -> int:
        v = self.valuation()
        return 0 if v is None else max(0, -v)

    def laurent_inverse(self) -> "FracMatrix":
        """Inverse of a Laurent matrix whose determinant is a monomial."""
        if not self.is_laurent():
            raise ValueError("not a Laurent polynomial matrix")
        r = self.rows
        A = Matrix(r, r, [RatFunc(x) for row in self.nums for x in row])
        cols = []
        for j in range(r):
            e = [RatFunc.coerce(int(i == j)) for i in range(r)]
            cols.append(solve_linear(A, e))
        inv = FracMatrix.from_ratfuncs(Matrix(r, r, [cols[j][i] for i in range(r) for j in range(r)]))
        inv = inv.times_power(-self.shift)
        if not inv.is_laurent():
            raise Singular("determinant is not a monomial")
        return inv

    def __repr__(self):
        return f"FracMatrix({self.rows}x{self.cols}, shift={self.shift}, den={self.den})"


def gauge_transform(H: FracMatrix, Hinv: FracMatrix, N: FracMatrix) -> FracMatrix:
    """Connection matrix in the coordinates v_new = H v:  H N H^-1 - H' H^-1."""
    return H @ N @ Hinv - H.derivative() @ Hinv

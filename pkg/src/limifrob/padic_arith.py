"""Precision-tracked p-adic numbers, Teichmueller lifts, Morita's Gamma_p and
power-series solutions of linear differential systems.

Heavy lifting is done in fixed point: a p-adic matrix series is stored as
integers modulo p^K that represent p^S times the true value.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

from flint import fmpq, fmpz, fmpz_mod_ctx, fmpz_mod_mat


class PrecisionExhausted(ArithmeticError):
    pass


class ZeroInput(ValueError):
    pass


def valuation(x, p: int) -> int | None:
    """p-adic valuation of an integer or rational (None for 0)."""
    x = fmpq(x)
    if x == 0:
        return None
    v = 0
    num, den = int(x.p), int(x.q)
    while num % p == 0:
        num //= p
        v += 1
    while den % p == 0:
        den //= p
        v -= 1
    return v


class PadicScalar:
    """p^v * u with u a unit known modulo p^N (N = relative precision)."""

    __slots__ = ("p", "v", "u", "N")

    def __init__(self, p: int, v: int | None, u: int, N: int):
        if N < 1 and v is not None:
            raise PrecisionExhausted("relative precision below 1")
        self.p, self.N = p, N
        if v is None:
            self.v, self.u = None, 0
            return
        mod = p ** N
        u %= mod
        if u % p == 0:
            raise ValueError("unit part must be prime to p")
        self.v, self.u = v, u

    @classmethod
    def zero(cls, p: int, N: int) -> "PadicScalar":
        """An exact zero; N records the absolute precision it is known to."""
        return cls(p, None, 0, N)

    @classmethod
    def from_rational(cls, x, p: int, N: int) -> "PadicScalar":
        x = fmpq(x)
        v = valuation(x, p)
        if v is None:
            return cls.zero(p, N)
        num, den = int(x.p), int(x.q)
        num //= p ** max(v, 0)
        den //= p ** max(-v, 0)
        mod = p ** N
        return cls(p, v, num * pow(den, -1, mod) % mod, N)

    @classmethod
    def from_residue(cls, x: int, p: int, absprec: int) -> "PadicScalar":
        """The element known as x mod p^absprec."""
        x %= p ** absprec
        if x == 0:
            return cls.zero(p, absprec)
        v = valuation(x, p)
        return cls(p, v, x // p ** v, absprec - v)

    def is_zero(self) -> bool:
        return self.v is None

    @property
    def absprec(self) -> int:
        return self.N if self.v is None else self.v + self.N

    def residue(self, absprec: int | None = None) -> int:
        """Representative modulo p^absprec (needs v >= 0)."""
        a = self.absprec if absprec is None else min(absprec, self.absprec)
        if self.v is None:
            return 0
        if self.v < 0:
            raise ValueError("not integral")
        return self.u * self.p ** self.v % self.p ** a

    def to_rational_symmetric(self) -> int:
        m = self.p ** self.absprec
        x = self.residue()
        return x - m if 2 * x > m else x

    def _check(self, o):
        if isinstance(o, PadicScalar):
            if o.p != self.p:
                raise ValueError("different primes")
            return o
        return PadicScalar.from_rational(o, self.p, max(self.absprec, 1) + 10)

    def __add__(self, o):
        o = self._check(o)
        p = self.p
        ap = min(self.absprec, o.absprec)
        if self.v is None:
            return PadicScalar._from_abs(o, ap)
        if o.v is None:
            return PadicScalar._from_abs(self, ap)
        lo = min(self.v, o.v)
        s = self.u * p ** (self.v - lo) + o.u * p ** (o.v - lo)
        return PadicScalar._from_value(p, lo, s, ap)

    __radd__ = __add__

    @staticmethod
    def _from_abs(x: "PadicScalar", ap: int) -> "PadicScalar":
        if x.v is None:
            return PadicScalar.zero(x.p, ap)
        if ap <= x.v:
            return PadicScalar.zero(x.p, ap)
        return PadicScalar(x.p, x.v, x.u, ap - x.v)

    @staticmethod
    def _from_value(p, lo, s, ap) -> "PadicScalar":
        if ap <= lo:
            return PadicScalar.zero(p, ap)
        s %= p ** (ap - lo)
        if s == 0:
            return PadicScalar.zero(p, ap)
        w = valuation(s, p)
        return PadicScalar(p, lo + w, s // p ** w, ap - lo - w)

    def __neg__(self):
        if self.v is None:
            return self
        return PadicScalar(self.p, self.v, -self.u, self.N)

    def __sub__(self, o):
        return self + (-self._check(o))

    def __rsub__(self, o):
        return self._check(o) - self

    def __mul__(self, o):
        o = self._check(o)
        if self.v is None or o.v is None:
            # O(p^a) * x has absolute precision a + v(x); v of an inexact zero is >= its precision
            va = self.absprec if self.v is None else self.v
            vb = o.absprec if o.v is None else o.v
            return PadicScalar.zero(self.p, va + vb)
        N = min(self.N, o.N)
        return PadicScalar(self.p, self.v + o.v, self.u * o.u, N)

    __rmul__ = __mul__

    def inverse(self) -> "PadicScalar":
        if self.v is None:
            raise ZeroDivisionError("inverse of p-adic zero")
        return PadicScalar(self.p, -self.v, pow(self.u, -1, self.p ** self.N), self.N)

    def __truediv__(self, o):
        return self * self._check(o).inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        if self.v is None:
            return self if k else PadicScalar.from_rational(1, self.p, self.N)
        return PadicScalar(self.p, self.v * k, pow(self.u, k, self.p ** self.N), self.N)

    def agrees_with(self, o, digits: int | None = None) -> bool:
        """Equality to the common absolute precision (or `digits`)."""
        d = self - o
        need = min(self.absprec, o.absprec) if digits is None else digits
        return d.v is None or d.v >= need

    def __eq__(self, o):
        if not isinstance(o, (PadicScalar, int, fmpq, fmpz)):
            return NotImplemented
        return self.agrees_with(self._check(o))

    def __hash__(self):
        return hash((self.p, self.v, self.u))

    def __repr__(self):
        if self.v is None:
            return f"O({self.p}^{self.N})"
        return f"{self.p}^{self.v}*{self.u} + O({self.p}^{self.absprec})"

    def to_json(self) -> dict:
        return {"valuation": self.v, "unit": str(self.u), "N": self.N}


@dataclass
class PadicSeries:
    coefficients: list[PadicScalar]

    @property
    def order(self) -> int:
        return len(self.coefficients)


@dataclass
class PadicSeriesMatrix:
    rows: int
    cols: int
    entries: list[PadicSeries]

    def __post_init__(self):
        orders = {e.order for e in self.entries}
        if len(orders) > 1:
            raise ValueError("entries must share one truncation order")
        if len(self.entries) != self.rows * self.cols:
            raise ValueError("entries length != rows*cols")

    @property
    def order(self) -> int:
        return self.entries[0].order if self.entries else 0

    def coefficient(self, k: int) -> list[list[PadicScalar]]:
        return [[self.entries[i * self.cols + j].coefficients[k] for j in range(self.cols)]
                for i in range(self.rows)]


# ---------------------------------------------------------------------------
# Teichmueller lifts and Gamma_p.

def teichmuller_lift(a: int, p: int, N: int) -> PadicScalar:
    a %= p
    if a == 0:
        raise ZeroInput("Teichmueller lift of 0")
    mod = p ** N
    w = a
    for _ in range(N):
        w = pow(w, p, mod)
    return PadicScalar(p, 0, w, N)


def padic_gamma_direct(x: int, p: int, N: int) -> int:
    """Morita's Gamma_p(x) mod p^N straight from the product (small x only)."""
    mod = p ** N
    acc = 1
    for j in range(1, x):
        if j % p:
            acc = acc * j % mod
    return (-1) ** x * acc % mod


@lru_cache(maxsize=None)
def _harmonic_powers(p: int, k: int) -> fmpq:
    return sum((fmpq(1, i ** k) for i in range(1, p)), fmpq(0))


@lru_cache(maxsize=None)
def _bernoulli(j: int) -> fmpq:
    return fmpq.bernoulli(j)


def _power_sum(k: int, M: int) -> fmpq:
    """sum_{m=0}^{M-1} m^k by Faulhaber's formula (B_1 = -1/2)."""
    if k == 0:
        return fmpq(M)
    acc = fmpq(0)
    for j in range(k + 1):
        acc += comb(k + 1, j) * _bernoulli(j) * fmpq(M) ** (k + 1 - j)
    return acc / (k + 1)


def _to_residue(x: fmpq, p: int, N: int) -> int:
    v = valuation(x, p)
    if v is not None and v < 0:
        raise ValueError("not p-integral")
    mod = p ** N
    return int(x.p) * pow(int(x.q), -1, mod) % mod


def padic_gamma(x: int, p: int, N: int) -> PadicScalar:
    """Gamma_p(x) mod p^N for a nonnegative integer x of any size.

    Write x = p*M + a. The product of the units below p*M is
    ((p-1)!)^M * exp(sum_m log prod_i (1 + p*m/i)), and the inner sum over m
    collapses to Faulhaber power sums.
    """
    if p == 2:
        raise ValueError("p must be odd")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x <= 4 * p * N + 10:
        return PadicScalar(p, 0, padic_gamma_direct(x, p, N), N)
    W = N + 4
    mod = p ** W
    M, a = divmod(x, p)
    # log of prod_{m<M} prod_i (1 + p m / i) = sum_k (-1)^(k+1) p^k H_k S_k(M) / k
    z = fmpq(0)
    k = 1
    while True:
        if k - valuation(k, p) >= W + 2 and k > 1:
            break
        z += (-1) ** (k + 1) * fmpq(p) ** k * _harmonic_powers(p, k) * _power_sum(k, M) / k
        k += 1
    zr = _to_residue(z, p, W + 2)
    if zr % p:
        raise ArithmeticError("log sum not divisible by p")
    # exp of a multiple of p
    ez = 0
    term = fmpq(1)
    j = 0
    zq = fmpq(zr)
    while True:
        if j > 0:
            term = term * zq / j
        tv = valuation(term, p)
        if j > 2 and (tv is None or tv >= W + 2):
            break
        ez = (ez + _to_residue(term, p, W)) % mod
        j += 1
    fact = 1
    for i in range(1, p):
        fact *= i
    acc = pow(fact, M, mod) * ez % mod
    for i in range(1, a):
        acc = acc * (p * M + i) % mod
    val = (-1) ** x * acc % p ** N
    return PadicScalar(p, 0, val, N)


# ---------------------------------------------------------------------------
# Fixed-point series solution of b(u) Y' = +/- (A Y or Y A), Y(0) = I.

class FixedPointODE:
    """Coefficients of Y(u) stored as fmpz_mod_mat = p^S * Y_k mod p^K."""

    def __init__(self, p: int, K: int, S: int):
        self.p, self.K, self.S = p, K, S
        self.mod = p ** K
        self.ctx = fmpz_mod_ctx(self.mod)

    def mat(self, r: int, c: int, entries) -> fmpz_mod_mat:
        return fmpz_mod_mat(r, c, [int(x) % self.mod for x in entries], self.ctx)

    def solve(self, A: list[fmpz_mod_mat], b: list[int], M: int, side: str = "left",
              sign: int = -1) -> list[fmpz_mod_mat]:
        """Y_0..Y_{M-1} for b(u) Y' = sign * A(u) Y (side='left') or sign * Y A(u) (side='right').

        ``A`` and ``b`` are p-integral, represented mod p^K; b[0] must be a unit.
        Raises PrecisionExhausted when an exact division by p fails, which
        means S is too small.
        """
        p, mod = self.p, self.mod
        r = A[0].nrows()
        b0inv = pow(int(b[0]), -1, mod)
        Y = [self.mat(r, r, [p ** self.S if i == j else 0 for i in range(r) for j in range(r)])]
        for k in range(M - 1):
            acc = None
            for i, Ai in enumerate(A):
                if k - i < 0:
                    break
                term = Ai * Y[k - i] if side == "left" else Y[k - i] * Ai
                acc = term if acc is None else acc + term
            acc = acc * sign
            for i in range(1, min(len(b), k + 2)):
                if b[i]:
                    acc = acc - Y[k + 1 - i] * ((k + 1 - i) * int(b[i]) % mod)
            acc = acc * b0inv
            m = k + 1
            vm = 0
            while m % p == 0:
                m //= p
                vm += 1
            if vm:
                ents = [int(x) for x in acc.entries()]
                q = p ** vm
                if any(e % q for e in ents):
                    raise PrecisionExhausted(f"coefficient {k + 1} not divisible by p^{vm}; raise S")
                acc = self.mat(r, r, [e // q for e in ents])
            Y.append(acc * pow(m, -1, mod))
        return Y


def series_ode_solve(N_loc: PadicSeriesMatrix, M: int, N_work: int) -> PadicSeriesMatrix:
    """C with dC/du + N_loc C = 0 mod u^M and C(0) = I.

    N_loc must be p-integral.  Coefficient k carries absolute precision
    N_work - S where S bounds the denominators met along the way.
    """
    r = N_loc.rows
    p = N_loc.entries[0].coefficients[0].p
    S = 1
    while p ** S <= M:
        S += 1
    S += 1
    while True:
        K = N_work + 2 * S
        fp = FixedPointODE(p, K, S)
        A = []
        for k in range(min(N_loc.order, M)):
            ents = []
            for row in N_loc.coefficient(k):
                for x in row:
                    if x.v is not None and x.v < 0:
                        raise ValueError("N_loc must be p-integral")
                    ents.append(x.residue(K))
            A.append(fp.mat(r, r, ents))
        try:
            Y = fp.solve(A, [1], M, "left", -1)
            break
        except PrecisionExhausted:
            S *= 2
    entries = []
    absprec = N_work
    for i in range(r):
        for j in range(r):
            cs = []
            for k in range(M):
                y = int(Y[k].entries()[i * r + j])
                cs.append(_descale(y, p, S, K, absprec))
            entries.append(PadicSeries(cs))
    return PadicSeriesMatrix(r, r, entries)


def _descale(y: int, p: int, S: int, K: int, absprec: int) -> PadicScalar:
    """Value y / p^S given mod p^K, reported to absolute precision `absprec`."""
    y %= p ** K
    if y == 0:
        return PadicScalar.zero(p, absprec)
    v = valuation(y, p)
    if v - S >= absprec:
        return PadicScalar.zero(p, absprec)
    return PadicScalar(p, v - S, y // p ** v, absprec - (v - S))

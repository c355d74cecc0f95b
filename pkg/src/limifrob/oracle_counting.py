"""Brute-force point counts over finite fields and zeta-function bookkeeping.

Used only as an independent check of the p-adic pipeline.  Fields F_{p^k}
are built from the lexicographically smallest monic irreducible of degree k;
elements are integers whose base-p digits are polynomial coefficients.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import isqrt

import numpy as np
from flint import fmpz, nmod_poly

from .polynomials import MPoly

DEFAULT_BUDGET = 10 ** 9


class BudgetExceeded(RuntimeError):
    pass


class InsufficientCounts(ValueError):
    pass


class SymmetryViolation(ValueError):
    pass


# ---------------------------------------------------------------------------
# Finite fields.

def _digits(x: int, p: int, k: int) -> list[int]:
    out = []
    for _ in range(k):
        x, r = divmod(x, p)
        out.append(r)
    return out


def _undigits(ds, p: int) -> int:
    acc = 0
    for c in reversed(ds):
        acc = acc * p + int(c)
    return acc


@lru_cache(maxsize=None)
def irreducible_modulus(p: int, k: int) -> tuple[int, ...]:
    """Coefficients (low to high) of the smallest monic irreducible of degree k."""
    if k == 1:
        return (0, 1)
    for x in range(p ** k):
        coeffs = _digits(x, p, k) + [1]
        f = nmod_poly(coeffs, p)
        _, fac = f.factor()
        if len(fac) == 1 and fac[0][1] == 1 and fac[0][0].degree() == k:
            return tuple(coeffs)
    raise AssertionError("no irreducible polynomial found")


@dataclass(frozen=True)
class FiniteField:
    """F_q with log/antilog tables; element 0 has log = -1."""
    p: int
    k: int
    q: int
    exp: np.ndarray      # exp[i] = g^i as an integer code, i in [0, q-1)
    log: np.ndarray      # log[x]; log[0] = -1
    digits: np.ndarray   # digits[x] = base-p digit vector of x, shape (q, k)
    weights: np.ndarray  # p^i, to re-encode digit vectors

    def add(self, a: int, b: int) -> int:
        return _undigits((self.digits[a] + self.digits[b]) % self.p, self.p)

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return int(self.exp[(self.log[a] + self.log[b]) % (self.q - 1)])

    def from_int(self, c: int) -> int:
        """Image of an integer (prime-field element)."""
        return c % self.p


def _poly_mulmod(a: list[int], b: list[int], f: tuple[int, ...], p: int) -> list[int]:
    k = len(f) - 1
    prod = [0] * (2 * k - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                prod[i + j] = (prod[i + j] + x * y) % p
    for i in range(len(prod) - 1, k - 1, -1):
        c = prod[i]
        if c:
            for j in range(k + 1):
                prod[i - k + j] = (prod[i - k + j] - c * f[j]) % p
    return prod[:k]


def _poly_powmod(g: list[int], e: int, f: tuple[int, ...], p: int) -> list[int]:
    k = len(f) - 1
    acc, base = [1] + [0] * (k - 1), g
    while e:
        if e & 1:
            acc = _poly_mulmod(acc, base, f, p)
        base = _poly_mulmod(base, base, f, p)
        e >>= 1
    return acc


@lru_cache(maxsize=None)
def finite_field(p: int, k: int) -> FiniteField:
    q = p ** k
    f = irreducible_modulus(p, k)
    prime_factors = [int(r) for r, _ in fmpz(q - 1).factor()]
    one = [1] + [0] * (k - 1)
    # first g (in code order) whose order is exactly q - 1
    for g in range(1, q):
        gd = _digits(g, p, k)
        if all(_poly_powmod(gd, (q - 1) // r, f, p) != one for r in prime_factors):
            break
    exp = np.zeros(q - 1, dtype=np.int64)
    log = np.full(q, -1, dtype=np.int64)
    cur = [1] + [0] * (k - 1)
    for i in range(q - 1):
        code = _undigits(cur, p)
        exp[i] = code
        log[code] = i
        cur = _poly_mulmod(cur, gd, f, p)
    digits = np.array([_digits(x, p, k) for x in range(q)], dtype=np.int64).reshape(q, k)
    weights = np.array([p ** i for i in range(k)], dtype=np.int64)
    return FiniteField(p, k, q, exp, log, digits, weights)


# ---------------------------------------------------------------------------
# Projective point counting.

def _reduce_terms(P, p: int) -> list[tuple[tuple[int, ...], int]]:
    if isinstance(P, MPoly):
        red = P.reduce_mod(p)
    else:
        red = {tuple(e): int(c) % p for e, c in dict(P).items()}
    return [(e, c) for e, c in red.items() if c % p]


def _evaluate_zero_mask(terms, F: FiniteField, cols: list[np.ndarray]) -> np.ndarray:
    """Boolean mask of points (given as columns of field codes) where the form vanishes."""
    npts = len(cols[0])
    acc = np.zeros((npts, F.k), dtype=np.int64)
    logs = [F.log[c] for c in cols]
    zeros = [c == 0 for c in cols]
    for e, c in terms:
        lg = np.full(npts, int(F.log[c % F.p]), dtype=np.int64)
        dead = np.zeros(npts, dtype=bool)
        for i, ei in enumerate(e):
            if ei:
                lg += ei * logs[i]
                dead |= zeros[i]
        vals = F.exp[lg % (F.q - 1)]
        vals[dead] = 0
        acc += F.digits[vals]
    return np.all(acc % F.p == 0, axis=1)


def count_points(P, n: int, k: int, p: int | None = None, *,
                 budget: int = DEFAULT_BUDGET, chunk: int = 1 << 20) -> int:
    """Number of points of {P = 0} in P^{n+1}(F_{p^k}).

    P is an MPoly (rational coefficients reduced mod p) or a dict
    exponent-tuple -> int.  The zero polynomial counts all of projective space.
    """
    if p is None:
        raise ValueError("p is required")
    q = p ** k
    if q ** (n + 1) > budget:
        raise BudgetExceeded(f"p^(k(n+1)) = {q ** (n + 1)} exceeds budget {budget}")
    F = finite_field(p, k)
    terms = _reduce_terms(P, p)
    nv = n + 2
    if not terms:
        return (q ** nv - 1) // (q - 1)
    total = 0
    # leading coordinate j equals 1, earlier coordinates 0, later ones free
    for j in range(nv):
        free = nv - 1 - j
        inner = 0
        while inner < free and q ** (inner + 1) <= chunk:
            inner += 1
        outer = free - inner
        grid = np.indices((q,) * inner).reshape(inner, -1) if inner else np.zeros((0, 1), dtype=np.int64)
        npts = grid.shape[1]
        for prefix in itertools.product(range(q), repeat=outer):
            cols = [np.zeros(npts, dtype=np.int64)] * j + [np.ones(npts, dtype=np.int64)]
            cols += [np.full(npts, x, dtype=np.int64) for x in prefix]
            cols += [grid[i] for i in range(inner)]
            total += int(np.count_nonzero(_evaluate_zero_mask(terms, F, cols)))
    return total


def count_vector(P, n: int, p: int, kmax: int, **kw) -> list[int]:
    return [count_points(P, n, k, p, **kw) for k in range(1, kmax + 1)]


def hyperelliptic_counts(f: list[int], p: int, kmax: int, a: int = 1) -> list[int]:
    """Counts of the smooth model of y^2 = a*f(x) (f low-to-high, even degree)."""
    out = []
    deg = len(f) - 1
    if deg % 2:
        raise ValueError("expected an even-degree polynomial")
    for k in range(1, kmax + 1):
        F = finite_field(p, k)
        xs = np.arange(F.q, dtype=np.int64)
        acc = np.zeros((F.q, F.k), dtype=np.int64)
        lx = F.log[xs]
        for i, c in enumerate(f):
            c = (c * a) % p
            if not c:
                continue
            if i == 0:
                acc += F.digits[np.full(F.q, c)]
                continue
            vals = F.exp[(int(F.log[c]) + i * lx) % (F.q - 1)]
            vals[xs == 0] = 0
            acc += F.digits[vals]
        vals = (acc % p) @ F.weights
        lv = F.log[vals]
        chi = np.where(vals == 0, 0, np.where(lv % 2 == 0, 1, -1))
        lead = (a * f[-1]) % p
        at_inf = 1 + (1 if F.log[lead] % 2 == 0 else -1)
        out.append(int(F.q + chi.sum()) + at_inf)
    return out


# ---------------------------------------------------------------------------
# Zeta bookkeeping.

def power_sums(poly: list[int], kmax: int) -> list[int]:
    """s_k = sum alpha^k for poly = prod (1 - alpha T), k = 1..kmax (Newton)."""
    a = list(poly) + [0] * max(0, kmax + 1 - len(poly))
    s = []
    for k in range(1, kmax + 1):
        v = -k * a[k] - sum(a[i] * s[k - i - 1] for i in range(1, k))
        s.append(v)
    return s


def zeta_numerator_curve(counts: list[int], g: int, p: int) -> list[int]:
    """L-polynomial of a genus-g curve from counts N_1..N_kmax."""
    if g == 0:
        return [1]
    if len(counts) < g:
        raise InsufficientCounts(f"need {g} counts, got {len(counts)}")
    s = [1 + p ** k - N for k, N in enumerate(counts, start=1)]
    a = [1]
    for i in range(1, len(s) + 1):
        tot = sum(s[j - 1] * a[i - j] for j in range(1, i + 1))
        if tot % i:
            raise SymmetryViolation(f"non-integral coefficient at T^{i}")
        a.append(-tot // i)
    L = a[: g + 1] + [0] * g
    for i in range(g):
        L[2 * g - i] = p ** (g - i) * a[i]
    for i in range(g + 1, len(a)):
        if i <= 2 * g and a[i] != L[i]:
            raise SymmetryViolation(f"count {i} disagrees with the functional equation")
    if L[1] ** 2 > 4 * g * g * p:
        raise SymmetryViolation("Weil bound violated")
    return L


@dataclass
class ConsistencyReport:
    passed: bool
    predicted: list[int]
    counts: list[int]
    first_mismatch: int | None


def zeta_consistency(Q: list[int], counts: list[int], n: int, p: int,
                     extra_factors: list[tuple[list[int], int]] | None = None) -> ConsistencyReport:
    """Compare counts with Z = Q^((-1)^(n+1)) * prod factor^exponent.

    Default extra factors are 1/((1-T)(1-pT)...(1-p^n T)), the zeta function of
    projective n-space, which is right for a smooth hypersurface.
    """
    kmax = len(counts)
    if extra_factors is None:
        extra_factors = [([1, -p ** i], -1) for i in range(n + 1)]
    factors = [(list(Q), (-1) ** (n + 1))] + list(extra_factors)
    predicted = [0] * kmax
    for poly, ex in factors:
        for k, s in enumerate(power_sums(poly, kmax)):
            predicted[k] -= ex * s
    first = next((k + 1 for k in range(kmax) if predicted[k] != counts[k]), None)
    return ConsistencyReport(first is None, predicted, list(counts), first)


def is_square_mod(a: int, p: int) -> bool:
    a %= p
    return a == 0 or pow(a, (p - 1) // 2, p) == 1


def weil_bound(g: int, p: int) -> int:
    return isqrt(4 * g * g * p)

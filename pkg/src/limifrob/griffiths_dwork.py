"""Dwork bases and Griffiths-Dwork pole reduction for pencils P_t = (1-t)P0 + t*P1.

Classes are x^w * Omega / P^k. A numerator A of degree k*d - n - 2 at pole
order k is split as A = sum_i B_i dP/dx_i + (Dwork monomials of level k), and
the Jacobian part is traded for (1/(k-1)) * (sum_i dB_i/dx_i) at pole order
k - 1. The Gauss-Manin column of (w, k) is the reduction of
-k * x^w * (P1 - P0) at pole order k + 1.

Two engines are provided. ``reduce_to_basis`` works symbolically over Q(t)
with fraction-free elimination. ``gauss_manin_matrix`` evaluates the
reduction at many points modulo word-size primes, then recovers N(t) by
rational-function interpolation and rational reconstruction of coefficients.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from math import comb

from flint import fmpq, fmpq_mat, fmpq_poly, fmpz, nmod_mat, nmod_poly

from .exact_algebra import (
    Matrix,
    NoSolution,
    RatFunc,
    all_monomials,
    monic,
    solve_linear,
)
from .polynomials import MPoly

log = logging.getLogger(__name__)

Monomial = tuple


class NotGeneralPosition(ArithmeticError):
    """The Griffiths-Dwork systems are not solvable for this pencil."""


@dataclass(frozen=True, order=True)
class DworkBasisElement:
    k: int
    w: tuple[int, ...]

    def __str__(self):
        return f"x^{list(self.w)} / P^{self.k}"


@dataclass(frozen=True)
class Family:
    n: int
    d: int
    P0: MPoly
    P1: MPoly
    p: int | None = None

    def __post_init__(self):
        for name, P in (("P0", self.P0), ("P1", self.P1)):
            if P.nvars != self.n + 2:
                raise ValueError(f"{name} must have {self.n + 2} variables")
            if not P.is_homogeneous(self.d):
                raise ValueError(f"{name} is not homogeneous of degree {self.d}")

    @property
    def nvars(self) -> int:
        return self.n + 2

    @classmethod
    def from_input(cls, fi) -> "Family":
        return cls(fi.n, fi.d, fi.P0, fi.P1, fi.p)

    def at(self, t) -> MPoly:
        return self.P0 + (self.P1 - self.P0).scale(fmpq(t) if not isinstance(t, fmpq) else t)


@dataclass
class ConnectionData:
    basis: list[DworkBasisElement]
    numerators: list[list[fmpq_poly]]
    denominator: fmpq_poly
    stats: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return len(self.basis)

    @property
    def excised(self) -> fmpq_poly:
        return self.denominator

    @property
    def N(self) -> Matrix:
        r = self.rank
        return Matrix(r, r, [RatFunc(self.numerators[i][j], self.denominator)
                             for i in range(r) for j in range(r)])

    def evaluate(self, t0) -> fmpq_mat:
        dv = self.denominator(fmpq(t0))
        if dv == 0:
            raise ZeroDivisionError(f"t = {t0} is a pole of the connection")
        r = self.rank
        return fmpq_mat(r, r, [self.numerators[i][j](fmpq(t0)) / dv for i in range(r) for j in range(r)])


def dwork_basis(n: int, d: int) -> list[DworkBasisElement]:
    if n < 1 or d < 2:
        raise ValueError("need n >= 1 and d >= 2")
    out = []
    k = 1
    while k * d - n - 2 <= (n + 2) * (d - 2):
        deg = k * d - n - 2
        if deg >= 0:
            for w in sorted(all_monomials(n + 2, deg)):
                if max(w, default=0) <= d - 2:
                    out.append(DworkBasisElement(k, w))
        k += 1
    return out


def dwork_basis_size_formula(n: int, d: int) -> int:
    """sum_k [x^(kd-n-2)] (1 + x + ... + x^(d-2))^(n+2), by inclusion-exclusion."""
    m = n + 2
    total = 0
    k = 1
    while k * d - n - 2 <= m * (d - 2):
        deg = k * d - n - 2
        if deg >= 0:
            # coefficients of ((1 - x^(d-1)) / (1 - x))^m
            total += sum((-1) ** j * comb(m, j) * comb(deg - j * (d - 1) + m - 1, m - 1)
                         for j in range(m + 1) if deg - j * (d - 1) >= 0)
        k += 1
    return total


def level_degree(fam_n: int, d: int, k: int) -> int:
    return k * d - fam_n - 2


def _gm_start(fam: Family, b: DworkBasisElement) -> MPoly:
    return (MPoly.monomial(b.w) * (fam.P1 - fam.P0)).scale(-b.k)


# ---------------------------------------------------------------------------
# Symbolic engine over Q(t).

def _t_split(fam: Family) -> tuple[list[MPoly], list[MPoly]]:
    """dP_t/dx_i = J0_i + t*J1_i."""
    diff = fam.P1 - fam.P0
    return ([fam.P0.derivative(i) for i in range(fam.nvars)],
            [diff.derivative(i) for i in range(fam.nvars)])


def reduce_to_basis(A: dict, k: int, fam: Family) -> list[RatFunc]:
    """Coordinates of A*Omega/P_t^k on the Dwork basis.

    ``A`` maps exponent tuples (degree k*d - n - 2) to coefficients in Q(t)
    (RatFunc, fmpq_poly or rationals).
    """
    n, d = fam.n, fam.d
    basis = dwork_basis(n, d)
    index = {b: i for i, b in enumerate(basis)}
    out = [RatFunc(fmpq_poly()) for _ in basis]
    J0, J1 = _t_split(fam)
    cur = {e: RatFunc.coerce(c) for e, c in A.items() if not RatFunc.coerce(c).is_zero()}
    for e in cur:
        if sum(e) != level_degree(n, d, k):
            raise ValueError(f"numerator degree {sum(e)} does not match pole order {k}")
    for lev in range(k, 1, -1):
        deg = level_degree(n, d, lev)
        rows = all_monomials(n + 2, deg)
        if not rows:
            cur = {}
            continue
        ridx = {m: i for i, m in enumerate(rows)}
        dw = [b for b in basis if b.k == lev]
        bdeg = deg - (d - 1)
        bmons = all_monomials(n + 2, bdeg)
        cols: list[dict[int, RatFunc]] = []
        for b in dw:
            cols.append({ridx[b.w]: RatFunc.coerce(1)})
        jkeys = [(i, m) for i in range(n + 2) for m in bmons]
        for i, m in jkeys:
            col: dict[int, RatFunc] = {}
            mono = MPoly.monomial(m)
            for part, tpow in ((mono * J0[i], 0), (mono * J1[i], 1)):
                for e, c in part.terms.items():
                    prev = col.get(ridx[e], RatFunc.coerce(0))
                    col[ridx[e]] = prev + RatFunc(fmpq_poly([0] * tpow + [c]))
            cols.append(col)
        zero = RatFunc.coerce(0)
        mat = Matrix(len(rows), len(cols),
                     [cols[j].get(i, zero) for i in range(len(rows)) for j in range(len(cols))])
        rhs = [cur.get(m, zero) for m in rows]
        try:
            x = solve_linear(mat, rhs)
        except NoSolution as exc:
            raise NotGeneralPosition(f"reduction fails at pole order {lev}") from exc
        for b, v in zip(dw, x[: len(dw)]):
            out[index[b]] = out[index[b]] + v
        nxt: dict = {}
        inv = RatFunc.coerce(fmpq(1, lev - 1))
        for (i, m), v in zip(jkeys, x[len(dw):]):
            if v.is_zero() or m[i] == 0:
                continue
            e = list(m)
            e[i] -= 1
            e = tuple(e)
            nxt[e] = nxt.get(e, zero) + v * inv * m[i]
        cur = {e: c for e, c in nxt.items() if not c.is_zero()}
    for e, c in cur.items():
        out[index[DworkBasisElement(1, e)]] += c
    return out


def gauss_manin_exact(fam: Family) -> ConnectionData:
    """N(t) through the symbolic engine (small families only)."""
    basis = dwork_basis(fam.n, fam.d)
    cols = []
    for b in basis:
        start = _gm_start(fam, b)
        cols.append(reduce_to_basis(dict(start.terms), b.k + 1, fam))
    r = len(basis)
    den = fmpq_poly([1])
    for col in cols:
        for v in col:
            den = monic(den * v.den // den.gcd(v.den))
    nums = [[cols[j][i].num * (den // cols[j][i].den) for j in range(r)] for i in range(r)]
    return ConnectionData(basis, nums, den, {"engine": "exact"})


def reduce_at_point(A: dict, k: int, fam: Family, t0) -> list[fmpq]:
    """Exact reduction over Q at a fixed rational parameter value."""
    n, d = fam.n, fam.d
    basis = dwork_basis(n, d)
    index = {b: i for i, b in enumerate(basis)}
    out = [fmpq(0)] * len(basis)
    P = fam.at(fmpq(t0))
    dP = [P.derivative(i) for i in range(n + 2)]
    cur = {e: fmpq(c) for e, c in A.items()}
    for lev in range(k, 1, -1):
        deg = level_degree(n, d, lev)
        rows = all_monomials(n + 2, deg)
        if not rows:
            cur = {}
            continue
        ridx = {m: i for i, m in enumerate(rows)}
        dw = [b for b in basis if b.k == lev]
        bmons = all_monomials(n + 2, deg - (d - 1))
        jkeys = [(i, m) for i in range(n + 2) for m in bmons]
        ncols = len(dw) + len(jkeys)
        M = [[fmpq(0)] * (ncols + 1) for _ in rows]
        for j, b in enumerate(dw):
            M[ridx[b.w]][j] = fmpq(1)
        for j, (i, m) in enumerate(jkeys, start=len(dw)):
            for e, c in (MPoly.monomial(m) * dP[i]).terms.items():
                M[ridx[e]][j] += c
        for e, c in cur.items():
            M[ridx[e]][ncols] = c
        R, rank = fmpq_mat(M).rref()
        x = [fmpq(0)] * ncols
        row = 0
        for j in range(ncols + 1):
            if row < rank and R[row, j] != 0:
                if j == ncols:
                    raise NotGeneralPosition(f"reduction fails at pole order {lev}, t = {t0}")
                x[j] = R[row, ncols]
                row += 1
        for b, v in zip(dw, x):
            out[index[b]] += v
        nxt: dict = {}
        for (i, m), v in zip(jkeys, x[len(dw):]):
            if v != 0 and m[i]:
                e = list(m)
                e[i] -= 1
                nxt[tuple(e)] = nxt.get(tuple(e), fmpq(0)) + v * m[i] / (lev - 1)
        cur = nxt
    for e, c in cur.items():
        out[index[DworkBasisElement(1, e)]] += c
    return out


def gauss_manin_at_point(fam: Family, t0) -> fmpq_mat:
    basis = dwork_basis(fam.n, fam.d)
    r = len(basis)
    cols = [reduce_at_point(dict(_gm_start(fam, b).terms), b.k + 1, fam, t0) for b in basis]
    return fmpq_mat(r, r, [cols[j][i] for i in range(r) for j in range(r)])


# ---------------------------------------------------------------------------
# Multimodular evaluation/interpolation engine.

def _word_primes(start: int = (1 << 62)):
    q = start
    while True:
        q -= 1
        if q % 2 and fmpz(q).is_prime():
            yield q


class _ModularReducer:
    """Evaluates N(t0) mod q for many t0, reusing the level structure."""

    def __init__(self, fam: Family, q: int, rng: random.Random):
        self.q = q
        n, d = fam.n, fam.d
        self.basis = dwork_basis(n, d)
        self.r = len(self.basis)
        self.index = {b: i for i, b in enumerate(self.basis)}
        top = fam.n + 2
        J0, J1 = _t_split(fam)
        J0 = [P.reduce_mod(q) for P in J0]
        J1 = [P.reduce_mod(q) for P in J1]
        diff = fam.P1 - fam.P0
        self.levels = {}
        for lev in range(top, 1, -1):
            deg = level_degree(n, d, lev)
            rows = all_monomials(n + 2, deg)
            if not rows:
                continue
            ridx = {m: i for i, m in enumerate(rows)}
            nr = len(rows)
            dw = [b for b in self.basis if b.k == lev]
            bmons = all_monomials(n + 2, deg - (d - 1))
            jkeys = [(i, m) for i in range(n + 2) for m in bmons]
            cols0 = [[0] * nr for _ in range(len(dw) + len(jkeys))]
            cols1 = [[0] * nr for _ in range(len(dw) + len(jkeys))]
            for j, b in enumerate(dw):
                cols0[j][ridx[b.w]] = 1
            for j, (i, m) in enumerate(jkeys, start=len(dw)):
                for src, dst in ((J0[i], cols0[j]), (J1[i], cols1[j])):
                    for e, c in src.items():
                        dst[ridx[tuple(a + b for a, b in zip(e, m))]] += c
            sel = self._select_columns(cols0, cols1, nr, len(dw), rng)
            if sel is None:
                raise NotGeneralPosition(f"Jacobian and Dwork monomials do not span degree {deg}")
            S0 = nmod_mat(nr, nr, [cols0[j][i] % q for i in range(nr) for j in sel], q)
            S1 = nmod_mat(nr, nr, [cols1[j][i] % q for i in range(nr) for j in sel], q)
            # coordinates: the first len(dw) selected columns are the Dwork ones
            lower = level_degree(n, d, lev - 1)
            lrows = all_monomials(n + 2, lower) if lower >= 0 else []
            lidx = {m: i for i, m in enumerate(lrows)}
            inv = pow(lev - 1, -1, q)
            D = [[0] * nr for _ in range(max(len(lrows), 1))]
            for pos, j in enumerate(sel):
                if j < len(dw):
                    continue
                i, m = jkeys[j - len(dw)]
                if m[i] and lrows:
                    e = list(m)
                    e[i] -= 1
                    D[lidx[tuple(e)]][pos] = m[i] * inv % q
            Dmap = nmod_mat(len(lrows), nr, [x for row in D[: len(lrows)] for x in row], q) if lrows else None
            Cmap = nmod_mat(len(dw), nr, [int(pos == a) for a in range(len(dw)) for pos in range(nr)], q) if dw else None
            # constant right-hand sides of the Gauss-Manin columns entering here
            start = [[0] * self.r for _ in range(nr)]
            for b in self.basis:
                if b.k + 1 != lev:
                    continue
                col = self.index[b]
                for e, c in (MPoly.monomial(b.w) * diff).reduce_mod(q).items():
                    start[ridx[e]][col] = (start[ridx[e]][col] - b.k * c) % q
            Start = nmod_mat(nr, self.r, [x for row in start for x in row], q)
            self.levels[lev] = (S0, S1, Dmap, Cmap, Start, dw, len(lrows))
        low = level_degree(n, d, 1)
        self.level1 = [DworkBasisElement(1, m) for m in all_monomials(n + 2, low)] if low >= 0 else []

    def _select_columns(self, cols0, cols1, nr, ndw, rng):
        q = self.q
        t0 = rng.randrange(2, q)
        ncols = len(cols0)
        M = nmod_mat(nr, ncols, [(cols0[j][i] + t0 * cols1[j][i]) % q for i in range(nr) for j in range(ncols)], q)
        R, rank = M.rref()
        if rank < nr:
            return None
        sel = []
        row = 0
        for j in range(ncols):
            if row < rank and int(R[row, j]) != 0:
                sel.append(j)
                row += 1
        if sel[:ndw] != list(range(ndw)):
            return None
        return sel

    def evaluate(self, t0: int) -> list[int] | None:
        """Row-major N(t0) mod q, or None when t0 is a bad point."""
        r = self.r
        out = [0] * (r * r)
        carry = None
        for lev in sorted(self.levels, reverse=True):
            S0, S1, Dmap, Cmap, Start, dw, nlow = self.levels[lev]
            S = S0 + S1 * t0
            rhs = Start if carry is None else Start + carry
            try:
                X = S.solve(rhs)
            except ZeroDivisionError:
                return None
            if Cmap is not None:
                C = (Cmap * X).entries()
                for a, b in enumerate(dw):
                    i = self.index[b]
                    out[i * r:(i + 1) * r] = [int(v) for v in C[a * r:(a + 1) * r]]
            carry = Dmap * X if Dmap is not None else None
        if self.level1 and carry is not None:
            C = carry.entries()
            for a, b in enumerate(self.level1):
                i = self.index[b]
                out[i * r:(i + 1) * r] = [int(v) for v in C[a * r:(a + 1) * r]]
        return out


def _rational_reconstruct_int(a: int, m: int) -> fmpq | None:
    """x/y = a mod m with |x|, |y| <= sqrt(m/2), or None."""
    a %= m
    bound = fmpz(m // 2).isqrt()
    r0, r1 = m, a
    s0, s1 = 0, 1
    while r1 > bound:
        qt = r0 // r1
        r0, r1 = r1, r0 - qt * r1
        s0, s1 = s1, s0 - qt * s1
    if s1 == 0 or abs(s1) > bound:
        return None
    from math import gcd

    if gcd(int(r1), int(s1)) != 1:
        return None
    return fmpq(int(r1), int(s1))


def _rational_reconstruct_poly(f: nmod_poly, m: nmod_poly, max_den: int):
    """a/b = f mod m with deg b <= max_den and deg a < deg m - max_den."""
    r0, r1 = m, f
    s0, s1 = nmod_poly([0], f.modulus()), nmod_poly([1], f.modulus())
    target = m.degree() - max_den
    while r1.degree() >= target:
        qt, rem = divmod(r0, r1)
        r0, r1 = r1, rem
        s0, s1 = s1, s0 - qt * s1
        if r1.is_zero():
            break
    if s1.is_zero() or s1.degree() > max_den:
        return None
    lc = s1.leading_coefficient()
    return r1 * (1 / lc), s1 * (1 / lc)


def _vandermonde_inverse(points: list[int], q: int) -> nmod_mat:
    K = len(points)
    V = nmod_mat(K, K, [pow(x, j, q) for x in points for j in range(K)], q)
    return V.inv()


class _PrimeImage:
    def __init__(self, q, den: list[int], nums: list[list[int]]):
        self.q, self.den, self.nums = q, den, nums


def _image_mod_q(red: _ModularReducer, q: int, K0: int, guard: int) -> _PrimeImage:
    r = red.r
    K = K0
    vals: dict[int, list[int]] = {}
    nxt = 2
    while True:
        while len(vals) < K + guard:
            v = red.evaluate(nxt)
            if v is not None:
                vals[nxt] = v
            nxt += 1
            if nxt - 2 > 4 * (K + guard) + 64:
                raise NotGeneralPosition("too many bad evaluation points")
        pts = sorted(vals)[: K + guard]
        Vinv = _vandermonde_inverse(pts, q)
        rng = random.Random(q)
        comb_w = [rng.randrange(1, q) for _ in range(r * r)]
        fvals = [sum(c * x for c, x in zip(comb_w, vals[t])) % q for t in pts]
        fcoef = Vinv * nmod_mat(len(pts), 1, fvals, q)
        f = nmod_poly([int(x) for x in fcoef.entries()], q)
        modpoly = nmod_poly([1], q)
        for t in pts:
            modpoly *= nmod_poly([-t % q, 1], q)
        rec = _rational_reconstruct_poly(f, modpoly, (K + guard) // 2)
        if rec is not None:
            _, den = rec
            dvals = [int(den(t)) for t in pts]
            scaled = nmod_mat(len(pts), r * r, [dvals[i] * x % q for i, t in enumerate(pts) for x in vals[t]], q)
            coef = Vinv * scaled
            cl = coef.tolist()
            ok = all(int(cl[i][j]) == 0 for i in range(K, K + guard) for j in range(r * r))
            if ok:
                nums = [[int(cl[i][j]) for i in range(K)] for j in range(r * r)]
                return _PrimeImage(q, [int(c) for c in den.coeffs()], nums)
        K *= 2
        log.debug("mod %d: increasing interpolation size to %d", q, K)


def _family_payload(fam: Family) -> tuple:
    def terms(P):
        return tuple((e, int(c.p), int(c.q)) for e, c in sorted(P.terms.items()))
    return (fam.n, fam.d, fam.n + 2, terms(fam.P0), terms(fam.P1), fam.p)


def _family_from_payload(payload) -> Family:
    n, d, nv, t0, t1, p = payload

    def poly(ts):
        return MPoly(nv, {e: fmpq(a, b) for e, a, b in ts})
    return Family(n, d, poly(t0), poly(t1), p)


def _prime_image_task(payload, q: int, seed: int, K: int, guard: int):
    """One prime's worth of work; top-level so that worker processes can run it."""
    fam = _family_from_payload(payload)
    try:
        red = _ModularReducer(fam, q, random.Random(seed * 1_000_003 + q))
    except NotGeneralPosition:
        return None
    return _image_mod_q(red, q, K, guard)


def gauss_manin_matrix(fam: Family, *, seed: int = 1, guard: int = 6, max_primes: int = 200,
                       workers: int = 1) -> ConnectionData:
    """Exact N(t) over Q(t) by multimodular evaluation and interpolation.

    With workers > 1 the images modulo several primes are computed in
    parallel processes; the result does not depend on the worker count.
    """
    basis = dwork_basis(fam.n, fam.d)
    r = len(basis)
    images: list[_PrimeImage] = []
    K = 16
    prev = None
    primes = _word_primes()
    payload = _family_payload(fam)
    pool = None
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        pool = ProcessPoolExecutor(max_workers=workers)
    failures = 0
    try:
        used = 0
        while used < max_primes:
            batch = [next(primes) for _ in range(max(1, workers))]
            used += len(batch)
            if pool is None:
                results = [_prime_image_task(payload, q, seed, K, guard) for q in batch]
            else:
                results = list(pool.map(_prime_image_task, [payload] * len(batch), batch,
                                        [seed] * len(batch), [K] * len(batch), [guard] * len(batch)))
            for img in results:
                if img is None:
                    failures += 1
                    if not images and failures >= 2:
                        raise NotGeneralPosition("Jacobian and Dwork monomials do not span some level")
                    continue
                K = max(K, len(img.nums[0]))
                if images:
                    ddeg = len(images[0].den)
                    if len(img.den) < ddeg:
                        continue  # unlucky prime
                    if len(img.den) > ddeg:
                        images = []
                images.append(img)
                res = _combine(images, r)
                if res is not None and prev is not None and _same(res, prev):
                    return _finish(basis, res, len(images), K)
                prev = res
    finally:
        if pool is not None:
            pool.shutdown()
    raise NotGeneralPosition("rational reconstruction did not stabilize")


def _finish(basis, res, nprimes: int, K: int) -> ConnectionData:
    den, nums = res
    g = den
    for row in nums:
        for x in row:
            if not x.is_zero():
                g = g.gcd(x)
    if g.degree() > 0:
        den = den // g
        nums = [[x // g for x in row] for row in nums]
    lc = den.leading_coefficient()
    den, nums = den / lc, [[x / lc for x in row] for row in nums]
    return ConnectionData(basis, nums, den, {
        "engine": "multimodular", "primes": nprimes,
        "points": K, "den_degree": den.degree()})


def _combine(images: list[_PrimeImage], r: int):
    mod = 1
    for im in images:
        mod *= im.q

    def crt(vals):
        x, m = 0, 1
        for v, im in zip(vals, images):
            # incremental CRT
            t = ((v - x) * pow(m, -1, im.q)) % im.q
            x += m * t
            m *= im.q
        return x

    den = []
    for i in range(len(images[0].den)):
        c = _rational_reconstruct_int(crt([im.den[i] for im in images]), mod)
        if c is None:
            return None
        den.append(c)
    nums = []
    for j in range(r * r):
        L = max(len(im.nums[j]) for im in images)
        cs = []
        for i in range(L):
            v = crt([im.nums[j][i] if i < len(im.nums[j]) else 0 for im in images])
            c = _rational_reconstruct_int(v, mod)
            if c is None:
                return None
            cs.append(c)
        nums.append(fmpq_poly(cs))
    return fmpq_poly(den), [nums[i * r:(i + 1) * r] for i in range(r)]


def _same(a, b) -> bool:
    return a[0] == b[0] and all(x == y for ra, rb in zip(a[1], b[1]) for x, y in zip(ra, rb))

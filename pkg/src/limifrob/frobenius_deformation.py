"""Frobenius structure of the pencil by deformation from the diagonal fiber.

The Frobenius matrix F(t) (for the lift t -> t^p, columns = images of basis
vectors) satisfies dF/dt + N F = p t^(p-1) F N(t^p).  With C the fundamental
solution of C' + N C = 0 at t = 1 this gives F(t) = C(t) F(1) C(t^p)^(-1).
F(t) is overconvergent rather than rational; modulo p^N it agrees with
G(t) / R(t)^m where R lifts the radical of the connection denominator mod p.

All heavy arithmetic is over Z/p^K in fixed point: a stored integer y stands
for y / p^scale.
"""
from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass, field, replace

from flint import fmpq, fmpq_mat, fmpz, fmpz_mod_ctx, fmpz_mod_poly_ctx, fmpz_poly, nmod_poly

from .connection_normalize import NormalizedConnection
from .exact_algebra import FracMatrix
from .griffiths_dwork import ConnectionData, DworkBasisElement, dwork_basis
from .padic_arith import (FixedPointODE, PadicScalar, PrecisionExhausted,
                          padic_gamma, valuation)

log = logging.getLogger(__name__)


class DegreeNotDividing(ValueError):
    pass


class ReconstructionFailed(ArithmeticError):
    pass


class ResidualCheckFailed(ArithmeticError):
    pass


class NegativeCoefficientNonzero(ArithmeticError):
    pass


class BadReduction(ArithmeticError):
    """The connection is not p-integral near t = 1."""


def escalation_cap() -> int:
    return int(os.environ.get("LIMIFROB_ESCALATION_CAP", "4"))


# ---------------------------------------------------------------------------
# Initial condition: the diagonal fiber.

def diagonal_entry(b: DworkBasisElement, n: int, d: int, p: int, N: int) -> PadicScalar:
    """Frobenius eigenvalue on the class of x^w Omega / P^k for P = sum x_i^d.

    With a_i = d - 1 - w_i and k' = sum a_i / d = n + 2 - k, the value is
    (-1)^k' p^(k'-1) prod Gamma_p(a_i / d)  (Gross-Koblitz; sign fixed
    against point counts of Fermat hypersurfaces).
    """
    kp = n + 2 - b.k
    mod = p ** N
    dinv = pow(d, -1, mod)
    g = 1
    for wi in b.w:
        g = g * padic_gamma((d - 1 - wi) * dinv % mod, p, N).residue() % mod
    unit = (-1) ** kp * g
    return PadicScalar(p, kp - 1, unit, N)


def diagonal_frobenius(n: int, d: int, p: int, N_work: int) -> list[list[PadicScalar]]:
    if (p - 1) % d:
        raise DegreeNotDividing(f"d = {d} does not divide p - 1 = {p - 1}")
    basis = dwork_basis(n, d)
    r = len(basis)
    zero = PadicScalar.zero(p, N_work)
    out = [[zero] * r for _ in range(r)]
    for i, b in enumerate(basis):
        out[i][i] = diagonal_entry(b, n, d, p, N_work)
    return out


# ---------------------------------------------------------------------------
# Precision planning.

@dataclass(frozen=True)
class PrecisionPlan:
    N_target: int
    N_work: int
    m: int        # exponent of R in the denominator of F
    D: int        # degree cap of the numerators
    M: int        # series order of the local solution at t = 1
    guard: int = 2
    cap: int = 4
    round: int = 0

    def escalate(self) -> "PrecisionPlan":
        """Double the reconstruction window (m, D, M)."""
        return replace(self, m=2 * self.m, D=2 * self.D, M=2 * self.M, round=self.round + 1)

    def deepen(self, extra: int | None = None) -> "PrecisionPlan":
        """Raise working precision (used when p-adic checks run out of digits)."""
        extra = self.N_work if extra is None else extra
        scale = (self.N_work + extra) / self.N_work
        m = math.ceil(self.m * scale)
        return replace(self, N_work=self.N_work + extra, m=m,
                       D=math.ceil(self.D * scale), M=math.ceil(self.M * scale), round=self.round + 1)


def precision_plan(N_target: int, delta: int, e: int, p: int, r: int, deg_delta: int,
                   guard: int = 2, cap: int | None = None) -> PrecisionPlan:
    """Initial working precision and reconstruction window.

    The working precision covers the 2*delta digits lost to the normalizing
    gauge plus guard digits.  The pole order m of F at the bad discs grows
    like p times the precision; the numerator degree follows from m and
    deg R (at most deg_delta + 1), and the series order leaves room for the
    vanishing test on the tail.
    """
    if N_target < 1:
        raise ValueError("N_target must be positive")
    N_w = N_target + 2 * delta + guard
    m = p * (N_w + 1)
    D = m * (deg_delta + 1) + p * N_w
    M = D + max(16, D // 8)
    return PrecisionPlan(N_target, N_w, m, D, M, guard, escalation_cap() if cap is None else cap)


# ---------------------------------------------------------------------------
# Modular polynomial-matrix helpers.

class _Ring:
    def __init__(self, p: int, K: int):
        self.p, self.K = p, K
        self.mod = p ** K
        self.pctx = fmpz_mod_poly_ctx(self.mod)
        self.mctx = fmpz_mod_ctx(self.mod)

    def poly(self, coeffs) -> object:
        return self.pctx([int(c) % self.mod for c in coeffs])

    def matmul(self, A, B, M: int | None = None):
        r, s, c = len(A), len(B), len(B[0])
        out = []
        for i in range(r):
            row = []
            for j in range(c):
                acc = self.pctx(0)
                for k in range(s):
                    a, b = A[i][k], B[k][j]
                    if a.is_zero() or b.is_zero():
                        continue
                    acc += a.mul_low(b, M) if M is not None else a * b
                row.append(acc)
            out.append(row)
        return out


def _integer_connection(conn: ConnectionData) -> tuple[list[list[fmpz_poly]], fmpz_poly]:
    """N = A / b with A, b integral and jointly primitive."""
    den = conn.denominator
    L = math.lcm(int(den.denom()), *(int(x.denom()) for row in conn.numerators for x in row))
    b = fmpz_poly([int(c * L) for c in den.coeffs()])
    A = [[fmpz_poly([int(c * L) for c in x.coeffs()]) for x in row] for row in conn.numerators]
    g = b.content()
    for row in A:
        for x in row:
            g = fmpz(math.gcd(int(g), int(x.content())))
    if g > 1:
        b = fmpz_poly([c // g for c in b.coeffs()])
        A = [[fmpz_poly([c // g for c in x.coeffs()]) for x in row] for row in A]
    return A, b


def _shift(f: fmpz_poly, a: int) -> fmpz_poly:
    """f(t + a)."""
    return f(fmpz_poly([a, 1])) if f.degree() > 0 else f


def bad_locus_lift(b: fmpz_poly, p: int) -> fmpz_poly:
    """Monic integer lift of the radical of b mod p, always including t."""
    bp = nmod_poly([int(c) % p for c in b.coeffs()], p)
    if bp.is_zero():
        raise BadReduction("connection denominator vanishes mod p")
    _, fac = bp.factor()
    R = fmpz_poly([0, 1])
    for f, _ in fac:
        if f.degree() == 1 and int(f.coeffs()[0]) == 0:
            continue
        R *= fmpz_poly([int(c) for c in f.coeffs()])
    return R


# ---------------------------------------------------------------------------
# Global Frobenius.

@dataclass
class GlobalFrobenius:
    """F(t) = p^(-c) * numerators / R(t)^m, correct modulo p^N_ach."""
    p: int
    c: int
    m: int
    numerators: list[list[fmpz_poly]]
    R: fmpz_poly
    N_ach: int
    plan: PrecisionPlan
    stats: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return len(self.numerators)

    def evaluate(self, tau: int, N: int | None = None) -> list[list[PadicScalar]]:
        """F at an integer point tau with R(tau) a p-adic unit."""
        p = self.p
        N = self.N_ach if N is None else N
        mod = p ** (N + self.c)
        Rv = int(self.R(fmpz(tau))) % mod
        if Rv % p == 0:
            raise ZeroDivisionError("R(tau) is not a unit")
        inv = pow(pow(Rv, self.m, mod), -1, mod)
        out = []
        for row in self.numerators:
            out.append([PadicScalar.from_residue(int(x(fmpz(tau))) * inv % mod, p, N + self.c)
                        * PadicScalar.from_rational(fmpq(1, p ** self.c), p, N + 2 * self.c + 1)
                        for x in row])
        return out


def _series_solution(A_u, b_u, ring: _Ring, S: int, M: int, side: str, sign: int):
    fp = FixedPointODE(ring.p, ring.K, S)
    r = len(A_u)
    nA = max(1, max(x.degree() for row in A_u for x in row) + 1)
    Acoef = []
    for k in range(min(nA, M)):
        ents = []
        for row in A_u:
            for x in row:
                ents.append(int(x.coeffs()[k]) if k <= x.degree() else 0)
        Acoef.append(fp.mat(r, r, ents))
    bco = [int(c) for c in b_u.coeffs()]
    return fp.solve(Acoef, bco, M, side, sign)


def _mat_series_to_polys(Y, ring: _Ring):
    r = Y[0].nrows()
    ents = [Yk.entries() for Yk in Y]
    return [[ring.pctx([int(e[i * r + j]) for e in ents]) for j in range(r)] for i in range(r)]


def fixed_point_layout(plan: PrecisionPlan, p: int) -> tuple[int, int]:
    """Initial fixed-point scale S and modulus exponent K for the local solve.

    S bounds the p-adic denominators of the local solution up to u^M (they
    grow like log_p M); K leaves room for the scale on both factors of
    C F1 C^sigma^(-1) and for digits lost in exact divisions.
    """
    lg = math.ceil(math.log(max(plan.M, 2), p)) + 1
    S = 2 * lg
    return S, plan.N_work + 2 * S + 2 * lg


def initial_precision(plan: PrecisionPlan, p: int) -> int:
    """Digits of F1 that suffice for every escalation round left in the plan."""
    top = plan
    for _ in range(plan.cap - plan.round):
        top = top.escalate()
    S, K = fixed_point_layout(top, p)
    return K + 2 * S


def local_frobenius_series(A, b, F1, p: int, K: int, S: int, M: int):
    """Fixed-point series of F(1+u) mod u^M; values scaled by p^(2S)."""
    ring = _Ring(p, K)
    r = len(A)
    A_u = [[_shift(x, 1) for x in row] for row in A]
    b_u = _shift(b, 1)
    if int(b_u.coeffs()[0]) % p == 0:
        raise BadReduction("t = 1 is a singular fiber mod p")
    C = _series_solution(A_u, b_u, ring, S, M, "left", -1)
    V = ring.poly(fmpz_poly([1, 1]) ** p - 1)
    # terms D_k V^k with k >= kmax vanish below u^M modulo p^K
    kmax = min(M, (M + (p - 1) * K) // p + 1)
    Dm = _series_solution(A_u, b_u, ring, S, kmax, "right", 1)
    Dent = [Dk.entries() for Dk in Dm]
    E = [[None] * r for _ in range(r)]
    for i in range(r):
        for j in range(r):
            acc = ring.pctx(0)
            for k in range(kmax - 1, -1, -1):
                acc = acc.mul_low(V, M) + ring.pctx(int(Dent[k][i * r + j]))
            E[i][j] = acc
    Cp = _mat_series_to_polys(C, ring)
    lam = [F1[j][j].residue(K) for j in range(r)]
    if any(F1[i][j].v is not None for i in range(r) for j in range(r) if i != j):
        raise ValueError("initial Frobenius is expected to be diagonal")
    CF = [[Cp[i][j] * lam[j] for j in range(r)] for i in range(r)]
    return ring.matmul(CF, E, M), ring


def global_frobenius(conn: ConnectionData, F1: list[list[PadicScalar]], plan: PrecisionPlan,
                     *, check_residual: bool = True) -> GlobalFrobenius:
    """Deformation from t = 1 followed by reconstruction as G / R^m.

    Escalates the window (m, D, M) up to plan.cap times when the tail of
    R^m F does not vanish, and raises working precision when a fixed-point
    division fails.
    """
    A, b = _integer_connection(conn)
    p = F1[0][0].p
    R = bad_locus_lift(b, p)
    history = []
    S = None
    for attempt in range(plan.cap + 1):
        t0 = time.perf_counter()
        S0, K = fixed_point_layout(plan, p)
        S = S0 if S is None else max(S, S0)
        K += 2 * (S - S0)
        have = min(F1[i][i].absprec for i in range(len(F1)))
        if have < K:
            raise PrecisionExhausted(f"initial Frobenius has {have} digits, the working modulus needs {K}")
        try:
            Fser, ring = local_frobenius_series(A, b, F1, p, K, S, plan.M)
        except PrecisionExhausted:
            history.append({"round": attempt, "event": "scale", "S": S})
            S *= 2
            continue
        Ru = ring.poly(_shift(R, 1))
        Rm = Ru.pow_trunc(plan.m, plan.M)
        r = len(Fser)
        floor = 2 * S + plan.N_work
        ok = True
        Gu = []
        for i in range(r):
            row = []
            for j in range(r):
                g = Fser[i][j].mul_low(Rm, plan.M)
                cs = g.coeffs()
                for c in cs[plan.D + 1:]:
                    if int(c) % p ** floor:
                        ok = False
                        break
                row.append(g.truncate(plan.D + 1) if hasattr(g, "truncate") else g)
                if not ok:
                    break
            Gu.append(row)
            if not ok:
                break
        elapsed = time.perf_counter() - t0
        history.append({"round": attempt, "m": plan.m, "D": plan.D, "M": plan.M,
                        "N_work": plan.N_work, "ok": ok, "seconds": round(elapsed, 3)})
        if not ok:
            log.info("reconstruction window too small: m=%d D=%d M=%d", plan.m, plan.D, plan.M)
            if attempt == plan.cap:
                break
            plan = plan.escalate()
            continue
        # back to the t variable
        back = ring.pctx([-1, 1])
        mod_out = p ** floor
        G = []
        for row in Gu:
            G.append([fmpz_poly([int(c) % mod_out for c in g.compose(back).coeffs()]) for g in row])
        # pull out the common power of p
        vals = [valuation(int(c), p) for row in G for g in row for c in g.coeffs() if int(c) % mod_out]
        v = min(vals) if vals else 0
        c_shift = 2 * S - v
        keep = p ** (plan.N_work + c_shift)
        G = [[_sym(fmpz_poly([int(c) // p ** v for c in g.coeffs()]), keep) for g in row] for row in G]
        gf = GlobalFrobenius(p, c_shift, plan.m, G, R, plan.N_work, plan,
                             {"history": history, "S": S, "K": K})
        if check_residual:
            res = functional_equation_residual(gf, A, b)
            gf.stats["residual_valuation"] = res
            if res is not None and res < plan.N_target:
                raise ResidualCheckFailed(f"residual has valuation {res} < {plan.N_target}")
        return gf
    raise ReconstructionFailed(f"no window up to m={plan.m}, D={plan.D} reproduces F; history {history}")


def _sym(f: fmpz_poly, mod: int) -> fmpz_poly:
    return fmpz_poly([(int(c) % mod) - mod if 2 * (int(c) % mod) > mod else int(c) % mod for c in f.coeffs()])


def functional_equation_residual(gf: GlobalFrobenius, A, b) -> int | None:
    """Minimum valuation of dF/dt + N F - p t^(p-1) F N(t^p), cleared of denominators.

    Returns None when the residual vanishes to the working precision.
    """
    p, c, m = gf.p, gf.c, gf.m
    K = gf.N_ach + c
    ring = _Ring(p, K + 1)
    P = ring.pctx
    G = [[P([int(x) for x in g.coeffs()]) for g in row] for row in gf.numerators]
    Ap = [[P([int(x) for x in a.coeffs()]) for a in row] for row in A]
    Asig = [[a.inflate(p) if not a.is_zero() else a for a in row] for row in Ap]
    bp = P([int(x) for x in b.coeffs()])
    bs = bp.inflate(p)
    Rp = P([int(x) for x in gf.R.coeffs()])
    dR = Rp.derivative()
    r = len(G)
    AG = ring.matmul(Ap, G)
    GA = ring.matmul(G, Asig)
    tp = P([0] * (p - 1) + [p])
    worst = None
    for i in range(r):
        for j in range(r):
            g = G[i][j]
            term = (g.derivative() * Rp - dR * g * m) * bp * bs
            term += Rp * AG[i][j] * bs
            term -= tp * Rp * GA[i][j] * bp
            for x in term.coeffs():
                x = int(x) % p ** K
                if x:
                    v = valuation(x, p) - c
                    worst = v if worst is None else min(worst, v)
    return worst


# ---------------------------------------------------------------------------
# Specialization at the degenerate point.

@dataclass
class LimitingFrobenius:
    Fr0: list[list[PadicScalar]]
    N_ach: int
    e: int
    delta: int
    stats: dict = field(default_factory=dict)

    def residues(self, N: int | None = None) -> list[list[int]]:
        N = self.N_ach if N is None else N
        return [[x.residue(N) if x.v is None or x.v >= 0 else None for x in row] for row in self.Fr0]


def _laurent_range(F: FracMatrix, prec_hi: int) -> tuple[int, dict[int, fmpq_mat]]:
    """Coefficients of the Laurent expansion of F at 0 up to s^prec_hi."""
    lo = F.valuation()
    if lo is None:
        return 0, {}
    return lo, F.laurent_coefficients(lo, prec_hi)


def gauge_delta(H: FracMatrix, Hinv: FracMatrix, p: int, span: int = 64) -> int:
    """-min p-adic order of the Laurent coefficients of H and H^(-1)."""
    worst = 0
    for X in (H, Hinv):
        lo = X.valuation()
        if lo is None:
            continue
        # laurent_coefficients excludes hi; nums are stored relative to X.shift
        hi = lo + span if not X.is_laurent() else X.shift + _degree_span(X) + 1
        for k, Ck in X.laurent_coefficients(lo, hi).items():
            for x in Ck.entries():
                v = valuation(x, p)
                if v is not None:
                    worst = min(worst, v)
    return -worst


def _degree_span(X: FracMatrix) -> int:
    return max((x.degree() for row in X.nums for x in row if not x.is_zero()), default=0)


def _to_mod(x: fmpq, p: int, scale: int, mod: int) -> int:
    """p^scale * x modulo mod (must be p-integral)."""
    y = x * fmpq(p) ** scale
    num, den = int(y.p), int(y.q)
    if den % p == 0:
        raise ArithmeticError("gauge coefficient has a larger p-adic denominator than expected")
    return num * pow(den, -1, mod) % mod


def specialize_limit(gf: GlobalFrobenius, norm: NormalizedConnection, plan: PrecisionPlan | None = None,
                     *, delta: int | None = None) -> LimitingFrobenius:
    """Fr0 = [s^0] H(s) F(s^e) H(s^p)^(-1) with a check that negative coefficients vanish."""
    p, e, m = gf.p, norm.e, gf.m
    r = gf.rank
    H, Hinv = norm.H, norm.Hinv
    if delta is None:
        delta = gauge_delta(H, Hinv, p)
    # F(s^e) = p^-c G(s^e) s^(-e*m) Rt(s^e)^(-m), Rt = R / t
    Rt = fmpz_poly([int(x) for x in gf.R.coeffs()[1:]])
    hlo = H.valuation() or 0
    ilo = Hinv.valuation() or 0
    hi_F = (-hlo - p * ilo) // e + 1          # largest t-exponent of F that can reach s^0
    lo_total = hlo + p * ilo - e * m        # most negative s-exponent reachable
    span_H = -lo_total + 1                   # H and Hinv terms beyond this cannot matter
    K = gf.N_ach + gf.c + 2 * delta + 2
    mod = p ** K
    ring = _Ring(p, K)
    P = ring.pctx
    # t-series of F * t^m, up to t^(hi_F + m)
    nT = hi_F + m + 1
    if nT <= 0:
        raise ArithmeticError("empty specialization window")
    Rinv = P([int(x) for x in Rt.coeffs()]).pow_trunc(m, nT).inverse_series_trunc(nT)
    Ft = [[P([int(x) for x in g.coeffs()]).mul_low(Rinv, nT) for g in row] for row in gf.numerators]
    # as s-polynomials: exponent e*k - e*m -> shifted by e*m
    Fs = [[f.inflate(e) for f in row] for row in Ft]   # index i  <->  s^(i - e*m)
    # H(s) as polynomial: index i <-> s^(i + hlo), scaled by p^delta
    nH = span_H + (1 if H.is_laurent() else 0)
    Hc = H.laurent_coefficients(hlo, hlo + nH + 1)
    Ic = Hinv.laurent_coefficients(ilo, ilo + nH + 1)
    Hp = [[P([_to_mod(Hc[k][i, j], p, delta, mod) if k in Hc else 0 for k in range(hlo, hlo + nH + 1)])
           for j in range(r)] for i in range(r)]
    Ip = [[P([_to_mod(Ic[k][i, j], p, delta, mod) if k in Ic else 0 for k in range(ilo, ilo + nH + 1)]).inflate(p)
           for j in range(r)] for i in range(r)]
    # total exponent offset: hlo - e*m + p*ilo; we need indices up to -offset
    offset = hlo - e * m + p * ilo
    top = -offset + 1
    X = ring.matmul(Hp, Fs, top)
    Y = ring.matmul(X, Ip, top)
    scale = gf.c + 2 * delta
    absprec = gf.N_ach - 2 * delta
    if absprec < 1:
        raise PrecisionExhausted("no digits left after the gauge transformation")
    worst = None
    for i in range(r):
        for j in range(r):
            cs = Y[i][j].coeffs()
            for idx in range(min(len(cs), -offset)):
                x = int(cs[idx]) % mod
                if x:
                    v = valuation(x, p) - scale
                    worst = v if worst is None else min(worst, v)
    if worst is not None and worst < absprec:
        raise NegativeCoefficientNonzero(
            f"a negative Laurent coefficient has valuation {worst} below the floor {absprec}")
    Fr0 = []
    for i in range(r):
        row = []
        for j in range(r):
            cs = Y[i][j].coeffs()
            x = int(cs[-offset]) if -offset < len(cs) else 0
            row.append(_descale(x, p, scale, K, absprec))
        Fr0.append(row)
    return LimitingFrobenius(Fr0, absprec, e, delta,
                             {"negative_min_valuation": worst, "negative_terms": -offset})


def _descale(y: int, p: int, scale: int, K: int, absprec: int) -> PadicScalar:
    y %= p ** K
    if y == 0:
        return PadicScalar.zero(p, absprec)
    v = valuation(y, p)
    if v - scale >= absprec:
        return PadicScalar.zero(p, absprec)
    return PadicScalar(p, v - scale, y // p ** v, absprec - (v - scale))


def commutation_defect(N0: fmpq_mat, Fr0: list[list[PadicScalar]]) -> int | None:
    """Minimum valuation of N0 Fr0 - p Fr0 N0 (None if zero to precision)."""
    r = len(Fr0)
    p = Fr0[0][0].p
    worst = None
    for i in range(r):
        for j in range(r):
            acc = PadicScalar.zero(p, min(x.absprec for row in Fr0 for x in row) + 10)
            for k in range(r):
                if N0[i, k] != 0:
                    acc = acc + Fr0[k][j] * N0[i, k]
                if N0[k, j] != 0:
                    acc = acc - Fr0[i][k] * (N0[k, j] * p)
            if acc.v is not None:
                worst = acc.v if worst is None else min(worst, acc.v)
    return worst

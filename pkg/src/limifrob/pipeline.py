"""End-to-end driver: family description in, limiting structure report out."""
from __future__ import annotations

import logging
import os
import random
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from math import comb, isqrt

from flint import fmpq, fmpz

from . import __version__
from .connection_normalize import normalize
from .exact_algebra import FracMatrix
from .family import FamilyError, FamilyInput, render_family
from .frobenius_deformation import (BadReduction, DegreeNotDividing, NegativeCoefficientNonzero,
                                    ReconstructionFailed, ResidualCheckFailed, bad_locus_lift,
                                    commutation_defect, diagonal_frobenius, escalation_cap,
                                    gauge_delta, global_frobenius, initial_precision,
                                    precision_plan, specialize_limit, _integer_connection)
from .griffiths_dwork import Family, NotGeneralPosition, gauss_manin_matrix
from .limiting_structure import (LimitingStructure, Unrecognized, _poly_mul, _trim, check_filtration,
                                 det_valuation, graded_analysis, monodromy_filtration,
                                 nilpotency_index, reverse_charpoly, weil_weight_check)
from .oracle_counting import DEFAULT_BUDGET, count_vector, zeta_consistency
from .padic_arith import PadicScalar, PrecisionExhausted, teichmuller_lift

log = logging.getLogger(__name__)

REPORT_VERSION = 1

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_GENERAL_POSITION = 3
EXIT_PRECISION = 4
EXIT_VERIFICATION = 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineError):
        exc = exc.cause
    if isinstance(exc, (FamilyError, DegreeNotDividing, BadReduction)):
        return EXIT_INPUT
    if isinstance(exc, NotGeneralPosition):
        return EXIT_GENERAL_POSITION
    if isinstance(exc, (PrecisionExhausted, ReconstructionFailed, ResidualCheckFailed,
                        NegativeCoefficientNonzero, Unrecognized)):
        return EXIT_PRECISION
    return EXIT_INTERNAL


class PipelineError(RuntimeError):
    """An upstream error tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        return exit_code_for(self.cause)


# ---------------------------------------------------------------------------
# JSON encodings.

def padic_from_json(d: dict, p: int) -> PadicScalar:
    if d["valuation"] is None:
        return PadicScalar.zero(p, d["N"])
    return PadicScalar(p, d["valuation"], int(d["unit"]), d["N"])


def qmat_json(A) -> list[list[str]]:
    return [[str(A[i, j]) for j in range(A.ncols())] for i in range(A.nrows())]


# ---------------------------------------------------------------------------
# Fibre characteristic polynomials.

def fiber_charpoly(F: list[list[PadicScalar]], n: int, p: int) -> list[int | None]:
    """det(1 - T F) for a smooth fibre, unknown coefficients as None.

    Each coefficient is read off with the weight-n bound binom(r, i) p^(n i / 2);
    the ones without enough digits are filled in from the functional equation
    a_(r-i) = eps p^(n (r/2 - i)) a_i when that is possible.
    """
    r = len(F)
    coeffs = reverse_charpoly(F, p)
    out: list[int | None] = []
    for i, c in enumerate(coeffs):
        b = _ceil_sqrt(comb(r, i) ** 2 * p ** (n * i))
        if c.v is not None and c.v < 0:
            out.append(None)
            continue
        mod = p ** c.absprec
        if 2 * b >= mod:
            out.append(None)
            continue
        x = c.residue() % mod
        out.append(x - mod if x > mod // 2 else x)
    if (n * r) % 2 == 0 and r:
        top = coeffs[r]
        half = n * r // 2
        eps = None
        if top.v == half and top.absprec > half:
            unit = top.u % p
            eps = 1 if unit == 1 else -1 if unit == p - 1 else None
        if n % 2:
            eps = 1
        if eps is not None:
            for i in range(r + 1):
                j = r - i
                if out[j] is None and out[i] is not None:
                    out[j] = eps * p ** (n * (r - 2 * i) // 2) * out[i]
    return out


def _ceil_sqrt(x: int) -> int:
    s = isqrt(x)
    return s if s * s == x else s + 1


def known_prefix(Q: list[int | None]) -> list[int]:
    out = []
    for c in Q:
        if c is None:
            break
        out.append(c)
    return out


def clamp_kmax(kmax: int, n: int, p: int, budget: int = DEFAULT_BUDGET) -> int:
    k = kmax
    while k > 0 and p ** (k * (n + 1)) > budget:
        k -= 1
    return k


def consistency(Q: list[int | None], P, n: int, p: int, kmax: int) -> dict:
    """Compare the low coefficients of Q with point counts of {P = 0}."""
    known = known_prefix(Q)
    k = min(clamp_kmax(kmax, n, p), len(known) - 1)
    if k < 1:
        return {"kmax": 0, "passed": None, "counts": [], "predicted": [], "first_mismatch": None}
    counts = count_vector(P, n, p, k)
    rep = zeta_consistency(known[: k + 1], counts, n, p)
    return {"kmax": k, "passed": rep.passed, "counts": rep.counts, "predicted": rep.predicted,
            "first_mismatch": rep.first_mismatch}


def fermat_form(n: int, d: int) -> dict:
    nv = n + 2
    return {tuple(d if i == j else 0 for i in range(nv)): 1 for j in range(nv)}


# ---------------------------------------------------------------------------
# The report.

@dataclass
class Report:
    version: int
    family: dict
    basis: list[str]
    rank: int
    e: int
    residue_eigenvalues: list[str]
    N0: list[list[str]]
    Fr0: list[list[dict]]
    N_target: int
    N_ach: int
    delta: int
    global_frobenius: dict
    filtration: dict
    graded: list[dict]
    charpoly: dict
    kernel_factor: dict
    checks: dict
    verification: dict
    escalations: list[dict]
    timings: dict
    status: str = "ok"
    failures: list[str] = field(default_factory=list)

    def to_json(self, timings: bool = True) -> dict:
        d = asdict(self)
        if not timings:
            d["timings"] = None
        return d

    @property
    def exit_code(self) -> int:
        return EXIT_VERIFICATION if self.failures else EXIT_OK

    def summary(self) -> str:
        fam = self.family
        lines = [
            f"family {fam['name'] or '(unnamed)'}: n={fam['n']} d={fam['d']} p={fam['p']}, rank {self.rank}",
            f"e = {self.e}, residue eigenvalues {', '.join(self.residue_eigenvalues) or '-'}",
            f"N0 nilpotency index {self.checks['nilpotency_index']}, "
            f"N0 = 0: {self.checks['nilpotency_index'] <= 1}",
            f"filtration dims (W_-1..W_{2 * fam['n']}): {', '.join(map(str, self.filtration['dims']))}",
            f"precision: target {self.N_target}, achieved {self.N_ach}, delta {self.delta}",
        ]
        for g in self.graded:
            mark = "pass" if g["weil_pass"] else "FAIL"
            lines.append(f"  Gr_{g['k']} (dim {g['dim']}, weight {g['weight']}): {poly_str(g['poly'])}  [Weil {mark}]")
        lines.append(f"char poly: {poly_str(self.charpoly['poly'])}")
        lines.append(f"kernel factor (dim {self.kernel_factor['dim']}): {poly_str(self.kernel_factor['poly'])}")
        for key, val in self.checks.items():
            if key.endswith("_ok"):
                lines.append(f"  check {key[:-3]}: {'pass' if val else 'FAIL'}")
        for name, v in self.verification.items():
            if name == "fibers":
                for fib in v:
                    lines.append(f"  fibre t0={fib['t0']}: counts k<={fib['kmax']} {_verdict(fib['passed'])}")
            elif isinstance(v, dict):
                lines.append(f"  {name}: counts k<={v['kmax']} {_verdict(v['passed'])}")
        if self.escalations:
            lines.append(f"escalations: {len(self.escalations)}")
        if self.timings:
            lines.append("timings: " + ", ".join(f"{k} {v:.2f}s" for k, v in self.timings.items()))
        lines.append(f"status: {self.status}" + (f" ({'; '.join(self.failures)})" if self.failures else ""))
        return "\n".join(lines)


def _verdict(x) -> str:
    return "skipped" if x is None else "pass" if x else "FAIL"


def poly_str(c: list[int]) -> str:
    """1 - 6*T + 23*T^2 style rendering."""
    out = ""
    for i, a in enumerate(c):
        if not a:
            continue
        mon = "" if i == 0 else "T" if i == 1 else f"T^{i}"
        mag = str(abs(a)) if not mon else "" if abs(a) == 1 else f"{abs(a)}*"
        if out:
            out += " - " if a < 0 else " + "
        elif a < 0:
            out = "-"
        out += mag + mon
    return out or "0"


# ---------------------------------------------------------------------------
# The pipeline.

@dataclass
class RunArtifacts:
    """In-memory objects behind a report, for callers that want more than JSON."""
    connection: object = None
    normalized: object = None
    global_frobenius: object = None
    limit: object = None
    filtration: object = None
    weil: object = None


class _Stages:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        finally:
            self.timings[name] = round(self.timings.get(name, 0.0) + time.perf_counter() - t0, 3)
        log.info("%s done in %.2fs", name, self.timings[name])


def resolve_cap(fi: FamilyInput) -> int:
    if os.environ.get("LIMIFROB_ESCALATION_CAP"):
        return escalation_cap()
    return fi.escalation_cap if fi.escalation_cap is not None else escalation_cap()


def run(fi: FamilyInput, *, workers: int = 1, verify: bool | None = None, fibers: int = 1,
        seed: int = 0, artifacts: RunArtifacts | None = None) -> Report:
    """Run every stage on a parsed family; raises PipelineError on failure."""
    stage = _Stages()
    verify = fi.verify if verify is None else verify
    n, d, p = fi.n, fi.d, fi.p
    cap = resolve_cap(fi)
    escalations: list[dict] = []

    with stage("gauss_manin"):
        fam = Family.from_input(fi)
        conn = gauss_manin_matrix(fam, workers=workers)
    with stage("normalize"):
        norm = normalize(FracMatrix.from_ratfuncs(conn.N), n)
        delta = gauge_delta(norm.H, norm.Hinv, p)
    r = conn.rank
    A, b = _integer_connection(conn)
    R = bad_locus_lift(b, p)

    N_target = fi.N
    for attempt in range(cap + 1):
        plan = precision_plan(N_target, delta, norm.e, p, r, R.degree() - 1, cap=cap)
        with stage("diagonal_frobenius"):
            F1 = diagonal_frobenius(n, d, p, initial_precision(plan, p))
        with stage("global_frobenius"):
            gf = global_frobenius(conn, F1, plan)
        with stage("specialize_limit"):
            lf = specialize_limit(gf, norm, plan, delta=delta)
        with stage("limiting_structure"):
            nil = nilpotency_index(norm.N0)
            filt = monodromy_filtration(norm.N0, n)
            ls = LimitingStructure(n, norm.e, norm.N0, lf.Fr0, lf.N_ach)
            try:
                weil = graded_analysis(ls, filt)
            except Unrecognized as exc:
                if attempt == cap:
                    raise
                escalations.append({"stage": "limiting_structure", "reason": str(exc),
                                    "N_target": N_target, "next": 2 * N_target})
                log.info("recognition failed at N=%d, escalating: %s", N_target, exc)
                N_target *= 2
                continue
        break
    escalations = [{"stage": "global_frobenius", **h} for h in gf.stats["history"][:-1]] + escalations

    with stage("checks"):
        margin = plan.guard + 1
        try:
            check_filtration(filt, norm.N0)
            filt_ok = True
        except AssertionError:
            filt_ok = False
        comm = commutation_defect(norm.N0, lf.Fr0)
        detv = det_valuation(lf.Fr0)
        det_expected = fmpq(n * r, 2)
        res = gf.stats.get("residual_valuation")
        checks = {
            "residual_valuation": res,
            "residual_ok": res is None or res >= N_target,
            "negative_min_valuation": lf.stats["negative_min_valuation"],
            "negative_coefficients_ok": True,
            "commutation_defect": comm,
            "commutation_ok": comm is None or comm >= lf.N_ach - margin,
            "det_valuation": detv,
            "det_expected": str(det_expected),
            "det_valuation_ok": detv is not None and fmpq(detv) == det_expected,
            "nilpotency_index": nil,
            "nilpotency_ok": nil <= n + 1,
            "filtration_ok": filt_ok,
            "stability_defect": weil.stability_defect,
            "stability_ok": weil.stability_defect is None or weil.stability_defect >= lf.N_ach - margin,
            "product_ok": weil.product_matches,
            "weil_ok": weil.all_pure,
            # recorded only: whether p can divide e is an open question
            "e_coprime_to_p": norm.e % p != 0,
        }
        if not checks["e_coprime_to_p"]:
            log.warning("p = %d divides the ramification index e = %d", p, norm.e)

    verification: dict = {}
    if verify:
        with stage("verification"):
            verification = _verify(fi, fam, F1, gf, R, lf.N_ach, fibers, seed)

    failures = [k[:-3] for k, v in checks.items() if k.endswith("_ok") and not v]
    if verification:
        if verification["fermat"]["passed"] is False:
            failures.append("fermat_counts")
        failures += [f"fibre_{f['t0']}_counts" for f in verification["fibers"] if f["passed"] is False]

    if artifacts is not None:
        artifacts.connection, artifacts.normalized, artifacts.global_frobenius = conn, norm, gf
        artifacts.limit, artifacts.filtration, artifacts.weil = lf, filt, weil

    return Report(
        version=REPORT_VERSION,
        family={"name": fi.name, "n": n, "d": d, "p": p, "N": fi.N, "vars": list(fi.vars),
                "P0": fi.P0.to_str(fi.vars), "P1": fi.P1.to_str(fi.vars), "text": render_family(fi),
                "library_version": __version__},
        basis=[str(x) for x in conn.basis],
        rank=r,
        e=norm.e,
        residue_eigenvalues=[str(x) for x in norm.residue_eigenvalues],
        N0=qmat_json(norm.N0),
        Fr0=[[x.to_json() for x in row] for row in lf.Fr0],
        N_target=N_target,
        N_ach=lf.N_ach,
        delta=delta,
        global_frobenius={"c": gf.c, "m": gf.m, "D": plan.D, "M": plan.M, "N_work": plan.N_work,
                          "R": [int(x) for x in R.coeffs()], "K": gf.stats["K"], "S": gf.stats["S"]},
        filtration={"dims": filt.dims, "graded_dims": {str(k): v for k, v in filt.graded_dims().items()}},
        graded=[{"k": g.k, "weight": str(fmpq(g.k, 2)), "dim": g.dim, "poly": g.poly,
                 "weil_pass": g.weil.passed, "max_relative_error": float(f"{g.weil.max_relative_error:.3e}"),
                 "precision": g.precision} for g in weil.pieces],
        charpoly={"poly": weil.full, "precision": lf.N_ach},
        kernel_factor={"poly": weil.kernel_factor, "dim": weil.kernel_dim,
                       "weights": {str(k): v for k, v in weil.stats["kernel_weights"].items()}},
        checks=checks,
        verification=verification,
        escalations=escalations,
        timings=stage.timings,
        status="ok" if not failures else "verification_failed",
        failures=failures,
    )


def _verify(fi: FamilyInput, fam: Family, F1, gf, R, N_ach: int, fibers: int, seed: int) -> dict:
    n, d, p = fi.n, fi.d, fi.p
    fermat_Q = fiber_charpoly(F1, n, p)
    out = {"fermat": {"charpoly": fermat_Q, **consistency(fermat_Q, fermat_form(n, d), n, p, fi.kmax)}}
    good = [t for t in range(2, p) if int(R(fmpz(t))) % p]
    rng = random.Random(seed * 1_000_003 + p)
    chosen = sorted(rng.sample(good, min(fibers, len(good))))
    fibs = []
    for t0 in chosen:
        tau = teichmuller_lift(t0, p, N_ach + gf.c + 2).residue()
        Q = fiber_charpoly(gf.evaluate(tau), n, p)
        fibs.append({"t0": t0, "charpoly": Q, **consistency(Q, fam.at(t0), n, p, fi.kmax)})
    out["fibers"] = fibs
    return out


def verify_report(data: dict, kmax: int) -> dict:
    """Re-check a saved report: point counts, Weil weights and the product identity."""
    from .family import parse_family
    fi = parse_family(data["family"]["text"])
    fam = Family.from_input(fi)
    n, d, p = fi.n, fi.d, fi.p
    out: dict = {"failures": []}
    for g in data["graded"]:
        w = weil_weight_check(g["poly"], fmpq(g["k"], 2), p)
        if not w.passed:
            out["failures"].append(f"weil_Gr_{g['k']}")
    prod = [1]
    for g in data["graded"]:
        prod = _poly_mul(prod, g["poly"])
    if _trim(prod) != _trim(data["charpoly"]["poly"]):
        out["failures"].append("product")
    ver = data.get("verification") or {}
    fermat_Q = ver.get("fermat", {}).get("charpoly")
    if fermat_Q is not None:
        out["fermat"] = consistency(fermat_Q, fermat_form(n, d), n, p, kmax)
        if out["fermat"]["passed"] is False:
            out["failures"].append("fermat_counts")
    out["fibers"] = []
    for fib in ver.get("fibers", []):
        c = consistency(fib["charpoly"], fam.at(fib["t0"]), n, p, kmax)
        out["fibers"].append({"t0": fib["t0"], **c})
        if c["passed"] is False:
            out["failures"].append(f"fibre_{fib['t0']}_counts")
    return out


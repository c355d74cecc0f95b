"""Family description files: a flat ``key = value`` format with polynomial expressions.

Example::

    # double conic degeneration
    n = 1
    d = 4
    p = 5
    N = 8
    vars = X,Y,Z
    P0 = (X^2 + Y^2 + 3*Z^2 + 3*X*Y + Y*Z + 2*X*Z)^2
    P1 = X^4 + Y^4 + Z^4
    verify = true
    kmax = 3

Polynomial expressions accept integers and rationals, the declared variable
names, ``+ - * ^`` (``**`` also works) and parentheses.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from flint import fmpq, fmpz

from .polynomials import MPoly


class FamilyError(ValueError):
    """Base class for invalid family descriptions (exit status 2)."""


class ParseError(FamilyError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line, self.col, self.message = line, col, message


class HomogeneityError(FamilyError):
    pass


class DegreeDividesError(FamilyError):
    pass


class ValidationError(FamilyError):
    pass


@dataclass(frozen=True)
class FamilyInput:
    n: int
    d: int
    p: int
    P0: MPoly
    P1: MPoly
    vars: tuple[str, ...]
    N: int = 8
    verify: bool = False
    kmax: int = 3
    escalation_cap: int | None = None
    name: str = ""

    @property
    def nvars(self) -> int:
        return self.n + 2


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))")


class _ExprParser:
    def __init__(self, text: str, names: list[str], line: int, col0: int):
        self.text = text.replace("−", "-")
        self.names = names
        self.line = line
        self.col0 = col0
        self.toks: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(self.text):
            if self.text[pos:].strip() == "":
                break
            m = _TOKEN.match(self.text, pos)
            if not m or m.end() == pos:
                col = pos + len(self.text[pos:]) - len(self.text[pos:].lstrip())
                raise ParseError(f"unexpected character {self.text[col]!r}", line, col0 + col)
            kind = m.lastgroup
            start = m.start(kind)
            self.toks.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def _err(self, msg, tok=None):
        col = tok[2] if tok else len(self.text)
        raise ParseError(msg, self.line, self.col0 + col)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def parse(self) -> MPoly:
        if not self.toks:
            self._err("empty expression")
        e = self.expr()
        if self.peek() is not None:
            self._err(f"unexpected token {self.peek()[1]!r}", self.peek())
        return e

    def expr(self) -> MPoly:
        acc = self.term()
        while (t := self.peek()) and t[1] in "+-" and t[0] == "op":
            self.take()
            rhs = self.term()
            acc = acc + rhs if t[1] == "+" else acc - rhs
        return acc

    def term(self) -> MPoly:
        acc = self.unary()
        while (t := self.peek()) and t[0] == "op" and t[1] in ("*", "/"):
            self.take()
            rhs = self.unary()
            if t[1] == "*":
                acc = acc * rhs
            else:
                if len(rhs.terms) != 1 or any(any(e) for e in rhs.terms):
                    self._err("division is only allowed by a nonzero constant", t)
                acc = acc.scale(1 / next(iter(rhs.terms.values())))
        return acc

    def unary(self) -> MPoly:
        t = self.peek()
        if t and t[0] == "op" and t[1] in "+-":
            self.take()
            v = self.unary()
            return -v if t[1] == "-" else v
        return self.power()

    def power(self) -> MPoly:
        base = self.atom()
        t = self.peek()
        if t and t[0] == "op" and t[1] in ("^", "**"):
            self.take()
            e = self.take()
            if e is None or e[0] != "num":
                self._err("exponent must be a nonnegative integer", e)
            return base ** int(e[1])
        return base

    def atom(self) -> MPoly:
        t = self.take()
        nv = len(self.names)
        if t is None:
            self._err("unexpected end of expression")
        kind, val, _ = t
        if kind == "num":
            return MPoly.constant(nv, fmpq(int(val)))
        if kind == "name":
            if val not in self.names:
                self._err(f"unknown variable {val!r} (declared: {','.join(self.names)})", t)
            return MPoly.variable(nv, self.names.index(val))
        if val == "(":
            e = self.expr()
            c = self.take()
            if c is None or c[1] != ")":
                self._err("expected ')'", c)
            return e
        self._err(f"unexpected token {val!r}", t)


def parse_poly(text: str, names: list[str], line: int = 1, col: int = 1) -> MPoly:
    return _ExprParser(text, names, line, col).parse()


_KEYS = {"n", "d", "p", "N", "vars", "P0", "P1", "verify", "kmax", "escalation_cap", "name"}
_INT_KEYS = {"n", "d", "p", "N", "kmax", "escalation_cap"}


def parse_family(text: str) -> FamilyInput:
    raw: dict[str, tuple[str, int, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        if "=" not in body:
            raise ParseError("expected 'key = value'", lineno, len(body) - len(body.lstrip()) + 1)
        key, _, value = body.partition("=")
        k = key.strip()
        if k not in _KEYS:
            raise ParseError(f"unknown key {k!r}", lineno, len(key) - len(key.lstrip()) + 1)
        if k in raw:
            raise ParseError(f"duplicate key {k!r}", lineno, len(key) - len(key.lstrip()) + 1)
        vcol = len(key) + 2 + (len(value) - len(value.lstrip()))
        raw[k] = (value.strip(), lineno, vcol)

    last = len(text.splitlines()) + 1
    for k in ("n", "d", "p", "P0"):
        if k not in raw:
            raise ParseError(f"missing required key {k!r}", last, 1)

    vals: dict[str, object] = {}
    for k in _INT_KEYS & raw.keys():
        s, ln, c = raw[k]
        if not re.fullmatch(r"\d+", s):
            raise ParseError(f"{k} must be a nonnegative integer, got {s!r}", ln, c)
        vals[k] = int(s)

    n, d, p = vals["n"], vals["d"], vals["p"]
    if n < 1:
        raise ValidationError("n must be at least 1")
    if d < 2:
        raise ValidationError("d must be at least 2")
    if p < 3 or not fmpz(p).is_prime():
        raise ValidationError(f"p = {p} is not an odd prime")
    if (p - 1) % d:
        raise DegreeDividesError(f"d = {d} does not divide p - 1 = {p - 1}")

    if "vars" in raw:
        s, ln, c = raw["vars"]
        names = [v.strip() for v in s.split(",")]
        if any(not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", v) for v in names):
            raise ParseError(f"bad variable list {s!r}", ln, c)
        if len(set(names)) != len(names):
            raise ParseError("repeated variable name", ln, c)
        if len(names) != n + 2:
            raise ValidationError(f"expected {n + 2} variables for n = {n}, got {len(names)}")
    else:
        names = [f"x{i}" for i in range(n + 2)]

    polys = {}
    for k in ("P0", "P1"):
        if k not in raw:
            continue
        s, ln, c = raw[k]
        P = parse_poly(s, names, ln, c)
        if P.is_zero() or not P.is_homogeneous(d):
            raise HomogeneityError(f"{k} is not homogeneous of degree {d} (degrees {sorted(P.degrees())})")
        polys[k] = P
    P1 = polys.get("P1", MPoly.diagonal(n + 2, d))
    if P1 != MPoly.diagonal(n + 2, d):
        raise ValidationError("P1 must be the diagonal polynomial x0^d + ... + x_{n+1}^d")

    verify = False
    if "verify" in raw:
        s, ln, c = raw["verify"]
        if s.lower() not in ("true", "false", "yes", "no", "1", "0"):
            raise ParseError(f"verify must be true or false, got {s!r}", ln, c)
        verify = s.lower() in ("true", "yes", "1")

    return FamilyInput(
        n=n, d=d, p=p, P0=polys["P0"], P1=P1, vars=tuple(names),
        N=vals.get("N", 8), verify=verify, kmax=vals.get("kmax", 3),
        escalation_cap=vals.get("escalation_cap"),
        name=raw["name"][0] if "name" in raw else "",
    )


def render_family(f: FamilyInput) -> str:
    lines = []
    if f.name:
        lines.append(f"name = {f.name}")
    lines += [
        f"n = {f.n}",
        f"d = {f.d}",
        f"p = {f.p}",
        f"N = {f.N}",
        f"vars = {','.join(f.vars)}",
        f"P0 = {f.P0.to_str(f.vars)}",
        f"P1 = {f.P1.to_str(f.vars)}",
        f"verify = {'true' if f.verify else 'false'}",
        f"kmax = {f.kmax}",
    ]
    if f.escalation_cap is not None:
        lines.append(f"escalation_cap = {f.escalation_cap}")
    return "\n".join(lines) + "\n"

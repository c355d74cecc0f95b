"""Sparse multivariate polynomials over Q, keyed by exponent tuple."""
from __future__ import annotations

from typing import Iterable, Mapping

from flint import fmpq

from .exact_algebra import Q


class MPoly:
    """Immutable sparse polynomial: {exponent tuple: nonzero fmpq}."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], object] | None = None):
        self.nvars = nvars
        clean = {}
        for e, c in (terms or {}).items():
            if len(e) != nvars:
                raise ValueError(f"exponent {e} has wrong length for {nvars} variables")
            c = Q(c)
            if c != 0:
                clean[tuple(e)] = c
        self.terms = clean

    @classmethod
    def constant(cls, nvars: int, c) -> "MPoly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "MPoly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1})

    @classmethod
    def monomial(cls, exps: Iterable[int], c=1) -> "MPoly":
        exps = tuple(exps)
        return cls(len(exps), {exps: c})

    @classmethod
    def diagonal(cls, nvars: int, d: int) -> "MPoly":
        return sum((cls.variable(nvars, i) ** d for i in range(nvars)), cls(nvars))

    def is_zero(self) -> bool:
        return not self.terms

    def degrees(self) -> set[int]:
        return {sum(e) for e in self.terms}

    def is_homogeneous(self, d: int | None = None) -> bool:
        ds = self.degrees()
        if not ds:
            return True
        return len(ds) == 1 and (d is None or ds == {d})

    def __add__(self, o):
        o = self._coerce(o)
        out = dict(self.terms)
        for e, c in o.terms.items():
            out[e] = out.get(e, 0) + c
        return MPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MPoly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, o):
        return self + (-self._coerce(o))

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __mul__(self, o):
        o = self._coerce(o)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in o.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0) + c1 * c2
        return MPoly(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        result = MPoly.constant(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, o):
        if not isinstance(o, MPoly):
            try:
                o = self._coerce(o)
            except TypeError:
                return NotImplemented
        return self.nvars == o.nvars and self.terms == o.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def _coerce(self, o) -> "MPoly":
        if isinstance(o, MPoly):
            if o.nvars != self.nvars:
                raise ValueError("variable count mismatch")
            return o
        if isinstance(o, (int, fmpq)):
            return MPoly.constant(self.nvars, o)
        raise TypeError(f"cannot coerce {type(o).__name__} to MPoly")

    def derivative(self, i: int) -> "MPoly":
        out = {}
        for e, c in self.terms.items():
            if e[i]:
                f = list(e)
                f[i] -= 1
                out[tuple(f)] = c * e[i]
        return MPoly(self.nvars, out)

    def scale(self, c) -> "MPoly":
        return MPoly(self.nvars, {e: c * v for e, v in self.terms.items()})

    def reduce_mod(self, p: int) -> dict[tuple[int, ...], int]:
        """Coefficients mod p; raises if a denominator is divisible by p."""
        out = {}
        for e, c in self.terms.items():
            if int(c.q) % p == 0:
                raise ZeroDivisionError(f"coefficient {c} not p-integral for p={p}")
            v = int(c.p) * pow(int(c.q), -1, p) % p
            if v:
                out[e] = v
        return out

    def to_str(self, names: Iterable[str]) -> str:
        names = list(names)
        if not self.terms:
            return "0"
        parts = []
        for e in sorted(self.terms, reverse=True):
            c = self.terms[e]
            mono = "*".join(f"{names[i]}^{k}" if k > 1 else names[i] for i, k in enumerate(e) if k)
            sign = "-" if c < 0 else "+"
            a = -c if c < 0 else c
            if mono:
                body = mono if a == 1 else f"{a}*{mono}"
            else:
                body = str(a)
            parts.append((sign, body))
        s = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, body in parts[1:]:
            s += f" {sign} {body}"
        return s

    def __repr__(self):
        return f"MPoly({self.to_str([f'x{i}' for i in range(self.nvars)])})"

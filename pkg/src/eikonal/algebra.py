"""Exact multivariate polynomials with rational coefficients.

Variables are addressed by index.  The layout shared by the whole package is
``x0 .. xn`` (indices ``0..n``), then ``u`` (index ``n+1``), then the formal
derivative symbols ``u0 .. un`` (indices ``n+2 .. 2n+2``) when a polynomial
lives on first-order jet space.  Polynomials in envelope parameters use the
names ``t1 .. tk``.

Text format::

    1/2 * x0^2 - u^2 + 3 * x1 * u

A term is a product of an optional rational coefficient (``p`` or ``p/q``)
and powers ``name^k``.  ``Poly.format`` is the canonical printer and
``parse_poly`` reads back exactly what it prints.
"""
from __future__ import annotations

import re
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Poly",
    "PolyParseError",
    "parse_poly",
    "jet_names",
    "base_names",
    "tau_names",
]


class PolyParseError(ValueError):
    pass


def base_names(n: int) -> list[str]:
    return [f"x{i}" for i in range(n + 1)] + ["u"]


def jet_names(n: int) -> list[str]:
    return base_names(n) + [f"u{i}" for i in range(n + 1)]


def tau_names(k: int) -> list[str]:
    return [f"t{i}" for i in range(1, k + 1)]


def _default_names(nvars: int) -> list[str]:
    if nvars >= 2:
        return base_names(nvars - 2)
    return ["x0"][:nvars]


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    if isinstance(c, str):
        return Fraction(c)
    raise TypeError(f"coefficient must be rational, got {type(c).__name__}")


def _order_key(exps: tuple[int, ...]):
    # graded lexicographic, highest first
    return (-sum(exps), tuple(-e for e in exps))


class Poly:
    """Immutable polynomial over Q in ``nvars`` variables."""

    def __init__(self, nvars: int, terms: Mapping[tuple[int, ...], object] | None = None):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent {exps} does not match nvars={nvars}")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            c = _as_fraction(c)
            if c:
                clean[exps] = clean.get(exps, Fraction(0)) + c
                if not clean[exps]:
                    del clean[exps]
        self.nvars = nvars
        self._terms = dict(sorted(clean.items(), key=lambda kv: _order_key(kv[0])))

    # -- constructors ---------------------------------------------------------
    @classmethod
    def const(cls, value, nvars: int) -> "Poly":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def var(cls, index: int, nvars: int, power: int = 1) -> "Poly":
        if not 0 <= index < nvars:
            raise IndexError(f"variable {index} out of range for nvars={nvars}")
        exps = [0] * nvars
        exps[index] = power
        return cls(nvars, {tuple(exps): 1})

    # -- basic protocol -------------------------------------------------------
    @property
    def terms(self) -> dict[tuple[int, ...], Fraction]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __iter__(self):
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def degree(self, indices: Iterable[int] | None = None) -> int:
        if not self._terms:
            return -1
        if indices is None:
            return max(sum(e) for e in self._terms)
        idx = list(indices)
        return max(sum(e[i] for i in idx) for e in self._terms)

    def constant_term(self) -> Fraction:
        return self._terms.get((0,) * self.nvars, Fraction(0))

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.nvars == other.nvars and self._terms == other._terms
        if isinstance(other, (int, Rational)):
            return self == Poly.const(other, self.nvars)
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.nvars, tuple(self._terms.items())))

    def __repr__(self) -> str:
        return f"Poly({self.nvars}, {self.format()!r})"

    def __str__(self) -> str:
        return self.format()

    # -- arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.nvars != self.nvars:
                raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")
            return other
        if isinstance(other, (int, Rational)):
            return Poly.const(other, self.nvars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for e, c in other._terms.items():
            terms[e] = terms.get(e, 0) + c
        return Poly(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict[tuple[int, ...], Fraction] = {}
        for e1, c1 in self._terms.items():
            for e2, c2 in other._terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                terms[e] = terms.get(e, 0) + c1 * c2
        return Poly(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        result = Poly.const(1, self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def scale(self, c) -> "Poly":
        c = _as_fraction(c)
        return Poly(self.nvars, {e: v * c for e, v in self._terms.items()})

    # -- calculus and evaluation ----------------------------------------------
    def diff(self, var: int) -> "Poly":
        if not 0 <= var < self.nvars:
            raise IndexError(f"variable {var} out of range for nvars={self.nvars}")
        terms = {}
        for e, c in self._terms.items():
            k = e[var]
            if k:
                ne = list(e)
                ne[var] = k - 1
                terms[tuple(ne)] = c * k
        return Poly(self.nvars, terms)

    def eval(self, point: Sequence):
        """Evaluate at ``point``.

        Exact (``Fraction``) when every coordinate is an int or Fraction,
        floating point otherwise.
        """
        if len(point) != self.nvars:
            raise ValueError(f"point has {len(point)} coordinates, expected {self.nvars}")
        exact = all(isinstance(p, (int, Rational)) and not isinstance(p, bool) for p in point)
        if exact:
            pt = [Fraction(p) for p in point]
            total = Fraction(0)
            for e, c in self._terms.items():
                term = c
                for p, k in zip(pt, e):
                    if k:
                        term *= p**k
                total += term
            return total
        pt = [float(p) for p in point]
        total = 0.0
        for e, c in self._terms.items():
            term = float(c)
            for p, k in zip(pt, e):
                if k:
                    term *= p**k
            total += term
        return total

    @cached_property
    def _compiled(self):
        if not self._terms:
            return np.zeros((0, self.nvars), dtype=np.int64), np.zeros(0)
        exps = np.array(list(self._terms.keys()), dtype=np.int64).reshape(len(self._terms), self.nvars)
        coefs = np.array([float(c) for c in self._terms.values()])
        return exps, coefs

    def evaluate(self, points) -> np.ndarray:
        """Vectorised float evaluation; ``points`` has shape ``(..., nvars)``."""
        pts = np.asarray(points)
        if pts.shape[-1] != self.nvars:
            raise ValueError(f"last axis must have length {self.nvars}")
        exps, coefs = self._compiled
        out = np.zeros(pts.shape[:-1], dtype=np.result_type(pts.dtype, float))
        for e, c in zip(exps, coefs):
            term = np.full(pts.shape[:-1], c, dtype=out.dtype)
            for i in np.nonzero(e)[0]:
                term = term * pts[..., i] ** int(e[i])
            out = out + term
        return out

    # -- structure ------------------------------------------------------------
    def extend(self, nvars: int) -> "Poly":
        """Embed into a ring with more variables appended at the end."""
        if nvars < self.nvars:
            raise ValueError("cannot shrink")
        pad = (0,) * (nvars - self.nvars)
        return Poly(nvars, {e + pad: c for e, c in self._terms.items()})

    def truncate(self, nvars: int) -> "Poly":
        """Drop trailing variables; they must not occur."""
        for e in self._terms:
            if any(e[nvars:]):
                raise ValueError("polynomial depends on dropped variables")
        return Poly(nvars, {e[:nvars]: c for e, c in self._terms.items()})

    def split(self, indices: Sequence[int]) -> dict[tuple[int, ...], "Poly"]:
        """Group by the exponents of ``indices``.

        Returns ``{sub-exponent: coefficient polynomial}`` where each
        coefficient polynomial no longer involves ``indices``.
        """
        idx = list(indices)
        groups: dict[tuple[int, ...], dict] = {}
        for e, c in self._terms.items():
            key = tuple(e[i] for i in idx)
            rest = list(e)
            for i in idx:
                rest[i] = 0
            groups.setdefault(key, {})[tuple(rest)] = c
        return {k: Poly(self.nvars, v) for k, v in groups.items()}

    def depends_on(self, var: int) -> bool:
        return any(e[var] for e in self._terms)

    def substitute(self, var: int, value: "Poly") -> "Poly":
        """Replace variable ``var`` by the polynomial ``value``."""
        value = self._coerce(value)
        out = Poly.zero(self.nvars)
        for key, coef in self.split([var]).items():
            out = out + coef * value ** key[0]
        return out

    # -- text -----------------------------------------------------------------
    def format(self, names: Sequence[str] | None = None) -> str:
        names = list(names) if names is not None else _default_names(self.nvars)
        if len(names) < self.nvars:
            raise ValueError("not enough variable names")
        if not self._terms:
            return "0"
        parts = []
        for i, (e, c) in enumerate(self._terms.items()):
            factors = [names[v] if k == 1 else f"{names[v]}^{k}" for v, k in enumerate(e) if k]
            mag = abs(c)
            if factors:
                body = " * ".join(([str(mag)] if mag != 1 else []) + factors)
            else:
                body = str(mag)
            if i == 0:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)


_TOKEN = re.compile(r"\s*(?:(\d+(?:/\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*^()]))")


def parse_poly(text: str, names: Sequence[str]) -> Poly:
    """Parse the textual format; ``names`` fixes the variable order."""
    if not isinstance(text, str):
        raise PolyParseError(f"expected a string, got {type(text).__name__}")
    index = {name: i for i, name in enumerate(names)}
    nvars = len(names)
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolyParseError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif name is not None:
            tokens.append(("name", name))
        else:
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    if not tokens:
        raise PolyParseError("empty polynomial")

    result = Poly.zero(nvars)
    i = 0
    sign = 1
    expect_term = True
    while i < len(tokens):
        kind, val = tokens[i]
        if expect_term and kind == "op" and val in "+-":
            if val == "-":
                sign = -sign
            i += 1
            continue
        if not expect_term:
            if kind == "op" and val in "+-":
                sign = -1 if val == "-" else 1
                expect_term = True
                i += 1
                continue
            raise PolyParseError(f"expected '+' or '-' near token {i}: {val!r}")
        # a term: factor (* factor)*
        coef = Fraction(sign)
        exps = [0] * nvars
        while True:
            if i >= len(tokens):
                raise PolyParseError("dangling operator")
            kind, val = tokens[i]
            if kind == "num":
                try:
                    coef *= Fraction(val)
                except ZeroDivisionError as exc:
                    raise PolyParseError("zero denominator") from exc
                i += 1
            elif kind == "name":
                if val not in index:
                    raise PolyParseError(f"unknown variable {val!r}; expected one of {list(names)}")
                power = 1
                i += 1
                if i < len(tokens) and tokens[i] == ("op", "^"):
                    if i + 1 >= len(tokens) or tokens[i + 1][0] != "num" or "/" in tokens[i + 1][1]:
                        raise PolyParseError("exponent must be a non-negative integer")
                    power = int(tokens[i + 1][1])
                    i += 2
                exps[index[val]] += power
            else:
                raise PolyParseError(f"unexpected {val!r}")
            if i < len(tokens) and tokens[i] == ("op", "*"):
                i += 1
                continue
            break
        result = result + Poly(nvars, {tuple(exps): coef})
        sign = 1
        expect_term = False
    if expect_term:
        raise PolyParseError("polynomial ends with an operator")
    return result

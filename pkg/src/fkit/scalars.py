"""Scalars carrying Monte-Carlo weights symbolically.

A WeightPoly is a polynomial with rational coefficients in weight symbols
(graph keys).  Keeping weights symbolic until the end makes cancellations
that hold for every value of the weights exact, and gives a linear error
bound once the symbols are replaced by estimates.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Mapping

Monomial = tuple  # sorted tuple of symbol names, with repetition


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(sorted(a + b))


class WeightPoly:
    __slots__ = ("terms",)

    def __init__(self, terms: Mapping | None = None):
        self.terms: dict = {}
        if terms:
            for k, v in terms.items():
                if v:
                    self.terms[tuple(k)] = Fraction(v)

    @classmethod
    def symbol(cls, name: str, coef=1) -> "WeightPoly":
        return cls({(name,): coef})

    @classmethod
    def const(cls, c) -> "WeightPoly":
        return cls({(): c})

    @staticmethod
    def lift(x) -> "WeightPoly":
        return x if isinstance(x, WeightPoly) else WeightPoly.const(x)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightPoly):
            try:
                other = WeightPoly.const(other)
            except TypeError:
                return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __neg__(self) -> "WeightPoly":
        out = WeightPoly()
        out.terms = {k: -v for k, v in self.terms.items()}
        return out

    def __add__(self, other) -> "WeightPoly":
        other = WeightPoly.lift(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        res = WeightPoly()
        res.terms = out
        return res

    __radd__ = __add__

    def __sub__(self, other) -> "WeightPoly":
        return self + (-WeightPoly.lift(other))

    def __rsub__(self, other) -> "WeightPoly":
        return WeightPoly.lift(other) - self

    def __mul__(self, other) -> "WeightPoly":
        if not isinstance(other, WeightPoly):
            other = Fraction(other)
            res = WeightPoly()
            if other:
                res.terms = {k: v * other for k, v in self.terms.items()}
            return res
        out: dict = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                k = _mono_mul(ka, kb)
                s = out.get(k, 0) + va * vb
                if s:
                    out[k] = s
                else:
                    out.pop(k, None)
        res = WeightPoly()
        res.terms = out
        return res

    __rmul__ = __mul__

    def __truediv__(self, other) -> "WeightPoly":
        return self * (1 / Fraction(other))

    def symbols(self) -> set:
        return {s for k in self.terms for s in k}

    def evaluate(self, table: Mapping) -> tuple[float, float]:
        """(value, linear error bound) with symbols replaced from ``table``,
        which maps a symbol to an object with ``value`` and ``std_error``."""
        value = 0.0
        err = 0.0
        for mono, c in self.terms.items():
            vals = [table[s].value for s in mono]
            prod = float(c)
            for v in vals:
                prod *= v
            value += prod
            for i, s in enumerate(mono):
                partial = float(c)
                for j, v in enumerate(vals):
                    if j != i:
                        partial *= v
                err += abs(partial) * table[s].std_error
        return value, err

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for k, v in sorted(self.terms.items()):
            parts.append(f"{v}" + "".join(f"*W[{s}]" for s in k))
        return " + ".join(parts)


def scalar_value(c, table: Mapping | None = None) -> tuple[float, float]:
    """Numeric (value, error) of any scalar used in the library."""
    if isinstance(c, WeightPoly):
        if table is None:
            raise ValueError("weight table needed to evaluate a WeightPoly")
        return c.evaluate(table)
    return float(c), 0.0

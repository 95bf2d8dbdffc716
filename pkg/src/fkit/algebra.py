"""Polynomial models of functions, polyvector fields, polydifferential
operators, differential forms and Hochschild chains.

Scalars are Fractions by default; WeightPoly scalars appear once graph
weights enter.  Every carrier is an immutable value with canonical storage
(no zero entries), so equality is structural.
"""
from __future__ import annotations

import itertools
import math
import re
from fractions import Fraction
from typing import Callable, Sequence

from .scalars import WeightPoly, scalar_value

Exp = tuple  # exponent multi-index, length d


def _frac(c):
    if isinstance(c, (Fraction, WeightPoly)):
        return c
    if isinstance(c, float):
        return Fraction(c).limit_denominator(10**12)
    return Fraction(c)


def _add_into(store: dict, key, value) -> None:
    s = store.get(key)
    s = value if s is None else s + value
    if s:
        store[key] = s
    else:
        store.pop(key, None)


def _unit(d: int, i: int) -> Exp:
    return tuple(1 if j == i else 0 for j in range(d))


def _eadd(a: Exp, b: Exp) -> Exp:
    return tuple(x + y for x, y in zip(a, b))


# -- Poly ----------------------------------------------------------------------

class Poly:
    """Polynomial in x1..xd stored as {exponent tuple: scalar}."""

    __slots__ = ("d", "terms", "_hash")

    def __init__(self, d: int, terms: dict | None = None):
        self.d = d
        self.terms: dict = {}
        self._hash = None
        if terms:
            for e, c in terms.items():
                e = tuple(e)
                if len(e) != d:
                    raise ValueError(f"exponent {e} has wrong length for d={d}")
                c = _frac(c)
                if c:
                    _add_into(self.terms, e, c)

    @classmethod
    def _raw(cls, d: int, terms: dict) -> "Poly":
        p = cls.__new__(cls)
        p.d, p.terms, p._hash = d, terms, None
        return p

    @classmethod
    def zero(cls, d: int) -> "Poly":
        return cls._raw(d, {})

    @classmethod
    def const(cls, d: int, c) -> "Poly":
        return cls(d, {(0,) * d: c})

    @classmethod
    def var(cls, d: int, i: int) -> "Poly":
        """The coordinate x_i, 1-based."""
        return cls._raw(d, {_unit(d, i - 1): Fraction(1)})

    @classmethod
    def monomial(cls, exp: Exp, c=1) -> "Poly":
        return cls(len(exp), {tuple(exp): c})

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.d == other.d and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == Poly.const(self.d, other)
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.d, frozenset(self.terms.items())))
        return self._hash

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.d != self.d:
                raise ValueError(f"dimension mismatch {self.d} vs {other.d}")
            return other
        return Poly.const(self.d, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            _add_into(out, e, c)
        return Poly._raw(self.d, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw(self.d, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            c = _frac(other)
            if not c:
                return Poly.zero(self.d)
            out = {}
            for e, v in self.terms.items():
                s = v * c
                if s:
                    out[e] = s
            return Poly._raw(self.d, out)
        other = self._coerce(other)
        out: dict = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                _add_into(out, _eadd(ea, eb), ca * cb)
        return Poly._raw(self.d, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        out = Poly.const(self.d, 1)
        for _ in range(k):
            out = out * self
        return out

    def diff(self, i: int, times: int = 1) -> "Poly":
        """Partial derivative in x_i (0-based index here)."""
        out = {}
        for e, c in self.terms.items():
            if e[i] < times:
                continue
            f = math.perm(e[i], times)
            e2 = e[:i] + (e[i] - times,) + e[i + 1:]
            out[e2] = c * f
        return Poly._raw(self.d, out)

    def diff_multi(self, alpha: Exp) -> "Poly":
        p = self
        for i, a in enumerate(alpha):
            if a:
                p = p.diff(i, a)
                if not p:
                    break
        return p

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def homogeneous(self, k: int) -> "Poly":
        return Poly._raw(self.d, {e: c for e, c in self.terms.items() if sum(e) == k})

    def coefficient(self, exp: Exp):
        return self.terms.get(tuple(exp), Fraction(0))

    def map_coeffs(self, fn: Callable) -> "Poly":
        return Poly(self.d, {e: fn(c) for e, c in self.terms.items()})

    def is_exact(self) -> bool:
        return not any(isinstance(c, WeightPoly) for c in self.terms.values())

    def evaluate(self, point: Sequence) -> Fraction:
        total = Fraction(0)
        for e, c in self.terms.items():
            t = c
            for x, k in zip(point, e):
                t = t * Fraction(x) ** k
            total = total + t
        return total

    def __repr__(self) -> str:
        return format_poly(self)


def parse_poly(text: str, d: int | None = None) -> Poly:
    """Parse the plain grammar ``3/2*x1^2*x2 - x3``.

    Variables are x1..xd; ``d`` defaults to the largest index present.
    """
    import sympy

    text = text.strip()
    if not text:
        raise ValueError("empty polynomial")
    if not re.fullmatch(r"[0-9x+\-*/^().\s]*", text):
        raise ValueError(f"unexpected characters in polynomial {text!r}")
    indices = [int(k) for k in re.findall(r"x(\d+)", text)]
    if any(k < 1 for k in indices):
        raise ValueError("variables are numbered from x1")
    dim = max(indices, default=0)
    if d is None:
        d = max(dim, 1)
    elif dim > d:
        raise ValueError(f"variable x{dim} exceeds dimension {d}")
    gens = sympy.symbols(f"x1:{d + 1}")
    try:
        expr = sympy.sympify(text.replace("^", "**"), locals={str(g): g for g in gens}, rational=True)
        sp = sympy.Poly(expr, *gens)
    except (sympy.SympifyError, sympy.PolynomialError, TypeError, SyntaxError) as exc:
        raise ValueError(f"cannot parse polynomial {text!r}: {exc}") from exc
    terms = {}
    for exp, c in sp.terms():
        c = sympy.Rational(c)
        terms[tuple(exp)] = Fraction(int(c.p), int(c.q))
    return Poly(d, terms)


def _fmt_scalar(c) -> str:
    if isinstance(c, WeightPoly):
        return f"({c!r})"
    return str(c)


def format_poly(p: Poly) -> str:
    if not p.terms:
        return "0"
    parts = []
    for e in sorted(p.terms, key=lambda e: (-sum(e), tuple(-x for x in e))):
        c = p.terms[e]
        vars_ = "*".join(f"x{i + 1}" + (f"^{k}" if k > 1 else "") for i, k in enumerate(e) if k)
        neg = not isinstance(c, WeightPoly) and c < 0
        mag = -c if neg else c
        if vars_:
            body = vars_ if mag == 1 and not isinstance(mag, WeightPoly) else f"{_fmt_scalar(mag)}*{vars_}"
        else:
            body = _fmt_scalar(mag)
        parts.append(("-" if neg else "+", body))
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


def poly_norm(p: Poly, table=None) -> tuple[float, float]:
    """Max over monomials of |coefficient|, with the error bound of that
    coefficient (0 for exact scalars)."""
    best = (0.0, 0.0)
    for c in p.terms.values():
        v, e = scalar_value(c, table)
        if abs(v) > abs(best[0]):
            best = (abs(v), e)
    return best


def poly_coefficient_checks(p: Poly, table, abs_tol: float, k_sigma: float = 4.0) -> list[dict]:
    """Per-monomial residual records: value, error bound, pass flag."""
    out = []
    for e, c in sorted(p.terms.items()):
        v, err = scalar_value(c, table)
        out.append({"monomial": list(e), "value": v, "error": err,
                    "ok": abs(v) <= max(abs_tol, k_sigma * err)})
    return out


# -- truncated series in hbar -------------------------------------------------------

class HbarSeries:
    """c_0 + c_1 hbar + ... + c_N hbar^N with coefficients of one carrier type."""

    __slots__ = ("coeffs", "zero")

    def __init__(self, coeffs: Sequence, zero):
        self.coeffs = list(coeffs)
        self.zero = zero

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def constant(cls, c, N: int, zero) -> "HbarSeries":
        return cls([c] + [zero] * N, zero)

    def __getitem__(self, k: int):
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else self.zero

    def __add__(self, other: "HbarSeries") -> "HbarSeries":
        N = min(self.order, other.order)
        return HbarSeries([self[k] + other[k] for k in range(N + 1)], self.zero)

    def __sub__(self, other: "HbarSeries") -> "HbarSeries":
        N = min(self.order, other.order)
        return HbarSeries([self[k] - other[k] for k in range(N + 1)], self.zero)

    def __neg__(self) -> "HbarSeries":
        return HbarSeries([-c for c in self.coeffs], self.zero)

    def scale(self, s) -> "HbarSeries":
        return HbarSeries([c * s for c in self.coeffs], self.zero)

    def truncate(self, N: int) -> "HbarSeries":
        return HbarSeries(self.coeffs[:N + 1], self.zero)

    def map(self, fn: Callable, zero=None) -> "HbarSeries":
        return HbarSeries([fn(c) for c in self.coeffs], self.zero if zero is None else zero)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HbarSeries):
            return NotImplemented
        N = max(self.order, other.order)
        return all(self[k] == other[k] for k in range(N + 1))

    def __repr__(self) -> str:
        parts = []
        for k, c in enumerate(self.coeffs):
            if c:
                parts.append(f"({c!r})" + ("" if k == 0 else f"*hbar^{k}" if k > 1 else "*hbar"))
        return " + ".join(parts) if parts else "0"


def series_product(a: HbarSeries, b: HbarSeries, mul: Callable, zero) -> HbarSeries:
    """Cauchy product truncated at the smaller order."""
    N = min(a.order, b.order)
    out = []
    for k in range(N + 1):
        acc = zero
        for i in range(k + 1):
            x, y = a[i], b[k - i]
            if x and y:
                acc = acc + mul(x, y)
        out.append(acc)
    return HbarSeries(out, zero)


# -- sorted index tuples ------------------------------------------------------------

def sort_sign(idx: Sequence[int]) -> tuple[int, tuple]:
    """(sign, sorted tuple) of a tuple of indices; sign 0 on a repeat."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    sign = 1
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return sign, tuple(idx)


class _Graded:
    """Shared storage for polyvectors and forms: {sorted index tuple: Poly}."""

    __slots__ = ("d", "deg", "comps")

    def __init__(self, d: int, deg: int, comps: dict | None = None):
        if deg < 0 or deg > d:
            raise ValueError(f"degree {deg} out of range for d={d}")
        self.d, self.deg = d, deg
        self.comps: dict = {}
        for idx, p in (comps or {}).items():
            idx = tuple(idx)
            if len(idx) != deg:
                raise ValueError(f"index {idx} does not have length {deg}")
            if any(not 0 <= i < d for i in idx):
                raise ValueError(f"index {idx} out of range (0-based, d={d})")
            if not isinstance(p, Poly):
                p = Poly.const(d, p)
            sign, key = sort_sign(idx)
            if sign and p:
                _add_into(self.comps, key, p * sign)

    @classmethod
    def _raw(cls, d, deg, comps):
        x = cls.__new__(cls)
        x.d, x.deg, x.comps = d, deg, comps
        return x

    def component(self, idx: Sequence[int]) -> Poly:
        """Fully skew component at an arbitrary index tuple."""
        sign, key = sort_sign(idx)
        if not sign or key not in self.comps:
            return Poly.zero(self.d)
        return self.comps[key] * sign

    def __bool__(self) -> bool:
        return bool(self.comps)

    def __eq__(self, other) -> bool:
        return (type(self) is type(other) and self.d == other.d
                and (self.deg == other.deg or not (self or other)) and self.comps == other.comps)

    def _check(self, other):
        if type(self) is not type(other) or self.d != other.d:
            raise ValueError("carrier or dimension mismatch")
        if self.deg != other.deg and self and other:
            raise ValueError(f"degree mismatch {self.deg} vs {other.deg}")

    def __add__(self, other):
        self._check(other)
        out = dict(self.comps)
        for k, v in other.comps.items():
            _add_into(out, k, v)
        return type(self)._raw(self.d, self.deg if self else other.deg, out)

    def __neg__(self):
        return type(self)._raw(self.d, self.deg, {k: -v for k, v in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        """Multiplication by a scalar or a function."""
        out = {}
        for k, v in self.comps.items():
            p = v * s
            if p:
                out[k] = p
        return type(self)._raw(self.d, self.deg, out)

    __rmul__ = __mul__

    def map_polys(self, fn: Callable):
        out = {}
        for k, v in self.comps.items():
            p = fn(v)
            if p:
                out[k] = p
        return type(self)._raw(self.d, self.deg, out)

    def __repr__(self) -> str:
        sym = "d" if isinstance(self, PolyVectorField) else "dx"
        if not self.comps:
            return "0"
        return " + ".join(f"({v!r})*" + "^".join(f"{sym}{i + 1}" for i in k) if k else f"({v!r})"
                          for k, v in sorted(self.comps.items()))


def _wedge_comps(d, a: dict, b: dict) -> dict:
    out: dict = {}
    for I, p in a.items():
        for J, q in b.items():
            sign, K = sort_sign(I + J)
            if sign:
                _add_into(out, K, p * q * sign)
    return out


class PolyVectorField(_Graded):
    """k-vector field sum over sorted I of a^I d_{I1}^...^d_{Ik} (indices 0-based)."""

    __slots__ = ()

    @property
    def k(self) -> int:
        return self.deg

    @classmethod
    def function(cls, f: Poly) -> "PolyVectorField":
        return cls(f.d, 0, {(): f})

    @classmethod
    def zero(cls, d: int, k: int) -> "PolyVectorField":
        return cls._raw(d, k, {})

    def as_function(self) -> Poly:
        if self.deg != 0:
            raise ValueError("not a function")
        return self.comps.get((), Poly.zero(self.d))

    def wedge(self, other: "PolyVectorField") -> "PolyVectorField":
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        if self.deg + other.deg > self.d:
            raise ValueError("degree overflow")
        return PolyVectorField._raw(self.d, self.deg + other.deg, _wedge_comps(self.d, self.comps, other.comps))

    def theta_derivative(self, i: int) -> "PolyVectorField":
        """Right derivative with respect to the odd variable of d_i."""
        if self.deg == 0:
            return PolyVectorField.zero(self.d, 0)
        out = {}
        for I, p in self.comps.items():
            if i in I:
                pos = I.index(i)
                sign = -1 if (self.deg - 1 - pos) % 2 else 1
                out[I[:pos] + I[pos + 1:]] = p * sign
        return PolyVectorField._raw(self.d, self.deg - 1, out)

    def x_derivative(self, i: int) -> "PolyVectorField":
        return self.map_polys(lambda p: p.diff(i))


def wedge(a, b):
    """Graded-commutative product of polyvector fields or of forms."""
    if isinstance(a, DiffForm):
        return a.wedge(b)
    return a.wedge(b)


def schouten_sn(a: PolyVectorField, b: PolyVectorField) -> PolyVectorField:
    """Schouten-Nijenhuis bracket; on vector fields the usual Lie bracket,
    and [X, f] = X(f)."""
    if a.d != b.d:
        raise ValueError("dimension mismatch")
    deg = a.deg + b.deg - 1
    if deg < 0:
        return PolyVectorField.zero(a.d, 0)
    if deg > a.d:
        return PolyVectorField.zero(a.d, min(deg, a.d))
    sign = -1 if ((a.deg - 1) * (b.deg - 1)) % 2 else 1
    out: dict = {}
    for i in range(a.d):
        for x, y, s in ((a, b, 1), (b, a, -sign)):
            t = x.theta_derivative(i)
            if not t:
                continue
            dy = y.x_derivative(i)
            if not dy:
                continue
            for K, p in _wedge_comps(a.d, t.comps, dy.comps).items():
                _add_into(out, K, p * s)
    return PolyVectorField._raw(a.d, deg, out)


def schouten(a: PolyVectorField, b: PolyVectorField) -> PolyVectorField:
    """The modified bracket [a, b]' = -[b, a]_SN."""
    return -schouten_sn(b, a)


class DiffForm(_Graded):
    """l-form sum over sorted I of w_I dx_I1^...^dx_Il (indices 0-based)."""

    __slots__ = ()

    @property
    def l(self) -> int:
        return self.deg

    @classmethod
    def function(cls, f: Poly) -> "DiffForm":
        return cls(f.d, 0, {(): f})

    @classmethod
    def zero(cls, d: int, l: int = 0) -> "DiffForm":
        return cls._raw(d, l, {})

    @classmethod
    def exact(cls, f: Poly) -> "DiffForm":
        return cls(f.d, 1, {(i,): f.diff(i) for i in range(f.d)})

    def wedge(self, other: "DiffForm") -> "DiffForm":
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        if self.deg + other.deg > self.d:
            return DiffForm.zero(self.d, self.d)
        return DiffForm._raw(self.d, self.deg + other.deg, _wedge_comps(self.d, self.comps, other.comps))

    def d_ext(self) -> "DiffForm":
        if self.deg == self.d:
            return DiffForm.zero(self.d, self.d)
        out: dict = {}
        for I, p in self.comps.items():
            for i in range(self.d):
                sign, K = sort_sign((i,) + I)
                if sign:
                    q = p.diff(i)
                    if q:
                        _add_into(out, K, q * sign)
        return DiffForm._raw(self.d, self.deg + 1, out)

    def interior(self, i: int) -> "DiffForm":
        """Contraction with the coordinate vector d_i."""
        if self.deg == 0:
            return DiffForm.zero(self.d, 0)
        out = {}
        for I, p in self.comps.items():
            if i in I:
                pos = I.index(i)
                out[I[:pos] + I[pos + 1:]] = p * (-1 if pos % 2 else 1)
        return DiffForm._raw(self.d, self.deg - 1, out)

    def as_function(self) -> Poly:
        if self.deg != 0:
            raise ValueError("not a function")
        return self.comps.get((), Poly.zero(self.d))


def contract(alpha: PolyVectorField, omega: DiffForm) -> DiffForm:
    """iota_alpha omega, summed over all ordered index tuples of alpha.

    For a k-vector this is k! times the contraction over sorted tuples, the
    convention under which the HKR maps intertwine contraction with cap.
    """
    if alpha.d != omega.d:
        raise ValueError("dimension mismatch")
    k = alpha.deg
    if k > omega.deg:
        return DiffForm.zero(omega.d, 0)
    out = DiffForm.zero(omega.d, omega.deg - k)
    for I, a in alpha.comps.items():
        w = omega
        for i in I:
            w = w.interior(i)
            if not w:
                break
        if w:
            out = out + w * a
    return out * math.factorial(k)


def lie_derivative(gamma: PolyVectorField, omega: DiffForm) -> DiffForm:
    """L_gamma = d iota_gamma - (-1)^k iota_gamma d."""
    first = contract(gamma, omega).d_ext() if gamma.deg <= omega.deg else DiffForm.zero(omega.d, 0)
    second = contract(gamma, omega.d_ext()) if gamma.deg <= omega.deg + 1 else DiffForm.zero(omega.d, 0)
    sign = -1 if gamma.deg % 2 else 1
    if not first:
        return second * (-sign)
    if not second:
        return first
    return first - second * sign


# -- polydifferential operators ------------------------------------------------------

def _compositions(n: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to n."""
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


class PolyDiffOp:
    """Multidifferential operator sum c(x) d^{a_1} f_1 ... d^{a_m} f_m.

    Terms are stored as {(a_1, ..., a_m): coefficient Poly}.
    """

    __slots__ = ("d", "arity", "terms")

    def __init__(self, d: int, arity: int, terms: dict | None = None):
        self.d, self.arity = d, arity
        self.terms: dict = {}
        for sig, c in (terms or {}).items():
            sig = tuple(tuple(a) for a in sig)
            if len(sig) != arity or any(len(a) != d for a in sig):
                raise ValueError(f"bad derivative signature {sig}")
            if not isinstance(c, Poly):
                c = Poly.const(d, c)
            if c:
                _add_into(self.terms, sig, c)

    @classmethod
    def _raw(cls, d, arity, terms):
        x = cls.__new__(cls)
        x.d, x.arity, x.terms = d, arity, terms
        return x

    @classmethod
    def zero(cls, d: int, arity: int) -> "PolyDiffOp":
        return cls._raw(d, arity, {})

    @classmethod
    def identity(cls, d: int) -> "PolyDiffOp":
        return cls._raw(d, 1, {((0,) * d,): Poly.const(d, 1)})

    @classmethod
    def mu(cls, d: int) -> "PolyDiffOp":
        return cls._raw(d, 2, {((0,) * d, (0,) * d): Poly.const(d, 1)})

    @classmethod
    def function(cls, f: Poly) -> "PolyDiffOp":
        return cls(f.d, 0, {(): f})

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolyDiffOp):
            return NotImplemented
        return self.d == other.d and (self.arity == other.arity or not (self or other)) and self.terms == other.terms

    def __add__(self, other: "PolyDiffOp") -> "PolyDiffOp":
        if self.d != other.d or (self.arity != other.arity and self and other):
            raise ValueError("arity or dimension mismatch")
        out = dict(self.terms)
        for k, v in other.terms.items():
            _add_into(out, k, v)
        return PolyDiffOp._raw(self.d, self.arity if self else other.arity, out)

    def __neg__(self) -> "PolyDiffOp":
        return PolyDiffOp._raw(self.d, self.arity, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "PolyDiffOp") -> "PolyDiffOp":
        return self + (-other)

    def __mul__(self, s) -> "PolyDiffOp":
        out = {}
        for k, v in self.terms.items():
            p = v * s
            if p:
                out[k] = p
        return PolyDiffOp._raw(self.d, self.arity, out)

    __rmul__ = __mul__

    def apply(self, *args: Poly) -> Poly:
        if len(args) != self.arity:
            raise ValueError(f"operator of arity {self.arity} applied to {len(args)} arguments")
        total = Poly.zero(self.d)
        for sig, c in self.terms.items():
            t = c
            for a, f in zip(sig, args):
                t = t * f.diff_multi(a)
                if not t:
                    break
            if t:
                total = total + t
        return total

    __call__ = apply

    def differentiate(self, alpha: Exp) -> "PolyDiffOp":
        """The operator d^alpha composed after self, expanded by Leibniz."""
        if not any(alpha):
            return self
        out: dict = {}
        slots = self.arity + 1
        splits_per_axis = [list(_compositions(a, slots)) for a in alpha]
        for sig, c in self.terms.items():
            for choice in itertools.product(*splits_per_axis):
                mult = 1
                for a, parts in zip(alpha, choice):
                    mult *= math.factorial(a) // math.prod(math.factorial(p) for p in parts)
                coef_alpha = tuple(parts[0] for parts in choice)
                cc = c.diff_multi(coef_alpha)
                if not cc:
                    continue
                new_sig = tuple(tuple(sig[k][i] + choice[i][k + 1] for i in range(self.d)) for k in range(self.arity))
                _add_into(out, new_sig, cc * mult)
        return PolyDiffOp._raw(self.d, self.arity, out)

    def tensor(self, other: "PolyDiffOp") -> "PolyDiffOp":
        out: dict = {}
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                _add_into(out, s1 + s2, c1 * c2)
        return PolyDiffOp._raw(self.d, self.arity + other.arity, out)

    def compose(self, ops: Sequence["PolyDiffOp"]) -> "PolyDiffOp":
        """self(ops[0](...), ops[1](...), ...) with arguments concatenated."""
        if len(ops) != self.arity:
            raise ValueError("need one operator per slot")
        arity = sum(o.arity for o in ops)
        total = PolyDiffOp.zero(self.d, arity)
        for sig, c in self.terms.items():
            acc = PolyDiffOp._raw(self.d, 0, {(): c})
            for a, o in zip(sig, ops):
                acc = acc.tensor(o.differentiate(a))
                if not acc:
                    break
            if acc:
                total = total + acc
        return total

    def insert(self, i: int, other: "PolyDiffOp") -> "PolyDiffOp":
        """Gerstenhaber insertion of ``other`` into slot i (0-based)."""
        ident = PolyDiffOp.identity(self.d)
        return self.compose([other if k == i else ident for k in range(self.arity)])

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for sig, c in sorted(self.terms.items()):
            ds = ",".join("".join(f"d{i + 1}" * a for i, a in enumerate(al)) or "1" for al in sig)
            parts.append(f"({c!r})[{ds}]")
        return " + ".join(parts)


def op_norm(op: PolyDiffOp, table=None) -> tuple[float, float]:
    best = (0.0, 0.0)
    for c in op.terms.values():
        v = poly_norm(c, table)
        if v[0] > best[0]:
            best = v
    return best


# -- HKR maps -----------------------------------------------------------------------

def hkr_cochain(alpha: PolyVectorField) -> PolyDiffOp:
    """(f_1..f_k) -> sum over all index tuples of alpha^I d_I1 f_1 ... d_Ik f_k."""
    d, k = alpha.d, alpha.deg
    out: dict = {}
    for I, a in alpha.comps.items():
        for perm in itertools.permutations(range(k)):
            sign, _ = sort_sign(perm)
            sig = tuple(_unit(d, I[p]) for p in perm)
            _add_into(out, sig, a * sign)
    return PolyDiffOp._raw(d, k, out)


# -- Hochschild chains ----------------------------------------------------------------

class HochschildChain:
    """Linear combination of tensors (a_0|...|a_n) of monomials.

    Stored as {(e_0, ..., e_n): scalar}, the canonical tensor basis, so
    equality of chains is exact.
    """

    __slots__ = ("d", "n", "terms")

    def __init__(self, d: int, n: int, terms: dict | None = None):
        self.d, self.n = d, n
        self.terms: dict = {}
        for k, v in (terms or {}).items():
            v = _frac(v)
            if v:
                _add_into(self.terms, tuple(tuple(e) for e in k), v)

    @classmethod
    def _raw(cls, d, n, terms):
        x = cls.__new__(cls)
        x.d, x.n, x.terms = d, n, terms
        return x

    @classmethod
    def of(cls, *polys: Poly) -> "HochschildChain":
        """Multilinear expansion of (p_0|...|p_n)."""
        if not polys:
            raise ValueError("a chain needs a_0")
        d = polys[0].d
        out: dict = {}
        for combo in itertools.product(*(p.terms.items() for p in polys)):
            c = Fraction(1)
            for _, v in combo:
                c = v * c
            _add_into(out, tuple(e for e, _ in combo), c)
        return cls._raw(d, len(polys) - 1, out)

    @classmethod
    def zero(cls, d: int, n: int) -> "HochschildChain":
        return cls._raw(d, n, {})

    @property
    def degree(self) -> int:
        return -self.n

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HochschildChain):
            return NotImplemented
        return self.d == other.d and (self.n == other.n or not (self or other)) and self.terms == other.terms

    def __add__(self, other: "HochschildChain") -> "HochschildChain":
        if self.d != other.d or (self.n != other.n and self and other):
            raise ValueError("chain length mismatch")
        out = dict(self.terms)
        for k, v in other.terms.items():
            _add_into(out, k, v)
        return HochschildChain._raw(self.d, self.n if self else other.n, out)

    def __neg__(self) -> "HochschildChain":
        return HochschildChain._raw(self.d, self.n, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s) -> "HochschildChain":
        out = {}
        for k, v in self.terms.items():
            p = v * s
            if p:
                out[k] = p
        return HochschildChain._raw(self.d, self.n, out)

    __rmul__ = __mul__

    def entries(self):
        """Iterate (scalar, [Poly monomials])."""
        for key, c in self.terms.items():
            yield c, [Poly._raw(self.d, {e: Fraction(1)}) for e in key]

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for key, c in sorted(self.terms.items()):
            body = " | ".join(format_poly(Poly._raw(self.d, {e: Fraction(1)})) for e in key)
            parts.append(f"{_fmt_scalar(c)}*({body})")
        return " + ".join(parts)


def chain_from_slots(d: int, slots: Sequence[Poly], coef=1) -> HochschildChain:
    return HochschildChain.of(*slots) * coef if coef != 1 else HochschildChain.of(*slots)


def parse_chain(text: str, d: int | None = None) -> HochschildChain:
    """Parse ``a0 | a1 | a2``."""
    pieces = [s.strip() for s in text.split("|")]
    if d is None:
        d = max([int(k) for k in re.findall(r"x(\d+)", text)] + [1])
    return HochschildChain.of(*(parse_poly(s, d) for s in pieces))


def hkr_chain(c: HochschildChain) -> DiffForm:
    """(a_0|...|a_n) -> (1/n!) a_0 da_1 ^ ... ^ da_n."""
    d, n = c.d, c.n
    if n > d:
        return DiffForm.zero(d, d)
    total = DiffForm.zero(d, n)
    for s, polys in c.entries():
        form = DiffForm.function(polys[0])
        for p in polys[1:]:
            form = form.wedge(DiffForm.exact(p))
            if not form:
                break
        if form:
            total = total + form * s
    return total * Fraction(1, math.factorial(n))


def _chain_term(d: int, coef, polys: Sequence[Poly]) -> HochschildChain:
    """coef * (p_0|...|p_n) expanded in the tensor basis."""
    out: dict = {}
    for combo in itertools.product(*(p.terms.items() for p in polys)):
        c = coef
        for _, v in combo:
            c = c * v
        if c:
            _add_into(out, tuple(e for e, _ in combo), c)
    return HochschildChain._raw(d, len(polys) - 1, out)


def _as_series(x, N: int, zero) -> HbarSeries:
    return x if isinstance(x, HbarSeries) else HbarSeries.constant(x, N, zero)


def hochschild_b(c, S: "StarAlgebra | None" = None):
    """Hochschild boundary.  With S None the classical b (pointwise products,
    returns a chain); otherwise b_star, returning an HbarSeries of chains."""
    if S is None:
        if isinstance(c, HbarSeries):
            raise ValueError("classical b takes a plain chain")
        return _b_with(c, lambda p, q: HbarSeries([p * q], Poly.zero(c.d)), 0)[0]
    zero = HochschildChain.zero(S.d, 0)
    cs = _as_series(c, S.order, zero)
    out = [HochschildChain.zero(S.d, max(cs[0].n - 1, 0))] * (S.order + 1)
    for j in range(cs.order + 1):
        if not cs[j]:
            continue
        part = _b_with(cs[j], S.star_mono, S.order - j)
        for k in range(len(part)):
            out[j + k] = out[j + k] + part[k]
    return HbarSeries(out, HochschildChain.zero(S.d, max(cs[0].n - 1, 0)))


def _b_with(c: HochschildChain, prod: Callable, N: int) -> list:
    d, n = c.d, c.n
    out = [HochschildChain.zero(d, max(n - 1, 0)) for _ in range(N + 1)]
    if n == 0:
        return out
    for s, polys in c.entries():
        for i in range(n + 1):
            if i < n:
                sign = -1 if i % 2 else 1
                pr = prod(polys[i], polys[i + 1])
                pre, post = polys[:i], polys[i + 2:]
            else:
                sign = -1 if n % 2 else 1
                pr = prod(polys[n], polys[0])
                pre, post = [], polys[1:n]
            for k in range(min(N, pr.order) + 1):
                if pr[k]:
                    out[k] = out[k] + _chain_term(d, s * sign, pre + [pr[k]] + post)
    return out


def cochain_cap_chain(phi, c: HochschildChain, S: "StarAlgebra | None" = None):
    """phi cap (a_0|...|a_n) = (a_0 * phi(a_1..a_m) | a_{m+1} | ... | a_n).

    ``phi`` is a PolyDiffOp or an HbarSeries of them.  Returns an HbarSeries
    of chains when S is given, otherwise the classical chain.
    """
    if S is None:
        if isinstance(phi, HbarSeries):
            raise ValueError("classical cap takes a plain operator")
        m = phi.arity
        if m > c.n:
            return HochschildChain.zero(c.d, 0)
        total = HochschildChain.zero(c.d, c.n - m)
        for s, polys in c.entries():
            val = polys[0] * phi.apply(*polys[1:m + 1])
            if val:
                total = total + _chain_term(c.d, s, [val] + polys[m + 1:])
        return total
    N = S.order
    ph = _as_series(phi, N, None)
    m = next((o.arity for o in ph.coeffs if o is not None and o), 0)
    zero = HochschildChain.zero(c.d, max(c.n - m, 0))
    out = [zero] * (N + 1)
    if m > c.n:
        return HbarSeries(out, zero)
    for j in range(N + 1):
        op = ph[j]
        if op is None or not op:
            continue
        for s, polys in c.entries():
            val = op.apply(*polys[1:m + 1])
            if not val:
                continue
            pr = S.star(polys[0], val)
            for k in range(N - j + 1):
                if pr[k]:
                    out[j + k] = out[j + k] + _chain_term(c.d, s, [pr[k]] + polys[m + 1:])
    return HbarSeries(out, zero)


# -- star algebras ------------------------------------------------------------------

class StarAlgebra:
    """f * g = fg + sum_k hbar^k B_k(f, g), truncated at order N."""

    def __init__(self, d: int, B: Sequence[PolyDiffOp], table=None):
        self.d = d
        B = list(B)
        if not B:
            B = [PolyDiffOp.zero(d, 2)]
        if B[0]:
            raise ValueError("B must start at order hbar^1")
        self.B = B
        self.table = table
        self._mono_cache: dict = {}

    @property
    def order(self) -> int:
        return len(self.B) - 1

    def op(self, k: int) -> PolyDiffOp:
        """Order-k part of the product as a bidifferential operator."""
        if k == 0:
            return PolyDiffOp.mu(self.d)
        return self.B[k] if k < len(self.B) else PolyDiffOp.zero(self.d, 2)

    def ops(self) -> HbarSeries:
        return HbarSeries([self.op(k) for k in range(self.order + 1)], PolyDiffOp.zero(self.d, 2))

    def star_mono(self, f: Poly, g: Poly) -> HbarSeries:
        key = (f, g)
        hit = self._mono_cache.get(key)
        if hit is None:
            hit = HbarSeries([self.op(k).apply(f, g) for k in range(self.order + 1)], Poly.zero(self.d))
            self._mono_cache[key] = hit
        return hit

    def star(self, f, g) -> HbarSeries:
        """f * g for Polys or HbarSeries of Polys."""
        z = Poly.zero(self.d)
        fs = _as_series(f, self.order, z)
        gs = _as_series(g, self.order, z)
        out = [z] * (self.order + 1)
        for i in range(fs.order + 1):
            for j in range(gs.order + 1):
                if i + j > self.order or not fs[i] or not gs[j]:
                    continue
                for ea, ca in fs[i].terms.items():
                    for eb, cb in gs[j].terms.items():
                        pr = self.star_mono(Poly._raw(self.d, {ea: Fraction(1)}), Poly._raw(self.d, {eb: Fraction(1)}))
                        c = ca * cb
                        for k in range(self.order - i - j + 1):
                            if pr[k]:
                                out[i + j + k] = out[i + j + k] + pr[k] * c
        return HbarSeries(out, z)

    def commutator(self, f, g) -> HbarSeries:
        return self.star(f, g) - self.star(g, f)

    def associator(self, f, g, h) -> HbarSeries:
        return self.star(self.star(f, g), h) - self.star(f, self.star(g, h))


def _op_series(phi, N: int, d: int) -> HbarSeries:
    if isinstance(phi, HbarSeries):
        return phi
    return HbarSeries.constant(phi, N, PolyDiffOp.zero(d, phi.arity))


def cochain_cup(phi, psi, S: StarAlgebra) -> HbarSeries:
    """(phi cup psi)(a_1..a_{p+q}) = phi(a_1..a_p) * psi(a_{p+1}..a_{p+q})."""
    N = S.order
    ph, ps = _op_series(phi, N, S.d), _op_series(psi, N, S.d)
    arity = ph[0].arity + ps[0].arity
    out = [PolyDiffOp.zero(S.d, arity)] * (N + 1)
    for k in range(N + 1):
        M = S.op(k)
        for i in range(N + 1 - k):
            for j in range(N + 1 - k - i):
                if ph[i] and ps[j] and M:
                    out[k + i + j] = out[k + i + j] + M.compose([ph[i], ps[j]])
    return HbarSeries(out, PolyDiffOp.zero(S.d, arity))


def hochschild_d(phi, S: StarAlgebra | None = None) -> HbarSeries:
    """d_{H,*} phi (a_0..a_p) = a_0 * phi(a_1..) + sum_i (-1)^{i+1} phi(.., a_i * a_{i+1}, ..)
    + (-1)^{p+1} phi(a_0..a_{p-1}) * a_p.  With S None the classical d_H."""
    if S is None:
        S = StarAlgebra(phi.d if isinstance(phi, PolyDiffOp) else phi[0].d, [])
    N = S.order
    ph = _op_series(phi, N, S.d)
    p = ph[0].arity
    ident = PolyDiffOp.identity(S.d)
    zero = PolyDiffOp.zero(S.d, p + 1)
    out = [zero] * (N + 1)
    for k in range(N + 1):
        M = S.op(k)
        if not M:
            continue
        for j in range(N + 1 - k):
            op = ph[j]
            if not op:
                continue
            acc = M.compose([ident, op]) + M.compose([op, ident]) * (-1 if (p + 1) % 2 else 1)
            for i in range(p):
                acc = acc + op.insert(i, M) * (-1 if i % 2 == 0 else 1)
            out[k + j] = out[k + j] + acc
    return HbarSeries(out, zero)


def mc_residual(S: StarAlgebra) -> HbarSeries:
    """Per-order Maurer-Cartan defect of B, computed as the associator
    operator (a*b)*c - a*(b*c) of mu + B; it equals d_H B + [B,B]/2 up to
    the overall sign convention of the Gerstenhaber bracket."""
    N = S.order
    ident = PolyDiffOp.identity(S.d)
    zero = PolyDiffOp.zero(S.d, 3)
    out = [zero] * (N + 1)
    for i in range(N + 1):
        for j in range(N + 1 - i):
            A, B = S.op(i), S.op(j)
            if A and B:
                out[i + j] = out[i + j] + A.compose([B, ident]) - A.compose([ident, B])
    return HbarSeries(out, zero)


def residual_norms(series: HbarSeries, table=None) -> list[tuple[float, float]]:
    """(max |coefficient|, its error bound) per hbar order."""
    out = []
    for c in series.coeffs:
        if isinstance(c, PolyDiffOp):
            out.append(op_norm(c, table))
        elif isinstance(c, Poly):
            out.append(poly_norm(c, table))
        elif isinstance(c, (DiffForm, PolyVectorField)):
            best = (0.0, 0.0)
            for p in c.comps.values():
                v = poly_norm(p, table)
                if v[0] > best[0]:
                    best = v
            out.append(best)
        else:
            raise TypeError(f"no norm for {type(c).__name__}")
    return out

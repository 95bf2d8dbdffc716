"""Exact Lie theory: structure constants, PBW normal ordering, the Duflo
element J, the map D = sym o (J^{1/2} .), and (co)invariant checks.

Everything here runs on Fractions.  S(g) is modelled by Poly in x1..xr
(x_i the basis vector e_i); functions on g (the completed S(g*)) by Poly in
the dual coordinates xi_1..xi_r.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import sympy
from sympy.utilities.iterables import multiset_permutations

from .algebra import Poly, PolyVectorField


class LieAlgebraError(ValueError):
    pass


@dataclass(frozen=True)
class LieAlgebra:
    """Basis e_1..e_r with [e_i, e_j] = sum_k c[i][j][k] e_k (0-based storage)."""

    dim: int
    c: tuple  # c[i][j] = tuple of r Fractions
    name: str = ""

    def __post_init__(self):
        r = self.dim
        for i in range(r):
            for j in range(r):
                for k in range(r):
                    if self.c[i][j][k] != -self.c[j][i][k]:
                        raise LieAlgebraError(f"structure constants not skew at ({i + 1},{j + 1})")
        for i, j, k in itertools.combinations(range(r), 3):
            for t in range(r):
                s = sum(self.c[j][k][a] * self.c[i][a][t] + self.c[k][i][a] * self.c[j][a][t]
                        + self.c[i][j][a] * self.c[k][a][t] for a in range(r))
                if s:
                    raise LieAlgebraError(f"Jacobi identity fails on (e{i + 1}, e{j + 1}, e{k + 1})")

    @classmethod
    def from_brackets(cls, dim: int, brackets: dict, name: str = "") -> "LieAlgebra":
        """``brackets`` maps 1-based (i, j), i < j, to {k: coefficient}."""
        c = [[[Fraction(0)] * dim for _ in range(dim)] for _ in range(dim)]
        for (i, j), out in brackets.items():
            if not (1 <= i < j <= dim):
                raise LieAlgebraError(f"bracket indices ({i},{j}) must satisfy 1 <= i < j <= {dim}")
            for k, v in out.items():
                c[i - 1][j - 1][k - 1] += Fraction(v)
                c[j - 1][i - 1][k - 1] -= Fraction(v)
        return cls(dim, tuple(tuple(tuple(row) for row in m) for m in c), name)

    def bracket(self, i: int, j: int) -> dict:
        """[e_i, e_j] as {k: coefficient}, 0-based."""
        return {k: v for k, v in enumerate(self.c[i][j]) if v}

    def to_json(self) -> str:
        rows = []
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                for k, v in self.bracket(i, j).items():
                    rows.append([i + 1, j + 1, k + 1, v.numerator, v.denominator])
        return json.dumps({"dim": self.dim, "c": rows})

    @classmethod
    def from_json(cls, text: str, name: str = "") -> "LieAlgebra":
        try:
            data = json.loads(text)
            dim = int(data["dim"])
            brackets: dict = {}
            for i, j, k, num, den in data["c"]:
                brackets.setdefault((int(i), int(j)), {})[int(k)] = Fraction(int(num), int(den))
        except (ValueError, KeyError, TypeError) as exc:
            raise LieAlgebraError(f"bad Lie algebra JSON: {exc}") from exc
        return cls.from_brackets(dim, brackets, name)


def abelian(r: int = 2) -> LieAlgebra:
    return LieAlgebra.from_brackets(r, {}, "abelian")


def heisenberg() -> LieAlgebra:
    return LieAlgebra.from_brackets(3, {(1, 2): {3: 1}}, "heisenberg")


def sl2() -> LieAlgebra:
    """Basis e, f, h: [e,f] = h, [h,e] = 2e, [h,f] = -2f."""
    return LieAlgebra.from_brackets(3, {(1, 2): {3: 1}, (1, 3): {1: -2}, (2, 3): {2: 2}}, "sl2")


def so3() -> LieAlgebra:
    return LieAlgebra.from_brackets(3, {(1, 2): {3: 1}, (2, 3): {1: 1}, (1, 3): {2: -1}}, "so3")


ALGEBRAS = {"abelian": abelian, "heisenberg": heisenberg, "sl2": sl2, "so3": so3}


def load_algebra(spec: str) -> LieAlgebra:
    """A shipped name or a path to a JSON file."""
    if spec in ALGEBRAS:
        return ALGEBRAS[spec]()
    with open(spec, encoding="utf-8") as fh:
        return LieAlgebra.from_json(fh.read(), name=spec)


def casimir(L: LieAlgebra) -> Poly:
    """Quadratic invariant of the shipped semisimple algebras."""
    x = [Poly.var(3, i) for i in (1, 2, 3)]
    if L.name == "sl2":
        return 4 * x[0] * x[1] + x[2] * x[2]
    if L.name == "so3":
        return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
    raise ValueError(f"no Casimir shipped for {L.name or 'this algebra'}")


def kks_bivector(L: LieAlgebra) -> PolyVectorField:
    """Linear bivector with {x_i, x_j} = sum_k c^k_ij x_k."""
    r = L.dim
    comps = {}
    for i in range(r):
        for j in range(i + 1, r):
            p = Poly.zero(r)
            for k, v in L.bracket(i, j).items():
                p = p + Poly.var(r, k + 1) * v
            if p:
                comps[(i, j)] = p
    return PolyVectorField(r, 2, comps)


# -- the Duflo element ------------------------------------------------------------

def ad_matrix(L: LieAlgebra) -> list:
    """(ad_x)_{kj} = sum_i xi_i c^k_ij as Polys in xi."""
    r = L.dim
    M = [[Poly.zero(r) for _ in range(r)] for _ in range(r)]
    for i in range(r):
        xi = Poly.var(r, i + 1)
        for j in range(r):
            for k, v in L.bracket(i, j).items():
                M[k][j] = M[k][j] + xi * v
    return M


def _matmul(A, B):
    r = len(A)
    return [[sum((A[i][k] * B[k][j] for k in range(r)), Poly.zero(A[0][0].d)) for j in range(r)] for i in range(r)]


def log_sinhc_coefficients(D_max: int) -> dict:
    """beta_{2k} with log(sinh(t/2)/(t/2)) = sum_k beta_{2k} t^{2k}, 2k <= D_max."""
    out = {}
    for k in range(1, D_max // 2 + 1):
        b = sympy.bernoulli(2 * k)
        val = Fraction(int(b.p), int(b.q)) / (2 * k * math.factorial(2 * k))
        out[2 * k] = val
    return out


def _truncate(p: Poly, D: int) -> Poly:
    return Poly(p.d, {e: c for e, c in p.terms.items() if sum(e) <= D})


def _exp_series(Lg: Poly, D: int) -> Poly:
    """exp of a polynomial without constant term, truncated at degree D."""
    r = Lg.d
    out = Poly.const(r, 1)
    term = Poly.const(r, 1)
    for n in range(1, D + 1):
        term = _truncate(term * Lg, D) * Fraction(1, n)
        if not term:
            break
        out = out + term
    return out


@dataclass(frozen=True)
class DufloTruncation:
    D_max: int
    log_J: Poly
    J: Poly
    J_half: Poly


def duflo_J(L: LieAlgebra, D_max: int) -> DufloTruncation:
    """J = exp(sum_k beta_{2k} tr(ad_x^{2k})) and J^{1/2}, up to degree D_max."""
    if D_max < 0:
        raise ValueError("D_max must be >= 0")
    r = L.dim
    A = ad_matrix(L)
    A2 = _matmul(A, A)
    power = A2
    logJ = Poly.zero(r)
    for deg, beta in sorted(log_sinhc_coefficients(D_max).items()):
        if deg > 2:
            power = _matmul(power, A2)
        tr = sum((power[i][i] for i in range(r)), Poly.zero(r))
        logJ = logJ + tr * beta
    return DufloTruncation(D_max, logJ, _exp_series(logJ, D_max), _exp_series(logJ * Fraction(1, 2), D_max))


# -- U(g) in PBW normal order --------------------------------------------------------

class UEAElement:
    """{non-decreasing word of 0-based generator indices: Fraction}."""

    __slots__ = ("L", "terms")

    def __init__(self, L: LieAlgebra, terms: dict | None = None):
        self.L = L
        self.terms: dict = {}
        for w, c in (terms or {}).items():
            w = tuple(w)
            if list(w) != sorted(w):
                raise ValueError(f"word {w} is not PBW ordered; use normal_order")
            c = Fraction(c)
            if c:
                self.terms[w] = self.terms.get(w, 0) + c
                if not self.terms[w]:
                    del self.terms[w]

    @classmethod
    def _raw(cls, L, terms):
        x = cls.__new__(cls)
        x.L, x.terms = L, terms
        return x

    @classmethod
    def generator(cls, L: LieAlgebra, i: int) -> "UEAElement":
        return cls._raw(L, {(i,): Fraction(1)})

    @classmethod
    def scalar(cls, L: LieAlgebra, c) -> "UEAElement":
        return cls(L, {(): c})

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, UEAElement):
            return NotImplemented
        return self.terms == other.terms

    def _combine(self, other, s) -> "UEAElement":
        out = dict(self.terms)
        for w, c in other.terms.items():
            v = out.get(w, 0) + s * c
            if v:
                out[w] = v
            else:
                out.pop(w, None)
        return UEAElement._raw(self.L, out)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return UEAElement._raw(self.L, {w: -c for w, c in self.terms.items()})

    def scale(self, s) -> "UEAElement":
        s = Fraction(s)
        return UEAElement._raw(self.L, {w: c * s for w, c in self.terms.items()} if s else {})

    def __mul__(self, other: "UEAElement") -> "UEAElement":
        return uea_product(self, other)

    def degree(self) -> int:
        return max((len(w) for w in self.terms), default=-1)

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for w, c in sorted(self.terms.items(), key=lambda t: (-len(t[0]), t[0])):
            # words are non-decreasing, so equal letters form runs
            word = "*".join(f"x{i + 1}" + (f"^{len(list(run))}" if w.count(i) > 1 else "")
                            for i, run in itertools.groupby(w))
            if not word:
                parts.append(str(c))
            elif c == 1:
                parts.append(word)
            elif c == -1:
                parts.append(f"-{word}")
            else:
                parts.append(f"{c}*{word}")
        return " + ".join(parts).replace("+ -", "- ")


@lru_cache(maxsize=None)
def _normal_order_cached(L: LieAlgebra, word: tuple) -> tuple:
    for i in range(len(word) - 1):
        a, b = word[i], word[i + 1]
        if a > b:
            out: dict = {}
            swapped = word[:i] + (b, a) + word[i + 2:]
            for w, c in _normal_order_cached(L, swapped):
                out[w] = out.get(w, 0) + c
            for k, v in L.bracket(a, b).items():
                for w, c in _normal_order_cached(L, word[:i] + (k,) + word[i + 2:]):
                    out[w] = out.get(w, 0) + v * c
            return tuple((w, c) for w, c in out.items() if c)
    return ((word, Fraction(1)),)


def normal_order(L: LieAlgebra, word) -> UEAElement:
    """Rewrite an arbitrary word in PBW order using ab = ba + [a, b]."""
    return UEAElement._raw(L, dict(_normal_order_cached(L, tuple(word))))


def uea_product(u: UEAElement, v: UEAElement) -> UEAElement:
    out: dict = {}
    for w1, c1 in u.terms.items():
        for w2, c2 in v.terms.items():
            for w, c in _normal_order_cached(u.L, w1 + w2):
                s = out.get(w, 0) + c * c1 * c2
                if s:
                    out[w] = s
                else:
                    out.pop(w, None)
    return UEAElement._raw(u.L, out)


def commutator(u: UEAElement, v: UEAElement) -> UEAElement:
    return uea_product(u, v) - uea_product(v, u)


def sym(L: LieAlgebra, p: Poly) -> UEAElement:
    """x_{i1}...x_{ik} -> (1/k!) sum over orderings, normal ordered."""
    if p.d != L.dim:
        raise ValueError("polynomial dimension does not match the algebra")
    total = UEAElement(L)
    for e, c in p.terms.items():
        letters = [i for i, k in enumerate(e) for _ in range(k)]
        k = len(letters)
        weight = Fraction(math.prod(math.factorial(m) for m in e), math.factorial(k))
        for perm in multiset_permutations(letters):
            total = total + normal_order(L, perm).scale(c * weight)
    return total


def pbw_basis(r: int, k: int) -> list[tuple]:
    """Non-decreasing words of length exactly k."""
    return list(itertools.combinations_with_replacement(range(r), k))


# -- the Duflo map ---------------------------------------------------------------------

def act_by_derivatives(f: Poly, p: Poly) -> Poly:
    """Let each xi-monomial of f act on p as the matching derivative."""
    out = Poly.zero(p.d)
    for e, c in f.terms.items():
        q = p.diff_multi(e)
        if q:
            out = out + q * c
    return out


def duflo_map(L: LieAlgebra, p: Poly, D_max: int | None = None, J: DufloTruncation | None = None) -> UEAElement:
    """D(p) = sym(J^{1/2} acting on p)."""
    deg = p.degree()
    if D_max is None:
        D_max = max(deg, 0)
    if deg > D_max:
        raise ValueError(f"degree {deg} exceeds the truncation D_max={D_max}")
    if J is None or J.D_max < D_max:
        J = duflo_J(L, D_max)
    return sym(L, act_by_derivatives(J.J_half, p))


# -- invariants and coinvariants --------------------------------------------------------

def _monomials(r: int, k: int) -> list[tuple]:
    return [tuple(w.count(i) for i in range(r)) for w in itertools.combinations_with_replacement(range(r), k)]


def coadjoint_action(L: LieAlgebra, i: int, p: Poly) -> Poly:
    """e_i acting on S(g) as the derivation extending x_j -> [e_i, e_j]."""
    out = Poly.zero(L.dim)
    for j in range(L.dim):
        dp = p.diff(j)
        if not dp:
            continue
        br = Poly.zero(L.dim)
        for k, v in L.bracket(i, j).items():
            br = br + Poly.var(L.dim, k + 1) * v
        out = out + dp * br
    return out


def _to_rational_matrix(rows: list[list[Fraction]], ncols: int):
    return sympy.Matrix(len(rows), ncols, lambda a, b: sympy.Rational(rows[a][b].numerator, rows[a][b].denominator))


def _from_rational(x) -> Fraction:
    x = sympy.Rational(x)
    return Fraction(int(x.p), int(x.q))


def invariants(L: LieAlgebra, degree: int) -> list[Poly]:
    """Basis of S^degree(g)^g from the exact kernel of the coadjoint action."""
    r = L.dim
    monos = _monomials(r, degree)
    index = {e: a for a, e in enumerate(monos)}
    rows = []
    for i in range(r):
        images = [coadjoint_action(L, i, Poly.monomial(e)) for e in monos]
        for out_e in monos:
            rows.append([img.coefficient(out_e) for img in images])
    if not rows:
        return [Poly.monomial(e) for e in monos]
    M = _to_rational_matrix(rows, len(monos))
    basis = []
    for v in M.nullspace():
        basis.append(Poly(r, {monos[a]: _from_rational(v[a]) for a in range(len(monos)) if v[a] != 0}))
    del index
    return basis


class _SpanTest:
    """Exact membership in the span of a list of coefficient vectors."""

    def __init__(self, vectors: list[dict], keys: list):
        self.keys = keys
        self.index = {k: a for a, k in enumerate(keys)}
        cols = [[v.get(k, Fraction(0)) for k in keys] for v in vectors]
        if cols:
            M = _to_rational_matrix(cols, len(keys)).T
            self.rank = M.rank()
        else:
            M = sympy.zeros(len(keys), 0)
            self.rank = 0
        self.M = M

    def contains(self, vec: dict) -> bool:
        if any(k not in self.index for k in vec if vec[k]):
            return False
        if not any(vec.values()):
            return True
        b = _to_rational_matrix([[vec.get(k, Fraction(0)) for k in self.keys]], len(self.keys)).T
        return self.M.row_join(b).rank() == self.rank


@dataclass
class Coinvariants:
    """Quotient data in bounded degree: spanning sets of g.S(g) and [U, U]."""

    L: LieAlgebra
    degree: int
    s_span: _SpanTest
    u_span: _SpanTest

    def in_s_image(self, p: Poly) -> bool:
        return self.s_span.contains(dict(p.terms))

    def in_commutators(self, u: UEAElement) -> bool:
        return self.u_span.contains(dict(u.terms))

    @property
    def s_quotient_dims(self) -> int:
        return len(self.s_span.keys) - self.s_span.rank

    @property
    def u_quotient_dims(self) -> int:
        return len(self.u_span.keys) - self.u_span.rank


def coinvariants_projection(L: LieAlgebra, degree: int) -> Coinvariants:
    """Spans of g.S^{<=degree} and of [e_i, w] for PBW words w of length
    <= degree, the latter covering [U, U] in filtration degree <= degree."""
    r = L.dim
    s_keys = [e for k in range(degree + 1) for e in _monomials(r, k)]
    s_vecs = []
    for e in s_keys:
        for i in range(r):
            img = coadjoint_action(L, i, Poly.monomial(e))
            if img:
                s_vecs.append(dict(img.terms))
    u_keys = [w for k in range(degree + 1) for w in pbw_basis(r, k)]
    u_vecs = []
    for w in u_keys:
        elt = UEAElement._raw(L, {w: Fraction(1)})
        for i in range(r):
            c = commutator(UEAElement.generator(L, i), elt)
            if c:
                u_vecs.append(dict(c.terms))
    extra = set(k for v in u_vecs for k in v) - set(u_keys)
    u_keys = u_keys + sorted(extra)
    return Coinvariants(L, degree, _SpanTest(s_vecs, s_keys), _SpanTest(u_vecs, u_keys))


def morphism_I_check(L: LieAlgebra, S, table=None) -> dict:
    """x_i * x_j - x_j * x_i - 2 hbar [x_i, x_j] per hbar order on generators.

    The factor 2 is the normalization of the first-order commutator; it
    corresponds to hbar = 1/2 in the morphism x -> x."""
    from .algebra import poly_norm

    r = L.dim
    worst = [(0.0, 0.0)] * (S.order + 1)
    for i in range(r):
        for j in range(i + 1, r):
            xi, xj = Poly.var(r, i + 1), Poly.var(r, j + 1)
            comm = S.commutator(xi, xj)
            br = Poly.zero(r)
            for k, v in L.bracket(i, j).items():
                br = br + Poly.var(r, k + 1) * v
            for k in range(S.order + 1):
                defect = comm[k] - (br * 2 if k == 1 else Poly.zero(r))
                v = poly_norm(defect, table)
                if v[0] > worst[k][0]:
                    worst[k] = v
    return {"algebra": L.name, "orders": [{"order": k, "defect": v, "error": e} for k, (v, e) in enumerate(worst)]}


def duflo_theorem_check(L: LieAlgebra, degree: int, q_degree: int = 2) -> dict:
    """(a) D(pq) = D(p)D(q) for invariants p, q with deg p + deg q <= degree;
    (b) D(pq) - D(p)D(q) in [U, U] for invariant p and monomials q of degree
    <= q_degree with deg p + deg q <= degree; plus centrality of D(p)."""
    r = L.dim
    J = duflo_J(L, degree)
    inv = {k: invariants(L, k) for k in range(1, degree + 1)}
    D = lambda p: duflo_map(L, p, degree, J)  # noqa: E731
    gens = [UEAElement.generator(L, i) for i in range(r)]
    failures = []
    checks = {"algebra": 0, "module": 0, "central": 0}
    for kp, ps in inv.items():
        for p in ps:
            Dp = D(p)
            for g in gens:
                checks["central"] += 1
                if commutator(g, Dp):
                    failures.append({"kind": "central", "p": repr(p)})
            for kq, qs in inv.items():
                if kp + kq > degree:
                    continue
                for q in qs:
                    checks["algebra"] += 1
                    if D(p * q) != uea_product(Dp, D(q)):
                        failures.append({"kind": "algebra", "p": repr(p), "q": repr(q)})
    coinv = coinvariants_projection(L, degree)
    for kp, ps in inv.items():
        for p in ps:
            Dp = D(p)
            for kq in range(0, q_degree + 1):
                if kp + kq > degree:
                    continue
                for e in _monomials(r, kq):
                    q = Poly.monomial(e)
                    checks["module"] += 1
                    diff = D(p * q) - uea_product(Dp, D(q))
                    if not coinv.in_commutators(diff):
                        failures.append({"kind": "module", "p": repr(p), "q": repr(q)})
    return {"algebra_name": L.name, "degree": degree, "invariant_dims": {k: len(v) for k, v in inv.items()},
            "checks": checks, "failures": failures, "ok": not failures, "exact": True}

"""Graph operators, Taylor components, the star product and the tangent
maps, assembled from weights (symbolic until evaluated) and exact algebra.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import integrate
from .algebra import (DiffForm, HbarSeries, HochschildChain, Poly, PolyDiffOp, PolyVectorField,
                      StarAlgebra, cochain_cap_chain, contract, lie_derivative,
                      residual_norms, schouten, sort_sign)
from .graphs import (SPECIAL, AdmissibleGraph, CapacityError, First, Second, canonical_stars,
                     enumerate_kontsevich, enumerate_shoikhet)
from .scalars import WeightPoly, scalar_value


@dataclass
class TruncationPolicy:
    order: int = 2
    max_size: int = integrate.MAX_SIZE
    samples: int = 1 << 18
    seed: int = 0
    abs_tol: float = 5e-2
    k_sigma: float = 4.0
    # two-cycles between aerial vertices (the wheels) need ordered pairs
    ordered_pair_edges: bool = True
    jobs: int = 1
    cache: integrate.WeightCache | None = None

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.max_size <= 0 or self.samples <= 0:
            raise ValueError("budgets must be positive")
        if self.abs_tol <= 0:
            raise ValueError("tolerance must be positive")


class WeightTable(dict):
    """Symbol -> WeightEstimate, filled lazily as graphs are met."""

    def provenance(self) -> list[dict]:
        return [est.record(k) for k, est in sorted(self.items())]


def weight_symbol(g: AdmissibleGraph, policy: TruncationPolicy, table: WeightTable):
    """The weight of ``g`` as a scalar: exact Fraction when it is exactly
    known, otherwise sign * W[canonical key]."""
    if g.n + g.m > policy.max_size:
        raise CapacityError(f"graph {g.key} exceeds the size budget {policy.max_size}")
    canon, sign = canonical_stars(g)
    key = canon.key
    est = table.get(key)
    if est is None:
        est = integrate.weight(canon, samples=policy.samples, seed=policy.seed,
                               cache=policy.cache, jobs=policy.jobs)
        table[key] = est
    if est.exact:
        return Fraction(est.value).limit_denominator(10**9) * sign
    return WeightPoly.symbol(key, sign)


# -- graph operators ---------------------------------------------------------------

def _graph_terms(g: AdmissibleGraph, fields: dict, d: int):
    """Yield (coefficient Poly, {vertex: derivative multi-index of incoming
    colours}, {emitter: star colours}) for every edge colouring."""
    edges = g.edges()
    emitters = g.emitters()
    for colors in itertools.product(range(d), repeat=len(edges)):
        incoming: dict = {}
        star_cols: dict = {v: [] for v in emitters}
        for (src, tgt), c in zip(edges, colors):
            star_cols[src].append(c)
            incoming.setdefault(tgt, [0] * d)[c] += 1
        coef = Poly.const(d, 1)
        for v in emitters:
            f = fields[v]
            comp = f.component(star_cols[v]) if isinstance(f, PolyVectorField) else f
            if comp and v in incoming:
                comp = comp.diff_multi(tuple(incoming[v]))
            coef = coef * comp
            if not coef:
                break
        if coef:
            yield coef, incoming, star_cols


def _emitter_fields(g: AdmissibleGraph, fields, special_field=None) -> dict:
    if len(fields) != g.n:
        raise ValueError(f"graph has {g.n} aerial vertices, got {len(fields)} fields")
    out = {}
    for k, f in enumerate(fields, 1):
        if len(g.star(First(k))) != f.deg:
            raise ValueError(f"vertex {k} has valence {len(g.star(First(k)))}, field degree {f.deg}")
        out[First(k)] = f
    if g.special:
        out[SPECIAL] = special_field
    return out


def u_gamma_op(g: AdmissibleGraph, fields) -> PolyDiffOp:
    """U_Gamma(gamma_1..gamma_n) as an m-ary polydifferential operator."""
    if g.special:
        raise ValueError("u_gamma_op takes graphs without special vertex")
    d = fields[0].d if fields else None
    if d is None:
        raise ValueError("need at least one field to fix the dimension; use PolyDiffOp.mu for n=0")
    fmap = _emitter_fields(g, fields)
    out: dict = {}
    zero = (0,) * d
    for coef, incoming, _ in _graph_terms(g, fmap, d):
        sig = tuple(tuple(incoming.get(Second(j), zero)) for j in range(1, g.m + 1))
        s = out.get(sig)
        s = coef if s is None else s + coef
        if s:
            out[sig] = s
        else:
            out.pop(sig, None)
    return PolyDiffOp._raw(d, g.m, out)


def u_gamma_graph(g: AdmissibleGraph, fields, args) -> Poly:
    """U_Gamma(gamma_1..gamma_n)(f_1..f_m)."""
    if g.n == 0:
        if g.edge_count():
            raise ValueError("edges need aerial vertices")
        out = args[0]
        for a in args[1:]:
            out = out * a
        return out
    return u_gamma_op(g, fields).apply(*args)


def s_gamma_graph(g: AdmissibleGraph, fields, chain: HochschildChain) -> DiffForm:
    """S_Gamma(gamma_1..gamma_n, c) as an l-form, l = |star(0)|.

    Defined by <alpha, S_Gamma> = U_Gamma(alpha at 0, gamma_1..)(a_0..a_{m-1}),
    where the pairing sums over all ordered index tuples.  Entries of the
    chain sit at Second(1)..Second(m).  Graphs with an edge into the special
    vertex have zero weight and are returned as the zero form.
    """
    if not g.special:
        raise ValueError("s_gamma_graph takes graphs with a special vertex")
    d = chain.d
    if chain.n + 1 != g.m:
        raise ValueError(f"chain has {chain.n + 1} entries, graph has m={g.m}")
    l = len(g.star(SPECIAL))
    if l > d:
        return DiffForm.zero(d, d)
    if g.incoming(SPECIAL):
        return DiffForm.zero(d, l)
    fmap = _emitter_fields(g, fields, special_field=Poly.const(d, 1))
    raw: dict = {}  # colour tuple of the special star -> function
    for s, polys in chain.entries():
        for coef, incoming, star_cols in _graph_terms(g, fmap, d):
            val = coef * s
            for j, p in enumerate(polys, 1):
                a = incoming.get(Second(j))
                val = val * (p.diff_multi(tuple(a)) if a else p)
                if not val:
                    break
            if val:
                key = tuple(star_cols[SPECIAL])
                raw[key] = raw[key] + val if key in raw else val
    comps: dict = {}
    for key, val in raw.items():
        sign, sorted_key = sort_sign(key)
        if sign:
            comps[sorted_key] = comps.get(sorted_key, Poly.zero(d)) + val * sign
    scale = Fraction(1, math.factorial(l))
    return DiffForm(d, l, {k: v * scale for k, v in comps.items() if v})


# -- Taylor components ------------------------------------------------------------

def _enum_k(n, m, valences, policy):
    if n + m > policy.max_size:
        raise CapacityError(f"n+m={n + m} exceeds the size budget {policy.max_size}")
    return enumerate_kontsevich(n, m, valences, ordered_pair_edges=policy.ordered_pair_edges)


def _enum_s(n, m, l, valences, policy):
    if n + m > policy.max_size:
        raise CapacityError(f"n+m={n + m} exceeds the size budget {policy.max_size}")
    return enumerate_shoikhet(n, m, l, valences, ordered_pair_edges=policy.ordered_pair_edges)


def taylor_U_fields(fields, m: int, policy: TruncationPolicy, table: WeightTable) -> PolyDiffOp:
    """U_n(gamma_1..gamma_n) restricted to arity m: sum of W_Gamma U_Gamma."""
    d = fields[0].d
    n = len(fields)
    valences = [f.deg for f in fields]
    if sum(valences) != 2 * n + m - 2:
        return PolyDiffOp.zero(d, m)
    total = PolyDiffOp.zero(d, m)
    for g in _enum_k(n, m, valences, policy):
        op = u_gamma_op(g, fields)
        if not op:
            continue
        w = weight_symbol(g, policy, table)
        if w:
            total = total + op * w
    return total


def taylor_U(n: int, gamma: PolyVectorField, policy: TruncationPolicy, table: WeightTable | None = None,
             m: int | None = None) -> PolyDiffOp:
    """U_n(gamma, ..., gamma); arity fixed by the degree filter unless given."""
    table = WeightTable() if table is None else table
    if n == 0:
        return PolyDiffOp.mu(gamma.d)
    if m is None:
        m = n * gamma.deg - 2 * n + 2
        if m < 0:
            return PolyDiffOp.zero(gamma.d, 0)
    return taylor_U_fields([gamma] * n, m, policy, table)


def check_jacobi(pi: PolyVectorField) -> bool:
    ok = not schouten(pi, pi)
    if not ok:
        warnings.warn("bivector does not satisfy [pi, pi] = 0", stacklevel=2)
    return ok


def star(pi: PolyVectorField, policy: TruncationPolicy, table: WeightTable | None = None) -> StarAlgebra:
    """mu + sum_k hbar^k (1/k!) U_k(pi, ..., pi)."""
    if pi.deg != 2:
        raise ValueError("star product needs a bivector")
    check_jacobi(pi)
    table = WeightTable() if table is None else table
    B = [PolyDiffOp.zero(pi.d, 2)]
    for k in range(1, policy.order + 1):
        B.append(taylor_U_fields([pi] * k, 2, policy, table) * Fraction(1, math.factorial(k)))
    return StarAlgebra(pi.d, B, table)


def star_apply(S: StarAlgebra, f, g) -> HbarSeries:
    return S.star(f, g)


def tangent_U(pi: PolyVectorField, alpha: PolyVectorField, policy: TruncationPolicy,
              table: WeightTable | None = None) -> HbarSeries:
    """sum_n hbar^n (1/n!) U_{n+1}(alpha, pi, ..., pi), with gamma = hbar pi."""
    table = WeightTable() if table is None else table
    m = alpha.deg
    out = []
    for n in range(policy.order + 1):
        op = taylor_U_fields([alpha] + [pi] * n, m, policy, table)
        out.append(op * Fraction(1, math.factorial(n)))
    return HbarSeries(out, PolyDiffOp.zero(pi.d, m))


def taylor_S(n: int, pi: PolyVectorField, chain: HochschildChain, policy: TruncationPolicy,
             table: WeightTable | None = None) -> DiffForm:
    """S_n(pi, ..., pi, c): sum over G_{n,m,0} of W_{D,Gamma} S_Gamma."""
    table = WeightTable() if table is None else table
    d, m = chain.d, chain.n + 1
    l = m - 1  # degree filter: l + 2n = 2n + m - 1
    total = DiffForm.zero(d, min(l, d))
    if l > d or not chain:
        return total
    for g in _enum_s(n, m, l, [2] * n, policy):
        if any(integrate.is_zero_form_edge(e) for e in g.edges()):
            continue
        form = s_gamma_graph(g, [pi] * n, chain)
        if not form:
            continue
        w = weight_symbol(g, policy, table)
        if w:
            total = total + form * w
    return total


def tangent_S(pi: PolyVectorField, chain, policy: TruncationPolicy,
              table: WeightTable | None = None) -> HbarSeries:
    """sum_n hbar^n (1/n!) S_n(pi, ..., pi, c); ``chain`` may itself be an
    HbarSeries of chains."""
    table = WeightTable() if table is None else table
    N = policy.order
    if isinstance(chain, HochschildChain):
        chain = HbarSeries.constant(chain, N, HochschildChain.zero(chain.d, chain.n))
    d = chain[0].d
    out: list = [None] * (N + 1)
    for j in range(N + 1):
        c = chain[j]
        if not c:
            continue
        for n in range(N + 1 - j):
            form = taylor_S(n, pi, c, policy, table) * Fraction(1, math.factorial(n))
            out[j + n] = form if out[j + n] is None else out[j + n] + form
    l = chain[0].n
    zero = DiffForm.zero(d, min(l, d))
    return HbarSeries([zero if f is None else f for f in out], zero)


# -- reports -----------------------------------------------------------------------

def series_report(series: HbarSeries, table, policy: TruncationPolicy, label: str) -> dict:
    """Per-order max |coefficient| with error bounds and pass flags."""
    norms = residual_norms(series, table)
    orders = []
    for k, (v, e) in enumerate(norms):
        orders.append({"order": k, "max_abs": v, "error": e,
                       "tolerance": max(policy.abs_tol, policy.k_sigma * e),
                       "ok": v <= max(policy.abs_tol, policy.k_sigma * e)})
    return {"label": label, "orders": orders, "ok": all(o["ok"] for o in orders)}


def poly_table(p: Poly, table) -> list[dict]:
    rows = []
    for e, c in sorted(p.terms.items()):
        v, err = scalar_value(c, table)
        rows.append({"monomial": list(e), "value": v, "error": err})
    return rows


def series_table(s: HbarSeries, table) -> list[dict]:
    out = []
    for k, c in enumerate(s.coeffs):
        if isinstance(c, Poly):
            out.append({"order": k, "terms": poly_table(c, table)})
        elif isinstance(c, DiffForm):
            out.append({"order": k, "components": {",".join(str(i + 1) for i in I): poly_table(p, table)
                                                   for I, p in sorted(c.comps.items())}})
    return out


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=str)


# -- calibration --------------------------------------------------------------------

def constant_pi(d: int = 2, value=1) -> PolyVectorField:
    return PolyVectorField(d, 2, {(0, 1): value})


def calibrate(policy: TruncationPolicy, table: WeightTable | None = None) -> dict:
    """Measure kappa in (x*y - y*x)|_{hbar^1} = 2 kappa {x, y} for constant pi
    on R^2 and compare with the stored convention (kappa = 1)."""
    table = WeightTable() if table is None else table
    pol = TruncationPolicy(**{**policy.__dict__, "order": 1})
    pi = constant_pi(2)
    S = star(pi, pol, table)
    x, y = Poly.var(2, 1), Poly.var(2, 2)
    comm = S.commutator(x, y)[1]
    value, err = scalar_value(comm.coefficient((0, 0)), table)
    kappa = value / 2.0
    residual = abs(value - 2.0)
    other = max((abs(scalar_value(c, table)[0]) for e, c in comm.terms.items() if e != (0, 0)), default=0.0)
    return {"measured_kappa": kappa, "error": err / 2.0, "orientation_sign": integrate.ORIENTATION_SIGN,
            "stored_constant": 1, "residual": max(residual, other),
            "ok": max(residual, other) <= 2e-2 and round(kappa) == 1,
            "weights": table.provenance()}


# -- cap compatibility --------------------------------------------------------------

def _form_basis(d: int, l: int, max_deg: int):
    for I in itertools.combinations(range(d), l):
        for tot in range(max_deg + 1):
            for e in itertools.product(range(tot + 1), repeat=d):
                if sum(e) == tot:
                    yield DiffForm(d, l, {I: Poly.monomial(e)})


def homotopy_residual(delta: DiffForm, pi: PolyVectorField, max_deg: int, table) -> float:
    """min over eta of max |delta - L_pi eta| by least squares, eta ranging
    over (l+1)-forms with polynomial coefficients of degree <= max_deg."""
    d, l = delta.d, delta.deg
    images = [lie_derivative(pi, b) for b in _form_basis(d, l + 1, max_deg)] if l + 1 <= d else []
    index: dict = {}
    for f in images + [delta]:
        for I, p in f.comps.items():
            for e in p.terms:
                index.setdefault((I, e), len(index))
    target = np.zeros(len(index))
    for I, p in delta.comps.items():
        for e, c in p.terms.items():
            target[index[(I, e)]] = scalar_value(c, table)[0]
    if not images:
        return float(np.max(np.abs(target), initial=0.0))
    A = np.zeros((len(index), len(images)))
    for j, f in enumerate(images):
        for I, p in f.comps.items():
            for e, c in p.terms.items():
                A[index[(I, e)], j] = float(c)
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    return float(np.max(np.abs(target - A @ coef), initial=0.0))


def cap_report(alpha: PolyVectorField, chain: HochschildChain, pi: PolyVectorField,
               policy: TruncationPolicy, table: WeightTable | None = None) -> dict:
    """lhs = iota_alpha S_gamma(c), rhs = S_gamma(U_gamma(alpha) cap c),
    delta = lhs - rhs and, per hbar order k >= 1, the residual of solving
    delta_k = L_pi(eta) over bounded-degree forms (L_gamma = hbar L_pi)."""
    table = WeightTable() if table is None else table
    N = policy.order
    S = star(pi, policy, table)
    sc = tangent_S(pi, chain, policy, table)
    lhs = sc.map(lambda w: contract(alpha, w))
    Ua = tangent_U(pi, alpha, policy, table)
    capped = cochain_cap_chain(Ua, chain, S)
    rhs = tangent_S(pi, capped, policy, table)
    d = pi.d
    delta = []
    for k in range(N + 1):
        a, b = lhs[k], rhs[k]
        if not a:
            delta.append(-b if b else DiffForm.zero(d, 0))
        elif not b:
            delta.append(a)
        else:
            delta.append(a - b)
    in_deg = max([alpha_deg(alpha), max((sum(e) for key in chain.terms for e in key), default=0)])
    max_deg = in_deg + 2
    orders = []
    for k in range(N + 1):
        norm = residual_norms(HbarSeries([delta[k]], delta[k]), table)[0]
        if k == 0:
            res = norm[0]
        else:
            res = homotopy_residual(delta[k], pi, max_deg, table)
        tol = max(policy.abs_tol, policy.k_sigma * norm[1])
        orders.append({"order": k, "delta_max": norm[0], "error": norm[1],
                       "homotopy_residual": res, "tolerance": tol, "ok": res <= tol})
    b_closed = residual_norms(_b_star_series(chain, S), table)
    return {"lhs": series_table(lhs, table), "rhs": series_table(rhs, table),
            "delta": [repr(x) for x in delta], "orders": orders,
            "homotopy_degree_bound": max_deg,
            "chain_b_star_defect": [{"order": k, "max_abs": v, "error": e} for k, (v, e) in enumerate(b_closed)],
            "ok": all(o["ok"] for o in orders), "weights": table.provenance()}


def alpha_deg(alpha: PolyVectorField) -> int:
    return max((p.degree() for p in alpha.comps.values()), default=0)


def _b_star_series(chain: HochschildChain, S: StarAlgebra) -> HbarSeries:
    from .algebra import hochschild_b

    out = hochschild_b(chain, S)
    return out.map(lambda c: _chain_as_poly(c))


def _chain_as_poly(c: HochschildChain) -> Poly:
    """Flatten chain coefficients into a Poly-like container for norms."""
    terms = {}
    for i, (key, v) in enumerate(sorted(c.terms.items())):
        terms[(i,)] = v
    return Poly._raw(1, terms)

"""Named verification suites; each returns a JSON-able report with "ok"."""
from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from . import duflo, geometry, integrate
from .algebra import (DiffForm, HbarSeries, HochschildChain, Poly, PolyVectorField, hkr_chain,
                      hkr_cochain, poly_norm)
from .formality import (TruncationPolicy, WeightTable, calibrate, cap_report, constant_pi, series_report,
                        star, tangent_S, tangent_U)
from .graphs import make_graph
from .scalars import scalar_value

SUITES = ("assoc", "commutator", "hkr", "wheels", "strata", "cap", "duflo")


def monomials_up_to(d: int, k: int, start: int = 1) -> list[Poly]:
    out = []
    for tot in range(start, k + 1):
        for w in itertools.combinations_with_replacement(range(d), tot):
            out.append(Poly.monomial(tuple(w.count(i) for i in range(d))))
    return out


def sl2_pi() -> PolyVectorField:
    return duflo.kks_bivector(duflo.sl2())


def within(value: float, err: float, target: float, k: float = 3.0, floor: float = 1e-12) -> bool:
    return abs(value - target) <= k * err + floor


def _policy(policy: TruncationPolicy | None) -> TruncationPolicy:
    return TruncationPolicy() if policy is None else policy


# -- degree filter --------------------------------------------------------------------

def degree_filter_report(max_nm: int = 3, max_val: int = 3, time_limit: float | None = 5.0) -> dict:
    """Every enumerated graph with |E| != dim gets an exact zero, no samples.

    For Shoikhet graphs only edges with a non-zero form count.  With a
    ``time_limit`` the sweep stops at the deadline and reports partial
    coverage; ``ok`` then requires the sweep to have finished in time.
    """
    from .graphs import iter_graphs

    checked = violations = 0
    complete = True
    t0 = time.perf_counter()

    def late() -> bool:
        return time_limit is not None and time.perf_counter() - t0 > time_limit

    classes = []
    for n in range(0, max_nm + 1):
        for m in range(0, max_nm + 1):
            for vals in itertools.product(range(max_val + 1), repeat=n):
                # a class whose edge count already matches has nothing to check
                if sum(vals) != 2 * n + m - 2:
                    classes.append((n, m, False, vals))
                if m >= 1:
                    for l in range(max_val + 1):
                        classes.append((n, m, True, (*vals, l)))
    # small classes first, so a deadline cuts off the expensive tail
    classes.sort(key=lambda c: (c[0] + c[1], sum(c[3])))
    for n, m, special, vals in classes:
        for g in iter_graphs(n, m, special, vals):
            edges = g.edges()
            live = sum(1 for e in edges if not integrate.is_zero_form_edge(e)) if special else len(edges)
            if live != g.dimension():
                checked += 1
                est = integrate.weight(g)
                violations += not (est.exact and est.value == 0 and est.samples == 0)
            if checked % 4096 == 0 and late():
                complete = False
                break
        if not complete:
            break
    seconds = time.perf_counter() - t0
    ok = violations == 0 and complete and (time_limit is None or seconds < time_limit)
    return {"checked": checked, "violations": violations, "seconds": seconds,
            "complete": complete, "ok": ok}


# -- suites -------------------------------------------------------------------------

def suite_commutator(policy=None) -> dict:
    return calibrate(_policy(policy))


def moyal_report(policy=None, table=None) -> dict:
    """hbar^2 part of f*g against (1/2)(pi^{ij} d_i (x) d_j)^2 for constant pi."""
    policy = _policy(policy)
    table = WeightTable() if table is None else table
    pi = constant_pi(2)
    S = star(pi, TruncationPolicy(**{**policy.__dict__, "order": 2}), table)
    rows = []
    ok = True
    for f, g in itertools.product(monomials_up_to(2, 3), repeat=2):
        got = S.star(f, g)[2]
        P2 = (f.diff(0, 2) * g.diff(1, 2) - f.diff(0).diff(1) * g.diff(0).diff(1) * 2
              + f.diff(1, 2) * g.diff(0, 2)) * Fraction(1, 2)
        diff = got - P2
        for e, c in diff.terms.items():
            v, err = scalar_value(c, table)
            good = abs(v) <= 3 * err + 1e-12
            ok &= good
            rows.append({"f": repr(f), "g": repr(g), "monomial": list(e), "defect": v, "error": err, "ok": good})
    return {"rows": rows, "ok": ok}


def suite_assoc(policy=None) -> dict:
    policy = _policy(policy)
    pol = TruncationPolicy(**{**policy.__dict__, "order": 2})
    out = {}
    for name, pi in (("constant", constant_pi(2)), ("sl2", sl2_pi())):
        table = WeightTable()
        S = star(pi, pol, table)
        monos = monomials_up_to(pi.d, 2)
        worst = []
        ok = True
        for f, g, h in itertools.product(monos, repeat=3):
            rep = series_report(S.associator(f, g, h), table, pol, f"{f!r},{g!r},{h!r}")
            ok &= rep["ok"]
            for o in rep["orders"]:
                if len(worst) <= o["order"]:
                    worst.append(o)
                elif o["max_abs"] > worst[o["order"]]["max_abs"]:
                    worst[o["order"]] = o
        out[name] = {"worst_per_order": worst, "triples": len(monos) ** 3, "ok": ok,
                     "weights": table.provenance()}
    out["moyal"] = moyal_report(policy)
    out["ok"] = all(v["ok"] for v in out.values())
    return out


def fan_weights(policy=None) -> dict:
    policy = _policy(policy)
    rows = []
    for m in (1, 2, 3):
        g = make_graph(1, m, [[f"b{k}" for k in range(1, m + 1)]])
        est = integrate.kontsevich_weight(g, samples=policy.samples, seed=policy.seed, cache=policy.cache,
                                          jobs=policy.jobs)
        rows.append({"m": m, "value": est.value, "error": est.std_error, "target": 1 / math.factorial(m),
                     "ok": within(est.value, est.std_error, 1 / math.factorial(m))})
    return {"rows": rows, "ok": all(r["ok"] for r in rows)}


def _evaluate_op_diff(a, b, table, args) -> float:
    diff = a.apply(*args) - b.apply(*args)
    return poly_norm(diff, table)


def suite_hkr(policy=None) -> dict:
    policy = _policy(policy)
    pol = TruncationPolicy(**{**policy.__dict__, "order": 0})
    table = WeightTable()
    report = {"fans": fan_weights(policy)}
    rows = []
    ok = True
    for pi, alpha in ((constant_pi(2), constant_pi(2)), (sl2_pi(), sl2_pi()),
                      (sl2_pi(), PolyVectorField(3, 1, {(0,): Poly.var(3, 2), (2,): 1}))):
        U0 = tangent_U(pi, alpha, pol, table)[0]
        H = hkr_cochain(alpha)
        good = True
        for args in itertools.product(monomials_up_to(pi.d, 2), repeat=alpha.deg):
            v, e = _evaluate_op_diff(U0, H, table, args)
            good &= v <= 3 * e + 1e-12
        ok &= good
        rows.append({"alpha": repr(alpha), "ok": good})
    report["tangent_U_h0"] = {"rows": rows, "ok": ok}
    srows = []
    sok = True
    X = [Poly.var(3, i) for i in (1, 2, 3)]
    for chain in (HochschildChain.of(X[0] + X[1] * X[2]), HochschildChain.of(X[0], X[1] * X[2]),
                  HochschildChain.of(X[2], X[0] * X[1], X[1] + X[2]),
                  HochschildChain.of(X[0], X[1], X[2], X[0] * X[2])):
        got = tangent_S(sl2_pi(), chain, pol, table)[0]
        want = hkr_chain(chain)
        v, e = form_norm(got - want if got or want else got, table)
        good = v <= 3 * e + 1e-12
        sok &= good
        srows.append({"chain": repr(chain), "defect": v, "error": e, "ok": good})
    report["S0_equals_hkr_chain"] = {"rows": srows, "ok": sok}
    report["ok"] = report["fans"]["ok"] and ok and sok
    return report


def form_norm(form: DiffForm, table) -> tuple[float, float]:
    best = (0.0, 0.0)
    for p in form.comps.values():
        for c in p.terms.values():
            v, e = scalar_value(c, table)
            if abs(v) > best[0]:
                best = (abs(v), e)
    return best


def wheel_graphs() -> dict:
    """The Shoikhet 1- and 2-spoke wheels and the inner 2-wheel of U."""
    return {
        "shoikhet_1_spoke": make_graph(1, 1, [["0"], ["v1"]], special=True),
        "shoikhet_2_spoke": make_graph(2, 1, [["v2", "b1"], ["v1", "b1"], []], special=True),
        "kontsevich_inner_2_wheel": make_graph(3, 0, [[], ["v1", "v3"], ["v1", "v2"]]),
    }


def suite_wheels(policy=None) -> dict:
    policy = _policy(policy)
    rows = []
    for name, g in wheel_graphs().items():
        ests = [integrate.weight(g, samples=policy.samples, seed=s, cache=policy.cache, jobs=policy.jobs)
                for s in (policy.seed, policy.seed + 1)]
        good = all(within(e.value, e.std_error, 0.0) for e in ests)
        rows.append({"graph": g.key, "name": name, "values": [e.value for e in ests],
                     "errors": [e.std_error for e in ests], "exact": ests[0].exact, "ok": good})
    pol = TruncationPolicy(**{**policy.__dict__, "order": 2})
    table = WeightTable()
    pi = sl2_pi()
    srows = []
    for a0 in monomials_up_to(3, 2, start=0):
        s = tangent_S(pi, HochschildChain.of(a0), pol, table)
        defect = [s[0] - DiffForm.function(a0), s[1], s[2]]
        for k, f in enumerate(defect):
            v, e = form_norm(f, table)
            good = v <= pol.k_sigma * e + 1e-12
            srows.append({"a0": repr(a0), "order": k, "defect": v, "error": e, "ok": good})
    urows = []
    for a in monomials_up_to(3, 2, start=0):
        u = tangent_U(pi, PolyVectorField.function(a), pol, table)
        for k in range(3):
            val = u[k].apply() - (a if k == 0 else Poly.zero(3))
            v, e = poly_norm(val, table)
            urows.append({"alpha": repr(a), "order": k, "defect": v, "error": e,
                          "ok": v <= pol.k_sigma * e + 1e-12})
    ok = all(r["ok"] for r in rows + srows + urows)
    return {"wheels": rows, "S_gamma_identity": srows, "U_gamma_identity": urows, "ok": ok,
            "weights": table.provenance()}


def stratum_graphs() -> list:
    """Vertex 1 isolated; the first two collapse to graphs of clearly
    non-zero weight, the last one is the m = 1 shape of the cap identity."""
    return [make_graph(2, 3, [[], ["b1", "b3"], ["b2", "b3"]], special=True),
            make_graph(2, 3, [[], ["b1", "b2"], ["v2", "b3"]], special=True),
            make_graph(2, 1, [[], ["b1"], ["v2"]], special=True)]


def suite_strata(policy=None) -> dict:
    policy = _policy(policy)
    rows = []
    rng = np.random.default_rng(policy.seed)
    for g in stratum_graphs():
        g0 = integrate.collapse_origin(g)
        a = integrate.stratum_weight_origin(g, samples=policy.samples, seed=policy.seed, jobs=policy.jobs)
        b = integrate.shoikhet_weight(g0, samples=policy.samples, seed=policy.seed + 7, jobs=policy.jobs)
        sigma = math.hypot(a.std_error, b.std_error)
        x = rng.random((16, g0.edge_count()))
        res = {eps: integrate.pointwise_collapse_check(g, x, eps) for eps in (1e-2, 1e-3, 1e-4)}
        decay = res[1e-4] <= res[1e-2] * 1e-2 * 1.5 + 1e-13
        rows.append({"graph": g.key, "collapsed": g0.key, "stratum": a.value, "collapsed_weight": b.value,
                     "sigma": sigma, "residuals": {str(k): v for k, v in res.items()},
                     "ok": abs(a.value - b.value) <= 3 * sigma + 1e-12 and res[1e-4] < 1e-3 and decay})
    vanishing = make_graph(2, 2, [[], ["b1"], ["v1", "b2"]], special=True)
    est = integrate.stratum_weight_origin(vanishing, samples=policy.samples, seed=policy.seed)
    rows.append({"graph": vanishing.key, "stratum": est.value, "sigma": est.std_error,
                 "ok": within(est.value, est.std_error, 0.0)})
    probes = angle_probe_report(seed=policy.seed)
    return {"rows": rows, "angle_probes": probes, "ok": all(r["ok"] for r in rows) and probes["ok"]}


def angle_probe_report(eps: float = 1e-4, tol: float = 1e-3, seed: int = 0) -> dict:
    """Limit probes for the angle-form lemmas.  ``decay`` is the ratio of the
    deviation at 100*eps to the one at eps; a true limit gives about 100."""
    rows = []
    items = [("omega", i, geometry.omega_limit_probe) for i in ("i", "ii")]
    items += [("omega_D", i, geometry.omega_D_limit_probe) for i in ("i", "ii", "iv", "v", "vi")]
    for k, (lemma, item, probe) in enumerate(items):
        v = probe(item, eps, np.random.default_rng([seed, k]))
        coarse = probe(item, 100 * eps, np.random.default_rng([seed, k]))
        rows.append({"lemma": lemma, "item": item, "error": v, "decay": coarse / v if v else math.inf,
                     "ok": v < tol})
    return {"eps": eps, "rows": rows, "ok": all(r["ok"] for r in rows)}


def cap_cases() -> list:
    X = [Poly.var(3, i) for i in (1, 2, 3)]
    x1, x2 = Poly.var(2, 1), Poly.var(2, 2)
    return [("constant", constant_pi(2), constant_pi(2), HochschildChain.of(x1, x2), 2),
            ("sl2", sl2_pi(), PolyVectorField.function(duflo.casimir(duflo.sl2())), HochschildChain.of(X[0]), 1)]


def suite_cap(policy=None) -> dict:
    policy = _policy(policy)
    out = {}
    for name, pi, alpha, chain, max_order in cap_cases():
        pol = TruncationPolicy(**{**policy.__dict__, "order": max_order})
        rep = cap_report(alpha, chain, pi, pol)
        rep["ok"] = all(o["ok"] for o in rep["orders"] if o["order"] <= max_order)
        out[name] = rep
    out["ok"] = all(v["ok"] for v in out.values())
    return out


def suite_duflo(policy=None, degree: int = 4, algebras=("sl2", "heisenberg", "abelian", "so3")) -> dict:
    """Exact Duflo checks; nilpotent algebras must also have J = 1."""
    out = {}
    for name in algebras:
        L = duflo.load_algebra(name)
        rep = duflo.duflo_theorem_check(L, degree)
        if name in ("heisenberg", "abelian"):
            J = duflo.duflo_J(L, degree)
            rep["J_is_one"] = J.J == Poly.const(L.dim, 1)
            rep["ok"] = rep["ok"] and rep["J_is_one"]
        out[name] = rep
    if "sl2" in algebras:
        L = duflo.sl2()
        C = duflo.casimir(L)
        DC = duflo.duflo_map(L, C, degree)
        out["sl2_square"] = {"ok": duflo.duflo_map(L, C * C, degree) == duflo.uea_product(DC, DC)}
    out["ok"] = all(v["ok"] for v in out.values())
    return out


RUNNERS = {"assoc": suite_assoc, "commutator": suite_commutator, "hkr": suite_hkr, "wheels": suite_wheels,
           "strata": suite_strata, "cap": suite_cap, "duflo": suite_duflo}


def run_suite(name: str, policy: TruncationPolicy | None = None) -> dict:
    if name not in RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    rep = RUNNERS[name](policy)
    rep["suite"] = name
    rep["seconds"] = time.perf_counter() - t0
    return rep

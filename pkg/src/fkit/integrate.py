"""Quasi-Monte-Carlo evaluation of Kontsevich and Shoikhet graph weights.

The weight of a graph is the integral of the wedge of its edge 1-forms over
a gauge chart.  On a batch of box points the integrand is the determinant
of the |E| x dim matrix of edge-form gradients, divided by (2 pi)^|E| and
by the chart's ordering factor, so its box average is the weight itself.

Estimates are averages over independently scrambled Sobol batches of
2**14 points; the standard error is the jackknife error over batches.
"""
from __future__ import annotations

import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .geometry import (ChartPoints, GaugeChart, TWO_PI, _dangle_raw, embed, gauge_chart,
                       mobius_psi_inv)
from .graphs import SPECIAL, AdmissibleGraph, CapacityError, Second, VertexRef, collapse, First

BATCH_LOG2 = 14
BATCH_SIZE = 1 << BATCH_LOG2
MIN_BATCHES = 16  # keeps the jackknife error from being a 3-dof guess
DEFAULT_SAMPLES = 1 << 20
MAX_SIZE = 6  # n + m budget for graphs we integrate

# Global orientation of every chart, fixed once by the first-order commutator
# calibration (see formality.calibrate); no other tunable constant exists.
ORIENTATION_SIGN = 1

_B1 = Second(1)


@dataclass(frozen=True)
class WeightEstimate:
    value: float
    std_error: float
    samples: int
    seed: int
    exact: bool = False
    rejected: int = 0

    def __post_init__(self):
        if self.exact and self.std_error != 0:
            raise ValueError("exact estimates carry no error")
        if not self.exact and self.samples <= 0:
            raise ValueError("sampled estimates need samples > 0")

    @classmethod
    def exact_value(cls, value: float, seed: int = 0) -> "WeightEstimate":
        return cls(float(value), 0.0, 0, seed, True)

    def record(self, key: str) -> dict:
        return {"key": key, "value": self.value, "stderr": self.std_error,
                "samples": self.samples, "seed": self.seed, "exact": self.exact, "rejected": self.rejected}


# -- edge forms on chart batches -------------------------------------------------

def is_zero_form_edge(edge: tuple[VertexRef, VertexRef]) -> bool:
    """Shoikhet edges whose form vanishes identically."""
    src, tgt = edge
    return src.kind == "second" or tgt == SPECIAL or (src == SPECIAL and tgt == _B1)


def _kontsevich_row(pts: ChartPoints, src: VertexRef, tgt: VertexRef) -> np.ndarray:
    p, q = pts.pos[src][:, None], pts.pos[tgt][:, None]
    return _dangle_raw(p, q, pts.jac[src], pts.jac[tgt])


def _shoikhet_row(pts: ChartPoints, src: VertexRef, tgt: VertexRef) -> np.ndarray | None:
    if is_zero_form_edge((src, tgt)):
        return None
    centre = pts.pos[SPECIAL][:, None]
    dcentre = pts.jac[SPECIAL]
    if tgt == _B1:
        return _dangle_raw(pts.pos[src][:, None], centre, pts.jac[src], dcentre)
    if src == SPECIAL:
        return _dangle_raw(centre, pts.pos[tgt][:, None], dcentre, pts.jac[tgt])
    zs, Js = pts.pos[src][:, None], pts.jac[src]
    return (_dangle_raw(zs, pts.pos[tgt][:, None], Js, pts.jac[tgt])
            - _dangle_raw(zs, centre, Js, dcentre))


def _density(g: AdmissibleGraph, pts: ChartPoints, ordered_factor: int) -> np.ndarray:
    N = len(pts.valid)
    rows = []
    for src, tgt in g.edges():
        row = _shoikhet_row(pts, src, tgt) if g.special else _kontsevich_row(pts, src, tgt)
        if row is None:
            return np.zeros(N)
        rows.append(row)
    E = len(rows)
    if E == 0:
        return np.full(N, 1.0 / ordered_factor)
    with np.errstate(all="ignore"):
        M = np.stack(rows, axis=1)
        dens = np.linalg.det(M) if M.shape[1] == M.shape[2] else np.zeros(N)
    dens = ORIENTATION_SIGN * dens / (TWO_PI ** E * ordered_factor)
    bad = ~pts.valid | ~np.isfinite(dens)
    dens[bad] = 0.0
    return dens


def chart_for(g: AdmissibleGraph) -> GaugeChart:
    return gauge_chart("D" if g.special else "C", g.n, g.m)


def integrand(g: AdmissibleGraph, coords) -> np.ndarray:
    """Integrand of the weight of ``g`` at box points ``coords`` (N, dim).

    The box average of this function is the weight.  Requires
    |E| = chart dimension.
    """
    chart = chart_for(g)
    if g.edge_count() != chart.dim:
        raise ValueError("form degree does not match the chart dimension")
    pts = embed(chart, coords)
    return _density(g, pts, chart.ordered_factor)


# -- the sampler -------------------------------------------------------------------

def _batch_seeds(seed: int, batches: int) -> list:
    return np.random.SeedSequence(seed).spawn(batches)


def _qmc_mean(fn, dim: int, samples: int, seed: int, jobs: int = 1) -> tuple[float, float, int, int]:
    log2 = BATCH_LOG2
    while log2 > 6 and (1 << log2) * MIN_BATCHES > samples:
        log2 -= 1
    size = 1 << log2
    batches = max(MIN_BATCHES, math.ceil(samples / size))
    seeds = _batch_seeds(seed, batches)

    def run(b: int) -> tuple[float, int]:
        sob = qmc.Sobol(d=dim, scramble=True, seed=np.random.default_rng(seeds[b]))
        x = sob.random_base2(log2)
        vals, rejected = fn(x)
        return float(np.mean(vals)), rejected

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(run, range(batches)))
    else:
        out = [run(b) for b in range(batches)]
    means = np.array([o[0] for o in out])
    rejected = sum(o[1] for o in out)
    value = float(means.mean())
    # jackknife over batch means
    loo = (means.sum() - means) / (batches - 1)
    var = (batches - 1) / batches * np.sum((loo - loo.mean()) ** 2)
    return value, float(math.sqrt(var)), batches * size, rejected


# -- cache --------------------------------------------------------------------------

class CacheFormatError(ValueError):
    pass


def default_cache_path() -> Path:
    env = os.environ.get("FKIT_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "fkit" / "weights.jsonl"


class WeightCache:
    """GraphKey -> WeightEstimate, persisted as append-only JSON lines.

    On load, duplicate keys resolve to the record with the most samples.
    """

    def __init__(self, path: str | os.PathLike | None = None, persist: bool = True):
        self.path = Path(path) if path is not None else (default_cache_path() if persist else None)
        self._data: dict[str, WeightEstimate] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    est = WeightEstimate(float(rec["value"]), float(rec["stderr"]), int(rec["samples"]),
                                         int(rec["seed"]), bool(rec["exact"]), int(rec.get("rejected", 0)))
                    key = str(rec["key"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise CacheFormatError(f"{self.path}:{lineno}: corrupt cache record ({exc})") from exc
                self._merge(key, est)

    def _merge(self, key: str, est: WeightEstimate) -> bool:
        old = self._data.get(key)
        if old is None or (est.exact and not old.exact) or (not old.exact and est.samples > old.samples):
            self._data[key] = est
            return True
        return False

    def get(self, key: str) -> WeightEstimate | None:
        return self._data.get(key)

    def put(self, key: str, est: WeightEstimate) -> bool:
        with self._lock:
            replaced = self._merge(key, est)
            if replaced and self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(est.record(key)) + "\n")
            return replaced

    def flush(self, path: str | os.PathLike | None = None) -> Path:
        """Write a compacted copy (one line per key) to ``path``."""
        target = Path(path) if path is not None else self.path
        if target is None:
            raise ValueError("no cache path")
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_suffix(target.suffix + ".tmp")
        with self._lock, open(tmp, "w", encoding="utf-8") as fh:
            for key in sorted(self._data):
                fh.write(json.dumps(self._data[key].record(key)) + "\n")
        tmp.replace(target)
        return target

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: str) -> bool:
        return key in self._data


def cache_get(cache: WeightCache, key: str) -> WeightEstimate | None:
    return cache.get(key)


def cache_put(cache: WeightCache, key: str, est: WeightEstimate) -> bool:
    return cache.put(key, est)


def cache_flush(cache: WeightCache, path=None) -> Path:
    return cache.flush(path)


# -- weights ----------------------------------------------------------------------

CHART_VERSION = 2  # bump when a chart map changes; cached estimates depend on it


def _cache_key(g: AdmissibleGraph, seed: int, extra: str = "") -> str:
    return f"{g.key}{extra}#seed={seed}#chart={CHART_VERSION}"


def _check_budget(g: AdmissibleGraph) -> None:
    if g.n + g.m > MAX_SIZE:
        raise CapacityError(f"graph size n+m={g.n + g.m} exceeds budget {MAX_SIZE}")


def _estimate(g: AdmissibleGraph, chart: GaugeChart, density_fn, samples: int, seed: int,
              cache: WeightCache | None, jobs: int, extra_key: str = "") -> WeightEstimate:
    key = _cache_key(g, seed, extra_key)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None and (hit.exact or hit.samples >= samples):
            return hit
    if chart.dim == 0:
        pts = embed(chart, np.zeros((1, 0)))
        est = WeightEstimate.exact_value(float(density_fn(pts)[0]), seed)
    else:
        def fn(x):
            pts = embed(chart, x)
            return density_fn(pts), int(np.count_nonzero(~pts.valid))
        value, err, n, rejected = _qmc_mean(fn, chart.dim, samples, seed, jobs)
        est = WeightEstimate(value, err, n, seed, False, rejected)
    if cache is not None:
        cache.put(key, est)
    return est


def kontsevich_weight(g: AdmissibleGraph, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                      cache: WeightCache | None = None, jobs: int = 1) -> WeightEstimate:
    """Weight of a graph without special vertex over C_{n,m}^+."""
    if g.special:
        raise ValueError("use shoikhet_weight for graphs with a special vertex")
    if g.edge_count() != g.dimension():
        return WeightEstimate.exact_value(0.0, seed)
    chart = chart_for(g)
    if len(set(g.edges())) != g.edge_count():
        return WeightEstimate.exact_value(0.0, seed)
    _check_budget(g)
    return _estimate(g, chart, lambda pts: _density(g, pts, chart.ordered_factor), samples, seed, cache, jobs)


def shoikhet_weight(g: AdmissibleGraph, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                    cache: WeightCache | None = None, jobs: int = 1) -> WeightEstimate:
    """Weight of a graph with special vertex over D_{n,m}^+."""
    if not g.special or g.m < 1:
        raise ValueError("shoikhet_weight needs a special vertex and m >= 1")
    if g.edge_count() != g.dimension() or any(is_zero_form_edge(e) for e in g.edges()):
        return WeightEstimate.exact_value(0.0, seed)
    chart = chart_for(g)
    if len(set(g.edges())) != g.edge_count():
        return WeightEstimate.exact_value(0.0, seed)
    _check_budget(g)
    return _estimate(g, chart, lambda pts: _density(g, pts, chart.ordered_factor), samples, seed, cache, jobs)


def weight(g: AdmissibleGraph, samples: int = DEFAULT_SAMPLES, seed: int = 0,
           cache: WeightCache | None = None, jobs: int = 1) -> WeightEstimate:
    fn = shoikhet_weight if g.special else kontsevich_weight
    return fn(g, samples=samples, seed=seed, cache=cache, jobs=jobs)


# -- the stratum where vertex 1 falls into the origin ------------------------------

def _check_stratum_graph(g: AdmissibleGraph) -> None:
    if not g.special or g.n < 1 or g.m < 1:
        raise ValueError("need a Shoikhet graph with at least one aerial vertex")
    if g.star(First(1)):
        raise ValueError("vertex 1 must have valence 0")


def _pinned_points(g: AdmissibleGraph, coords: np.ndarray, eps: float, theta: float) -> tuple[ChartPoints, GaugeChart]:
    reduced = gauge_chart("D", g.n - 1, g.m)
    pts = embed(reduced, coords)
    pos, jac = {}, {}
    for v in pts.pos:
        w = VertexRef("first", v.index + 1) if v.kind == "first" else v
        pos[w], jac[w] = pts.pos[v], pts.jac[v]
    N = len(pts.valid)
    z1 = complex(mobius_psi_inv(eps * np.exp(1j * theta)))
    pos[First(1)] = np.full(N, z1)
    jac[First(1)] = np.zeros((N, reduced.dim), dtype=complex)
    valid = pts.valid.copy()
    for v in pos:
        if v != First(1):
            valid &= np.abs(pos[v] - z1) > 1e-12
    return ChartPoints(pos, jac, valid), reduced


def stratum_weight_origin(g: AdmissibleGraph, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                          eps: float = 1e-4, theta: float = 0.7, jobs: int = 1) -> WeightEstimate:
    """Integral of omega_{D,g} over configurations where First(1) sits at
    distance ``eps`` from the origin of the disk (direction ``theta``)."""
    _check_stratum_graph(g)
    reduced = gauge_chart("D", g.n - 1, g.m)
    if g.edge_count() != reduced.dim or any(is_zero_form_edge(e) for e in g.edges()):
        return WeightEstimate.exact_value(0.0, seed)

    def fn(x):
        pts, _ = _pinned_points(g, x, eps, theta)
        return _density(g, pts, reduced.ordered_factor), int(np.count_nonzero(~pts.valid))

    value, err, n, rejected = _qmc_mean(fn, reduced.dim, samples, seed, jobs)
    return WeightEstimate(value, err, n, seed, False, rejected)


def collapse_origin(g: AdmissibleGraph) -> AdmissibleGraph:
    """Collapse the special vertex with First(1)."""
    return collapse(g, {SPECIAL, First(1)}, SPECIAL)


def pointwise_collapse_check(g: AdmissibleGraph, coords, eps: float, theta: float = 0.7) -> float:
    """|density of g with First(1) pinned at eps e^{i theta}  -  density of the
    collapsed graph| at the reduced-chart point ``coords``."""
    _check_stratum_graph(g)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    pts, reduced = _pinned_points(g, coords, eps, theta)
    if g.edge_count() == reduced.dim:
        lhs = _density(g, pts, reduced.ordered_factor)
    else:
        lhs = np.zeros(len(coords))
    g0 = collapse_origin(g)
    chart0 = chart_for(g0)
    if g0.edge_count() == chart0.dim:
        rhs = _density(g0, embed(chart0, coords), chart0.ordered_factor)
    else:
        rhs = np.zeros(len(coords))
    return float(np.max(np.abs(lhs - rhs)))

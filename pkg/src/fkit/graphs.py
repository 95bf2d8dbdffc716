"""Admissible graphs of Kontsevich type (n, m) and of Shoikhet type (n, m, 0).

A graph has ``n`` first-type (aerial) vertices, ``m`` second-type (ground)
vertices and optionally a special vertex.  Every edge leaves an aerial vertex
or the special vertex; each emitting vertex carries an *ordered* star of
targets, and the concatenated stars fix the order of the edge forms in the
weight integrand.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

DEFAULT_MAX_GRAPHS = 1_000_000


class CapacityError(RuntimeError):
    """Raised when an enumeration or computation would exceed its budget."""


class VertexRef(NamedTuple):
    kind: str  # "first" | "second" | "special"
    index: int = 0

    def __str__(self) -> str:
        return encode_vertex(self)

    @property
    def sort_key(self) -> tuple[int, int]:
        return (_KIND_ORDER[self.kind], self.index)


_KIND_ORDER = {"first": 0, "second": 1, "special": 2}


def First(k: int) -> VertexRef:
    return VertexRef("first", k)


def Second(k: int) -> VertexRef:
    return VertexRef("second", k)


SPECIAL = VertexRef("special", 0)


def encode_vertex(v: VertexRef) -> str:
    if v.kind == "first":
        return f"v{v.index}"
    if v.kind == "second":
        return f"b{v.index}"
    return "0"


def decode_vertex(s: str) -> VertexRef:
    s = s.strip()
    if s == "0":
        return SPECIAL
    if len(s) >= 2 and s[0] in "vb" and s[1:].isdigit():
        return First(int(s[1:])) if s[0] == "v" else Second(int(s[1:]))
    raise ValueError(f"bad vertex token {s!r}")


@dataclass(frozen=True)
class AdmissibleGraph:
    """Labeled directed graph; ``stars[k-1]`` is the star of First(k) and,
    when ``special`` is set, ``stars[n]`` is the star of the special vertex."""

    n: int
    m: int
    special: bool
    stars: tuple[tuple[VertexRef, ...], ...]

    def __post_init__(self):
        stars = tuple(tuple(VertexRef(*t) for t in s) for s in self.stars)
        object.__setattr__(self, "stars", stars)
        expected = self.n + (1 if self.special else 0)
        if len(stars) != expected:
            raise ValueError(f"expected {expected} stars, got {len(stars)}")

    # -- structure ---------------------------------------------------------
    def emitters(self) -> list[VertexRef]:
        out = [First(k) for k in range(1, self.n + 1)]
        if self.special:
            out.append(SPECIAL)
        return out

    def vertices(self) -> list[VertexRef]:
        out = [First(k) for k in range(1, self.n + 1)]
        out += [Second(k) for k in range(1, self.m + 1)]
        if self.special:
            out.append(SPECIAL)
        return out

    def star(self, v: VertexRef) -> tuple[VertexRef, ...]:
        if v.kind == "first":
            return self.stars[v.index - 1]
        if v.kind == "special" and self.special:
            return self.stars[self.n]
        return ()

    def edges(self) -> list[tuple[VertexRef, VertexRef]]:
        """Edges in form order: star of First(1), ..., First(n), then Special."""
        return [(src, t) for src in self.emitters() for t in self.star(src)]

    def edge_count(self) -> int:
        return sum(len(s) for s in self.stars)

    def valences(self) -> list[int]:
        return [len(s) for s in self.stars[: self.n]]

    def special_valence(self) -> int:
        return len(self.stars[self.n]) if self.special else 0

    def incoming(self, v: VertexRef) -> list[tuple[VertexRef, VertexRef]]:
        return [e for e in self.edges() if e[1] == v]

    def dimension(self) -> int:
        """Dimension of the configuration space the weight integrates over."""
        if self.special:
            return 2 * self.n + self.m - 1
        return 2 * self.n + self.m - 2

    @property
    def key(self) -> str:
        return graph_key(self)

    def to_json(self) -> str:
        return json.dumps(graph_to_dict(self), separators=(",", ":"))

    def __str__(self) -> str:
        parts = [f"{encode_vertex(v)}->[{','.join(map(encode_vertex, self.star(v)))}]"
                 for v in self.emitters()]
        tag = "S" if self.special else "K"
        return f"{tag}({self.n},{self.m}) " + " ".join(parts)


def make_graph(n: int, m: int, stars: Sequence[Sequence[str | VertexRef]], special: bool = False) -> AdmissibleGraph:
    """Build a graph from stars given as vertex tokens ("v2", "b1", "0") or refs."""
    conv = tuple(tuple(decode_vertex(t) if isinstance(t, str) else VertexRef(*t) for t in s) for s in stars)
    return AdmissibleGraph(n, m, special, conv)


# -- keys and serialization ------------------------------------------------

def graph_key(g: AdmissibleGraph) -> str:
    stars = ";".join(",".join(encode_vertex(t) for t in s) for s in g.stars)
    return f"{'S' if g.special else 'K'}{g.n}.{g.m}|{stars}"


def graph_to_dict(g: AdmissibleGraph) -> dict:
    return {"n": g.n, "m": g.m, "special": g.special,
            "stars": [[encode_vertex(t) for t in s] for s in g.stars]}


def graph_from_dict(d: dict) -> AdmissibleGraph:
    try:
        return make_graph(int(d["n"]), int(d["m"]), d["stars"], bool(d.get("special", False)))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed graph record: {exc}") from exc


def graph_from_json(text: str) -> AdmissibleGraph:
    return graph_from_dict(json.loads(text))


# -- validation -------------------------------------------------------------

def validate(g: AdmissibleGraph, ordered_pair_edges: bool = False) -> list[str]:
    """Return the violated admissibility rules (empty list iff admissible)."""
    problems: list[str] = []
    if g.n < 0 or g.m < 0:
        problems.append("negative vertex count")
    if g.special:
        if 2 * g.n + g.m - 1 < 0:
            problems.append("dimension 2n+m-1 negative")
    elif 2 * g.n + g.m - 2 < 0:
        problems.append("dimension 2n+m-2 negative")
    seen: set = set()
    for src in g.emitters():
        for t in g.star(src):
            if t.kind == "first" and not 1 <= t.index <= g.n:
                problems.append(f"target {encode_vertex(t)} out of range")
                continue
            if t.kind == "second" and not 1 <= t.index <= g.m:
                problems.append(f"target {encode_vertex(t)} out of range")
                continue
            if t.kind == "special" and not g.special:
                problems.append("edge into absent special vertex")
                continue
            if t == src:
                problems.append(f"self-edge at {encode_vertex(src)}")
                continue
            pair = (src, t) if ordered_pair_edges else frozenset((src, t))
            if pair in seen:
                problems.append(f"duplicate edge {encode_vertex(src)}-{encode_vertex(t)}")
            seen.add(pair)
    return problems


def is_admissible(g: AdmissibleGraph, ordered_pair_edges: bool = False) -> bool:
    return not validate(g, ordered_pair_edges)


# -- enumeration ------------------------------------------------------------

def _count_bound(candidates: list[int], valences: list[int]) -> int:
    total = 1
    for c, v in zip(candidates, valences):
        total *= math.perm(c, v) if v <= c else 0
    return total


def _enumeration_setup(n: int, m: int, special: bool, valences: list[int]):
    if any(v < 0 for v in valences):
        raise ValueError("valences must be non-negative")
    if len(valences) != n + (1 if special else 0):
        raise ValueError("one valence per emitting vertex required")
    verts = [First(k) for k in range(1, n + 1)] + [Second(k) for k in range(1, m + 1)]
    if special:
        verts.append(SPECIAL)
    emitters = [First(k) for k in range(1, n + 1)] + ([SPECIAL] if special else [])
    options = [[t for t in verts if t != src] for src in emitters]
    return emitters, options


def iter_graphs(n: int, m: int, special: bool, valences: Sequence[int],
                ordered_pair_edges: bool = False) -> Iterator[AdmissibleGraph]:
    """Stream the admissible graphs of a class in lexicographic order.

    Stars are drawn without repetition and the pair rule is enforced while
    descending, so no candidate is built only to be rejected.
    """
    valences = list(valences)
    emitters, options = _enumeration_setup(n, m, special, valences)
    per_vertex = [list(itertools.permutations(o, v)) for o, v in zip(options, valences)]
    used: set = set()

    def pair(a, b):
        return (a, b) if ordered_pair_edges else frozenset((a, b))

    def rec(i: int, acc: list):
        if i == len(emitters):
            yield AdmissibleGraph(n, m, special, tuple(acc))
            return
        src = emitters[i]
        for star in per_vertex[i]:
            keys = [pair(src, t) for t in star]
            if any(k in used for k in keys):
                continue
            used.update(keys)
            acc.append(star)
            yield from rec(i + 1, acc)
            acc.pop()
            used.difference_update(keys)

    yield from rec(0, [])


def _enumerate(n: int, m: int, special: bool, valences: list[int],
               ordered_pair_edges: bool, max_graphs: int) -> list[AdmissibleGraph]:
    _, options = _enumeration_setup(n, m, special, valences)
    bound = _count_bound([len(o) for o in options], valences)
    if bound > max_graphs:
        raise CapacityError(f"enumeration bound {bound} exceeds {max_graphs}")
    return list(iter_graphs(n, m, special, valences, ordered_pair_edges))


def enumerate_kontsevich(n: int, m: int, valences: Sequence[int], *, ordered_pair_edges: bool = False,
                         max_graphs: int = DEFAULT_MAX_GRAPHS) -> list[AdmissibleGraph]:
    """All labeled graphs in G_{n,m} with the given aerial valences, in
    lexicographic order of the flattened star lists."""
    if n < 0 or m < 0 or 2 * n + m - 2 < 0:
        raise ValueError("need n, m >= 0 and 2n+m-2 >= 0")
    return _enumerate(n, m, False, list(valences), ordered_pair_edges, max_graphs)


def enumerate_shoikhet(n: int, m: int, special_valence: int, valences: Sequence[int], *,
                       ordered_pair_edges: bool = False,
                       max_graphs: int = DEFAULT_MAX_GRAPHS) -> list[AdmissibleGraph]:
    """All labeled graphs in G_{n,m,0} with |star(0)| = special_valence."""
    if m < 1 or n < 0 or 2 * n + m - 1 < 0:
        raise ValueError("need m >= 1, n >= 0 and 2n+m-1 >= 0")
    return _enumerate(n, m, True, list(valences) + [special_valence], ordered_pair_edges, max_graphs)


# -- edge order and collapse --------------------------------------------------

def permutation_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    if sorted(perm) != list(range(len(perm))):
        raise ValueError("not a permutation of 0..k-1")
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def edge_order_sign(g: AdmissibleGraph, permutation: Sequence[int]) -> int:
    """Sign of a permutation of the concatenated edge list of ``g``."""
    if len(permutation) != g.edge_count():
        raise ValueError(f"permutation length {len(permutation)} != edge count {g.edge_count()}")
    return permutation_sign(permutation)


def canonical_stars(g: AdmissibleGraph) -> tuple[AdmissibleGraph, int]:
    """Sort every star; return the sorted graph and the sign relating the two
    edge orders (weight(g) = sign * weight(sorted))."""
    sign = 1
    new = []
    for s in g.stars:
        order = sorted(range(len(s)), key=lambda i: s[i].sort_key)
        sign *= permutation_sign(order)
        new.append(tuple(s[i] for i in order))
    return AdmissibleGraph(g.n, g.m, g.special, tuple(new)), sign


def collapse(g: AdmissibleGraph, cluster: Iterable[VertexRef], new_vertex: VertexRef) -> AdmissibleGraph:
    """Identify ``cluster`` to a single vertex named ``new_vertex`` in the result.

    Edges inside the cluster are dropped, edges into the cluster are
    redirected, and the merged star concatenates the members' stars in
    vertex order.  Remaining vertices of each kind are relabeled in order.
    """
    cluster = set(VertexRef(*v) for v in cluster)
    if not cluster:
        raise ValueError("empty cluster")
    for v in cluster:
        if v not in g.vertices():
            raise ValueError(f"{encode_vertex(v)} not a vertex of the graph")

    kind = new_vertex.kind
    n_new = g.n - sum(v.kind == "first" for v in cluster) + (kind == "first")
    m_new = g.m - sum(v.kind == "second" for v in cluster) + (kind == "second")
    special_new = (g.special and SPECIAL not in cluster) or kind == "special"
    if kind == "special" and g.special and SPECIAL not in cluster:
        raise ValueError("graph already has a special vertex outside the cluster")

    def relabel_map(kind_: str, count_old: int) -> dict:
        survivors = [VertexRef(kind_, k) for k in range(1, count_old + 1) if VertexRef(kind_, k) not in cluster]
        mapping = {}
        if kind == kind_:
            slot = new_vertex.index
            if not 1 <= slot <= len(survivors) + 1:
                raise ValueError("new vertex index out of range")
            labels = list(range(1, slot)) + list(range(slot + 1, len(survivors) + 2))
        else:
            labels = list(range(1, len(survivors) + 1))
        for old, lab in zip(survivors, labels):
            mapping[old] = VertexRef(kind_, lab)
        return mapping

    mapping = {**relabel_map("first", g.n), **relabel_map("second", g.m)}
    if g.special and SPECIAL not in cluster:
        mapping[SPECIAL] = SPECIAL
    for v in cluster:
        mapping[v] = new_vertex

    merged_star: list[VertexRef] = []
    new_stars: dict[VertexRef, list[VertexRef]] = {}
    for src in g.emitters():
        targets = [mapping[t] for t in g.star(src) if t not in cluster or src not in cluster]
        if src in cluster:
            merged_star.extend(targets)
        else:
            new_stars[mapping[src]] = targets
    if merged_star and kind == "second":
        raise ValueError("collapse would make a second-type vertex emit edges")
    new_stars[new_vertex] = merged_star

    stars = [tuple(new_stars.get(First(k), ())) for k in range(1, n_new + 1)]
    if special_new:
        stars.append(tuple(new_stars.get(SPECIAL, ())))
    out = AdmissibleGraph(n_new, m_new, special_new, tuple(stars))
    problems = validate(out, ordered_pair_edges=True)
    if any(p.startswith("duplicate") for p in problems):
        raise ValueError("collapse creates duplicate edge")
    return out

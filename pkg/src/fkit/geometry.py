"""Angle functions, edge 1-forms and gauge-fixed charts on configuration spaces.

Points of the closed upper half-plane are plain complex numbers (real
points have zero imaginary part).  A 1-form is evaluated against a tangent
vector given as complex velocities of the points involved, so
``dangle(p, q, dp, dq)`` is the value of dphi(p, q) on (dp, dq).

The angle function is the hyperbolic angle

    phi(p, q) = arg((q - p) / (q - conj(p))),

which vanishes identically when p is real and tends to the Euclidean angle
of q - p (measured from the positive imaginary axis) when q collapses onto p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graphs import SPECIAL, AdmissibleGraph, VertexRef

TWO_PI = 2.0 * math.pi
COINCIDENCE_TOL = 1e-12


class DegenerateConfiguration(ValueError):
    pass


# -- points --------------------------------------------------------------------

@dataclass(frozen=True)
class HPoint:
    re: float
    im: float

    def __post_init__(self):
        if not self.im > 0:
            raise ValueError("HPoint needs im > 0")

    @property
    def z(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class RPoint:
    x: float

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise ValueError("RPoint must be finite")

    @property
    def z(self) -> complex:
        return complex(self.x, 0.0)


def _c(p) -> complex:
    return p.z if isinstance(p, (HPoint, RPoint)) else complex(p)


# -- angle forms ---------------------------------------------------------------

def angle(p, q) -> float:
    """phi(p, q) in (-pi, pi]."""
    p, q = _c(p), _c(q)
    if abs(q - p) < COINCIDENCE_TOL:
        raise DegenerateConfiguration("coincident points")
    return float(np.angle((q - p) / (q - p.conjugate())))


def dangle(p, q, dp=0.0, dq=0.0):
    """Value of dphi(p, q) on the tangent vector (dp, dq).

    Works elementwise on numpy arrays; ``dp``/``dq`` may carry extra trailing
    axes (one per coordinate direction) as long as they broadcast.
    """
    p = np.asarray(p, dtype=complex)
    q = np.asarray(q, dtype=complex)
    if np.any(np.abs(q - p) < COINCIDENCE_TOL):
        raise DegenerateConfiguration("coincident points")
    dp = np.asarray(dp, dtype=complex)
    dq = np.asarray(dq, dtype=complex)
    return _dangle_raw(p, q, dp, dq)


def _dangle_raw(p, q, dp, dq):
    return np.imag((dq - dp) / (q - p) - (dq - np.conj(dp)) / (q - np.conj(p)))


def phi_D(p, q, r) -> float:
    """phi_D(p, q, r) = phi(q, r) - phi(q, p)."""
    return angle(q, r) - angle(q, p)


def omega_D(p, q, r, dp=0.0, dq=0.0, dr=0.0):
    """Value of omega_D = d phi_D on the tangent vector (dp, dq, dr)."""
    return dangle(q, r, dq, dr) - dangle(q, p, dq, dp)


# -- Moebius identification ----------------------------------------------------

def mobius_psi(z):
    """psi(z) = (z - i)/(z + i): closed upper half-plane -> closed disk minus 1."""
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z + 1j) < COINCIDENCE_TOL):
        raise ValueError("psi undefined at z = -i")
    out = (z - 1j) / (z + 1j)
    return complex(out) if out.ndim == 0 else out


def mobius_psi_inv(w):
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(w - 1) < COINCIDENCE_TOL):
        raise ValueError("psi^-1 undefined at w = 1")
    out = 1j * (1 + w) / (1 - w)
    return complex(out) if out.ndim == 0 else out


def mobius_psi_inv_deriv(w):
    """d psi^-1 / dw = 2i / (1 - w)^2."""
    w = np.asarray(w, dtype=complex)
    return 2j / (1 - w) ** 2


# -- disk configurations and Shoikhet edge forms -------------------------------

@dataclass(frozen=True)
class DiskConfig:
    """Interior points in the punctured unit disk; boundary points on the
    circle in counterclockwise order starting at the gauge point 1."""

    interior: tuple[complex, ...]
    boundary: tuple[complex, ...]

    def __post_init__(self):
        interior = tuple(complex(z) for z in self.interior)
        boundary = tuple(complex(z) for z in self.boundary)
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "boundary", boundary)
        for z in interior:
            if not 0 < abs(z) < 1:
                raise ValueError("interior points must lie in the punctured open disk")
        for i, a in enumerate(interior):
            for b in interior[i + 1:]:
                if abs(a - b) < COINCIDENCE_TOL:
                    raise DegenerateConfiguration("coincident interior points")
        if not boundary:
            raise ValueError("at least one boundary point required")
        if boundary[0] != 1:
            raise ValueError("boundary[0] must be exactly 1 (gauge)")
        angles = [np.angle(b) % TWO_PI for b in boundary]
        for b in boundary:
            if abs(abs(b) - 1) > 1e-12:
                raise ValueError("boundary points must have unit modulus")
        if any(not a < b for a, b in zip(angles, angles[1:])):
            raise ValueError("boundary points must be strictly cyclically ordered")

    @property
    def n(self) -> int:
        return len(self.interior)

    @property
    def m(self) -> int:
        return len(self.boundary)

    @classmethod
    def from_angles(cls, interior, boundary_angles: Sequence[float]) -> "DiskConfig":
        """Boundary given by angles; the first must be 0."""
        bnd = [1 + 0j] + [complex(np.exp(1j * t)) for t in boundary_angles[1:]]
        if boundary_angles[0] != 0:
            raise ValueError("first boundary angle must be 0")
        return cls(tuple(interior), tuple(bnd))

    def to_half_plane(self) -> tuple[list[complex], list[float]]:
        """Interior points and boundary points 2..m in the upper half-plane
        picture, where the origin goes to i and the gauge point 1 to infinity."""
        zs = [mobius_psi_inv(w) for w in self.interior]
        qs = [float(np.real(mobius_psi_inv(b))) for b in self.boundary[1:]]
        return zs, qs


def _transport_velocity(w: complex, dw: complex) -> complex:
    return complex(mobius_psi_inv_deriv(w) * dw)


def shoikhet_edge_form(g: AdmissibleGraph, edge: tuple[VertexRef, VertexRef], cfg: DiskConfig,
                       interior_velocity: Sequence[complex], boundary_velocity: Sequence[float]) -> float:
    """Evaluate omega_{D,e} at ``cfg`` on a tangent vector.

    ``interior_velocity[k-1]`` is the velocity of First(k) in the disk and
    ``boundary_velocity[j-1]`` the angular velocity of Second(j); the gauge
    point Second(1) does not move.
    """
    if not g.special or cfg.n != g.n or cfg.m != g.m:
        raise ValueError("configuration does not match the graph")
    src, tgt = edge
    if edge not in g.edges():
        raise ValueError("edge not in graph")
    if src.kind == "second" or tgt == SPECIAL or (src == SPECIAL and tgt == VertexRef("second", 1)):
        return 0.0

    def point(v: VertexRef) -> tuple[complex, complex]:
        if v == SPECIAL:
            return 1j, 0j
        if v.kind == "first":
            w = cfg.interior[v.index - 1]
            return complex(mobius_psi_inv(w)), _transport_velocity(w, interior_velocity[v.index - 1])
        w = cfg.boundary[v.index - 1]
        dw = 1j * w * boundary_velocity[v.index - 1]
        return complex(np.real(mobius_psi_inv(w))), complex(np.real(_transport_velocity(w, dw)))

    zs, dzs = point(src)
    z0, dz0 = 1j, 0j
    if tgt.kind == "second" and tgt.index == 1:
        # projection onto D_{1,1} = C_{2,0}: the edge now ends at the image of the origin
        return float(dangle(zs, z0, dzs, dz0))
    zt, dzt = point(tgt)
    if src == SPECIAL:
        return float(dangle(z0, zt, dz0, dzt))
    return float(omega_D(z0, zs, zt, dz0, dzs, dzt))


# -- gauge charts ------------------------------------------------------------------

@dataclass(frozen=True)
class GaugeChart:
    """Concrete slice of C_{n,m}^+ (space "C") or D_{n,m}^+ (space "D").

    Coordinates live in the unit box.  Free interior points use the Cayley
    disk parametrization w = u exp(2 pi i v), z = psi^{-1}(w); free real points
    use one box coordinate each and are sorted, which covers the ordered
    region ``ordered_factor`` times.
    """

    space: str
    n: int
    m: int
    dim: int
    descriptor: str
    free_interior: tuple[int, ...] = field(default=())
    free_real: tuple[int, ...] = field(default=())

    @property
    def ordered_factor(self) -> int:
        return math.factorial(len(self.free_real))


def gauge_chart(space: str, n: int, m: int) -> GaugeChart:
    if space == "C":
        dim = 2 * n + m - 2
        if n < 0 or m < 0 or dim < 0:
            raise ValueError("C_{n,m} needs 2n+m-2 >= 0")
        if m >= 2:
            return GaugeChart("C", n, m, dim, "q1=0,q2=1", tuple(range(1, n + 1)), tuple(range(3, m + 1)))
        if m == 1:
            return GaugeChart("C", n, m, dim, "q1=0,|p1|=1", tuple(range(2, n + 1)), ())
        return GaugeChart("C", n, m, dim, "p1=i", tuple(range(2, n + 1)), ())
    if space == "D":
        dim = 2 * n + m - 1
        if n < 0 or m < 1 or dim < 0:
            raise ValueError("D_{n,m} needs m >= 1 and 2n+m-1 >= 0")
        return GaugeChart("D", n, m, dim, "boundary[0]=1", tuple(range(1, n + 1)), tuple(range(2, m + 1)))
    raise ValueError(f"unknown space {space!r}")


@dataclass
class ChartPoints:
    """Batch of configurations: positions and their derivatives with respect
    to the chart coordinates.  Keys are VertexRefs of the half-plane picture
    (for D charts the special vertex sits at i)."""

    pos: dict
    jac: dict
    valid: np.ndarray


def _ends(t):
    """Smoothstep warp of [0, 1] onto itself and its derivative.  Box faces
    are where points collide or run to infinity, so samples are crowded there."""
    return t * t * (3 - 2 * t), 6 * t * (1 - t)


def _disk_point(t, tv):
    # radius u = 1 - (1-t)^3 crowds samples toward the circle, where the
    # angle forms of edges to boundary points blow up like 1/r
    u = 1 - (1 - t) ** 3
    v, dv_dt = _ends(tv)
    w = u * np.exp(TWO_PI * 1j * v)
    z = 1j * (1 + w) / (1 - w)
    dzdw = 2j / (1 - w) ** 2
    dz_du = dzdw * np.exp(TWO_PI * 1j * v) * 3 * (1 - t) ** 2
    dz_dv = dzdw * (TWO_PI * 1j * w) * dv_dt
    return z, dz_du, dz_dv


def embed(chart: GaugeChart, coords: np.ndarray) -> ChartPoints:
    """Map box coordinates of shape (N, dim) to configurations."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    N, D = coords.shape
    if D != chart.dim:
        raise ValueError(f"chart has dimension {chart.dim}, got {D} coordinates")
    if np.any((coords < 0) | (coords > 1)):
        raise ValueError("coordinates out of the unit box")
    pos: dict = {}
    jac: dict = {}

    def fixed(v, z):
        pos[v] = np.full(N, z, dtype=complex)
        jac[v] = np.zeros((N, D), dtype=complex)

    col = 0
    if chart.space == "C":
        if chart.m >= 2:
            fixed(VertexRef("second", 1), 0.0)
            fixed(VertexRef("second", 2), 1.0)
        elif chart.m == 1:
            fixed(VertexRef("second", 1), 0.0)
            t = coords[:, 0]
            z = np.exp(1j * math.pi * t)
            pos[VertexRef("first", 1)] = z
            J = np.zeros((N, D), dtype=complex)
            J[:, 0] = 1j * math.pi * z
            jac[VertexRef("first", 1)] = J
            col = 1
        else:
            fixed(VertexRef("first", 1), 1j)
    else:
        fixed(SPECIAL, 1j)

    for k in chart.free_interior:
        u = np.clip(coords[:, col], 1e-300, 1 - 1e-15)
        z, du, dv = _disk_point(u, coords[:, col + 1])
        J = np.zeros((N, D), dtype=complex)
        J[:, col] = du
        J[:, col + 1] = dv
        pos[VertexRef("first", k)] = z
        jac[VertexRef("first", k)] = J
        col += 2

    if chart.free_real:
        s, ds = _ends(np.sort(coords[:, col:col + len(chart.free_real)], axis=1))
        s = np.clip(s, 1e-15, 1 - 1e-15)
        for j, k in enumerate(chart.free_real):
            J = np.zeros((N, D), dtype=complex)
            if chart.space == "C":
                q = 1.0 / (1.0 - s[:, j])
                J[:, col + j] = q * q * ds[:, j]
            else:
                a = math.pi * (s[:, j] - 0.5)
                q = np.tan(a)
                J[:, col + j] = math.pi / np.cos(a) ** 2 * ds[:, j]
            pos[VertexRef("second", k)] = q.astype(complex)
            jac[VertexRef("second", k)] = J

    zs = np.stack(list(pos.values()), axis=1)
    diff = np.abs(zs[:, :, None] - zs[:, None, :])
    diff[:, np.arange(zs.shape[1]), np.arange(zs.shape[1])] = np.inf
    valid = diff.min(axis=(1, 2)) > COINCIDENCE_TOL if zs.shape[1] > 1 else np.ones(N, bool)
    return ChartPoints(pos, jac, valid)


def jacobian(chart: GaugeChart, coords: np.ndarray) -> np.ndarray:
    """|det| of the map from box coordinates to the standard coordinates
    (Re, Im of free interior points, free real points) of the slice."""
    pts = embed(chart, coords)
    cols = []
    if chart.space == "C" and chart.m == 1:
        # the pinned-modulus point contributes its arc-length coordinate
        cols.append(np.abs(pts.jac[VertexRef("first", 1)][:, None, :]))
    for k in chart.free_interior:
        J = pts.jac[VertexRef("first", k)]
        cols.append(np.stack([J.real, J.imag], axis=1))
    for k in chart.free_real:
        cols.append(pts.jac[VertexRef("second", k)].real[:, None, :])
    if not cols:
        return np.ones(len(pts.valid))
    M = np.concatenate(cols, axis=1)
    return np.abs(np.linalg.det(M))


# -- boundary-limit probes -------------------------------------------------------

def _rand_h(rng) -> complex:
    return complex(rng.uniform(-1.5, 1.5), rng.uniform(0.5, 2.0))


def _rand_v(rng) -> complex:
    # unit tangent directions: deviations of a 1-form scale with the vector
    return complex(np.exp(1j * rng.uniform(0, TWO_PI)))


def _rand_dx(rng) -> complex:
    return complex(rng.choice((-1.0, 1.0)), 0)


def _rand_cluster(rng, on_axis: bool) -> tuple[complex, complex]:
    """Rescaled offsets of a two-point cluster in normal form: unit
    separation, centred (on the real axis only the real part is centred)."""
    if not on_axis:
        U = np.exp(1j * rng.uniform(0, TWO_PI))
        return -U / 2, U / 2
    A, B = _rand_h(rng), _rand_h(rng)
    while abs(A - B) < 0.3:
        B = _rand_h(rng)
    mid, scale = (A + B).real / 2, abs(A - B)
    return (A - mid) / scale, (B - mid) / scale


def omega_limit_probe(item: str, eps: float, rng=None, trials: int = 8) -> float:
    """Max deviation of the edge form from its boundary limit at scale ``eps``.

    ``item`` is "i" (collapse of p, q inside H: limit is d arg(q - p)) or "ii"
    (p approaching the real axis: limit 0).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        if item == "i":
            c, U = _rand_h(rng), np.exp(1j * rng.uniform(0, TWO_PI))
            dc, dU = _rand_v(rng), _rand_v(rng)
            val = dangle(c, c + eps * U, dc, dc + eps * dU)
            expected = np.imag(dU / U)
        elif item == "ii":
            # dilations fix |q - Re p| = 1; q stays away from the axis
            x = rng.uniform(-1, 1)
            p = complex(x, eps)
            q = x + np.exp(1j * rng.uniform(math.pi / 6, 5 * math.pi / 6))
            val = dangle(p, q, _rand_dx(rng), _rand_v(rng))
            expected = 0.0
        else:
            raise ValueError(f"unknown item {item!r}")
        worst = max(worst, abs(float(val) - float(expected)))
    return worst


def omega_D_limit_probe(item: str, eps: float, rng=None, trials: int = 8) -> float:
    """Max deviation of omega_D(p, q, r) from the restriction stated for a
    codimension-one degeneration; ``item`` in {"i", "ii", "iii", "iv", "iv-h",
    "v", "vi"} ("iv" is p, r meeting on the real axis and "iv-h" inside H).

    Clusters are written as centre + eps * (rescaled offsets) and tangent
    vectors move the centre and the rescaled offsets independently.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    worst = 0.0
    for _ in range(trials):
        x = rng.uniform(-1, 1)
        c = _rand_h(rng)
        dx = _rand_dx(rng)
        dc = _rand_v(rng)
        A, B = _rand_cluster(rng, on_axis=item in ("ii", "iv", "v"))
        dA, dB = _rand_v(rng), _rand_v(rng)
        other, dother = _rand_h(rng) + 3.0, _rand_v(rng)
        if item == "i":
            q = complex(x, eps)
            val = omega_D(other, q, other - 5.0 + 0.5j, dother, dx, dc)
            expected = 0.0
        elif item == "ii":
            # p = x + eps A, q = x + eps B, limit -omega(q, p) of the cluster
            p, q = x + eps * A, x + eps * B
            val = omega_D(p, q, other, dx + eps * dA, dx + eps * dB, dother)
            expected = -dangle(B, A, dB, dA)
        elif item == "iii":
            p, q = c + eps * A, c + eps * B
            val = omega_D(p, q, other, dc + eps * dA, dc + eps * dB, dother)
            expected = dangle(c, other, dc, dother) - np.imag((dA - dB) / (A - B))
        elif item == "iv":
            p, r = x + eps * A, x + eps * B
            val = omega_D(p, other, r, dx + eps * dA, dother, dx + eps * dB)
            expected = 0.0
        elif item == "iv-h":
            p, r = c + eps * A, c + eps * B
            val = omega_D(p, other, r, dc + eps * dA, dother, dc + eps * dB)
            expected = 0.0
        elif item == "v":
            q, r = x + eps * A, x + eps * B
            val = omega_D(other, q, r, dother, dx + eps * dA, dx + eps * dB)
            expected = dangle(A, B, dA, dB)
        elif item == "vi":
            q, r = c + eps * A, c + eps * B
            val = omega_D(other, q, r, dother, dc + eps * dA, dc + eps * dB)
            expected = np.imag((dB - dA) / (B - A)) - dangle(c, other, dc, dother)
        else:
            raise ValueError(f"unknown item {item!r}")
        worst = max(worst, abs(float(val) - float(expected)))
    return worst

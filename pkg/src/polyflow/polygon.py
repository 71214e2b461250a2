"""Polygons described by edge heights over a fixed cyclic set of normals.

A polygon in an equivalence class is fully determined by its height vector
``h``: edge ``j`` lies on the line ``n_j . x = h_j``.  Every geometric
quantity (vertices, edge lengths, perimeter, area, polygonal curvature) is a
closed-form function of ``h`` and the precomputed fan coefficients.

Indexing is 0-based and cyclic.  Vertex ``w[j]`` joins edge ``j`` and edge
``j + 1``; edge ``j`` runs from ``w[j - 1]`` to ``w[j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadWinding,
    DegenerateAngle,
    DegenerateEdge,
    FanMismatch,
    ZeroNormal,
)

ANGLE_TOL = 1e-12
WINDING_TOL = 1e-9


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NormalFan:
    """Ordered outward unit normals of an N-polygon and derived coefficients.

    Attributes
    ----------
    normals : (N, 2) ndarray
        Unit outward normals, counterclockwise.
    outer_angles : (N,) ndarray
        ``phi[j]``, signed angle from ``normals[j]`` to ``normals[j + 1]``.
    a_coeffs, b_coeffs : (N,) ndarray
        ``a_j = 1 / sin(phi_j)`` and ``b_j = -cot(phi_{j-1}) - cot(phi_j)``.
    eta : (N,) ndarray
        ``tan(phi_j / 2) + tan(phi_{j-1} / 2)``.
    c_star : float
        ``max_l |a_{l-1}| + |b_l| + |a_l|``, the Lipschitz constant of the
        edge-length map in the sup norm.
    """

    normals: np.ndarray
    outer_angles: np.ndarray
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    eta: np.ndarray
    c_star: float

    def __post_init__(self):
        n = len(self.normals)
        idx = np.arange(n)
        object.__setattr__(self, "prev", (idx - 1) % n)
        object.__setattr__(self, "next", (idx + 1) % n)
        object.__setattr__(self, "a_prev", _readonly(self.a_coeffs[self.prev]))
        # rows j: inverse of [[n_j], [n_{j+1}]] so that w_j = inv_j @ (h_j, h_{j+1})
        n0 = self.normals
        n1 = self.normals[self.next]
        det = n0[:, 0] * n1[:, 1] - n0[:, 1] * n1[:, 0]
        inv = np.empty((n, 2, 2))
        inv[:, 0, 0] = n1[:, 1] / det
        inv[:, 0, 1] = -n0[:, 1] / det
        inv[:, 1, 0] = -n1[:, 0] / det
        inv[:, 1, 1] = n0[:, 0] / det
        inv.setflags(write=False)
        object.__setattr__(self, "_vertex_inverse", inv)
        object.__setattr__(
            self, "_tan_half_sum", float(np.sum(np.tan(self.outer_angles / 2)))
        )

    @property
    def n(self) -> int:
        return len(self.normals)

    def __len__(self):
        return len(self.normals)

    @property
    def tan_half_sum(self) -> float:
        """``sum_j tan(phi_j / 2)``; half of ``sum_j eta_j``."""
        return self._tan_half_sum

    def same_as(self, other: "NormalFan") -> bool:
        return self is other or (
            self.n == other.n and np.array_equal(self.normals, other.normals)
        )


def build_fan(normals: Sequence[Sequence[float]]) -> NormalFan:
    """Validate ``normals`` and derive angles and coefficients.

    Raises
    ------
    ZeroNormal
        A normal has zero (or non-finite) length.
    DegenerateAngle
        Two consecutive normals are parallel (``phi_j`` is 0 or +-pi).
    BadWinding
        The outer angles do not add up to ``2 pi``.
    """
    nv = np.array(normals, dtype=float)
    if nv.ndim != 2 or nv.shape[1] != 2:
        raise ValueError("normals must be a sequence of 2-vectors")
    if len(nv) < 3:
        raise ValueError(f"need at least 3 normals, got {len(nv)}")
    norms = np.hypot(nv[:, 0], nv[:, 1])
    bad = ~np.isfinite(norms) | (norms == 0.0)
    if np.any(bad):
        raise ZeroNormal(f"normal {int(np.argmax(bad)) + 1} has zero length")
    nv = nv / norms[:, None]

    nxt = np.roll(nv, -1, axis=0)
    cross = nv[:, 0] * nxt[:, 1] - nv[:, 1] * nxt[:, 0]
    dot = np.sum(nv * nxt, axis=1)
    phi = np.arctan2(cross, dot)
    flat = (np.abs(phi) <= ANGLE_TOL) | (np.pi - np.abs(phi) <= ANGLE_TOL)
    if np.any(flat):
        j = int(np.argmax(flat))
        raise DegenerateAngle(
            f"normals {j + 1} and {(j + 1) % len(nv) + 1} are parallel "
            f"(phi = {phi[j]:.3e})"
        )
    total = float(np.sum(phi))
    if abs(total - 2 * np.pi) > WINDING_TOL:
        raise BadWinding(f"outer angles sum to {total!r}, expected 2*pi")

    phi_prev = np.roll(phi, 1)
    a = 1.0 / np.sin(phi)
    cot = np.cos(phi) / np.sin(phi)
    b = -np.roll(cot, 1) - cot
    eta = np.tan(phi / 2) + np.tan(phi_prev / 2)
    c_star = float(np.max(np.abs(np.roll(a, 1)) + np.abs(b) + np.abs(a)))
    return NormalFan(
        normals=_readonly(nv),
        outer_angles=_readonly(phi),
        a_coeffs=_readonly(a),
        b_coeffs=_readonly(b),
        eta=_readonly(eta),
        c_star=c_star,
    )


# Array kernels.  The integrators call these directly on height vectors to
# avoid building Polygon objects inside fixed-point loops.

def edge_lengths_of(fan: NormalFan, h: np.ndarray) -> np.ndarray:
    return fan.a_prev * h[fan.prev] + fan.b_coeffs * h + fan.a_coeffs * h[fan.next]


def vertices_of(fan: NormalFan, h: np.ndarray) -> np.ndarray:
    rhs = np.stack([h, h[fan.next]], axis=1)
    return np.einsum("nij,nj->ni", fan._vertex_inverse, rhs)


def area_of(fan: NormalFan, h: np.ndarray) -> float:
    return 0.5 * float(np.dot(edge_lengths_of(fan, h), h))


def perimeter_of(fan: NormalFan, h: np.ndarray) -> float:
    return float(np.dot(fan.eta, h))


def curvature_of(fan: NormalFan, h: np.ndarray, lengths=None) -> np.ndarray:
    if lengths is None:
        lengths = edge_lengths_of(fan, h)
    if not np.all(lengths > 0):
        j = int(np.argmin(lengths))
        raise DegenerateEdge(f"edge {j + 1} has length {lengths[j]:.3e}")
    return fan.eta / lengths


@dataclass(frozen=True)
class PolygonGeometry:
    edge_lengths: np.ndarray
    vertices: np.ndarray
    perimeter: float
    area: float
    curvatures: Optional[np.ndarray]


class Polygon:
    """A height vector over a shared :class:`NormalFan`.

    Construction does not check admissibility, since interpolations and
    trial iterates may legitimately have degenerate edges; use
    :func:`check_admissible`.
    """

    __slots__ = ("fan", "heights")

    def __init__(self, fan: NormalFan, heights):
        h = np.array(heights, dtype=float).reshape(-1)
        if h.shape != (fan.n,):
            raise ValueError(f"expected {fan.n} heights, got {h.size}")
        h.setflags(write=False)
        object.__setattr__(self, "fan", fan)
        object.__setattr__(self, "heights", h)

    def __setattr__(self, name, value):
        raise AttributeError("Polygon is immutable")

    def __repr__(self):
        return f"Polygon(N={self.fan.n}, heights={np.array2string(self.heights, precision=6)})"

    @property
    def n(self) -> int:
        return self.fan.n

    def with_heights(self, heights) -> "Polygon":
        return Polygon(self.fan, heights)

    def edge_lengths(self) -> np.ndarray:
        """``|Gamma_j| = a_{j-1} h_{j-1} + b_j h_j + a_j h_{j+1}``.

        Positivity is not enforced.
        """
        return edge_lengths_of(self.fan, self.heights)

    def vertices(self) -> np.ndarray:
        return vertices_of(self.fan, self.heights)

    def perimeter(self) -> float:
        return perimeter_of(self.fan, self.heights)

    def area(self) -> float:
        return area_of(self.fan, self.heights)

    def curvature(self) -> np.ndarray:
        """Polygonal curvature ``eta_j / |Gamma_j|``.

        Raises
        ------
        DegenerateEdge
            If some edge length is not strictly positive.
        """
        return curvature_of(self.fan, self.heights)

    def geometry(self) -> PolygonGeometry:
        lengths = self.edge_lengths()
        kappa = self.fan.eta / lengths if np.all(lengths > 0) else None
        return PolygonGeometry(
            edge_lengths=lengths,
            vertices=self.vertices(),
            perimeter=self.perimeter(),
            area=self.area(),
            curvatures=kappa,
        )

    def translated(self, v) -> "Polygon":
        """Rigid translation by ``v``: ``h_j -> h_j + v . n_j``."""
        return Polygon(self.fan, self.heights + self.fan.normals @ np.asarray(v, float))


def _check_same_fan(p: Polygon, q: Polygon):
    if not p.fan.same_as(q.fan):
        raise FanMismatch("polygons belong to different normal fans")


def distance(p: Polygon, q: Polygon) -> float:
    """Sup-norm distance between height vectors."""
    _check_same_fan(p, q)
    return float(np.max(np.abs(p.heights - q.heights)))


def interpolate(p: Polygon, q: Polygon, theta: float) -> Polygon:
    """Height interpolation ``(1 - theta) h(p) + theta h(q)``.

    The result may be inadmissible.
    """
    _check_same_fan(p, q)
    if theta == 0:
        return p
    if theta == 1:
        return q
    return Polygon(p.fan, (1 - theta) * p.heights + theta * q.heights)


def default_min_edge(p: Polygon, rel: float = 1e-9) -> float:
    """Admissibility floor: ``rel`` times the mean edge length."""
    return rel * abs(p.perimeter()) / p.n


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    min_edge_length: float
    threshold: float
    simple: Optional[bool] = None

    def __bool__(self):
        return self.admissible


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
            and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])
        )

    return (
        (d1 == 0 and on_seg(q1, q2, p1))
        or (d2 == 0 and on_seg(q1, q2, p2))
        or (d3 == 0 and on_seg(p1, p2, q1))
        or (d4 == 0 and on_seg(p1, p2, q2))
    )


def is_simple(vertices: np.ndarray) -> bool:
    """Brute-force O(N^2) test that a closed vertex chain does not self-intersect."""
    w = np.asarray(vertices, dtype=float)
    n = len(w)
    # edge k runs from w[k-1] to w[k]
    for i in range(n):
        a0, a1 = w[i - 1], w[i]
        for k in range(i + 1, n):
            if k == i + 1 or (i == 0 and k == n - 1):
                continue
            if _segments_cross(a0, a1, w[k - 1], w[k]):
                return False
    return True


def check_admissible(
    p: Polygon, min_edge: Optional[float] = None, check_simple: bool = False
) -> AdmissibilityReport:
    """Report whether every edge exceeds ``min_edge`` (and optionally simplicity)."""
    lengths = p.edge_lengths()
    if min_edge is None:
        min_edge = default_min_edge(p)
    shortest = float(np.min(lengths))
    ok = bool(np.all(np.isfinite(lengths))) and shortest > min_edge
    simple = None
    if check_simple:
        simple = ok and is_simple(p.vertices())
        ok = ok and simple
    return AdmissibilityReport(ok, shortest, float(min_edge), simple)


def polygon_from_vertices(vertices) -> Polygon:
    """Build the fan and heights of a counterclockwise vertex chain.

    ``vertices[j]`` becomes vertex ``w_j``, i.e. the end of edge ``j``; edge
    ``j`` runs from ``vertices[j - 1]`` to ``vertices[j]``.
    """
    w = np.asarray(vertices, dtype=float)
    t = w - np.roll(w, 1, axis=0)
    normals = np.stack([t[:, 1], -t[:, 0]], axis=1)
    fan = build_fan(normals)
    h = np.sum(fan.normals * w, axis=1)
    return Polygon(fan, h)


def shoelace_area(vertices) -> float:
    w = np.asarray(vertices, dtype=float)
    x, y = w[:, 0], w[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

"""Strip domains, serrated boundary data, and unit-edge cap paths.

Everything lives on the horizontal strip R x (0, y0).  Boundary vertices come
in four families, two per boundary line:

    a0(n) = (2n, 0)             a1(n) = (2n + 1, 0)         on  y = 0
    b0(n) = (x0 + 2n - 1, y0)   b1(n) = (x0 + 2n, y0)       on  y = y0

with x0 in [-1, 1].  The serrate boundary value is the distance to the
nearest a0 / b0 vertex along the boundary line: a triangle wave that is 0 at
a0/b0 vertices and 1 at a1/b1 vertices.

Two isometries organize the construction: the point symmetry ``s`` about the
cell center c = ((x0+1)/2, y0/2), which swaps the families
(s(a0(n)) = b0(-n+1), s(a1(n)) = b1(-n)), and the translation ``t`` by
(-2, 0), which shifts every family index down by one.

``join_path`` produces a convex path of unit edges (odd count) from (0, 0) to
(x, y); ``exhaustion_domain`` assembles the symmetric unit-edge polygons that
cap the truncated strip between a1(-n) and b1(n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "AdmissibilityError",
    "ConstructionError",
    "DomainError",
    "LayerParams",
    "HandleParams",
    "StripDomain",
    "JoinPath",
    "ExhaustionPolygon",
    "join_path",
    "exhaustion_domain",
]

_UNIT_TOL = 1e-9          # unit-edge length tolerance
_SYM_TOL = 1e-12          # point-symmetry matching tolerance
_TURN_TOL = 1e-12         # cross products below this count as collinear


class AdmissibilityError(ValueError):
    """Parameters violate the admissibility condition of the construction."""


class ConstructionError(RuntimeError):
    """No valid unit-edge path was found below the configured search cap."""


class DomainError(ValueError):
    """A point lies outside the domain where an operation is defined."""


@dataclass(frozen=True)
class LayerParams:
    """Parameters of the doubly periodic layer problem.

    Admissible iff x0^2 + y0^2 > 1 (the serration peak must be farther than
    one unit from the opposite valley).
    """

    x0: float
    y0: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.x0 <= 1.0:
            raise AdmissibilityError(f"x0 must lie in [-1, 1], got {self.x0}")
        if not self.y0 > 0.0:
            raise AdmissibilityError(f"y0 must be positive, got {self.y0}")
        if not self.x0 ** 2 + self.y0 ** 2 > 1.0:
            raise AdmissibilityError(
                f"layer parameters require x0^2 + y0^2 > 1, got "
                f"{self.x0 ** 2 + self.y0 ** 2:.6g}"
            )


@dataclass(frozen=True)
class HandleParams:
    """Parameters of the punctured (one-handle) problem.

    Admissible iff (x0+1)^2 + y0^2 > 4, i.e. the center c is at distance
    greater than 1 from the valley vertex a0(0) where the boundary value
    vanishes.  This implies layer admissibility.
    """

    x0: float
    y0: float

    def __post_init__(self) -> None:
        if not -1.0 <= self.x0 <= 1.0:
            raise AdmissibilityError(f"x0 must lie in [-1, 1], got {self.x0}")
        if not self.y0 > 0.0:
            raise AdmissibilityError(f"y0 must be positive, got {self.y0}")
        if not (self.x0 + 1.0) ** 2 + self.y0 ** 2 > 4.0:
            raise AdmissibilityError(
                f"handle parameters require (x0+1)^2 + y0^2 > 4, got "
                f"{(self.x0 + 1.0) ** 2 + self.y0 ** 2:.6g}"
            )

    def layer_params(self) -> LayerParams:
        return LayerParams(self.x0, self.y0)


_VERTEX_FAMILIES = ("a0", "a1", "b0", "b1")


@dataclass(frozen=True)
class StripDomain:
    """The strip R x (0, y0) with its vertex families and isometries."""

    params: LayerParams | HandleParams

    @property
    def x0(self) -> float:
        return self.params.x0

    @property
    def y0(self) -> float:
        return self.params.y0

    @property
    def center(self) -> np.ndarray:
        """Midpoint c of [a1(0), b1(0)]."""
        return np.array([(self.x0 + 1.0) / 2.0, self.y0 / 2.0])

    def vertex(self, family: str, n: int) -> np.ndarray:
        """Closed-form coordinates of the n-th vertex of a family."""
        x0, y0 = self.x0, self.y0
        if family == "a0":
            return np.array([2.0 * n, 0.0])
        if family == "a1":
            return np.array([2.0 * n + 1.0, 0.0])
        if family == "b0":
            return np.array([x0 + (2.0 * n - 1.0), y0])
        if family == "b1":
            return np.array([x0 + 2.0 * n, y0])
        raise ValueError(f"unknown vertex family {family!r}, expected one of {_VERTEX_FAMILIES}")

    def s(self, p: np.ndarray) -> np.ndarray:
        """Point symmetry about the center c."""
        return 2.0 * self.center - np.asarray(p, dtype=float)

    def t(self, p: np.ndarray, k: int = 1) -> np.ndarray:
        """k-th power of the translation by (-2, 0)."""
        q = np.array(np.asarray(p, dtype=float), copy=True)
        q[..., 0] -= 2.0 * k
        return q

    # -- serrate boundary data ------------------------------------------------

    def boundary_value_bottom(self, x) -> np.ndarray:
        """Distance along y=0 to the nearest a0 vertex; 0 at a0, 1 at a1."""
        x = np.asarray(x, dtype=float)
        return np.abs(x - 2.0 * np.round(0.5 * x))

    def boundary_value_top(self, x) -> np.ndarray:
        """Distance along y=y0 to the nearest b0 vertex; 0 at b0, 1 at b1."""
        x = np.asarray(x, dtype=float)
        u = x - (self.x0 - 1.0)
        return np.abs(u - 2.0 * np.round(0.5 * u))

    def boundary_value(self, p) -> float:
        """Serrate value at a point on one of the two boundary lines."""
        p = np.asarray(p, dtype=float)
        if abs(p[1]) <= _SYM_TOL:
            return float(self.boundary_value_bottom(p[0]))
        if abs(p[1] - self.y0) <= _SYM_TOL:
            return float(self.boundary_value_top(p[0]))
        raise DomainError(f"point {p} is on neither boundary line y=0, y={self.y0}")


# ---------------------------------------------------------------------------
# unit-edge join paths
# ---------------------------------------------------------------------------


def _edge_lengths(vertices: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(vertices, axis=0), axis=1)


def _turn_crosses(vertices: np.ndarray) -> np.ndarray:
    """Cross products of consecutive edge vectors (one per interior vertex)."""
    d = np.diff(vertices, axis=0)
    return d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0]


def _single_sign(crosses: np.ndarray, tol: float = _TURN_TOL) -> bool:
    pos = np.any(crosses > tol)
    neg = np.any(crosses < -tol)
    return not (pos and neg)


@dataclass(frozen=True)
class JoinPath:
    """Convex path of unit edges from (0, 0) to (x, y), odd edge count."""

    vertices: np.ndarray
    record: dict = field(default_factory=dict)

    @property
    def edge_count(self) -> int:
        return len(self.vertices) - 1

    def edge_lengths(self) -> np.ndarray:
        return _edge_lengths(self.vertices)

    def max_unit_deviation(self) -> float:
        return float(np.max(np.abs(self.edge_lengths() - 1.0)))

    def is_convex(self, tol: float = _TURN_TOL) -> bool:
        if self.edge_count < 2:
            return True
        return _single_sign(_turn_crosses(self.vertices), tol)

    def in_box(self, y: float, tol: float = _UNIT_TOL) -> bool:
        """All vertices inside [-1, inf) x [0, y]."""
        v = self.vertices
        return bool(
            np.all(v[:, 0] >= -1.0 - tol)
            and np.all(v[:, 1] >= -tol)
            and np.all(v[:, 1] <= y + tol)
        )

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "edge_count": self.edge_count,
            "record": dict(self.record),
        }


def _subdivided(a: np.ndarray, b: np.ndarray, m: int) -> list[np.ndarray]:
    """Points a + k(b-a)/m for k=1..m (collinear unit steps when |b-a|=m)."""
    return [a + (b - a) * (k / m) for k in range(1, m + 1)]


def _axial_path(x: float, y: float) -> JoinPath:
    """Explicit isosceles construction for x = +-1.

    For x = 1 the path starts with the edge (0,0)->(1,0) and climbs to (1, y)
    through the apex p = (t, y/2), where |p - (1,0)| = |p - (1,y)| = m is the
    smallest integer >= y/2.  The apex is placed on the convex side
    (t = 1 + sqrt(m^2 - (y/2)^2)).  For x = -1 the mirror-style construction
    climbs from (0,0) to (0, y) through the apex and ends with the edge
    (0,y)->(-1,y).
    """
    m = max(1, math.ceil(y / 2.0 - _UNIT_TOL))
    half = y / 2.0
    spread = math.sqrt(max(m * m - half * half, 0.0))
    pts: list[np.ndarray] = [np.array([0.0, 0.0])]
    if x == 1.0:
        apex = np.array([1.0 + spread, half])
        pts.append(np.array([1.0, 0.0]))
        pts.extend(_subdivided(np.array([1.0, 0.0]), apex, m))
        pts.extend(_subdivided(apex, np.array([1.0, y]), m))
        record = {"case": "x=+1", "m": m, "t": float(apex[0])}
    else:
        apex = np.array([spread, half])
        pts.extend(_subdivided(np.array([0.0, 0.0]), apex, m))
        pts.extend(_subdivided(apex, np.array([0.0, y]), m))
        pts.append(np.array([-1.0, y]))
        record = {"case": "x=-1", "m": m, "t": float(apex[0])}
    return JoinPath(np.array(pts), record)


def _connector_gap(x: float, y: float, n: int, theta: float) -> float:
    """f(theta) = |(x+n, y) - n (cos theta, sin theta)|^2 - 1."""
    dx = x + n - n * math.cos(theta)
    dy = y - n * math.sin(theta)
    return dx * dx + dy * dy - 1.0


def _generic_path(x: float, y: float, n: int, theta: float) -> JoinPath:
    """Assemble the 2n+1 edge path: n edges at angle theta, a unit connector,
    then n unit edges leftward along y."""
    u = np.array([math.cos(theta), math.sin(theta)])
    pts = [u * k for k in range(n + 1)]
    top_start = np.array([x + n, y])
    pts.extend(top_start - np.array([k, 0.0]) for k in range(n + 1))
    return JoinPath(
        np.array(pts),
        {"case": "generic", "n": n, "theta": theta, "t": 1.0 / n},
    )


def join_path(x: float, y: float, n_max: int = 10 ** 6) -> JoinPath:
    """Convex unit-edge path from (0,0) to (x,y) with an odd edge count.

    Requires x in [-1, 1], y > 0 and x^2 + y^2 > 1.  For |x| < 1 candidate
    integers n are scanned upward starting at the first n for which the unit
    circle around (x+n, y) can reach the arc {n e^{i theta}}; for each
    feasible n the smallest root of the connector-gap function in
    (0, atan2(y, x+n)) is found by bisection, and the assembled path is
    accepted once it passes the convexity, containment and height checks.
    """
    if not -1.0 <= x <= 1.0:
        raise AdmissibilityError(f"x must lie in [-1, 1], got {x}")
    if not y > 0.0:
        raise AdmissibilityError(f"y must be positive, got {y}")
    if not x * x + y * y > 1.0:
        raise AdmissibilityError(
            f"join path requires x^2 + y^2 > 1, got {x * x + y * y:.6g}"
        )
    if x == 1.0 or x == -1.0:
        return _axial_path(x, y)

    r2 = x * x + y * y
    # Reachability: sqrt((x+n)^2 + y^2) <= n + 1, i.e. 2n(1-x) >= x^2+y^2-1.
    n0 = max(1, math.ceil((r2 - 1.0) / (2.0 * (1.0 - x))))
    for n in range(n0, n_max + 1):
        q = math.hypot(x + n, y)
        if abs(q - n) > 1.0:
            continue
        theta_star = math.atan2(y, x + n)
        lo, hi = 0.0, theta_star
        f_hi = _connector_gap(x, y, n, hi)
        if f_hi > 0.0:
            continue
        # f(0) = x^2 + y^2 - 1 > 0; bisect for the smallest root.
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = _connector_gap(x, y, n, mid)
            if abs(f_mid) <= 1e-12 or hi - lo <= 1e-15:
                hi = mid
                break
            if f_mid > 0.0:
                lo = mid
            else:
                hi = mid
        theta = hi
        if not n * math.sin(theta) < y:
            continue
        path = _generic_path(x, y, n, theta)
        if (
            path.max_unit_deviation() <= _UNIT_TOL
            and path.is_convex()
            and path.in_box(y)
        ):
            return path
    raise ConstructionError(
        f"no unit-edge join path found for ({x}, {y}) with n <= {n_max}"
    )


# ---------------------------------------------------------------------------
# exhaustion polygons
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExhaustionPolygon:
    """Convex unit-edge polygon capping the strip between a1(-n) and b1(n).

    ``vertices`` lists the boundary cycle counterclockwise without repeating
    the first vertex; the cycle is symmetric under the point symmetry s.
    """

    vertices: np.ndarray
    index: int
    center: np.ndarray
    cap_record: dict = field(default_factory=dict)

    @property
    def edge_count(self) -> int:
        return len(self.vertices)

    def edge_lengths(self) -> np.ndarray:
        closed = np.vstack([self.vertices, self.vertices[:1]])
        return _edge_lengths(closed)

    def max_unit_deviation(self) -> float:
        return float(np.max(np.abs(self.edge_lengths() - 1.0)))

    def is_convex(self, tol: float = _TURN_TOL) -> bool:
        closed = np.vstack([self.vertices, self.vertices[:2]])
        return _single_sign(_turn_crosses(closed), tol)

    def s_symmetry_residual(self) -> float:
        """Vertex-cycle mismatch under s.

        A point symmetry is a rotation by pi, so it maps the oriented vertex
        cycle onto itself by the antipodal cyclic shift.  Returns the max
        vertex distance between the s-image and the shifted cycle.
        """
        v = self.vertices
        w = 2.0 * self.center - v
        m = len(v)
        # locate the image of vertex 0 in the cycle
        d0 = np.linalg.norm(v - w[0], axis=1)
        r = int(np.argmin(d0))
        idx = (r + np.arange(m)) % m
        return float(np.max(np.linalg.norm(w - v[idx], axis=1)))

    def contains_point(self, p, tol: float = 1e-9) -> bool:
        """Point-in-polygon test for the convex counterclockwise cycle."""
        v = self.vertices
        d = np.roll(v, -1, axis=0) - v
        rel = np.asarray(p, dtype=float) - v
        cross = d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]
        return bool(np.all(cross >= -tol))

    def contains_parallelogram(self, domain: StripDomain) -> bool:
        n = self.index
        corners = [
            domain.vertex("a0", n),
            domain.vertex("b1", n),
            domain.vertex("b0", -n + 1),
            domain.vertex("a1", -n),
        ]
        return all(self.contains_point(c) for c in corners)

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "index": self.index,
            "edge_count": self.edge_count,
            "cap_record": dict(self.cap_record),
        }


def exhaustion_domain(domain: StripDomain, n: int, n_max: int = 10 ** 6) -> ExhaustionPolygon:
    """Assemble the n-th exhaustion polygon.

    Boundary cycle: the bottom segment [a1(-n), a0(n)] in unit steps, the cap
    path gamma translated to join a0(n) to b1(n), the top segment
    [b1(n), b0(-n+1)] in unit steps, and the point-symmetric cap s(gamma)
    back down to a1(-n).
    """
    if n < 1:
        raise ValueError(f"exhaustion index must be >= 1, got {n}")
    gamma = join_path(domain.x0, domain.y0, n_max=n_max)
    a0n = domain.vertex("a0", n)
    cap = gamma.vertices + a0n          # a0(n) -> b1(n)
    s_cap = domain.s(cap)               # b0(-n+1) -> a1(-n)

    bottom_x = np.arange(-2 * n + 1, 2 * n + 1, dtype=float)
    bottom = np.column_stack([bottom_x, np.zeros_like(bottom_x)])
    top_x = domain.x0 + np.arange(2 * n, -2 * n, -1, dtype=float)
    top = np.column_stack([top_x, np.full_like(top_x, domain.y0)])

    cycle = np.vstack([bottom, cap[1:], top[1:], s_cap[1:-1]])
    return ExhaustionPolygon(
        vertices=cycle,
        index=n,
        center=domain.center,
        cap_record=dict(gamma.record),
    )

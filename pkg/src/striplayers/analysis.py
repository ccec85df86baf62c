"""Geometric verification of the constructed surfaces.

Checks the claims that make the construction what it is: the solution's
symmetries, the closed convex ring curve in the z=1 plane, the embeddedness
arrangement of the midline image curves, the convergence of the punctured
solution to the periodic layer under translations, the handle type, and the
vertical period of the reflection-extended surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .conjugation import SurfaceMesh
from .meshing import BOTTOM, LEFT, RIGHT, RING, TOP, TriMesh

__all__ = [
    "CapabilityError",
    "GammaReport",
    "EmbeddingReport",
    "AsymptoticsReport",
    "HandleTypeLabel",
    "symmetry_residual",
    "gamma_report",
    "embedding_report",
    "asymptotics_report",
    "classify_handle",
    "reflect_extend",
    "shift_invariance_residual",
]


class CapabilityError(RuntimeError):
    """The mesh does not carry the pairing or marker the check needs."""


# ---------------------------------------------------------------------------
# symmetries
# ---------------------------------------------------------------------------


def symmetry_residual(fld, sym: str) -> float:
    """max |v_i - v_{sigma(i)}| for the requested node pairing."""
    mesh = fld.mesh
    perm = {
        "identity": np.arange(mesh.node_count),
        "s": mesh.sym_pair,
        "x-mirror": mesh.mirror_x,
        "y-mirror": mesh.mirror_y,
    }.get(sym, "unknown")
    if isinstance(perm, str):
        raise ValueError(f"unknown symmetry {sym!r}")
    if perm is None:
        raise CapabilityError(f"mesh carries no pairing for symmetry {sym!r}")
    return float(np.max(np.abs(fld.values - fld.values[perm])))


# ---------------------------------------------------------------------------
# the ring curve
# ---------------------------------------------------------------------------


@dataclass
class GammaReport:
    closure_gap: float
    max_height_deviation: float
    total_turning: float
    total_absolute_turning: float
    single_sign: bool
    simple: bool
    node_count: int

    def to_json(self) -> dict:
        return {
            "closure_gap": self.closure_gap,
            "max_height_deviation": self.max_height_deviation,
            "total_turning": self.total_turning,
            "total_absolute_turning": self.total_absolute_turning,
            "single_sign": self.single_sign,
            "simple": self.simple,
            "node_count": self.node_count,
        }


def _turning_angles(poly: np.ndarray) -> np.ndarray:
    d = np.diff(np.vstack([poly, poly[:1]]), axis=0)
    d2 = np.vstack([d, d[:1]])
    ang = np.empty(len(poly))
    for i in range(len(poly)):
        a, b = d2[i], d2[i + 1]
        ang[i] = math.atan2(a[0] * b[1] - a[1] * b[0], float(a @ b))
    return ang


def _segments(poly: np.ndarray, closed: bool) -> np.ndarray:
    pts = np.vstack([poly, poly[:1]]) if closed else poly
    return np.stack([pts[:-1], pts[1:]], axis=1)


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_cross(a0, a1, b0, b1, tol=1e-13) -> bool:
    """Proper or touching intersection of two closed segments."""
    d1 = _orient(b0, b1, a0)
    d2 = _orient(b0, b1, a1)
    d3 = _orient(a0, a1, b0)
    d4 = _orient(a0, a1, b1)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True

    def on_seg(p, q, r):
        return (
            abs(_orient(p, q, r)) <= tol
            and min(p[0], q[0]) - tol <= r[0] <= max(p[0], q[0]) + tol
            and min(p[1], q[1]) - tol <= r[1] <= max(p[1], q[1]) + tol
        )

    return (
        on_seg(b0, b1, a0)
        or on_seg(b0, b1, a1)
        or on_seg(a0, a1, b0)
        or on_seg(a0, a1, b1)
    )


def _polyline_intersections(
    pa: np.ndarray,
    pb: np.ndarray,
    ia: np.ndarray,
    ib: np.ndarray,
    closed_a: bool = False,
    closed_b: bool = False,
) -> int:
    """Count crossing segment pairs, skipping pairs that share a mesh node."""
    sa = _segments(pa, closed_a)
    sb = _segments(pb, closed_b)
    na = np.column_stack([ia, np.roll(ia, -1)]) if closed_a else np.column_stack([ia[:-1], ia[1:]])
    nb = np.column_stack([ib, np.roll(ib, -1)]) if closed_b else np.column_stack([ib[:-1], ib[1:]])
    count = 0
    for i in range(len(sa)):
        for j in range(len(sb)):
            if set(na[i]) & set(nb[j]):
                continue
            if _segments_cross(sa[i, 0], sa[i, 1], sb[j, 0], sb[j, 1]):
                count += 1
    return count


def _self_intersects(poly: np.ndarray) -> bool:
    segs = _segments(poly, closed=True)
    n = len(segs)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(segs[i, 0], segs[i, 1], segs[j, 0], segs[j, 1]):
                return True
    return False


def gamma_report(surface: SurfaceMesh) -> GammaReport:
    """Geometry of the ring image: closed, planar at z=1, convex turning."""
    if "gamma" not in surface.curves:
        raise CapabilityError("surface has no ring curve")
    ring = surface.curves["gamma"][0]
    pos = surface.positions[ring]
    ang = _turning_angles(pos[:, :2])
    return GammaReport(
        closure_gap=0.0,
        max_height_deviation=float(np.max(np.abs(pos[:, 2] - 1.0))),
        total_turning=float(ang.sum()),
        total_absolute_turning=float(np.abs(ang).sum()),
        single_sign=bool(np.all(ang >= -1e-12) or np.all(ang <= 1e-12)),
        simple=not _self_intersects(pos[:, :2]),
        node_count=len(ring),
    )


# ---------------------------------------------------------------------------
# embeddedness arrangement
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingReport:
    intersections: dict
    injectivity_pairs: int
    injectivity_min_ratio: float
    side_counts: dict
    separated: bool
    lipschitz_bound: float
    seed: int

    def to_json(self) -> dict:
        return {
            "intersections": self.intersections,
            "injectivity_pairs": self.injectivity_pairs,
            "injectivity_min_ratio": self.injectivity_min_ratio,
            "side_counts": self.side_counts,
            "separated": self.separated,
            "lipschitz_bound": self.lipschitz_bound,
            "seed": self.seed,
        }


def _crossing_parity(barrier: np.ndarray, anchor: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Parity of crossings between segment (point, anchor) and the barrier
    polyline: 0 means the point sees the anchor without crossing it."""
    segs = _segments(barrier, closed=False)
    out = np.zeros(len(pts), dtype=np.int64)
    for i, p in enumerate(pts):
        n = 0
        for s0, s1 in segs:
            if _segments_cross(p, anchor, s0, s1):
                n += 1
        out[i] = n % 2
    return out


def _ring_lower_arc(mesh: TriMesh) -> np.ndarray:
    ring = mesh.loops[0]
    cy = mesh.center[1]
    lower = mesh.nodes[ring, 1] <= cy + 1e-12
    # the cycle starts at the left midline node and runs through the lower
    # half first; take that contiguous run
    run = len(ring)
    for i, flag in enumerate(lower):
        if not flag:
            run = i
            break
    return ring[:run]


def embedding_report(surface: SurfaceMesh, samples: int = 100, seed: int = 2024) -> EmbeddingReport:
    """Planar arrangement of the midline images and the ring projection.

    Counts exact pairwise crossings (shared mesh nodes excluded), samples
    graph injectivity per half, and classifies sample points from the lower
    and upper halves by crossing parity against the closed curve made of the
    left midline image, the lower ring arc, the right midline image and a
    far rectangular return path.
    """
    mesh = surface.planar
    if mesh is None or "midline_left" not in mesh.paths:
        raise CapabilityError("surface does not carry handle midline paths")
    fldv = surface.positions[:, 2]
    proj = surface.positions[:, :2]
    left = mesh.paths["midline_left"]
    right = mesh.paths["midline_right"]
    ring = mesh.loops[0]
    arc = _ring_lower_arc(mesh)

    inter = {
        "left-right": _polyline_intersections(proj[left], proj[right], left, right),
        "left-gamma": _polyline_intersections(
            proj[left], proj[ring], left, ring, closed_b=True
        ),
        "right-gamma": _polyline_intersections(
            proj[right], proj[ring], right, ring, closed_b=True
        ),
    }

    # sampled per-half injectivity on well resolved nodes
    rng = np.random.default_rng(seed)
    cy = mesh.center[1]
    eps = mesh.params.get("eps", 0.0)
    L = mesh.params.get("L", 0.0)
    cx = mesh.center[0]
    resolved = _resolved_nodes(surface)
    good = (
        resolved
        & (np.abs(mesh.nodes[:, 0] - cx) < L - 1.0)
        & (np.linalg.norm(mesh.nodes - mesh.center, axis=1) > 3 * eps)
    )
    min_ratio = math.inf
    pair_count = 0
    for half in (mesh.nodes[:, 1] < cy, mesh.nodes[:, 1] > cy):
        cand = np.nonzero(good & half)[0]
        pairs = rng.choice(cand, size=(samples, 2))
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        dplan = np.linalg.norm(mesh.nodes[pairs[:, 0]] - mesh.nodes[pairs[:, 1]], axis=1)
        dproj = np.linalg.norm(proj[pairs[:, 0]] - proj[pairs[:, 1]], axis=1)
        min_ratio = min(min_ratio, float(np.min(dproj / dplan)))
        pair_count += len(pairs)

    # side classification: parity of barrier crossings on the way to an
    # anchor point taken deep inside the lower-half image
    barrier = np.vstack([proj[left], proj[arc[1:]], proj[right[::-1]][1:]])
    spine = mesh.paths["spine_lower"]
    anchor = proj[spine[len(spine) // 2]]

    counts = {}
    parities = {}
    margin = 0.1 * mesh.params.get("y0", 1.0)
    for name, half in (
        ("D1", mesh.nodes[:, 1] < cy - margin),
        ("D2", mesh.nodes[:, 1] > cy + margin),
    ):
        cand = np.nonzero(good & half)[0]
        pick = rng.choice(cand, size=min(samples, len(cand)), replace=False)
        par = _crossing_parity(barrier, anchor, proj[pick])
        counts[name] = {"odd": int(par.sum()), "total": int(len(par))}
        parities[name] = par
    separated = bool(
        np.all(parities["D1"] == 0) and np.all(parities["D2"] == 1)
    )

    steps = np.abs(np.diff(mesh.nodes[left, 0]))
    hops = np.linalg.norm(np.diff(proj[left], axis=0), axis=1)
    lip = float(np.max(hops / steps))

    return EmbeddingReport(
        intersections=inter,
        injectivity_pairs=pair_count,
        injectivity_min_ratio=min_ratio,
        side_counts=counts,
        separated=separated,
        lipschitz_bound=lip,
        seed=seed,
    )


def _resolved_nodes(surface: SurfaceMesh) -> np.ndarray:
    """Nodes whose entire star is clearly timelike (slack bounded below)."""
    mesh = surface.planar
    ok = np.ones(mesh.node_count, dtype=bool)
    rho = getattr(surface, "_rho_cache", None)
    if rho is None:
        # reconstruct per-triangle gradient magnitude from the heights
        from .maxsolve import _p1_operators

        _, sg = _p1_operators(mesh)
        g = np.einsum("tc,tcd->td", surface.positions[mesh.triangles, 2], sg)
        rho = np.sum(g * g, axis=1)
        surface._rho_cache = rho
    bad = rho > 0.9
    for t in np.nonzero(bad)[0]:
        ok[mesh.triangles[t]] = False
    return ok


# ---------------------------------------------------------------------------
# asymptotics
# ---------------------------------------------------------------------------


@dataclass
class AsymptoticsReport:
    residuals: np.ndarray
    monotone: bool
    window_size: int

    def to_json(self) -> dict:
        return {
            "residuals": self.residuals.tolist(),
            "monotone": self.monotone,
            "window_size": self.window_size,
        }


def asymptotics_report(fld, layer_fld, n_max: int | None = None) -> AsymptoticsReport:
    """Windowed distance between the translated field and the periodic layer.

    r(n) = max over window nodes p of |v(p - (2n, 0)) - v_layer(p)|; the
    window is one periodic cell with the puncture neighborhood removed.
    """
    lmesh = layer_fld.mesh
    mesh = fld.mesh
    cx = float(mesh.center[0]) if mesh.center is not None else 1.0
    L = mesh.params.get("L")
    if n_max is None:
        if L is None:
            raise ValueError("n_max is required when the field has no truncation")
        n_max = int(math.floor((L - 0.5 - cx) / 2.0))
    eps = mesh.params.get("eps", 0.0)
    excl = max(3.0 * eps, 3.0 * lmesh.h)
    c = lmesh.center
    # represent the periodic window centered on the puncture, so only the
    # n = 0 term sees its neighborhood and each shift clears it by a full
    # period
    window = lmesh.nodes.copy()
    window[:, 0] = c[0] - 1.0 + np.mod(window[:, 0] - c[0] + 1.0, 2.0)
    keep = np.linalg.norm(window - c, axis=1) > excl
    window = window[keep]
    base = layer_fld.values[keep]
    if L is not None:
        min_x = window[:, 0].min() - 2.0 * n_max
        if min_x < cx - L - 1e-9:
            raise ValueError("window escapes the truncated strip")
    res = np.empty(n_max + 1)
    for n in range(n_max + 1):
        pts = window.copy()
        pts[:, 0] -= 2.0 * n
        res[n] = float(np.max(np.abs(fld.evaluate(pts) - base)))
    return AsymptoticsReport(
        residuals=res,
        monotone=bool(np.all(np.diff(res) < 0.0)),
        window_size=int(keep.sum()),
    )


# ---------------------------------------------------------------------------
# handle type
# ---------------------------------------------------------------------------


@dataclass
class HandleTypeLabel:
    label: str
    endpoint_values: tuple
    components: list
    symmetric: bool

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "endpoint_values": list(self.endpoint_values),
            "components": [c.tolist() for c in self.components],
            "symmetric": self.symmetric,
        }


def classify_handle(surface: SurfaceMesh, params=None) -> HandleTypeLabel:
    """Classify the handle by where the symmetry-plane trace attaches.

    The trace is the vertical line through the puncture center; it splits at
    the ring into two components.  Both ending on height-1 boundary curves
    gives a minus type handle, both on height-0 curves a plus type;
    anything else is reported unclassified with the raw endpoint heights.
    """
    mesh = surface.planar
    if mesh is None or mesh.cut_path is None:
        raise CapabilityError("surface does not carry a symmetry-plane trace")
    upper = mesh.cut_path
    lower = mesh.paths["spine_lower"]
    v = surface.positions[:, 2]
    v_top = float(v[upper[-1]])
    v_bottom = float(v[lower[-1]])
    tol = 1e-9
    if abs(v_top - 1.0) <= tol and abs(v_bottom - 1.0) <= tol:
        label = "minus"
    elif abs(v_top) <= tol and abs(v_bottom) <= tol:
        label = "plus"
    else:
        label = "unclassified"
    sym = mesh.sym_pair
    symmetric = bool(
        sym is not None
        and len(upper) == len(lower)
        and np.array_equal(sym[np.asarray(upper)], np.asarray(lower))
    )
    return HandleTypeLabel(
        label=label,
        endpoint_values=(v_bottom, v_top),
        components=[np.asarray(lower), np.asarray(upper)],
        symmetric=symmetric,
    )


# ---------------------------------------------------------------------------
# reflection extension
# ---------------------------------------------------------------------------


def reflect_extend(surface: SurfaceMesh, copies: int) -> SurfaceMesh:
    """Union of successive reflections across z = 1, 2, ..., copies.

    Seam nodes merge; curve tags on interior seams disappear.  The composed
    reflections translate the original block by (0, 0, 2), so for copies >= 2
    the node set is invariant under that shift wherever the shifted slab is
    present.
    """
    if copies < 1:
        raise ValueError("copies must be >= 1")
    positions = surface.positions.copy()
    triangles = surface.triangles.copy()
    block_pos = surface.positions.copy()     # block-local coordinates
    block_tris = surface.triangles.copy()    # block-local indices
    for j in range(1, copies + 1):
        mirrored = block_pos.copy()
        mirrored[:, 2] = 2.0 * j - mirrored[:, 2]
        tree = cKDTree(positions)
        dist, idx = tree.query(mirrored, k=1)
        remap = np.where(dist <= 1e-12, idx, -1)
        fresh = np.nonzero(remap < 0)[0]
        remap[fresh] = len(positions) + np.arange(len(fresh))
        positions = np.vstack([positions, mirrored[fresh]])
        block_tris = block_tris[:, ::-1]  # each mirror flips the orientation
        triangles = np.vstack([triangles, remap[block_tris]])
        block_pos = mirrored
    curves: dict[str, list[np.ndarray]] = {}
    for name, polys in surface.curves.items():
        kept = []
        for poly in polys:
            z = surface.positions[poly, 2]
            if np.all(np.abs(z) <= 1e-12):
                kept.append(poly)  # the z = 0 plane stays a boundary plane
        if kept:
            curves[name] = kept
    return SurfaceMesh(
        positions=positions,
        triangles=triangles,
        curves=curves,
        planar=surface.planar,
        basepoint=surface.basepoint,
    )


def shift_invariance_residual(surface: SurfaceMesh) -> float:
    """max distance from shifted nodes (0,0,2) to the node set, over nodes
    whose shifted image stays within the height range."""
    pos = surface.positions
    zmax = pos[:, 2].max()
    shifted = pos[pos[:, 2] <= zmax - 2.0 + 1e-12] + np.array([0.0, 0.0, 2.0])
    if len(shifted) == 0:
        return 0.0
    tree = cKDTree(pos)
    dist, _ = tree.query(shifted, k=1)
    return float(np.max(dist))

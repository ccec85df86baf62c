"""Triangulations of the periodic layer cell and the punctured handle strip.

Both meshes are built from tensor grids whose x stations include every
serration vertex, so the serrated Dirichlet data is exact at mesh nodes.
The handle strip is meshed on the lower half (below the midline y = y0/2)
and reflected through the center c, which makes the point-symmetry node
pairing exact by construction.  The puncture is an epsilon ring surrounded
by a radially graded patch that conforms to the structured grid along a
small axis-aligned rectangle.

Internally the handle mesh works in offsets relative to c; mirrored offsets
are exact floating negations, so symmetry pairings match to machine
precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .domain import HandleParams, LayerParams, StripDomain

__all__ = [
    "MeshError",
    "MeshParams",
    "TriMesh",
    "mesh_layer_cell",
    "mesh_handle_strip",
    "mesh_annulus",
    "refine",
    "BOTTOM",
    "TOP",
    "LEFT",
    "RIGHT",
    "RING",
    "CENTER",
]

BOTTOM = "bottom"
TOP = "top"
LEFT = "left-truncation"
RIGHT = "right-truncation"
RING = "puncture-ring"
CENTER = "puncture-center"

_PAIR_TOL = 1e-12


class MeshError(RuntimeError):
    """Mesh parameters are infeasible for the requested domain."""


@dataclass(frozen=True)
class MeshParams:
    """Mesh resolution and puncture-patch controls.

    h: target edge length.  grading: ratio (<1) by which radial intervals
    shrink toward the puncture ring.  eps: puncture ring radius.  L: half
    width of the truncated handle strip, a positive even integer so the
    truncation sides align with the horizontal period.
    """

    h: float = 0.1
    grading: float = 0.7
    eps: float = 0.05
    L: int = 8

    def __post_init__(self) -> None:
        if not self.h > 0.0:
            raise MeshError(f"mesh size must be positive, got {self.h}")
        if not 0.0 < self.grading < 1.0:
            raise MeshError(f"grading ratio must lie in (0,1), got {self.grading}")
        if not self.eps > 0.0:
            raise MeshError(f"ring radius must be positive, got {self.eps}")


@dataclass
class TriMesh:
    """Triangle mesh with boundary tags, symmetry pairings and marked paths.

    ``tags`` maps tag names to sorted node index arrays.  ``loops`` are
    closed node cycles around the puncture, innermost (the ring) first; the
    first node is not repeated.  ``paths`` are open node paths (midline
    halves, the vertical spine through the puncture).  ``cut_path`` runs
    from the top of the ring to the top boundary.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    tags: dict[str, np.ndarray]
    h: float
    kind: str
    params: dict = field(default_factory=dict)
    center: np.ndarray | None = None
    periodic_pairs: np.ndarray | None = None
    sym_pair: np.ndarray | None = None
    mirror_x: np.ndarray | None = None
    mirror_y: np.ndarray | None = None
    loops: list = field(default_factory=list)
    cut_path: np.ndarray | None = None
    paths: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(u * v, axis=1) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
        return float(np.min(angles))

    def edges(self) -> np.ndarray:
        """Unique undirected edges as (E, 2) with i < j."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def node_tree(self) -> cKDTree:
        return cKDTree(self.nodes)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "h": self.h,
            "params": self.params,
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "tags": {k: v.tolist() for k, v in self.tags.items()},
            "loops": [l.tolist() for l in self.loops],
            "paths": {k: v.tolist() for k, v in self.paths.items()},
        }
        if self.center is not None:
            out["center"] = self.center.tolist()
        if self.periodic_pairs is not None:
            out["periodic_pairs"] = self.periodic_pairs.tolist()
        if self.sym_pair is not None:
            out["sym_pair"] = self.sym_pair.tolist()
        if self.mirror_x is not None:
            out["mirror_x"] = self.mirror_x.tolist()
        if self.mirror_y is not None:
            out["mirror_y"] = self.mirror_y.tolist()
        if self.cut_path is not None:
            out["cut_path"] = self.cut_path.tolist()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "TriMesh":
        def arr(key, dtype=float):
            return np.asarray(data[key], dtype=dtype) if key in data else None

        return cls(
            nodes=np.asarray(data["nodes"], dtype=float),
            triangles=np.asarray(data["triangles"], dtype=np.int64),
            tags={k: np.asarray(v, dtype=np.int64) for k, v in data["tags"].items()},
            h=float(data["h"]),
            kind=data["kind"],
            params=dict(data.get("params", {})),
            center=arr("center"),
            periodic_pairs=arr("periodic_pairs", np.int64),
            sym_pair=arr("sym_pair", np.int64),
            mirror_x=arr("mirror_x", np.int64),
            mirror_y=arr("mirror_y", np.int64),
            loops=[np.asarray(l, dtype=np.int64) for l in data.get("loops", [])],
            cut_path=arr("cut_path", np.int64),
            paths={k: np.asarray(v, dtype=np.int64) for k, v in data.get("paths", {}).items()},
        )

    def content_hash(self) -> str:
        import hashlib

        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.nodes).tobytes())
        m.update(np.ascontiguousarray(self.triangles.astype(np.int64)).tobytes())
        return m.hexdigest()


# ---------------------------------------------------------------------------
# grid helpers
# ---------------------------------------------------------------------------


def _dedupe_sorted(values, tol: float = _PAIR_TOL) -> np.ndarray:
    vals = np.sort(np.asarray(values, dtype=float))
    keep = [vals[0]]
    for v in vals[1:]:
        if v - keep[-1] > tol:
            keep.append(v)
    return np.asarray(keep)

def _fill_gaps(values: np.ndarray, h: float) -> np.ndarray:
    """Insert equally spaced points so no gap exceeds h; keeps the inputs."""
    out = [values[0]]
    for a, b in zip(values[:-1], values[1:]):
        parts = max(1, math.ceil((b - a) / h - 1e-12))
        for k in range(1, parts):
            out.append(a + (b - a) * (k / parts))
        out.append(b)
    return np.asarray(out)


def _orient_ccw(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flip = area2 < 0.0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _match_permutation(nodes: np.ndarray, images: np.ndarray, tol: float) -> np.ndarray | None:
    """Permutation p with nodes[p[i]] == images[i] within tol, else None."""
    tree = cKDTree(nodes)
    dist, idx = tree.query(images, k=1)
    if np.max(dist) > tol:
        return None
    if len(np.unique(idx)) != len(nodes):
        return None
    return idx.astype(np.int64)


# ---------------------------------------------------------------------------
# layer cell
# ---------------------------------------------------------------------------


def _quad_split(v00, v10, v11, v01, flip: bool):
    """Two triangles of an axis-aligned quad; ``flip`` mirrors the diagonal
    so that mirror-image cells get mirror-image triangulations."""
    if flip:
        return [(v10, v11, v01), (v10, v01, v00)]
    return [(v00, v10, v11), (v00, v11, v01)]


def _diagonal_flip(xm_rel: float, ym_rel: float) -> bool:
    """2-periodic union-jack diagonal pattern in coordinates relative to the
    cell center c.

    The pattern is invariant under the half-turn about c and under both
    mirrors through c's axes, and it tiles with the horizontal period, so
    the periodic cell and the truncated strip triangulate identically far
    from the puncture.
    """
    u = xm_rel - 2.0 * math.floor(xm_rel / 2.0)
    return (u > 1.0) != (ym_rel > 0.0)


def _tensor_mesh(xs: np.ndarray, ys: np.ndarray, center=None):
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nid = lambda i, j: i * ny + j
    tris = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            flip = False
            if center is not None:
                flip = _diagonal_flip(
                    0.5 * (xs[i] + xs[i + 1]) - center[0],
                    0.5 * (ys[j] + ys[j + 1]) - center[1],
                )
            tris.extend(
                _quad_split(nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1), flip)
            )
    return nodes, np.asarray(tris, dtype=np.int64), nid


def mesh_layer_cell(params: LayerParams, mp: MeshParams) -> TriMesh:
    """Mesh of the periodic cell [0,2] x [0,y0] with left/right pairing.

    Serration vertices inside the cell (a vertices on the bottom, b vertices
    on the top) are grid stations, hence exact mesh nodes.
    """
    dom = StripDomain(params)
    x0, y0 = params.x0, params.y0
    if mp.h >= 1.0:
        raise MeshError(
            f"mesh size h={mp.h} cannot resolve the unit serration edges"
        )

    mand_x = {0.0, 1.0, 2.0}
    for fam in ("b0", "b1"):
        for n in range(-2, 4):
            x = float(dom.vertex(fam, n)[0])
            if -_PAIR_TOL <= x <= 2.0 + _PAIR_TOL:
                mand_x.add(min(max(x, 0.0), 2.0))
    xs = _fill_gaps(_dedupe_sorted(list(mand_x)), mp.h)

    ylow = _fill_gaps(np.asarray([0.0, y0 / 2.0]), mp.h)
    ys = np.concatenate([ylow, (y0 - ylow[:-1])[::-1]])

    nodes, tris, nid = _tensor_mesh(xs, ys, center=dom.center)
    nx, ny = len(xs), len(ys)

    tags = {
        BOTTOM: np.asarray([nid(i, 0) for i in range(nx)], dtype=np.int64),
        TOP: np.asarray([nid(i, ny - 1) for i in range(nx)], dtype=np.int64),
        LEFT: np.asarray([nid(0, j) for j in range(ny)], dtype=np.int64),
        RIGHT: np.asarray([nid(nx - 1, j) for j in range(ny)], dtype=np.int64),
    }
    pairs = np.asarray(
        [[nid(0, j), nid(nx - 1, j)] for j in range(ny)], dtype=np.int64
    )
    j_mid = len(ylow) - 1
    midline = np.asarray([nid(i, j_mid) for i in range(nx)], dtype=np.int64)

    mesh = TriMesh(
        nodes=nodes,
        triangles=_orient_ccw(nodes, tris),
        tags=tags,
        h=float(mp.h),
        kind="layer-cell",
        params={"x0": x0, "y0": y0, "h": mp.h, "mx_axis": 1.0, "my_axis": y0 / 2.0},
        center=dom.center,
        periodic_pairs=pairs,
        paths={"midline": midline},
    )
    # opportunistic mirror pairings (exact when the station sets are symmetric)
    mesh.mirror_y = _match_permutation(
        nodes, np.column_stack([nodes[:, 0], y0 - nodes[:, 1]]), _PAIR_TOL
    )
    mesh.mirror_x = _match_permutation(
        nodes, np.column_stack([2.0 - nodes[:, 0], nodes[:, 1]]), _PAIR_TOL
    )
    return mesh


# ---------------------------------------------------------------------------
# punctured handle strip
# ---------------------------------------------------------------------------


def _grading_levels(
    span: float, inner: float, outer: float, q: float, kmax: int = 64
) -> np.ndarray:
    """Normalized radial stations 0 = ring < ... < 1 = outer boundary.

    Interval widths start at ``inner`` next to the ring, grow outward by 1/q
    and are capped at ``outer`` (all absolute, relative to the reference
    ``span``), so the outer layers stay near isotropic out to the patch
    rectangle.
    """
    cap = outer / span
    widths = []
    cur = min(max(inner, 1e-3 * span) / span, cap)
    total = 0.0
    while total < 1.0 and len(widths) < kmax:
        widths.append(cur)
        total += cur
        cur = min(cur / q, cap)
    w = np.asarray(widths) / total
    return np.concatenate([[0.0], np.cumsum(w)])


def mesh_handle_strip(params: HandleParams, mp: MeshParams) -> TriMesh:
    """Mesh of [c_x - L, c_x + L] x [0, y0] minus the eps disc at c.

    Built on the lower half and reflected through c; ring nodes lie exactly
    on the eps circle; the radial patch conforms to the structured grid on an
    axis-aligned rectangle around the puncture.
    """
    dom = StripDomain(params)
    x0, y0 = params.x0, params.y0
    cx, cy = dom.center
    L = mp.L
    if not (isinstance(L, int) and L >= 4 and L % 2 == 0):
        raise MeshError(f"truncation half-width L must be an even integer >= 4, got {L}")
    if not mp.eps < min(1.0, y0 / 4.0):
        raise MeshError(
            f"ring radius eps={mp.eps} violates the margin rule eps < min(1, y0/4)"
        )
    if mp.h >= 1.0:
        raise MeshError(f"mesh size h={mp.h} cannot resolve the unit serration edges")

    # --- symmetric grids in offsets relative to c ---------------------------
    mand_d = {0.0, float(L)}
    for k in range(math.floor(cx), math.ceil(cx + L) + 1):
        d = float(k) - cx
        if _PAIR_TOL < d < L - _PAIR_TOL:
            mand_d.add(d)
    for m in range(math.floor(cx - x0), math.ceil(cx + L - x0) + 1):
        d = (x0 + float(m)) - cx
        if _PAIR_TOL < d < L - _PAIR_TOL:
            mand_d.add(d)
    ds = _fill_gaps(_dedupe_sorted(list(mand_d)), mp.h)
    x_off = np.concatenate([-ds[::-1], ds[1:]])

    ys = _fill_gaps(np.asarray([0.0, y0 / 2.0]), mp.h)   # 0 .. y0/2
    y_off = -ys[::-1]                                     # -y0/2 .. 0

    # --- patch rectangle -----------------------------------------------------
    target = max(2.0 * mp.eps, 2.0 * mp.h)
    cand_x = ds[(ds >= target - _PAIR_TOL) & (ds < L - _PAIR_TOL)]
    cand_y = ys[(ys >= target - _PAIR_TOL) & (ys < y0 / 2.0 - _PAIR_TOL)]
    if len(cand_x) == 0 or len(cand_y) == 0:
        raise MeshError(
            f"no room for the puncture patch (eps={mp.eps}, h={mp.h}, "
            f"L={L}, y0={y0})"
        )
    # keep the patch rectangle near square; skewed patches squeeze the ray
    # angles at its corners and degrade the triangle quality
    t2 = max(float(cand_x[0]), float(cand_y[0])) * (1.0 - 1e-12)
    Rx = float(cand_x[cand_x >= t2][0]) if np.any(cand_x >= t2) else float(cand_x[-1])
    Ry = float(cand_y[cand_y >= t2][0]) if np.any(cand_y >= t2) else float(cand_y[-1])
    if mp.eps >= min(Rx, Ry):
        raise MeshError(f"ring radius eps={mp.eps} does not fit inside the patch")

    iL = int(np.searchsorted(x_off, -Rx))
    iR = int(np.searchsorted(x_off, Rx))
    jB = int(np.searchsorted(y_off, -Ry))
    jT = len(y_off) - 1
    assert abs(x_off[iL] + Rx) < _PAIR_TOL and abs(x_off[iR] - Rx) < _PAIR_TOL
    assert abs(y_off[jB] + Ry) < _PAIR_TOL

    # --- lower half: structured part (lazy node creation) -------------------
    node_off: list[tuple[float, float]] = []
    grid_ids: dict[tuple[int, int], int] = {}

    def nid(i: int, j: int) -> int:
        key = (i, j)
        if key not in grid_ids:
            grid_ids[key] = len(node_off)
            node_off.append((float(x_off[i]), float(y_off[j])))
        return grid_ids[key]

    tris: list[tuple[int, int, int]] = []
    for i in range(len(x_off) - 1):
        for j in range(len(y_off) - 1):
            xm = 0.5 * (x_off[i] + x_off[i + 1])
            ym = 0.5 * (y_off[j] + y_off[j + 1])
            if -Rx < xm < Rx and ym > -Ry:
                continue
            # same diagonal pattern as the layer cell (offsets are already
            # relative to c): far from the puncture the two meshes then
            # triangulate identically tile for tile
            tris.extend(
                _quad_split(
                    nid(i, j),
                    nid(i + 1, j),
                    nid(i + 1, j + 1),
                    nid(i, j + 1),
                    _diagonal_flip(xm, ym),
                )
            )

    # --- lower half: radial patch -------------------------------------------
    stations: list[tuple[int, int]] = []
    stations += [(iL, j) for j in range(jT, jB - 1, -1)]
    stations += [(i, jB) for i in range(iL + 1, iR + 1)]
    stations += [(iR, j) for j in range(jB + 1, jT + 1)]
    st_off = np.asarray([(x_off[i], y_off[j]) for i, j in stations])
    phis = np.arctan2(st_off[:, 1], st_off[:, 0])
    phis[0] = -math.pi
    phis[-1] = 0.0
    if np.any(np.diff(phis) <= 0):
        raise MeshError("patch stations are not angularly monotone")

    ring_off = mp.eps * np.column_stack([np.cos(phis), np.sin(phis)])
    ring_off[0] = (-mp.eps, 0.0)
    ring_off[-1] = (mp.eps, 0.0)

    spans = np.linalg.norm(st_off, axis=1) - mp.eps
    inner_target = mp.eps * float(np.median(np.diff(phis)))
    st_gaps = np.linalg.norm(np.diff(st_off, axis=0), axis=1)
    outer_target = 0.55 * float(np.median(st_gaps))
    g = _grading_levels(
        float(np.median(spans)), inner_target, outer_target, mp.grading
    )
    K = len(g) - 1

    J = len(stations)
    patch_ids = np.empty((J, K + 1), dtype=np.int64)
    for j in range(J):
        patch_ids[j, K] = nid(*stations[j])
        for k in range(K):
            off = ring_off[j] + g[k] * (st_off[j] - ring_off[j])
            patch_ids[j, k] = len(node_off)
            node_off.append((float(off[0]), float(off[1])))
    i0 = int(np.searchsorted(x_off, 0.0))
    j_spine = stations.index((i0, jB))
    def _patch_off(j: int, k: int) -> np.ndarray:
        if k == K:
            return st_off[j]
        return ring_off[j] + g[k] * (st_off[j] - ring_off[j])

    for j in range(J - 1):
        for k in range(K):
            v00, v10 = patch_ids[j, k], patch_ids[j + 1, k]
            v11, v01 = patch_ids[j + 1, k + 1], patch_ids[j, k + 1]
            # split along the shorter diagonal (mirror-consistent: the
            # mirrored quad has the same edge lengths); break ties by the
            # side of the vertical spine so refinement keeps the x-mirror
            d1 = np.linalg.norm(_patch_off(j, k) - _patch_off(j + 1, k + 1))
            d2 = np.linalg.norm(_patch_off(j + 1, k) - _patch_off(j, k + 1))
            if abs(d1 - d2) <= 1e-12:
                first = j + 1 <= j_spine
            else:
                first = d1 < d2
            if first:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v10, v11, v01))
                tris.append((v10, v01, v00))

    # marked node paths on the lower half (grid lookups must happen before
    # the node list is frozen)
    spine_lower = np.concatenate(
        [
            patch_ids[j_spine, :],                        # ring -> station
            [nid(i0, j) for j in range(jB - 1, -1, -1)],  # station -> bottom
        ]
    ).astype(np.int64)
    mid_left = np.concatenate(
        [
            [nid(i, jT) for i in range(0, iL + 1)],       # truncation -> patch
            patch_ids[0, :-1][::-1],                      # patch -> ring
        ]
    ).astype(np.int64)

    lower_off = np.asarray(node_off)
    lower_tris = np.asarray(tris, dtype=np.int64)
    n_lower = len(lower_off)

    # --- reflect through c ---------------------------------------------------
    is_mid = lower_off[:, 1] == 0.0
    mid_ids = np.nonzero(is_mid)[0]
    mid_tree = cKDTree(lower_off[mid_ids])
    dist, pos = mid_tree.query(-lower_off[mid_ids], k=1)
    if np.max(dist) > _PAIR_TOL:
        raise MeshError("midline stations are not mirror symmetric")
    mid_mirror = mid_ids[pos]

    reflect = np.empty(n_lower, dtype=np.int64)
    upper_offs: list[tuple[float, float]] = []
    next_id = n_lower
    for i in range(n_lower):
        if is_mid[i]:
            reflect[i] = -1  # filled below
        else:
            reflect[i] = next_id
            upper_offs.append((-lower_off[i, 0], -lower_off[i, 1]))
            next_id += 1
    reflect[mid_ids] = mid_mirror

    all_off = np.vstack([lower_off, np.asarray(upper_offs)])
    upper_tris = reflect[lower_tris]
    triangles = np.vstack([lower_tris, upper_tris])

    sym = np.empty(len(all_off), dtype=np.int64)
    sym[: n_lower] = reflect
    for i in range(n_lower):
        if not is_mid[i]:
            sym[reflect[i]] = i

    nodes = all_off + np.asarray([cx, cy])

    # --- snap serration vertices to their closed forms ----------------------
    tol_snap = 1e-9
    tree = cKDTree(nodes)
    serr = []
    for k in range(math.ceil(cx - L), math.floor(cx + L) + 1):
        serr.append((float(k), 0.0))
    for fam, base in (("b0", x0 - 1.0), ("b1", x0)):
        lo = math.ceil((cx - L - base) / 2.0)
        hi = math.floor((cx + L - base) / 2.0)
        for n in range(lo, hi + 1):
            serr.append((base + 2.0 * n, y0))
    for p in serr:
        d, i = tree.query(p, k=1)
        if d > tol_snap:
            raise MeshError(f"serration vertex {p} missing from the mesh")
        nodes[i] = p

    # --- tags, loops, paths --------------------------------------------------
    def sel(mask) -> np.ndarray:
        return np.nonzero(mask)[0].astype(np.int64)

    oy = all_off[:, 1]
    ox = all_off[:, 0]
    tags = {
        BOTTOM: sel(np.abs(oy + y0 / 2.0) <= _PAIR_TOL),
        TOP: sel(np.abs(oy - y0 / 2.0) <= _PAIR_TOL),
        LEFT: sel(np.abs(ox + L) <= _PAIR_TOL),
        RIGHT: sel(np.abs(ox - L) <= _PAIR_TOL),
    }
    ring_lower = patch_ids[:, 0]
    tags[RING] = np.unique(np.concatenate([ring_lower, sym[ring_lower]]))

    loops = []
    for k in range(0, min(K, 3) + 1):
        lower_path = patch_ids[:, k]
        # the point symmetry rotates by pi, so the reflected arc continues
        # counterclockwise in the same traversal order
        upper_path = sym[lower_path[1:-1]]
        loops.append(np.concatenate([lower_path, upper_path]).astype(np.int64))

    cut_path = sym[spine_lower]  # ring top -> top boundary

    mesh = TriMesh(
        nodes=nodes,
        triangles=_orient_ccw(nodes, triangles),
        tags=tags,
        h=float(mp.h),
        kind="handle-strip",
        params={
            "x0": x0,
            "y0": y0,
            "h": mp.h,
            "eps": mp.eps,
            "L": L,
            "grading": mp.grading,
            "mx_axis": float(cx),
            "my_axis": float(cy),
        },
        center=dom.center,
        sym_pair=sym,
        loops=loops,
        cut_path=cut_path.astype(np.int64),
        paths={"spine_lower": spine_lower.astype(np.int64)},
    )
    mirror_x = _match_permutation(
        all_off, np.column_stack([-all_off[:, 0], all_off[:, 1]]), _PAIR_TOL
    )
    if mirror_x is None:
        raise MeshError("handle mesh lost its x-mirror symmetry")
    mesh.mirror_x = mirror_x
    mesh.mirror_y = sym[mirror_x]
    mesh.paths["midline_left"] = mid_left
    mesh.paths["midline_right"] = mirror_x[mid_left]
    return mesh


# ---------------------------------------------------------------------------
# annulus (test domains for radial reference solutions)
# ---------------------------------------------------------------------------


def mesh_annulus(r_inner: float, r_outer: float, h: float) -> TriMesh:
    """Polar tensor mesh of the annulus r_inner <= r <= r_outer about 0."""
    if not 0.0 < r_inner < r_outer:
        raise MeshError("annulus radii must satisfy 0 < r_inner < r_outer")
    nr = max(2, math.ceil((r_outer - r_inner) / h))
    nt = max(8, math.ceil(math.pi * (r_inner + r_outer) / h))
    rs = np.linspace(r_inner, r_outer, nr + 1)
    ths = np.linspace(0.0, 2.0 * math.pi, nt + 1)[:-1]
    nid = lambda i, j: i * nt + j
    nodes = np.empty(((nr + 1) * nt, 2))
    for i, r in enumerate(rs):
        nodes[i * nt : (i + 1) * nt, 0] = r * np.cos(ths)
        nodes[i * nt : (i + 1) * nt, 1] = r * np.sin(ths)
    tris = []
    for i in range(nr):
        for j in range(nt):
            jn = (j + 1) % nt
            tris.append((nid(i, j), nid(i + 1, j), nid(i + 1, jn)))
            tris.append((nid(i, j), nid(i + 1, jn), nid(i, jn)))
    tags = {
        "inner": np.arange(nt, dtype=np.int64),
        "outer": np.arange(nr * nt, (nr + 1) * nt, dtype=np.int64),
    }
    return TriMesh(
        nodes=nodes,
        triangles=_orient_ccw(nodes, np.asarray(tris, dtype=np.int64)),
        tags=tags,
        h=float(h),
        kind="annulus",
        params={"r_inner": r_inner, "r_outer": r_outer, "h": h},
    )


# ---------------------------------------------------------------------------
# uniform refinement
# ---------------------------------------------------------------------------


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform 4-way refinement preserving tags, pairings, loops and paths."""
    nodes = list(map(tuple, mesh.nodes))
    midpoint: dict[tuple[int, int], int] = {}

    def mid(i: int, j: int) -> int:
        key = (i, j) if i < j else (j, i)
        if key not in midpoint:
            midpoint[key] = len(nodes)
            nodes.append(tuple(0.5 * (mesh.nodes[i] + mesh.nodes[j])))
        return midpoint[key]

    tris = []
    for a, b, c in mesh.triangles:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    new_nodes = np.asarray(nodes)
    new_tris = np.asarray(tris, dtype=np.int64)

    tags = {}
    for name, idx in mesh.tags.items():
        tagged = set(int(i) for i in idx)
        extra = [
            m
            for (i, j), m in midpoint.items()
            if i in tagged and j in tagged
        ]
        tags[name] = np.asarray(sorted(tagged.union(extra)), dtype=np.int64)

    pairs = None
    if mesh.periodic_pairs is not None:
        pmap = {int(a): int(b) for a, b in mesh.periodic_pairs}
        new_pairs = [(a, b) for a, b in mesh.periodic_pairs]
        for (i, j), m in midpoint.items():
            if i in pmap and j in pmap:
                key = (pmap[i], pmap[j]) if pmap[i] < pmap[j] else (pmap[j], pmap[i])
                if key in midpoint:
                    new_pairs.append((m, midpoint[key]))
        pairs = np.asarray(sorted(new_pairs), dtype=np.int64)

    def extend_perm(perm: np.ndarray | None) -> np.ndarray | None:
        # valid only for pairings that map mesh edges to mesh edges (the
        # point symmetry does; planar mirrors are rebuilt geometrically)
        if perm is None:
            return None
        out = np.empty(len(new_nodes), dtype=np.int64)
        out[: len(perm)] = perm
        for (i, j), m in midpoint.items():
            a, b = int(perm[i]), int(perm[j])
            key = (a, b) if a < b else (b, a)
            out[m] = midpoint[key]
        return out

    def rematch_mirror(old: np.ndarray | None, image: np.ndarray) -> np.ndarray | None:
        if old is None:
            return None
        return _match_permutation(new_nodes, image, _PAIR_TOL)

    def subdivide_path(path: np.ndarray, closed: bool) -> np.ndarray:
        seq = []
        pts = list(map(int, path)) + ([int(path[0])] if closed else [])
        for a, b in zip(pts[:-1], pts[1:]):
            seq.append(a)
            seq.append(mid(a, b))
        if not closed:
            seq.append(pts[-1])
        return np.asarray(seq, dtype=np.int64)

    mx_axis = mesh.params.get("mx_axis")
    my_axis = mesh.params.get("my_axis")
    out = TriMesh(
        nodes=new_nodes,
        triangles=new_tris,
        tags=tags,
        h=mesh.h / 2.0,
        kind=mesh.kind,
        params=dict(mesh.params),
        center=mesh.center,
        periodic_pairs=pairs,
        sym_pair=extend_perm(mesh.sym_pair),
        mirror_x=(
            rematch_mirror(
                mesh.mirror_x,
                np.column_stack([2.0 * mx_axis - new_nodes[:, 0], new_nodes[:, 1]]),
            )
            if mx_axis is not None
            else None
        ),
        mirror_y=(
            rematch_mirror(
                mesh.mirror_y,
                np.column_stack([new_nodes[:, 0], 2.0 * my_axis - new_nodes[:, 1]]),
            )
            if my_axis is not None
            else None
        ),
        loops=[subdivide_path(l, True) for l in mesh.loops],
        cut_path=(
            subdivide_path(mesh.cut_path, False) if mesh.cut_path is not None else None
        ),
        paths={k: subdivide_path(p, False) for k, p in mesh.paths.items()},
    )
    return out

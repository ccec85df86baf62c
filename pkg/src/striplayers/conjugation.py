"""Conjugate one-forms of a solved field and their integration.

For a piecewise linear solution v of the maximal surface equation the
conjugate data are constant per triangle:

    dPhi   = (v_y/w) dx - (v_x/w) dy          (recovers the minimal graph u)
    dX1*   = (-v_x v_y/w) dx + ((1-v_y^2)/w) dy
    dX2*   = (-(1-v_x^2)/w) dx + (v_x v_y/w) dy
    dX3*   = dv

with w the (capped) slack sqrt(1-|grad v|^2).  Each form carries averaged
per-edge increments and the closedness residual rho (the maximal disagreement
of the two triangle evaluations across an interior edge); loop sums of the
averaged increments are path independent only up to rho times the path
length.

Integration and loop periods therefore use the flux-conforming midpoint
lift: per-triangle affine potentials glued continuously at edge midpoints
(the nonconforming conjugate of a conforming solution).  For dPhi of the
discrete minimizer the glued potential is exactly curl-free around free
nodes (the gluing defect at a node is its Euler-Lagrange residual), so
puncture periods are independent of the chosen ring at solver tolerance, the
cut jump of the multivalued graph is a sharp constant, and contractible
loops vanish.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .meshing import BOTTOM, LEFT, RIGHT, RING, TOP, TriMesh

__all__ = [
    "TopologyError",
    "IntegrationQualityError",
    "DegenerateSlackError",
    "DiscreteOneForm",
    "PeriodVector",
    "IntegrationResult",
    "MultiValuedField",
    "SurfaceMesh",
    "phi_form",
    "coordinate_forms",
    "integrate",
    "loop_period",
    "path_integral",
    "vertical_period_k",
    "recover_graph",
    "minimal_graph_residual",
    "symmetry_shift_residual",
    "layer_translation_constant",
    "translation_pseudo_period",
    "build_surface",
]


class TopologyError(RuntimeError):
    """Single-valued integration requested for a form with a loop period."""


class IntegrationQualityError(RuntimeError):
    """Loop integrals that must agree (ring independence) do not."""


class DegenerateSlackError(RuntimeError):
    """A triangle slack underflows; the conjugate forms are not usable."""


# ---------------------------------------------------------------------------
# edge tables
# ---------------------------------------------------------------------------


class _EdgeData:
    def __init__(self, mesh: TriMesh):
        t = mesh.triangles
        raw = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        raw_sorted = np.sort(raw, axis=1)
        self.edges, inverse = np.unique(raw_sorted, axis=0, return_inverse=True)
        self.tri_edges = inverse.reshape(3, len(t)).T  # local edges (01, 12, 20)
        self.index = {(int(i), int(j)): e for e, (i, j) in enumerate(self.edges)}
        self.edge_tris = -np.ones((len(self.edges), 2), dtype=np.int64)
        for tt in range(len(t)):
            for e in self.tri_edges[tt]:
                slot = 0 if self.edge_tris[e, 0] < 0 else 1
                self.edge_tris[e, slot] = tt
        self.boundary = self.edge_tris[:, 1] < 0
        self.midpoints = 0.5 * (
            mesh.nodes[self.edges[:, 0]] + mesh.nodes[self.edges[:, 1]]
        )
        # counterclockwise corner transitions: in triangle (n, p, q) the
        # sector at n runs from edge {n,p} to edge {n,q}
        self.ccw: dict[tuple[int, int], tuple[int, int]] = {}
        self.cw: dict[tuple[int, int], tuple[int, int]] = {}
        for tt, (i, j, k) in enumerate(t):
            for n, p, q in ((i, j, k), (j, k, i), (k, i, j)):
                e_in = self.index[(min(n, p), max(n, p))]
                e_out = self.index[(min(n, q), max(n, q))]
                self.ccw[(int(n), e_in)] = (tt, e_out)
                self.cw[(int(n), e_out)] = (tt, e_in)

    def eid(self, i: int, j: int) -> int:
        return self.index[(min(i, j), max(i, j))]


def _edge_data(mesh: TriMesh) -> _EdgeData:
    ed = getattr(mesh, "_edge_data", None)
    if ed is None:
        ed = _EdgeData(mesh)
        mesh._edge_data = ed
    return ed


# ---------------------------------------------------------------------------
# one-forms
# ---------------------------------------------------------------------------


@dataclass
class DiscreteOneForm:
    """Per-triangle constant coefficients with averaged edge increments."""

    mesh: TriMesh
    label: str
    coeff: np.ndarray                  # (T, 2): omega|T = c0 dx + c1 dy
    nodal: np.ndarray | None = None    # set for exact differentials (dv)
    edge_average: np.ndarray = field(default=None, repr=False)
    disagreement: np.ndarray = field(default=None, repr=False)
    rho: float = 0.0

    def __post_init__(self) -> None:
        ed = _edge_data(self.mesh)
        delta = (
            self.mesh.nodes[ed.edges[:, 1]] - self.mesh.nodes[ed.edges[:, 0]]
        )
        if self.nodal is not None:
            self.edge_average = self.nodal[ed.edges[:, 1]] - self.nodal[ed.edges[:, 0]]
            self.disagreement = np.zeros(len(ed.edges))
        else:
            w0 = np.einsum(
                "ed,ed->e", self.coeff[ed.edge_tris[:, 0]], delta
            )
            w1 = np.where(
                ed.boundary,
                w0,
                np.einsum(
                    "ed,ed->e",
                    self.coeff[np.maximum(ed.edge_tris[:, 1], 0)],
                    delta,
                ),
            )
            self.edge_average = 0.5 * (w0 + w1)
            self.disagreement = np.where(ed.boundary, 0.0, np.abs(w0 - w1))
        self.rho = float(np.max(self.disagreement)) if len(self.disagreement) else 0.0

    # -- averaged structure ----------------------------------------------------

    def averaged_increment(self, i: int, j: int) -> float:
        ed = _edge_data(self.mesh)
        e = ed.eid(i, j)
        sign = 1.0 if ed.edges[e, 0] == i else -1.0
        return float(sign * self.edge_average[e])

    def averaged_path_sum(self, path: Sequence[int]) -> float:
        return float(
            sum(self.averaged_increment(int(a), int(b)) for a, b in zip(path[:-1], path[1:]))
        )

    def averaged_loop_sum(self, loop: Sequence[int]) -> float:
        cyc = list(loop) + [loop[0]]
        return self.averaged_path_sum(cyc)

    # -- midpoint (flux-conforming) structure -----------------------------------

    def _midpoint_value(self, tri: int, eid: int) -> float:
        """Value gradient-consistent within a triangle, relative to its own
        affine chart anchored at the triangle centroid."""
        ed = _edge_data(self.mesh)
        m = ed.midpoints[eid]
        cent = self.mesh.nodes[self.mesh.triangles[tri]].mean(axis=0)
        if self.nodal is not None:
            vals = self.nodal[self.mesh.triangles[tri]]
            i, j = ed.edges[eid]
            return float(0.5 * (self.nodal[i] + self.nodal[j]) - vals.mean())
        return float(self.coeff[tri] @ (m - cent))

    def fan_transition(self, node: int, e_in: int, e_out: int) -> float:
        """Midpoint increment from e_in to e_out around ``node``.

        Walks the triangle fan counterclockwise, falling back to clockwise at
        a boundary; for free nodes of a solved field the two walks agree up
        to the Euler-Lagrange residual.
        """
        if e_in == e_out:
            return 0.0
        for table in (_edge_data(self.mesh).ccw, _edge_data(self.mesh).cw):
            total = 0.0
            cur = e_in
            ok = True
            for _ in range(len(self.mesh.triangles)):
                step = table.get((int(node), cur))
                if step is None:
                    ok = False
                    break
                tri, nxt = step
                total += self._midpoint_value(tri, nxt) - self._midpoint_value(tri, cur)
                cur = nxt
                if cur == e_out:
                    break
            else:
                ok = False
            if ok and cur == e_out:
                return total
        raise ValueError(f"no triangle fan connects the loop edges at node {node}")

    def midpoint_loop_sum(self, loop: Sequence[int]) -> float:
        ed = _edge_data(self.mesh)
        nodes = [int(n) for n in loop]
        m = len(nodes)
        eids = [ed.eid(nodes[t], nodes[(t + 1) % m]) for t in range(m)]
        total = 0.0
        for t in range(m):
            total += self.fan_transition(nodes[t], eids[(t - 1) % m], eids[t])
        return total


def _check_slack(field_slack: np.ndarray) -> None:
    if np.any(field_slack < 10.0 * np.finfo(float).eps):
        raise DegenerateSlackError("triangle slack underflows machine precision")


def phi_form(fld) -> DiscreteOneForm:
    """Conjugate form whose potential is the minimal graph u."""
    _check_slack(fld.slack)
    g, w = fld.gradients, fld.slack
    coeff = np.column_stack([g[:, 1] / w, -g[:, 0] / w])
    return DiscreteOneForm(fld.mesh, "dPhi", coeff)


def coordinate_forms(fld) -> tuple[DiscreteOneForm, DiscreteOneForm, DiscreteOneForm]:
    """The three coordinate forms of the conjugate surface (dX3* = dv)."""
    _check_slack(fld.slack)
    g, w = fld.gradients, fld.slack
    gx, gy = g[:, 0], g[:, 1]
    f1 = DiscreteOneForm(
        fld.mesh, "dX1", np.column_stack([-gx * gy / w, (1.0 - gy * gy) / w])
    )
    f2 = DiscreteOneForm(
        fld.mesh, "dX2", np.column_stack([-(1.0 - gx * gx) / w, gx * gy / w])
    )
    f3 = DiscreteOneForm(fld.mesh, "dX3", g.copy(), nodal=fld.values)
    return f1, f2, f3


# ---------------------------------------------------------------------------
# periods and integration
# ---------------------------------------------------------------------------


@dataclass
class PeriodVector:
    vector: np.ndarray
    loop: dict

    def to_json(self) -> dict:
        return {"vector": self.vector.tolist(), "loop": self.loop}


def loop_period(forms: Sequence[DiscreteOneForm], loop: Sequence[int]) -> PeriodVector:
    """Loop integrals of up to three forms over a closed node cycle."""
    vec = np.array([f.midpoint_loop_sum(loop) for f in forms])
    return PeriodVector(vec, {"kind": "node-cycle", "length": len(loop)})


def path_integral(forms: Sequence[DiscreteOneForm], path: Sequence[int]) -> np.ndarray:
    """Open-path sums of the averaged edge increments (exact for dv)."""
    return np.array([f.averaged_path_sum(list(path)) for f in forms])


@dataclass
class IntegrationResult:
    values: np.ndarray
    basepoint: int
    cut_edges: list
    jumps: np.ndarray | None = None

    @property
    def jump(self) -> float | None:
        return float(np.mean(self.jumps)) if self.jumps is not None and len(self.jumps) else None


def _blocked_edges(mesh: TriMesh, cut: Sequence[int]) -> set[int]:
    """Dual connections crossed by the slit: exactly the cut-path edges.

    The slit runs through the cut vertices; at each vertex the two incident
    path edges wall the triangle fan into a left and a right group, so
    blocking the path edges alone severs every dual route between the
    branches.
    """
    ed = _edge_data(mesh)
    return {ed.eid(int(a), int(b)) for a, b in zip(cut[:-1], cut[1:])}


def integrate(
    form: DiscreteOneForm, basepoint: int, cut: Sequence[int] | None = None
) -> IntegrationResult:
    """Potential of a one-form by spanning-tree integration.

    The per-triangle affine potentials are glued at shared edge midpoints
    along a dual spanning tree (skipping edges crossed by the cut); node
    values are the mean of the incident triangle potentials, taken on the
    left branch at cut nodes.  On cut meshes the jump of the potential
    across every blocked edge is reported.
    """
    mesh = form.mesh
    ed = _edge_data(mesh)
    blocked: set[int] = set()
    if cut is not None:
        blocked = _blocked_edges(mesh, cut)
    elif mesh.loops:
        period = form.midpoint_loop_sum(mesh.loops[min(1, len(mesh.loops) - 1)])
        if abs(period) > 100.0 * max(form.rho, 1e-14):
            raise TopologyError(
                f"form {form.label} has puncture period {period:.3e}; "
                "single-valued integration needs a cut"
            )

    # glue triangle charts along a minimum-defect spanning tree of the dual
    # graph: the gluing inconsistency is concentrated around the lightlike
    # boundary band (and pinned ring), and a tree that avoids high
    # disagreement edges keeps those defects out of every chart constant.
    # The tree does not depend on the basepoint, so changing the basepoint
    # translates the potential exactly.
    ntri = len(mesh.triangles)
    interior = [
        e
        for e in range(len(ed.edges))
        if not ed.boundary[e] and e not in blocked
    ]
    w = form.disagreement[interior] + 1e-12
    if cut is not None:
        # make the tree hug the slit: fundamental cycles of the blocked
        # edges then stay tight around the puncture and the measured jumps
        # pick up no stray gluing defects from the lightlike boundary band
        cut_set = {int(n) for n in cut}
        hug = np.array(
            [
                ed.edges[e, 0] in cut_set or ed.edges[e, 1] in cut_set
                for e in interior
            ]
        )
        w = np.where(hug, 1e-15, w)
    import scipy.sparse as sp
    from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree

    t1 = ed.edge_tris[interior, 0]
    t2 = ed.edge_tris[interior, 1]
    graph = sp.coo_matrix((w, (t1, t2)), shape=(ntri, ntri))
    mst = minimum_spanning_tree(graph.tocsr())
    mst = mst + mst.T
    root = int(np.nonzero(np.any(mesh.triangles == basepoint, axis=1))[0][0])
    order, pred = breadth_first_order(mst, root, directed=False, return_predecessors=True)
    if len(order) != ntri:
        raise TopologyError("cut disconnects the mesh; integration aborted")
    tri_pair_to_edge = {}
    for e in interior:
        a, b = int(ed.edge_tris[e, 0]), int(ed.edge_tris[e, 1])
        tri_pair_to_edge[(a, b)] = e
        tri_pair_to_edge[(b, a)] = e
    const = np.zeros(ntri)
    for t in order[1:]:
        p = int(pred[t])
        e = tri_pair_to_edge[(p, int(t))]
        const[t] = (
            const[p]
            + form._midpoint_value(p, e)
            - form._midpoint_value(int(t), e)
        )

    # corner values per triangle chart
    tris = mesh.triangles
    if form.nodal is not None:
        corner = form.nodal[tris] - form.nodal[tris].mean(axis=1, keepdims=True)
    else:
        cent = mesh.nodes[tris].mean(axis=1)
        corner = np.einsum(
            "td,tcd->tc", form.coeff, mesh.nodes[tris] - cent[:, None, :]
        )
    corner = corner + const[:, None]

    jumps = None
    cut_edges: list = []
    if cut is not None:
        js = []
        for e in sorted(blocked):
            tL, tR = ed.edge_tris[e]
            if tR < 0:
                continue
            cx = mesh.nodes[tris[[tL, tR]]].mean(axis=1)[:, 0]
            if cx[0] > cx[1]:
                tL, tR = tR, tL
            js.append(
                (const[tR] + form._midpoint_value(int(tR), int(e)))
                - (const[tL] + form._midpoint_value(int(tL), int(e)))
            )
            cut_edges.append((int(ed.edges[e, 0]), int(ed.edges[e, 1])))
        jumps = np.asarray(js)

    values = np.zeros(mesh.node_count)
    counts = np.zeros(mesh.node_count)
    if cut is None:
        np.add.at(values, tris.ravel(), corner.ravel())
        np.add.at(counts, tris.ravel(), 1.0)
        values /= counts
    else:
        # full-star averages everywhere; at cut nodes the right-branch
        # charts are shifted down by the jump first, so the value convention
        # (left branch) commutes with the point symmetry even where the
        # charts vary strongly
        shift = float(np.mean(jumps)) if jumps is not None and len(jumps) else 0.0
        cut_set = {int(n) for n in cut}
        line_x = float(np.mean(mesh.nodes[list(cut_set), 0]))
        cent_x = mesh.nodes[tris].mean(axis=1)[:, 0]
        for t in range(ntri):
            for c in range(3):
                n = int(tris[t, c])
                val = corner[t, c]
                if n in cut_set and cent_x[t] > line_x:
                    val -= shift
                values[n] += val
                counts[n] += 1.0
        values /= counts

    values -= values[basepoint]
    return IntegrationResult(values, int(basepoint), cut_edges, jumps)


# ---------------------------------------------------------------------------
# vertical period and graph recovery
# ---------------------------------------------------------------------------


@dataclass
class VerticalPeriod:
    k: float
    k_alt: float
    agreement: float

    def to_json(self) -> dict:
        return {"k": self.k, "k_alt": self.k_alt, "agreement": self.agreement}


def vertical_period_k(fld, tol: float = 1e-6) -> VerticalPeriod:
    """Circulation of dPhi around the puncture, checked on two rings.

    Uses the first two free node loops off the pinned ring (pinned nodes
    carry no Euler-Lagrange identity, so the innermost polygon itself is the
    noisiest place to integrate).
    """
    mesh = fld.mesh
    if len(mesh.loops) < 3:
        raise ValueError("vertical period requires a punctured mesh with ring loops")
    form = phi_form(fld)
    k1 = form.midpoint_loop_sum(mesh.loops[1])
    k2 = form.midpoint_loop_sum(mesh.loops[2])
    if abs(k1 - k2) > tol:
        raise IntegrationQualityError(
            f"puncture circulation differs between rings: {k1:.9g} vs {k2:.9g}"
        )
    return VerticalPeriod(float(k1), float(k2), float(abs(k1 - k2)))


@dataclass
class MultiValuedField:
    """Recovered minimal graph u; multivalued with period k on punctured
    meshes (values follow the left branch along the cut)."""

    mesh: TriMesh
    values: np.ndarray
    k: float
    cut_edges: list
    jumps: np.ndarray | None

    def jump_spread(self) -> float:
        if self.jumps is None or not len(self.jumps):
            return 0.0
        return float(np.max(np.abs(np.abs(self.jumps) - abs(self.k))))


def recover_graph(fld, basepoint: int | None = None) -> MultiValuedField:
    """Integrate dPhi into the minimal graph u (cut mesh for punctures)."""
    mesh = fld.mesh
    form = phi_form(fld)
    if basepoint is None:
        basepoint = _default_basepoint(mesh)
    if mesh.cut_path is not None and mesh.loops:
        k = form.midpoint_loop_sum(mesh.loops[1])
        res = integrate(form, basepoint, cut=mesh.cut_path)
        return MultiValuedField(mesh, res.values, float(k), res.cut_edges, res.jumps)
    res = integrate(form, basepoint)
    return MultiValuedField(mesh, res.values, 0.0, [], None)


def _default_basepoint(mesh: TriMesh) -> int:
    target = mesh.center if mesh.center is not None else mesh.nodes.mean(axis=0)
    target = np.asarray(target) + np.array([-1.0, 0.0])
    return int(np.argmin(np.linalg.norm(mesh.nodes - target, axis=1)))


def _aligned_triangle_values(fld, mv: MultiValuedField):
    """Per-triangle branch-consistent u values (shift corners by multiples
    of k to match the local form increments)."""
    mesh = fld.mesh
    tris = mesh.triangles
    form = phi_form(fld)
    u = mv.values[tris].copy()
    if mv.k:
        p = mesh.nodes[tris]
        for c in (1, 2):
            inc = np.einsum("td,td->t", form.coeff, p[:, c] - p[:, 0])
            gap = u[:, c] - u[:, 0] - inc
            u[:, c] -= mv.k * np.round(gap / mv.k)
    return u


def minimal_graph_residual(fld, mv: MultiValuedField) -> float:
    """Assembled residual of the minimal surface equation for the recovered
    graph (flux grad u / sqrt(1+|grad u|^2)), max over interior nodes."""
    mesh = fld.mesh
    from .maxsolve import _p1_operators

    areas, sg = _p1_operators(mesh)
    u = _aligned_triangle_values(fld, mv)
    gu = np.einsum("tc,tcd->td", u, sg)
    wgt = np.sqrt(1.0 + np.sum(gu * gu, axis=1))
    flux = (areas / wgt)[:, None] * gu
    res = np.zeros(mesh.node_count)
    contrib = np.einsum("td,tcd->tc", flux, sg)
    np.add.at(res, mesh.triangles.ravel(), contrib.ravel())
    fixed = set()
    for tag in (BOTTOM, TOP, LEFT, RIGHT, RING, "inner", "outer"):
        if tag in mesh.tags:
            fixed.update(int(n) for n in mesh.tags[tag])
    if mesh.periodic_pairs is not None:
        fixed.update(int(n) for n in mesh.periodic_pairs.ravel())
    interior = np.setdiff1d(np.arange(mesh.node_count), np.asarray(sorted(fixed)))
    return float(np.max(np.abs(res[interior])))


def symmetry_shift_residual(fld, mv: MultiValuedField) -> float:
    """max |u(s(p)) - u(p) - k/2| over node pairs, reduced mod k."""
    mesh = fld.mesh
    if mesh.sym_pair is None:
        raise ValueError("mesh carries no point-symmetry pairing")
    r = mv.values[mesh.sym_pair] - mv.values - 0.5 * mv.k
    if mv.k:
        r = r - mv.k * np.round(r / mv.k)
    return float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# layer translation data
# ---------------------------------------------------------------------------


def layer_translation_constant(fld) -> float:
    """Increment of the graph u across one horizontal period of the layer
    (open midline path integral of dPhi)."""
    path = fld.mesh.paths.get("midline")
    if path is None:
        raise ValueError("mesh carries no midline path")
    return float(phi_form(fld).averaged_path_sum(list(path)))


def translation_pseudo_period(fld) -> PeriodVector:
    """Open-path integral of the coordinate forms across one period; the
    third component telescopes to zero because the endpoints are the same
    periodic degree of freedom."""
    path = fld.mesh.paths.get("midline")
    if path is None:
        raise ValueError("mesh carries no midline path")
    vec = path_integral(coordinate_forms(fld), list(path))
    return PeriodVector(vec, {"kind": "translation-path", "length": len(path)})


# ---------------------------------------------------------------------------
# the conjugate surface
# ---------------------------------------------------------------------------


@dataclass
class SurfaceMesh:
    """Conjugate surface as a 3D triangle mesh.

    ``curves`` maps curve tags (z0, z1, gamma, truncation-left/right) to
    lists of node index polylines; gamma is closed (first node not
    repeated).  The third coordinate equals the source field nodally.
    """

    positions: np.ndarray
    triangles: np.ndarray
    curves: dict
    planar: TriMesh | None = None
    basepoint: int | None = None

    @property
    def node_count(self) -> int:
        return len(self.positions)

    def heights(self) -> np.ndarray:
        return self.positions[:, 2]

    def content_hash(self) -> str:
        import hashlib

        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.positions).tobytes())
        m.update(np.ascontiguousarray(self.triangles.astype(np.int64)).tobytes())
        return m.hexdigest()


def _boundary_runs(mesh: TriMesh, nodes: np.ndarray, max_gap: float) -> list[np.ndarray]:
    """Split tagged boundary nodes (sorted by x) into contiguous polylines."""
    if len(nodes) == 0:
        return []
    order = nodes[np.argsort(mesh.nodes[nodes, 0], kind="stable")]
    runs = [[int(order[0])]]
    for n in order[1:]:
        if mesh.nodes[n, 0] - mesh.nodes[runs[-1][-1], 0] <= max_gap:
            runs[-1].append(int(n))
        else:
            runs.append([int(n)])
    return [np.asarray(r, dtype=np.int64) for r in runs]


def build_surface(fld, basepoint: int | None = None) -> SurfaceMesh:
    """Integrate the coordinate forms into conjugate surface positions.

    The third coordinate is the field itself (nodally exact); serration
    valleys trace the z=0 symmetry curves, peaks the z=1 curves, and the
    puncture ring maps to the closed curve in the z=1 plane.
    """
    mesh = fld.mesh
    if basepoint is None:
        basepoint = _default_basepoint(mesh)
    f1, f2, f3 = coordinate_forms(fld)
    if mesh.loops:
        for f in (f1, f2):
            period = f.midpoint_loop_sum(mesh.loops[1])
            if abs(period) > 100.0 * max(f.rho, 1e-14):
                raise TopologyError(
                    f"puncture period of {f.label} is {period:.3e}, beyond the "
                    "closedness budget; the conjugate surface does not close"
                )
    x1 = integrate(f1, basepoint).values
    x2 = integrate(f2, basepoint).values
    positions = np.column_stack([x1, x2, fld.values])

    thr = 1.5 * mesh.h
    curves: dict[str, list[np.ndarray]] = {"z0": [], "z1": []}
    for tag in (BOTTOM, TOP):
        if tag not in mesh.tags:
            continue
        idx = mesh.tags[tag]
        low = idx[fld.values[idx] <= thr]
        high = idx[fld.values[idx] >= 1.0 - thr]
        curves["z0"].extend(_boundary_runs(mesh, low, 2.1 * thr))
        curves["z1"].extend(_boundary_runs(mesh, high, 2.1 * thr))
    if RING in mesh.tags and mesh.loops:
        curves["gamma"] = [np.asarray(mesh.loops[0], dtype=np.int64)]
    for tag, name in ((LEFT, "truncation-left"), (RIGHT, "truncation-right")):
        if tag in mesh.tags and len(mesh.tags[tag]):
            idx = mesh.tags[tag]
            order = idx[np.argsort(mesh.nodes[idx, 1], kind="stable")]
            curves[name] = [order.astype(np.int64)]
    return SurfaceMesh(
        positions=positions,
        triangles=mesh.triangles.copy(),
        curves=curves,
        planar=mesh,
        basepoint=int(basepoint),
    )

"""Maximal surface equation solver on triangulated strips.

The equation Div(grad v / sqrt(1 - |grad v|^2)) = 0 is the Euler-Lagrange
equation of the convex energy

    J(v) = sum_T |T| * ( -sqrt(1 - |g_T|^2) ),

minimized here over piecewise linear fields subject to Dirichlet values,
pinned nodes and periodic left/right identification.  A damped Newton method
with Armijo backtracking drives the assembled residual (the discrete
divergence of grad v / w) to tolerance.

Gradient cap: serrated boundary data is exactly 1-Lipschitz along the
boundary, so triangles with a boundary edge are forced to |g_T| >= 1 and a
hard cap |g_T| <= 1-delta has an empty feasible set.  The energy integrand is
therefore extended beyond |g|^2 = (1-delta)^2 by its second order Taylor
model (convex, C^2); the extension acts as a stiff regularization of the
lightlike boundary triangles while leaving every interior triangle capped.
The reported slack w_T = sqrt(1 - min(|g_T|^2, (1-delta)^2)) stays positive
everywhere, which is what the conjugation step needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .domain import HandleParams, LayerParams, StripDomain
from .meshing import (
    BOTTOM,
    LEFT,
    RIGHT,
    RING,
    TOP,
    MeshParams,
    TriMesh,
    mesh_handle_strip,
    mesh_layer_cell,
)

__all__ = [
    "DataError",
    "SolverError",
    "SolverOptions",
    "SolveStats",
    "ScalarField",
    "solve",
    "solve_layer",
    "solve_handle",
]

_ARMIJO = 1e-4


class DataError(ValueError):
    """Boundary data or pins are incompatible with a bounded-gradient field."""


class SolverError(RuntimeError):
    """Newton iteration failed to reach the requested tolerance."""

    def __init__(self, message: str, stats: "SolveStats"):
        super().__init__(message)
        self.stats = stats


@dataclass(frozen=True)
class SolverOptions:
    """Newton controls: gradient cap delta, residual tolerance (max norm of
    the assembled Euler-Lagrange residual over free nodes), iteration cap and
    the backtracking factor of the line search."""

    delta: float = 1e-6
    tol: float = 1e-10
    max_iter: int = 200
    backtrack: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 0.1:
            raise ValueError(f"gradient cap delta must lie in (0, 0.1), got {self.delta}")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError(f"backtracking factor must lie in (0,1), got {self.backtrack}")


@dataclass
class SolveStats:
    iterations: int
    residual: float
    energy: float
    feasibility_margin: float
    converged: bool = True


@dataclass
class ScalarField:
    """Piecewise linear solution with per-triangle gradients and slack.

    ``slack`` is the effective slack 1/(2 chi'(|g|^2)); it coincides with
    sqrt(1 - |g|^2) wherever the gradient is below the cap and stays
    positive on the lightlike boundary triangles.
    """

    mesh: TriMesh
    values: np.ndarray
    delta: float
    gradients: np.ndarray
    slack: np.ndarray
    stats: SolveStats
    periodic: bool = False

    def feasibility_margin(self) -> float:
        return float(np.min(1.0 - self.delta - np.linalg.norm(self.gradients, axis=1)))

    # -- point evaluation -----------------------------------------------------

    def _locator(self):
        if not hasattr(self, "_tree"):
            pts = self.mesh.nodes[self.mesh.triangles]
            self._centroids = pts.mean(axis=1)
            self._tree = cKDTree(self._centroids)
        return self._tree

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """P1 interpolation; layer fields wrap x into the periodic cell."""
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if self.periodic:
            pts[:, 0] = pts[:, 0] - 2.0 * np.floor(pts[:, 0] / 2.0)
        tree = self._locator()
        nodes, tris = self.mesh.nodes, self.mesh.triangles
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            bary = None
            for k in (16, 128, len(tris)):
                _, cand = tree.query(p, k=min(k, len(tris)))
                cand = np.atleast_1d(cand)
                bary = self._bary_in(p, cand)
                if bary is not None:
                    break
            if bary is None:
                raise ValueError(f"point {p} lies outside the mesh")
            t, lam = bary
            out[i] = float(lam @ self.values[tris[t]])
        return out

    def _bary_in(self, p, candidates, tol=1e-9):
        nodes, tris = self.mesh.nodes, self.mesh.triangles
        for t in candidates:
            a, b, c = nodes[tris[t]]
            m = np.array([b - a, c - a]).T
            try:
                lam12 = np.linalg.solve(m, p - a)
            except np.linalg.LinAlgError:
                continue
            lam = np.array([1.0 - lam12.sum(), lam12[0], lam12[1]])
            if np.all(lam >= -tol):
                return int(t), lam
        return None

    def content_hash(self) -> str:
        import hashlib

        m = hashlib.sha256()
        m.update(self.mesh.content_hash().encode())
        m.update(np.ascontiguousarray(self.values).tobytes())
        return m.hexdigest()

    def to_json(self) -> dict:
        return {
            "values": self.values.tolist(),
            "delta": self.delta,
            "periodic": self.periodic,
            "mesh_hash": self.mesh.content_hash(),
            "stats": {
                "iterations": self.stats.iterations,
                "residual": self.stats.residual,
                "energy": self.stats.energy,
                "feasibility_margin": self.stats.feasibility_margin,
                "converged": self.stats.converged,
            },
        }


# ---------------------------------------------------------------------------
# P1 operators
# ---------------------------------------------------------------------------


def _p1_operators(mesh: TriMesh):
    """Areas (T,) and hat-function gradients (T,3,2)."""
    p = mesh.nodes[mesh.triangles]
    areas = mesh.triangle_areas()
    sg = np.empty((len(mesh.triangles), 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        sg[:, i, 0] = -e[:, 1]
        sg[:, i, 1] = e[:, 0]
    sg /= (2.0 * areas)[:, None, None]
    return areas, sg


def _gradients(values: np.ndarray, tris: np.ndarray, sg: np.ndarray) -> np.ndarray:
    v = values[tris]
    return np.einsum("ti,tid->td", v, sg)


class _Chi:
    """Energy density chi(rho) = -sqrt(1-rho), rho = |g|^2, extended past the
    gradient cap by its second order Taylor model (convex, C^2).

    The switch point is rho_s = 1 - w_s^2 with w_s = max(sqrt(1-rho0), 0.02):
    saturating the curvature below slack 0.02 keeps the Hessian norm around
    1e4, so double precision Newton steps can resolve residuals at the 1e-10
    scale even for tiny delta.  The density is exact wherever the slack
    exceeds w_s, and the switch sits inside the O(h) lightlike band at the
    serrated boundary where discretization error dominates anyway; delta
    keeps its role as the slack floor used by the conjugation step.
    """

    def __init__(self, delta: float):
        self.rho0 = (1.0 - delta) ** 2
        w_s = max(math.sqrt(1.0 - self.rho0), 0.02)
        self.rho_s = 1.0 - w_s * w_s
        self.a = -w_s
        self.b = 0.5 / w_s
        self.c = 0.125 / w_s ** 3

    def value(self, rho: np.ndarray) -> np.ndarray:
        inside = rho <= self.rho_s
        u = rho - self.rho_s
        return np.where(
            inside,
            -np.sqrt(np.maximum(1.0 - rho, 0.0)),
            self.a + self.b * u + self.c * u * u,
        )

    def d1(self, rho: np.ndarray) -> np.ndarray:
        inside = rho <= self.rho_s
        u = rho - self.rho_s
        safe = np.maximum(1.0 - np.minimum(rho, self.rho_s), 1e-300)
        return np.where(inside, 0.5 / np.sqrt(safe), self.b + 2.0 * self.c * u)

    def d2(self, rho: np.ndarray) -> np.ndarray:
        inside = rho <= self.rho_s
        safe = np.maximum(1.0 - np.minimum(rho, self.rho_s), 1e-300)
        return np.where(inside, 0.25 / safe ** 1.5, 2.0 * self.c)


# ---------------------------------------------------------------------------
# constraint handling
# ---------------------------------------------------------------------------


class _DofMap:
    """Node -> dof folding for periodic identification."""

    def __init__(self, n_nodes: int, periodic_pairs: np.ndarray | None):
        owner = np.arange(n_nodes)
        if periodic_pairs is not None:
            for left, right in periodic_pairs:
                owner[right] = left
        dofs = np.unique(owner)
        self.node_to_dof = np.searchsorted(dofs, owner)
        self.dof_nodes = dofs
        self.n_dofs = len(dofs)

    def expand(self, dof_values: np.ndarray) -> np.ndarray:
        return dof_values[self.node_to_dof]

    def fold_sum(self, node_values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_dofs)
        np.add.at(out, self.node_to_dof, node_values)
        return out


def _lipschitz_check(mesh: TriMesh, constrained: dict[int, float]) -> None:
    """Boundary edges between constrained nodes must not exceed unit slope."""
    t = mesh.triangles
    e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    boundary = uniq[counts == 1]
    for i, j in boundary:
        vi, vj = constrained.get(int(i)), constrained.get(int(j))
        if vi is None or vj is None:
            continue
        dist = float(np.linalg.norm(mesh.nodes[i] - mesh.nodes[j]))
        if abs(vi - vj) > dist * (1.0 + 1e-6) + 1e-12:
            raise DataError(
                f"boundary data violates the 1-Lipschitz bound between nodes "
                f"{i} and {j}: |dv|={abs(vi - vj):.6g} > {dist:.6g}"
            )


def _pin_consistency_check(
    mesh: TriMesh, dirichlet: Mapping[int, float], pins: Mapping[int, float]
) -> None:
    if not pins:
        return
    d_idx = np.fromiter(dirichlet.keys(), dtype=np.int64)
    d_val = np.fromiter(dirichlet.values(), dtype=float)
    for node, value in pins.items():
        dist = np.linalg.norm(mesh.nodes[d_idx] - mesh.nodes[node], axis=1)
        gap = np.abs(d_val - value)
        bad = gap > dist + 1e-9
        if np.any(bad):
            k = int(np.argmax(gap - dist))
            raise DataError(
                f"pinned value {value} at node {node} is not 1-Lipschitz "
                f"compatible with boundary data (worst offender node "
                f"{int(d_idx[k])}: |dv|={gap[k]:.6g} > dist={dist[k]:.6g})"
            )


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------


def solve(
    mesh: TriMesh,
    dirichlet: Mapping[int, float],
    pins: Mapping[int, float] | None = None,
    opts: SolverOptions | None = None,
    warm_start: np.ndarray | None = None,
) -> tuple[ScalarField, SolveStats]:
    """Minimize the maximal-surface energy subject to the given constraints.

    ``dirichlet`` and ``pins`` are node -> value maps (pins are just interior
    Dirichlet constraints, kept separate for reporting); left/right periodic
    identification is taken from the mesh when present.  ``warm_start`` is an
    optional nodal field used instead of the Laplace initial guess.

    Problems whose data force lightlike triangles (serrate boundaries) are
    stiff at small delta; such solves are chained through a decreasing
    sequence of caps, warm-starting each leg (delta continuation).
    """
    opts = opts or SolverOptions()
    pins = dict(pins or {})
    dirichlet = dict(dirichlet)

    constrained = {**dirichlet, **pins}
    if not constrained:
        raise DataError("at least one constrained node is required")
    _lipschitz_check(mesh, constrained)
    _pin_consistency_check(mesh, dirichlet, pins)

    tris = mesh.triangles
    areas, sg = _p1_operators(mesh)
    dmap = _DofMap(mesh.node_count, mesh.periodic_pairs)

    fixed_dofs = np.unique([dmap.node_to_dof[n] for n in constrained])
    fixed_values = np.zeros(dmap.n_dofs)
    for n, val in constrained.items():
        fixed_values[dmap.node_to_dof[n]] = val
    free = np.ones(dmap.n_dofs, dtype=bool)
    free[fixed_dofs] = False

    rows = dmap.node_to_dof[np.repeat(tris, 3, axis=1).ravel()]
    cols = dmap.node_to_dof[np.tile(tris, (1, 3)).ravel()]

    def energy(dof_values: np.ndarray, chi: _Chi) -> float:
        g = _gradients(dmap.expand(dof_values), tris, sg)
        rho = np.sum(g * g, axis=1)
        return float(np.sum(areas * chi.value(rho)))

    def grad_hess(dof_values: np.ndarray, chi: _Chi):
        g = _gradients(dmap.expand(dof_values), tris, sg)
        rho = np.sum(g * g, axis=1)
        c1 = chi.d1(rho)
        c2 = chi.d2(rho)
        flux = 2.0 * (areas * c1)[:, None] * g
        grad_nodes = np.einsum("td,tid->ti", flux, sg)
        grad = np.zeros(dmap.n_dofs)
        np.add.at(grad, dmap.node_to_dof[tris.ravel()], grad_nodes.ravel())
        # element matrices: A * sg_i . (2 c1 I + 4 c2 g g^T) . sg_j
        sgg = np.einsum("tid,td->ti", sg, g)
        k_el = (
            2.0 * (areas * c1)[:, None, None] * np.einsum("tid,tjd->tij", sg, sg)
            + 4.0 * (areas * c2)[:, None, None] * sgg[:, :, None] * sgg[:, None, :]
        )
        H = sp.coo_matrix(
            (k_el.ravel(), (rows, cols)), shape=(dmap.n_dofs, dmap.n_dofs)
        ).tocsr()
        return grad, H

    def newton(v: np.ndarray, chi: _Chi, tol: float, stats: SolveStats) -> np.ndarray:
        e_cur = energy(v, chi)
        lu = None
        for it in range(opts.max_iter + 1):
            grad, H = grad_hess(v, chi)
            res = float(np.max(np.abs(grad[free]))) if np.any(free) else 0.0
            stats.iterations += 1 if it else 0
            stats.residual = res
            stats.energy = e_cur
            if res <= tol:
                stats.converged = True
                return v
            if it == opts.max_iter:
                return v
            Hff = H[free][:, free].tocsc()
            lu = spla.splu(Hff)
            rhs = -grad[free]
            df = lu.solve(rhs)
            # one round of iterative refinement; the capped triangles make
            # the Hessian stiff and a raw LU step loses digits
            df += lu.solve(rhs - Hff @ df)
            d = np.zeros(dmap.n_dofs)
            d[free] = df
            slope = float(grad[free] @ df)
            if not np.isfinite(slope) or slope >= 0.0:
                d[free] = -grad[free]
                slope = -float(grad[free] @ grad[free])
            noise = 64.0 * np.finfo(float).eps * max(1.0, abs(e_cur))
            if -slope <= noise:
                # predicted decrease below the energy evaluation noise: the
                # Armijo test is blind here, trust the (damped) Newton step
                e_new = energy(v + d, chi)
                alpha = 1.0
            else:
                alpha = 1.0
                for _ in range(80):
                    e_new = energy(v + alpha * d, chi)
                    if np.isfinite(e_new) and e_new <= e_cur + _ARMIJO * alpha * slope:
                        break
                    alpha *= opts.backtrack
                else:
                    raise SolverError("line search failed to make progress", stats)
            if e_new > e_cur + 1e-12 * max(1.0, abs(e_cur)):
                raise SolverError("energy increased along the search direction", stats)
            v = v + alpha * d
            e_cur = e_new
        return v

    # -- initial guess: Laplace solve, contracted toward 1/2 ------------------
    if warm_start is not None:
        v = np.asarray(warm_start, dtype=float)[dmap.dof_nodes].copy()
        v[fixed_dofs] = fixed_values[fixed_dofs]
    else:
        lap_el = (areas[:, None, None]) * np.einsum("tid,tjd->tij", sg, sg)
        K = sp.coo_matrix(
            (lap_el.ravel(), (rows, cols)), shape=(dmap.n_dofs, dmap.n_dofs)
        ).tocsr()
        v = fixed_values.copy()
        rhs = -K[:, fixed_dofs] @ fixed_values[fixed_dofs]
        if np.any(free):
            v[free] = spla.spsolve(K[free][:, free].tocsc(), rhs[free])
        v0 = v.copy()
        v0[free] = 0.5
        g_base = _gradients(dmap.expand(v0), tris, sg)
        g_full = _gradients(dmap.expand(v), tris, sg)
        beta = _contraction_factor(g_base, g_full - g_base, _Chi(opts.delta).rho0)
        v[free] = 0.5 + beta * (v[free] - 0.5)

    # -- delta continuation ----------------------------------------------------
    chi_target = _Chi(opts.delta)
    g_init = _gradients(dmap.expand(v), tris, sg)
    stiff = bool(np.any(np.sum(g_init * g_init, axis=1) >= chi_target.rho0))
    stats = SolveStats(0, math.inf, 0.0, 0.0, converged=False)
    if stiff and opts.delta < 1e-3:
        delta = 1e-2
        while delta > opts.delta * 1.0001:
            stats.converged = False
            v = newton(v, _Chi(delta), max(opts.tol, 1e-8), stats)
            delta = max(delta * 0.1, opts.delta)
    stats.converged = False
    v = newton(v, chi_target, opts.tol, stats)

    if not stats.converged:
        raise SolverError(
            f"Newton did not reach tol={opts.tol} in {opts.max_iter} iterations "
            f"(residual {stats.residual:.3e})",
            stats,
        )

    values = dmap.expand(v)
    g = _gradients(values, tris, sg)
    rho = np.sum(g * g, axis=1)
    # effective slack consistent with the energy flux 2 chi'(rho) g: equals
    # sqrt(1-|g|^2) below the cap and stays positive on capped triangles;
    # using it in the conjugate forms preserves the discrete conjugacy (the
    # closedness defect of dPhi at a free node is its equilibrium residual)
    slack = 1.0 / (2.0 * chi_target.d1(rho))
    stats.feasibility_margin = float(np.min(1.0 - opts.delta - np.sqrt(rho)))
    fld = ScalarField(
        mesh=mesh,
        values=values,
        delta=opts.delta,
        gradients=g,
        slack=slack,
        stats=stats,
        periodic=mesh.periodic_pairs is not None,
    )
    return fld, stats


def _contraction_factor(g_base: np.ndarray, g_dir: np.ndarray, rho0: float) -> float:
    """Largest beta in [0,1] with |g_base + beta g_dir|^2 <= rho0 on every
    triangle that is feasible at beta = 0 (lightlike data triangles are
    excluded; the extended energy handles them)."""
    a2 = np.sum(g_base * g_base, axis=1)
    ab = np.sum(g_base * g_dir, axis=1)
    b2 = np.sum(g_dir * g_dir, axis=1)
    feasible = a2 <= rho0
    beta = 1.0
    mask = feasible & (b2 > 0.0)
    disc = ab[mask] ** 2 - b2[mask] * (a2[mask] - rho0)
    root = (-ab[mask] + np.sqrt(np.maximum(disc, 0.0))) / b2[mask]
    if len(root):
        beta = float(min(1.0, max(np.min(root), 0.0)))
    return beta


# ---------------------------------------------------------------------------
# the two model problems
# ---------------------------------------------------------------------------


def solve_layer(
    params: LayerParams,
    mp: MeshParams | None = None,
    opts: SolverOptions | None = None,
    refine_levels: int = 0,
) -> ScalarField:
    """Serrate Dirichlet data on the periodic cell; values in [0, 1]."""
    from .meshing import refine as _refine

    mp = mp or MeshParams()
    dom = StripDomain(params)
    mesh = mesh_layer_cell(params, mp)
    for _ in range(refine_levels):
        mesh = _refine(mesh)
    dirichlet: dict[int, float] = {}
    for n in mesh.tags[BOTTOM]:
        dirichlet[int(n)] = float(dom.boundary_value_bottom(mesh.nodes[n, 0]))
    for n in mesh.tags[TOP]:
        dirichlet[int(n)] = float(dom.boundary_value_top(mesh.nodes[n, 0]))
    fld, _ = solve(mesh, dirichlet, opts=opts)
    return fld


def solve_handle(
    params: HandleParams,
    mp: MeshParams | None = None,
    farfield: ScalarField | None = None,
    opts: SolverOptions | None = None,
    refine_levels: int = 0,
) -> ScalarField:
    """Punctured strip: serrate data top/bottom, layer far field on the
    truncation sides, ring pinned to 1.

    The top and right side data are assigned through the point-symmetry
    pairing (the serrate data and the exact layer field are s-symmetric), so
    the discrete problem is exactly symmetric.
    """
    from .meshing import refine as _refine

    mp = mp or MeshParams()
    dom = StripDomain(params)
    if farfield is None:
        farfield = solve_layer(params.layer_params(), mp, opts, refine_levels=refine_levels)
    fp = farfield.mesh.params
    if abs(fp["x0"] - params.x0) > 1e-12 or abs(fp["y0"] - params.y0) > 1e-12:
        raise ValueError("far-field layer solution was computed for different parameters")

    mesh = mesh_handle_strip(params, mp)
    for _ in range(refine_levels):
        mesh = _refine(mesh)
    sym = mesh.sym_pair
    dirichlet: dict[int, float] = {}
    for n in mesh.tags[BOTTOM]:
        dirichlet[int(n)] = float(dom.boundary_value_bottom(mesh.nodes[n, 0]))
    left = mesh.tags[LEFT]
    left_vals = farfield.evaluate(mesh.nodes[left])
    for n, val in zip(left, left_vals):
        dirichlet[int(n)] = float(val)
    for n in list(dirichlet.keys()):
        dirichlet[int(sym[n])] = dirichlet[n]
    pins = {int(n): 1.0 for n in mesh.tags[RING]}
    fld, _ = solve(mesh, dirichlet, pins=pins, opts=opts)
    return fld

"""Export of surfaces and solution snapshots.

OBJ is text with one named group per boundary curve (polylines as ``l``
elements); PLY is binary little endian with double precision vertices so a
written mesh reproduces the positions bit for bit.  Snapshots bundle the
planar mesh and the nodal values as JSON for the verification mode.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .conjugation import SurfaceMesh
from .maxsolve import ScalarField, SolveStats
from .meshing import TriMesh

__all__ = [
    "surface_to_obj",
    "surface_to_ply",
    "write_surface",
    "field_snapshot",
    "load_field_snapshot",
]


def surface_to_obj(surface: SurfaceMesh) -> str:
    lines = ["# conjugate surface export"]
    for x, y, z in surface.positions:
        lines.append(f"v {x!r} {y!r} {z!r}")
    lines.append("g surface")
    for a, b, c in surface.triangles + 1:
        lines.append(f"f {a} {b} {c}")
    for name, polys in sorted(surface.curves.items()):
        for i, poly in enumerate(polys):
            lines.append(f"g curve_{name}_{i}")
            idx = " ".join(str(int(n) + 1) for n in poly)
            closed = name == "gamma"
            if closed:
                idx += f" {int(poly[0]) + 1}"
            lines.append(f"l {idx}")
    return "\n".join(lines) + "\n"


def surface_to_ply(surface: SurfaceMesh) -> bytes:
    n, t = len(surface.positions), len(surface.triangles)
    header = [
        "ply",
        "format binary_little_endian 1.0",
        "comment conjugate surface export",
    ]
    for name, polys in sorted(surface.curves.items()):
        for i, poly in enumerate(polys):
            header.append(
                "comment curve " + name + f"_{i} " + " ".join(str(int(v)) for v in poly)
            )
    header += [
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {t}",
        "property list uchar int32 vertex_indices",
        "end_header",
    ]
    blob = bytearray(("\n".join(header) + "\n").encode("ascii"))
    blob += np.ascontiguousarray(surface.positions, dtype="<f8").tobytes()
    face = struct.Struct("<B3i")
    for a, b, c in surface.triangles:
        blob += face.pack(3, int(a), int(b), int(c))
    return bytes(blob)


def write_surface(surface: SurfaceMesh, directory: Path, stem: str) -> dict:
    directory.mkdir(parents=True, exist_ok=True)
    obj_path = directory / f"{stem}.obj"
    ply_path = directory / f"{stem}.ply"
    obj_path.write_text(surface_to_obj(surface))
    ply_path.write_bytes(surface_to_ply(surface))
    return {"obj": obj_path.name, "ply": ply_path.name, "hash": surface.content_hash()}


def field_snapshot(fld: ScalarField) -> dict:
    return {"mesh": fld.mesh.to_json(), "field": fld.to_json()}


def load_field_snapshot(data: dict) -> ScalarField:
    """Rebuild a field from a snapshot (gradients and slack recomputed with
    the stored cap)."""
    from .maxsolve import _Chi, _gradients, _p1_operators

    mesh = TriMesh.from_json(data["mesh"])
    values = np.asarray(data["field"]["values"], dtype=float)
    delta = float(data["field"]["delta"])
    _, sg = _p1_operators(mesh)
    g = _gradients(values, mesh.triangles, sg)
    chi = _Chi(delta)
    rho = np.sum(g * g, axis=1)
    slack = 1.0 / (2.0 * chi.d1(rho))
    st = data["field"]["stats"]
    stats = SolveStats(
        iterations=int(st["iterations"]),
        residual=float(st["residual"]),
        energy=float(st["energy"]),
        feasibility_margin=float(st["feasibility_margin"]),
        converged=bool(st["converged"]),
    )
    return ScalarField(
        mesh=mesh,
        values=values,
        delta=delta,
        gradients=g,
        slack=slack,
        stats=stats,
        periodic=bool(data["field"]["periodic"]),
    )

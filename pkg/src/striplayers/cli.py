"""Batch front end: configured runs with exported meshes and check reports.

Modes: ``layer`` builds the periodic surface and its reflection extension,
``handle`` runs the full punctured pipeline with the verification suite,
``join-path`` emits a unit-edge cap path, ``verify`` reruns the checks on a
stored snapshot, and ``sweep`` probes a parameter grid.  Every run writes a
deterministic JSON report (full resolved config, mesh/field hashes, one
entry per check) into a directory named by the config hash.

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration or solver
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analysis, conjugation, exports
from .domain import (
    AdmissibilityError,
    ConstructionError,
    HandleParams,
    LayerParams,
    StripDomain,
    join_path,
)
from .maxsolve import (
    DataError,
    SolverError,
    SolverOptions,
    solve_handle,
    solve_layer,
)
from .meshing import BOTTOM, MeshError, MeshParams, TOP

__all__ = ["RunConfig", "ConfigError", "run", "main"]

_MODES = ("layer", "handle", "join-path", "verify", "sweep")


class ConfigError(ValueError):
    """The run configuration is malformed."""


@dataclass
class RunConfig:
    mode: str = "layer"
    x0: float = 0.5
    y0: float = 1.5
    h: float = 0.1
    eps: float = 0.05
    grading: float = 0.7
    L: int = 8
    delta: float = 1e-6
    tol: float = 1e-10
    max_iter: int = 200
    backtrack: float = 0.5
    refine: int = 0
    copies: int = 2
    seed: int = 2024
    out: str = "runs"
    target: str | None = None
    sweep_x0: list = field(default_factory=lambda: [-0.5, 0.0, 0.5, 1.0])
    sweep_y0: list = field(default_factory=lambda: [1.5, 2.0])

    def validate(self) -> "RunConfig":
        if self.mode not in _MODES:
            raise ConfigError(f"mode must be one of {_MODES}, got {self.mode!r}")
        numeric = {
            "x0": (-1.0, 1.0),
            "y0": (0.0, math.inf),
            "h": (0.0, 1.0),
            "eps": (0.0, 1.0),
            "grading": (0.0, 1.0),
            "delta": (0.0, 0.1),
            "tol": (0.0, 1.0),
            "backtrack": (0.0, 1.0),
        }
        for name, (lo, hi) in numeric.items():
            val = getattr(self, name)
            if not isinstance(val, (int, float)) or not lo <= float(val) <= hi:
                raise ConfigError(f"{name}={val!r} outside [{lo}, {hi}]")
        for name in ("L", "max_iter", "refine", "copies", "seed"):
            val = getattr(self, name)
            if not isinstance(val, int) or val < 0:
                raise ConfigError(f"{name}={val!r} must be a nonnegative integer")
        if self.mode == "verify" and not self.target:
            raise ConfigError("verify mode needs target: the run directory to recheck")
        return self

    @classmethod
    def from_sources(cls, config_file: str | None, overrides: dict) -> "RunConfig":
        data: dict = {}
        if config_file:
            try:
                data.update(json.loads(Path(config_file).read_text()))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {config_file}: {exc}") from exc
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()

    def mesh_params(self) -> MeshParams:
        return MeshParams(h=self.h, grading=self.grading, eps=self.eps, L=self.L)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            delta=self.delta,
            tol=self.tol,
            max_iter=self.max_iter,
            backtrack=self.backtrack,
        )

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def run_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


def _check(checks: dict, name: str, ok: bool, value, threshold=None) -> None:
    entry = {"pass": bool(ok), "value": value}
    if threshold is not None:
        entry["threshold"] = threshold
    checks[name] = entry


def _serration_checks(fld, checks: dict) -> None:
    mesh = fld.mesh
    dom = StripDomain(LayerParams(mesh.params["x0"], mesh.params["y0"]))
    worst = 0.0
    for tag in (BOTTOM, TOP):
        idx = mesh.tags[tag]
        xs = mesh.nodes[idx, 0]
        want = (
            dom.boundary_value_bottom(xs) if tag == BOTTOM else dom.boundary_value_top(xs)
        )
        peaks = np.abs(want - 1.0) < 1e-12
        valleys = np.abs(want) < 1e-12
        if peaks.any():
            worst = max(worst, float(np.max(np.abs(fld.values[idx[peaks]] - 1.0))))
        if valleys.any():
            worst = max(worst, float(np.max(np.abs(fld.values[idx[valleys]]))))
    _check(checks, "serration_values_exact", worst == 0.0, worst, 0.0)
    lo, hi = float(fld.values.min()), float(fld.values.max())
    _check(checks, "value_bounds", lo >= 0.0 and hi <= 1.0, [lo, hi], [0.0, 1.0])


def _krust_check(fld, surface, checks: dict, seed: int) -> None:
    mesh = fld.mesh
    rng = np.random.default_rng(seed)
    ok_nodes = analysis._resolved_nodes(surface)
    cand = np.nonzero(ok_nodes)[0]
    pairs = rng.choice(cand, size=(200, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    dplan = np.linalg.norm(mesh.nodes[pairs[:, 0]] - mesh.nodes[pairs[:, 1]], axis=1)
    dproj = np.linalg.norm(
        surface.positions[pairs[:, 0], :2] - surface.positions[pairs[:, 1], :2], axis=1
    )
    ratio = float(np.min(dproj / dplan))
    _check(checks, "krust_injectivity_ratio", ratio > 0.2, ratio, 0.2)


def _run_layer(cfg: RunConfig, outdir: Path) -> dict:
    params = LayerParams(cfg.x0, cfg.y0)
    fld = solve_layer(params, cfg.mesh_params(), cfg.solver_options(), refine_levels=cfg.refine)
    checks: dict = {}
    _serration_checks(fld, checks)
    _check(checks, "solver_converged", fld.stats.converged, fld.stats.residual, cfg.tol)

    pseudo = conjugation.translation_pseudo_period(fld)
    p12 = float(np.linalg.norm(pseudo.vector[:2]))
    _check(checks, "pseudo_period_vertical", abs(pseudo.vector[2]) <= 1e-10,
           float(pseudo.vector[2]), 1e-10)
    _check(checks, "pseudo_period_horizontal", p12 > 0.05, p12, 0.05)
    layer_k = conjugation.layer_translation_constant(fld)

    surface = conjugation.build_surface(fld)
    _krust_check(fld, surface, checks, cfg.seed)
    extended = analysis.reflect_extend(surface, cfg.copies)
    if cfg.copies >= 2:
        shift = analysis.shift_invariance_residual(extended)
        _check(checks, "reflection_shift_invariance", shift <= 1e-12, shift, 1e-12)

    artifacts = exports.write_surface(surface, outdir, "surface")
    artifacts_ext = exports.write_surface(extended, outdir, "extended")
    snapshot = {"layer": exports.field_snapshot(fld)}
    (outdir / "snapshot.json").write_text(json.dumps(snapshot, sort_keys=True))
    return {
        "checks": checks,
        "layer_k": layer_k,
        "pseudo_period": pseudo.to_json(),
        "mesh_hash": fld.mesh.content_hash(),
        "field_hash": fld.content_hash(),
        "artifacts": {"surface": artifacts, "extended": artifacts_ext},
        "stats": fld.to_json()["stats"],
    }


def _handle_checks(cfg: RunConfig, lay, fld, checks: dict) -> dict:
    report: dict = {}
    surface = conjugation.build_surface(fld)

    s_res = analysis.symmetry_residual(fld, "s")
    _check(checks, "point_symmetry", s_res <= 10.0 * cfg.tol, s_res, 10.0 * cfg.tol)
    if abs(abs(cfg.x0) - 1.0) < 1e-12:
        for sym in ("x-mirror", "y-mirror"):
            res = analysis.symmetry_residual(fld, sym)
            _check(checks, f"{sym}_symmetry", res <= 10.0 * cfg.tol, res, 10.0 * cfg.tol)

    try:
        vp = conjugation.vertical_period_k(fld)
        _check(checks, "ring_circulation_agreement", vp.agreement <= 1e-6, vp.agreement, 1e-6)
        report["k"] = vp.to_json()
    except conjugation.IntegrationQualityError as exc:
        _check(checks, "ring_circulation_agreement", False, str(exc), 1e-6)
        vp = None

    mv = conjugation.recover_graph(fld)
    if mv.jumps is not None and len(mv.jumps):
        spread = float(np.max(np.abs(mv.jumps - np.mean(mv.jumps))))
        _check(checks, "cut_jump_constant", spread <= 1e-8, spread, 1e-8)
        _check(checks, "cut_jump_matches_k", mv.jump_spread() <= 1e-6, mv.jump_spread(), 1e-6)
    shift = conjugation.symmetry_shift_residual(fld, mv)
    _check(checks, "graph_half_period_shift", shift <= 1e-6, shift, 1e-6)

    forms = conjugation.coordinate_forms(fld)
    period = conjugation.loop_period(forms, fld.mesh.loops[1])
    rho = max(f.rho for f in forms[:2])
    bound = 10.0 * (fld.mesh.h + rho)
    pmax = float(np.max(np.abs(period.vector)))
    _check(checks, "puncture_period_small", pmax <= bound, pmax, bound)
    report["puncture_period"] = period.to_json()

    gr = analysis.gamma_report(surface)
    _check(checks, "gamma_planar", gr.max_height_deviation == 0.0, gr.max_height_deviation, 0.0)
    _check(
        checks,
        "gamma_turning",
        abs(gr.total_absolute_turning - 2.0 * math.pi) <= 0.05 * 2.0 * math.pi
        and gr.single_sign,
        gr.total_absolute_turning,
        [2.0 * math.pi, 0.05],
    )
    _check(checks, "gamma_simple", gr.simple, gr.simple)
    report["gamma"] = gr.to_json()

    er = analysis.embedding_report(surface, seed=cfg.seed)
    total_inters = sum(er.intersections.values())
    _check(checks, "curve_arrangement_embedded", total_inters == 0, er.intersections)
    _check(checks, "half_domain_separation", er.separated, er.side_counts)
    report["embedding"] = er.to_json()

    ar = analysis.asymptotics_report(fld, lay)
    _check(checks, "asymptotic_decay", ar.monotone and ar.residuals[-1] <= 0.5 * ar.residuals[0],
           ar.residuals.tolist())
    report["asymptotics"] = ar.to_json()

    label = analysis.classify_handle(surface)
    expected = {1.0: "minus", -1.0: "plus"}.get(cfg.x0)
    ok = label.symmetric and (expected is None or label.label == expected)
    _check(checks, "handle_type", ok, label.label, expected)
    report["handle_type"] = {
        "label": label.label,
        "endpoint_values": list(label.endpoint_values),
        "symmetric": label.symmetric,
    }
    report["surface"] = surface
    return report


def _run_handle(cfg: RunConfig, outdir: Path) -> dict:
    params = HandleParams(cfg.x0, cfg.y0)
    mp = cfg.mesh_params()
    opts = cfg.solver_options()
    lay = solve_layer(params.layer_params(), mp, opts, refine_levels=cfg.refine)
    fld = solve_handle(params, mp, lay, opts, refine_levels=cfg.refine)
    checks: dict = {}
    _serration_checks(fld, checks)
    _check(checks, "solver_converged", fld.stats.converged, fld.stats.residual, cfg.tol)
    ring = fld.mesh.tags["puncture-ring"]
    ring_dev = float(np.max(np.abs(fld.values[ring] - 1.0)))
    _check(checks, "ring_pinned", ring_dev == 0.0, ring_dev, 0.0)

    report = _handle_checks(cfg, lay, fld, checks)
    surface = report.pop("surface")
    artifacts = exports.write_surface(surface, outdir, "surface")
    extended = analysis.reflect_extend(surface, cfg.copies)
    artifacts_ext = exports.write_surface(extended, outdir, "extended")
    snapshot = {
        "layer": exports.field_snapshot(lay),
        "handle": exports.field_snapshot(fld),
    }
    (outdir / "snapshot.json").write_text(json.dumps(snapshot, sort_keys=True))
    report.update(
        {
            "checks": checks,
            "mesh_hash": fld.mesh.content_hash(),
            "field_hash": fld.content_hash(),
            "artifacts": {"surface": artifacts, "extended": artifacts_ext},
            "stats": fld.to_json()["stats"],
        }
    )
    return report


def _run_join_path(cfg: RunConfig, outdir: Path) -> dict:
    path = join_path(cfg.x0, cfg.y0)
    checks: dict = {}
    _check(checks, "odd_edge_count", path.edge_count % 2 == 1, path.edge_count)
    _check(checks, "unit_edges", path.max_unit_deviation() <= 1e-9,
           path.max_unit_deviation(), 1e-9)
    _check(checks, "convex", path.is_convex(), path.is_convex())
    _check(checks, "contained", path.in_box(cfg.y0), path.in_box(cfg.y0))
    (outdir / "join_path.json").write_text(json.dumps(path.to_json(), sort_keys=True))
    return {"checks": checks, "join_path": path.to_json()}


def _run_verify(cfg: RunConfig, outdir: Path) -> dict:
    target = Path(cfg.target)
    snapshot = json.loads((target / "snapshot.json").read_text())
    stored = json.loads((target / "report.json").read_text())
    checks: dict = {}
    if "handle" in snapshot:
        lay = exports.load_field_snapshot(snapshot["layer"])
        fld = exports.load_field_snapshot(snapshot["handle"])
        sub_cfg = RunConfig(**{**asdict(cfg), "mode": "handle",
                               "x0": fld.mesh.params["x0"], "y0": fld.mesh.params["y0"]})
        _serration_checks(fld, checks)
        report = _handle_checks(sub_cfg, lay, fld, checks)
        report.pop("surface", None)
    else:
        fld = exports.load_field_snapshot(snapshot["layer"])
        _serration_checks(fld, checks)
        pseudo = conjugation.translation_pseudo_period(fld)
        _check(checks, "pseudo_period_vertical", abs(pseudo.vector[2]) <= 1e-10,
               float(pseudo.vector[2]), 1e-10)
        report = {"pseudo_period": pseudo.to_json()}
    report["checks"] = checks
    report["verified_run"] = stored.get("run_hash", "")
    return report


def _run_sweep(cfg: RunConfig, outdir: Path) -> dict:
    points = []
    checks: dict = {}
    prev = {}
    for y0 in cfg.sweep_y0:
        for x0 in cfg.sweep_x0:
            entry = {"x0": x0, "y0": y0}
            try:
                params = LayerParams(float(x0), float(y0))
            except AdmissibilityError as exc:
                entry["status"] = f"inadmissible: {exc}"
                points.append(entry)
                continue
            sub = RunConfig(**{**asdict(cfg), "mode": "layer", "x0": float(x0), "y0": float(y0)})
            fld = solve_layer(params, sub.mesh_params(), sub.solver_options())
            pseudo = conjugation.translation_pseudo_period(fld)
            entry.update(
                status="ok",
                layer_k=conjugation.layer_translation_constant(fld),
                period_norm=float(np.linalg.norm(pseudo.vector[:2])),
                bounds_ok=bool(fld.values.min() >= 0.0 and fld.values.max() <= 1.0),
                iterations=fld.stats.iterations,
            )
            if y0 in prev:
                entry["period_step"] = abs(entry["period_norm"] - prev[y0])
            prev[y0] = entry["period_norm"]
            points.append(entry)
    steps = [p["period_step"] for p in points if "period_step" in p]
    _check(checks, "all_points_solved", all(p["status"] != "error" for p in points),
           len(points))
    if steps:
        _check(checks, "continuity_probe", max(steps) < 1.0, max(steps), 1.0)
    return {"checks": checks, "points": points}


def run(cfg: RunConfig) -> int:
    """Execute a validated configuration; returns the process exit code."""
    outdir = Path(cfg.out) / f"{cfg.mode}-{cfg.run_hash()}"
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        runner = {
            "layer": _run_layer,
            "handle": _run_handle,
            "join-path": _run_join_path,
            "verify": _run_verify,
            "sweep": _run_sweep,
        }[cfg.mode]
        report = runner(cfg, outdir)
        status = 0 if all(c["pass"] for c in report["checks"].values()) else 1
    except (AdmissibilityError, ConstructionError, MeshError, DataError,
            SolverError, ConfigError, OSError, KeyError, ValueError) as exc:
        report = {"checks": {}, "error": f"{type(exc).__name__}: {exc}"}
        status = 2
    report["config"] = asdict(cfg)
    report["run_hash"] = cfg.run_hash()
    report["status"] = status
    (outdir / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2))
    summary = {k: v["pass"] for k, v in report["checks"].items()}
    print(json.dumps({"run": str(outdir), "status": status, "checks": summary}, sort_keys=True))
    return status


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="striplayers",
        description="Build and verify strip-layer and one-handle minimal surfaces.",
    )
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--mode", choices=_MODES)
    parser.add_argument("--out", help="output root directory")
    parser.add_argument("--refine", type=int, help="uniform refinement levels")
    parser.add_argument("--seed", type=int, help="sampling seed")
    parser.add_argument("--x0", type=float)
    parser.add_argument("--y0", type=float)
    parser.add_argument("--h", type=float)
    parser.add_argument("--eps", type=float)
    parser.add_argument("--L", type=int)
    parser.add_argument("--copies", type=int)
    parser.add_argument("--target", help="run directory for verify mode")
    args = parser.parse_args(argv)
    overrides = {
        k: getattr(args, k)
        for k in (
            "mode", "out", "refine", "seed", "x0", "y0", "h", "eps", "L",
            "copies", "target",
        )
    }
    try:
        cfg = RunConfig.from_sources(args.config, overrides)
    except (ConfigError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

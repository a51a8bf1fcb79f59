"""Command-line driver for case directories.

    ferrovolt check  --case DIR [--set k=v ...]
    ferrovolt solve  --case DIR [--set k=v ...]
    ferrovolt sample --case DIR
    ferrovolt export --case DIR
    ferrovolt verify NAME [--h-near H]

Exit codes: 0 ok, 1 usage or configuration error, 2 divergence (or linear
solver breakdown), 3 outer iteration limit, 4 file I/O error, 5 verification
tolerance exceeded.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from ferrovolt import cases, postproc
from ferrovolt.config import CONFIG_NAME, CaseConfig, ConfigError, load_config, parse_config, validate_against_mesh
from ferrovolt.field import map_config_to_fields
from ferrovolt.linalg import SolverConfigError
from ferrovolt.magnetostatics import STATUS_CONVERGED, STATUS_MAX_ITER, bgs_outer_loop
from ferrovolt.mesh import MeshError, MultiRegionMesh, check_quality, load_mesh
from ferrovolt.oracles import CURRENT_WIRE, KINDS, MAGNETIZED_CYLINDER, PERMEABLE_CYLINDER, AnalyticCase, analytic_B

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_MAX_ITER = 3
EXIT_IO = 4
EXIT_TOLERANCE = 5

STATE_FILE = "state.npz"
SUMMARY_FILE = "summary.json"
THREADS_ENV = "FERROVOLT_THREADS"

# relative error budgets of the built-in oracle cases
VERIFY_TOLERANCE = {MAGNETIZED_CYLINDER: 0.05, CURRENT_WIRE: 0.02, PERMEABLE_CYLINDER: 0.05}
INTERIOR_MARGIN_CELLS = 2.0  # interior comparison skips cells this many widths from the rim
WIRE_RANGE = (0.2, 5.0)  # radial comparison window for the wire, in radii
WIRE_RAYS = 8  # radial sample lines for the wire profile
WIRE_SAMPLES = 200  # points per radial line
POTENTIAL_JUMP_TOLERANCE = 1e-3  # max |A| mismatch across interfaces, relative to max |A|

log = logging.getLogger("ferrovolt")


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _limit_threads() -> None:
    value = os.environ.get(THREADS_ENV)
    if value:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, value)


# ---------------------------------------------------------------------------
# case loading
# ---------------------------------------------------------------------------


def load_case(case_dir: str | Path, overrides: list[str] | None = None) -> tuple[CaseConfig, MultiRegionMesh]:
    case_dir = Path(case_dir)
    cfg_path = case_dir / CONFIG_NAME
    if not cfg_path.is_file():
        raise CommandError(f"no {CONFIG_NAME} in {case_dir}", EXIT_IO)
    try:
        cfg = load_config(cfg_path, overrides)
    except ConfigError as exc:
        raise CommandError(f"configuration error: {exc}", EXIT_USAGE) from exc
    except OSError as exc:
        raise CommandError(f"cannot read {cfg_path}: {exc}", EXIT_IO) from exc
    try:
        mesh = load_mesh(cfg.mesh_path, None if cfg.mesh_format == "auto" else cfg.mesh_format)
    except FileNotFoundError as exc:
        raise CommandError(f"mesh file not found: {cfg.mesh_path}", EXIT_IO) from exc
    except OSError as exc:
        raise CommandError(f"cannot read mesh {cfg.mesh_path}: {exc}", EXIT_IO) from exc
    except MeshError as exc:
        raise CommandError(f"invalid mesh {cfg.mesh_path}: {exc}", EXIT_USAGE) from exc
    try:
        validate_against_mesh(cfg, mesh)
    except ConfigError as exc:
        raise CommandError(f"configuration error: {exc}", EXIT_USAGE) from exc
    return cfg, mesh


def _fields(cfg: CaseConfig, mesh: MultiRegionMesh):
    try:
        return map_config_to_fields(cfg.materials, mesh, cfg.conditions(mesh))
    except (KeyError, ValueError) as exc:
        raise CommandError(f"configuration error: {exc}", EXIT_USAGE) from exc


def save_state(solution, path: Path) -> None:
    arrays = {}
    for name, st in solution.states.items():
        arrays[f"A__{name}"] = st.fields.A.values
        arrays[f"B__{name}"] = st.fields.B.values
    np.savez_compressed(path, **arrays)


def load_state(cfg: CaseConfig, mesh: MultiRegionMesh) -> dict[str, SimpleNamespace]:
    path = cfg.output_dir / STATE_FILE
    if not path.is_file():
        raise CommandError(f"no solved state at {path}; run 'ferrovolt solve' first", EXIT_IO)
    fields = _fields(cfg, mesh)
    try:
        data = np.load(path)
        for name, f in fields.items():
            f.A.values = data[f"A__{name}"]
            f.B.values = data[f"B__{name}"]
    except (OSError, KeyError, ValueError) as exc:
        raise CommandError(f"state file {path} does not match the case: {exc}", EXIT_IO) from exc
    return {name: SimpleNamespace(region=f.region, fields=f) for name, f in fields.items()}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    cfg, mesh = load_case(args.case, args.set)
    report = check_quality(mesh)
    print(f"mesh {cfg.mesh_path}: {len(mesh.regions)} regions, {len(mesh.interfaces)} interfaces")
    for r in mesh.regions:
        mat = cfg.materials[r.name]
        print(f"  region {r.name}: {r.n_cells} cells, mu_r={mat.mu_r:g}, M={mat.M}, J={mat.J}")
    print(report.format())
    return EXIT_OK if report.ok else EXIT_USAGE


def _write_samples(cfg: CaseConfig, states) -> list[Path]:
    out = []
    locator = None
    for s in cfg.samples:
        locator = locator or postproc.CellLocator([st.region for st in states.values()])
        table = postproc.sample_line(states, s.p0, s.p1, s.n, s.field, locator)
        path = cfg.output_dir / f"sample_{s.name}.csv"
        postproc.write_csv_samples(table, path)
        out.append(path)
    return out


def cmd_solve(args) -> int:
    cfg, mesh = load_case(args.case, args.set)
    fields = _fields(cfg, mesh)
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CommandError(f"cannot create output directory {cfg.output_dir}: {exc}", EXIT_IO) from exc
    sol = bgs_outer_loop(mesh, fields, cfg.control, K_f=cfg.interface_currents(mesh))
    summary = sol.summary()
    summary["regions"] = {n: st.region.n_cells for n, st in sol.states.items()}
    if sol.divergence is not None:
        summary["divergence"] = dict(dataclasses.asdict(sol.divergence), message=sol.divergence.format())
    try:
        sol.write_log(cfg.output_dir / cfg.log_name)
        (cfg.output_dir / SUMMARY_FILE).write_text(json.dumps(summary, indent=2) + "\n")
        save_state(sol, cfg.output_dir / STATE_FILE)
        if cfg.write_vtk:
            postproc.write_vtk(sol, cfg.output_dir / "solution.vtk")
        _write_samples(cfg, sol.states)
    except OSError as exc:
        raise CommandError(f"cannot write results: {exc}", EXIT_IO) from exc
    print(f"status {sol.status} after {sol.iterations} outer iterations, "
          f"final residual {summary['final_residual']:.3e}, {sol.wall_time:.1f} s")
    if sol.divergence is not None:
        print(sol.divergence.format())
    if sol.status == STATUS_CONVERGED:
        return EXIT_OK
    if sol.status == STATUS_MAX_ITER:
        return EXIT_MAX_ITER
    return EXIT_DIVERGED


def cmd_sample(args) -> int:
    cfg, mesh = load_case(args.case, args.set)
    states = load_state(cfg, mesh)
    try:
        paths = _write_samples(cfg, states)
    except OSError as exc:
        raise CommandError(f"cannot write samples: {exc}", EXIT_IO) from exc
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_export(args) -> int:
    cfg, mesh = load_case(args.case, args.set)
    states = load_state(cfg, mesh)
    try:
        paths = postproc.write_vtk(states, cfg.output_dir / "solution.vtk")
    except OSError as exc:
        raise CommandError(f"cannot write VTK: {exc}", EXIT_IO) from exc
    for p in paths:
        print(p)
    return EXIT_OK


def wire_profile_error(solution, oracle: AnalyticCase) -> dict[str, float]:
    """Sampled B_theta(r) on radial lines versus the closed-form wire profile.

    Each sample takes the value of the cell that contains it, so the reference
    is evaluated at that cell's centroid.  Rays are offset from the mesh axes
    by a small angle to avoid running along lattice rows.
    """
    lo, hi = WIRE_RANGE
    locator = postproc.CellLocator([st.region for st in solution.states.values()])
    centre = np.asarray(oracle.centre, dtype=float)
    num = den = worst = peak = 0.0
    count = 0
    for th in 0.1 + 2 * np.pi * np.arange(WIRE_RAYS) / WIRE_RAYS:
        u = np.array([np.cos(th), np.sin(th)])
        tab = postproc.sample_line(solution, centre + lo * oracle.a * u, centre + hi * oracle.a * u, WIRE_SAMPLES, "B", locator)
        ok = tab.present
        cells = [locator.locate(p) for p in tab.points[ok]]
        xy = np.array([solution.states[reg].region.geometry.cell_centre[c] for reg, c in cells])
        rel = xy[:, :2] - centre
        theta = np.column_stack([-rel[:, 1], rel[:, 0], np.zeros(len(rel))]) / np.hypot(rel[:, 0], rel[:, 1])[:, None]
        got = np.einsum("ij,ij->i", tab.values[ok], theta)
        ref = np.einsum("ij,ij->i", analytic_B(oracle, xy), theta)
        num += float(np.sum((got - ref) ** 2))
        den += float(np.sum(ref**2))
        worst = max(worst, float(np.max(np.abs(got - ref))))
        peak = max(peak, float(np.max(np.abs(ref))))
        count += int(ok.sum())
    return {
        "cells": count,
        "rel_l2": float(np.sqrt(num / den)),
        "rel_max": worst / peak,
        "potential_jump": postproc.potential_jump(solution),
    }


def verify_errors(kind: str, solution, oracle: AnalyticCase, h_near: float) -> dict[str, float]:
    """Relative L2 and max errors of B over the comparison set of ``kind``.

    The wire is judged on its sampled B_theta profile; the two cylinders on
    every cell deeper than two cell widths inside the disc.
    """
    if kind == CURRENT_WIRE:
        return wire_profile_error(solution, oracle)
    pts, B = [], []
    for st in solution.states.values():
        pts.append(st.region.geometry.cell_centre)
        B.append(st.fields.B.values)
    pts, B = np.concatenate(pts), np.concatenate(B)
    r = np.hypot(pts[:, 0] - oracle.centre[0], pts[:, 1] - oracle.centre[1])
    mask = r < oracle.a - INTERIOR_MARGIN_CELLS * h_near
    ref = analytic_B(oracle, pts[mask])
    err = np.linalg.norm(B[mask] - ref, axis=1)
    scale = np.linalg.norm(ref, axis=1)
    return {
        "cells": int(mask.sum()),
        "rel_l2": float(np.sqrt(np.sum(err**2) / np.sum(scale**2))),
        "rel_max": float(np.max(err) / np.max(scale)),
    }


def verify_passed(kind: str, errs: dict[str, float]) -> bool:
    tol = VERIFY_TOLERANCE[kind]
    if kind == CURRENT_WIRE:
        return errs["rel_l2"] <= tol and errs["potential_jump"] <= POTENTIAL_JUMP_TOLERANCE
    return errs["rel_l2"] <= tol and errs["rel_max"] <= tol


def solve_spec(spec: cases.CaseSpec, overrides: list[str] | None = None):
    """Mesh and solve a case spec in memory, without writing a case directory."""
    mesh = spec.planar_mesh().to_mesh()
    cfg = parse_config(spec.config_text("unused.msh"), ".", overrides)
    validate_against_mesh(cfg, mesh)
    fields = map_config_to_fields(cfg.materials, mesh, cfg.conditions(mesh))
    return bgs_outer_loop(mesh, fields, cfg.control, K_f=cfg.interface_currents(mesh))


def run_oracle(kind: str, h_near: float = cases.H_NEAR, overrides: list[str] | None = None):
    spec, oracle = cases.oracle_spec(kind, h_near)
    return solve_spec(spec, overrides), oracle


def cmd_verify(args) -> int:
    if args.name not in KINDS:
        raise CommandError(f"unknown oracle case {args.name!r}; choose from {', '.join(KINDS)}", EXIT_USAGE)
    try:
        sol, oracle = run_oracle(args.name, args.h_near, args.set)
    except ConfigError as exc:
        raise CommandError(f"configuration error: {exc}", EXIT_USAGE) from exc
    if sol.status != STATUS_CONVERGED:
        print(f"{args.name}: solver {sol.status} after {sol.iterations} iterations")
        return EXIT_MAX_ITER if sol.status == STATUS_MAX_ITER else EXIT_DIVERGED
    errs = verify_errors(args.name, sol, oracle, args.h_near)
    tol = VERIFY_TOLERANCE[args.name]
    ok = verify_passed(args.name, errs)
    print(f"{'case':<34}{'cells':>7}{'rel L2':>12}{'rel max':>12}{'tolerance':>11}  result")
    print(f"{args.name:<34}{errs['cells']:>7}{errs['rel_l2']:>12.4e}{errs['rel_max']:>12.4e}{tol:>11.2%}  "
          f"{'PASS' if ok else 'FAIL'}")
    if "potential_jump" in errs:
        print(f"interface |A| mismatch {errs['potential_jump']:.3e} of max |A| (limit {POTENTIAL_JUMP_TOLERANCE:.0e})")
    print(f"converged in {sol.iterations} outer iterations, {sol.wall_time:.1f} s")
    return EXIT_OK if ok else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ferrovolt", description="Multi-region finite-volume magnetostatics.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    def case_cmd(name: str, func, help_: str):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--case", required=True, type=Path, help="case directory holding config.ini")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a configuration value (repeatable)")
        sp.set_defaults(func=func)
        return sp

    case_cmd("check", cmd_check, "validate configuration and mesh, print mesh quality")
    case_cmd("solve", cmd_solve, "run the outer iteration and write results")
    case_cmd("sample", cmd_sample, "write the configured line samples from a solved state")
    case_cmd("export", cmd_export, "write VTK files from a solved state")
    v = sub.add_parser("verify", help="solve a built-in analytic case and compare with its closed form")
    v.add_argument("name", help=f"one of: {', '.join(KINDS)}")
    v.add_argument("--h-near", type=float, default=cases.H_NEAR, help="edge length near the cylinder (m)")
    v.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    _limit_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, SolverConfigError) as exc:
        print(f"error: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

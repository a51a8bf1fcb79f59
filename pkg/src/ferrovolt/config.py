"""Case configuration: INI sections with dotted names, strict keys, ``--set`` overrides.

Grammar (every key optional unless marked)::

    [mesh]                      path (required), format = auto|gmsh|text
    [region.<name>]             mu_r = 1, M = 0 0 0, J = 0 0 0
    [boundary.<region>.<patch>] type = fixed_value|zero_gradient|uniform_b,
                                value = 0 0 0 (fixed_value), B = 0 0 0 (uniform_b)
    [interface.<patch>]         K_f = 0 0 0  (free surface current on that interface patch)
    [solver]                    see SOLVER_KEYS
    [linear_solver]             method, tolerance, max_iterations, preconditioner
    [sample.<name>]             p0, p1 (required), n = 200, field = B
    [output]                    directory = output, vtk = true, log = iterations.csv

Region sections are listed in sweep order when ``solver.region_order`` is empty.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ferrovolt import fvops
from ferrovolt.field import (
    FIXED_VALUE,
    ZERO_GRADIENT,
    BoundaryCondition,
    MaterialSpec,
    uniform_field_potential,
)
from ferrovolt.linalg import SolverConfig, SolverConfigError
from ferrovolt.magnetostatics import OuterIterationControl
from ferrovolt.mesh import MultiRegionMesh

UNIFORM_B = "uniform_b"
CONFIG_NAME = "config.ini"

MESH_KEYS = {"path": None, "format": "auto"}
REGION_KEYS = {"mu_r": "1", "M": "0 0 0", "J": "0 0 0"}
BOUNDARY_KEYS = {"type": FIXED_VALUE, "value": "0 0 0", "B": "0 0 0"}
INTERFACE_KEYS = {"K_f": "0 0 0"}
SOLVER_KEYS = {
    "max_outer_iterations": "3000",
    "tolerance": "1e-6",
    "n_non_orth_correctors": "auto",
    "lambda_div": "0.8",
    "lambda_K": "1.0",
    "relaxation_mode": "implicit",
    "relaxation_application": "simultaneous",
    "divergence_guard": "10",
    "divergence_window": "5",
    "divergence_warmup": "20",
    "gradient_scheme": fvops.GAUSS,
    "non_orth_limiter": "1.0",
    "region_order": "",
    "max_wall_time": "none",
}
LINEAR_KEYS = {"method": "conjugate_gradient", "tolerance": "1e-7", "max_iterations": "1000", "preconditioner": "diagonal"}
SAMPLE_KEYS = {"p0": None, "p1": None, "n": "200", "field": "B"}
OUTPUT_KEYS = {"directory": "output", "vtk": "true", "log": "iterations.csv"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LineSample:
    name: str
    p0: tuple[float, float, float]
    p1: tuple[float, float, float]
    n: int = 200
    field: str = "B"


@dataclass(frozen=True)
class BoundarySpec:
    region: str
    patch: str
    type: str
    value: tuple[float, float, float] = (0.0, 0.0, 0.0)
    B: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass
class CaseConfig:
    mesh_path: Path
    mesh_format: str = "auto"
    materials: dict[str, MaterialSpec] = field(default_factory=dict)
    boundaries: list[BoundarySpec] = field(default_factory=list)
    surface_currents: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    control: OuterIterationControl = field(default_factory=OuterIterationControl)
    samples: list[LineSample] = field(default_factory=list)
    output_dir: Path = Path("output")
    write_vtk: bool = True
    log_name: str = "iterations.csv"
    region_sequence: list[str] = field(default_factory=list)

    def conditions(self, mesh: MultiRegionMesh) -> dict[str, dict[str, BoundaryCondition]]:
        """Boundary conditions per region; validates that patches exist and are covered once."""
        out: dict[str, dict[str, BoundaryCondition]] = {}
        for b in self.boundaries:
            try:
                region = mesh.region(b.region)
            except KeyError as exc:
                raise ConfigError(f"boundary section names unknown region {b.region!r}") from exc
            try:
                patch = region.patch(b.patch)
            except KeyError as exc:
                raise ConfigError(f"region {b.region!r} has no patch {b.patch!r}") from exc
            if b.type == UNIFORM_B:
                vals = uniform_field_potential(region.geometry.face_centre[patch.slice], b.B)
                bc = BoundaryCondition(b.patch, FIXED_VALUE, vals)
            elif b.type == FIXED_VALUE:
                bc = BoundaryCondition.fixed(b.patch, b.value)
            else:
                bc = BoundaryCondition(b.patch, ZERO_GRADIENT)
            out.setdefault(b.region, {})[b.patch] = bc
        return out

    def interface_currents(self, mesh: MultiRegionMesh) -> dict[str, np.ndarray]:
        out = {}
        for name, K in self.surface_currents.items():
            hits = [i for i in mesh.interfaces if name in (i.patch_a, i.patch_b)]
            if not hits:
                raise ConfigError(f"interface section names unknown interface patch {name!r}")
            ifc = hits[0]
            # K_f is given as seen from the patch named in the section
            sign = 1.0 if name == ifc.patch_a else -1.0
            out[ifc.name] = sign * np.asarray(K, float)
        return out


def _vector(text: str, key: str) -> tuple[float, float, float]:
    try:
        parts = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected three numbers, got {text!r}") from exc
    if len(parts) == 2:
        parts.append(0.0)
    if len(parts) != 3:
        raise ConfigError(f"{key}: expected three numbers, got {text!r}")
    return tuple(parts)


def _number(text: str, key: str, kind=float):
    try:
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from exc


def _bool(text: str, key: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _check_keys(section: str, given, allowed: dict) -> dict:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"[{section}]: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")
    merged = {k: v for k, v in allowed.items()}
    merged.update(given)
    missing = [k for k, v in merged.items() if v is None]
    if missing:
        raise ConfigError(f"[{section}]: missing required key(s) {', '.join(missing)}")
    return merged


def apply_overrides(parser: configparser.ConfigParser, overrides: list[str]) -> None:
    """``section.key=value`` pairs; the section is everything before the last dot."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." not in key:
            raise ConfigError(f"override key {key!r} must be section.key")
        section, name = key.rsplit(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, name, value.strip())


def _solver_control(opts: dict, lin: dict) -> OuterIterationControl:
    try:
        solver = SolverConfig(
            method=lin["method"],
            tolerance=_number(lin["tolerance"], "linear_solver.tolerance"),
            max_iterations=_number(lin["max_iterations"], "linear_solver.max_iterations", int),
            preconditioner=lin["preconditioner"],
        )
        corr = opts["n_non_orth_correctors"].strip().lower()
        wall = opts["max_wall_time"].strip().lower()
        return OuterIterationControl(
            max_outer_iterations=_number(opts["max_outer_iterations"], "solver.max_outer_iterations", int),
            tolerance=_number(opts["tolerance"], "solver.tolerance"),
            n_non_orth_correctors=None if corr == "auto" else _number(corr, "solver.n_non_orth_correctors", int),
            lambda_div=_number(opts["lambda_div"], "solver.lambda_div"),
            lambda_K=_number(opts["lambda_K"], "solver.lambda_K"),
            relaxation_mode=opts["relaxation_mode"].strip(),
            relaxation_application=opts["relaxation_application"].strip(),
            divergence_guard=_number(opts["divergence_guard"], "solver.divergence_guard"),
            divergence_window=_number(opts["divergence_window"], "solver.divergence_window", int),
            divergence_warmup=_number(opts["divergence_warmup"], "solver.divergence_warmup", int),
            gradient_scheme=opts["gradient_scheme"].strip(),
            non_orth_limiter=_number(opts["non_orth_limiter"], "solver.non_orth_limiter"),
            region_order=opts["region_order"].split() or None,
            max_wall_time=None if wall in ("", "none") else _number(wall, "solver.max_wall_time"),
            solver=solver,
        )
    except SolverConfigError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str, base_dir: str | Path = ".", overrides: list[str] | None = None) -> CaseConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (M, J, B)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    apply_overrides(parser, overrides or [])
    base = Path(base_dir)

    if not parser.has_section("mesh"):
        raise ConfigError("missing [mesh] section")
    cfg = CaseConfig(mesh_path=Path(), output_dir=base / OUTPUT_KEYS["directory"])
    solver_opts = dict(SOLVER_KEYS)
    lin_opts = dict(LINEAR_KEYS)
    for section in parser.sections():
        given = dict(parser.items(section))
        head, _, rest = section.partition(".")
        if section == "mesh":
            opts = _check_keys(section, given, MESH_KEYS)
            cfg.mesh_path = base / opts["path"]
            cfg.mesh_format = opts["format"]
            if cfg.mesh_format not in ("auto", "gmsh", "text"):
                raise ConfigError(f"mesh.format must be auto, gmsh or text, got {cfg.mesh_format!r}")
        elif head == "region" and rest:
            opts = _check_keys(section, given, REGION_KEYS)
            try:
                cfg.materials[rest] = MaterialSpec(
                    mu_r=_number(opts["mu_r"], f"{section}.mu_r"),
                    M=_vector(opts["M"], f"{section}.M"),
                    J=_vector(opts["J"], f"{section}.J"),
                )
            except ValueError as exc:
                raise ConfigError(f"[{section}]: {exc}") from exc
            cfg.region_sequence.append(rest)
        elif head == "boundary" and rest.count(".") == 1:
            opts = _check_keys(section, given, BOUNDARY_KEYS)
            region, patch = rest.split(".")
            if opts["type"] not in (FIXED_VALUE, ZERO_GRADIENT, UNIFORM_B):
                raise ConfigError(f"[{section}]: unknown boundary type {opts['type']!r}")
            cfg.boundaries.append(BoundarySpec(
                region, patch, opts["type"],
                _vector(opts["value"], f"{section}.value"), _vector(opts["B"], f"{section}.B"),
            ))
        elif head == "interface" and rest:
            opts = _check_keys(section, given, INTERFACE_KEYS)
            cfg.surface_currents[rest] = _vector(opts["K_f"], f"{section}.K_f")
        elif section == "solver":
            solver_opts = _check_keys(section, given, SOLVER_KEYS)
        elif section == "linear_solver":
            lin_opts = _check_keys(section, given, LINEAR_KEYS)
        elif head == "sample" and rest:
            opts = _check_keys(section, given, SAMPLE_KEYS)
            n = _number(opts["n"], f"{section}.n", int)
            if n < 2:
                raise ConfigError(f"[{section}]: n must be at least 2")
            cfg.samples.append(LineSample(rest, _vector(opts["p0"], f"{section}.p0"),
                                          _vector(opts["p1"], f"{section}.p1"), n, opts["field"]))
        elif section == "output":
            opts = _check_keys(section, given, OUTPUT_KEYS)
            cfg.output_dir = base / opts["directory"]
            cfg.write_vtk = _bool(opts["vtk"], "output.vtk")
            cfg.log_name = opts["log"]
        else:
            raise ConfigError(f"unknown section [{section}]")

    seen = set()
    for b in cfg.boundaries:
        if (b.region, b.patch) in seen:
            raise ConfigError(f"patch {b.patch!r} of region {b.region!r} has more than one condition")
        seen.add((b.region, b.patch))
    cfg.control = _solver_control(solver_opts, lin_opts)
    if cfg.control.region_order is None and cfg.region_sequence:
        cfg.control.region_order = list(cfg.region_sequence)
    return cfg


def load_config(path: str | Path, overrides: list[str] | None = None) -> CaseConfig:
    path = Path(path)
    return parse_config(path.read_text(), path.parent, overrides)


def validate_against_mesh(cfg: CaseConfig, mesh: MultiRegionMesh) -> None:
    names = set(mesh.region_names)
    unknown = sorted(set(cfg.materials) - names)
    if unknown:
        raise ConfigError(f"configuration names region(s) not in the mesh: {', '.join(unknown)}")
    missing = sorted(names - set(cfg.materials))
    if missing:
        raise ConfigError(f"mesh region(s) without a [region.*] section: {', '.join(missing)}")
    cfg.conditions(mesh)
    cfg.interface_currents(mesh)

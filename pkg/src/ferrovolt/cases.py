"""Built-in benchmark geometries and case-directory writer.

Every case lives in a 1 m square air box with A = 0 on the outer boundary
(uniform_b for the permeable-cylinder oracle). Lengths in metres.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ferrovolt.gmsh_io import write_gmsh
from ferrovolt.meshgen import OUTER, Shape, _interface_name, structured_box, triangulated_box
from ferrovolt.mesh import PlanarMesh
from ferrovolt.oracles import CURRENT_WIRE, MAGNETIZED_CYLINDER, PERMEABLE_CYLINDER, AnalyticCase

MU_R_FERRO = 30.0
MAGNETIZATION = 9.75e5  # A/m, along +y
CURRENT_DENSITY = 2.5e7  # A/m^2, along +z
DISC_RADIUS = 0.0375
MAGNET_DISC_RADIUS = 0.05
B0_APPLIED = 0.1  # T, along +x
H_NEAR = 5e-3
GROWTH = 0.25  # edge length grows by this fraction of the distance from the nearest body
QUAD_GROWTH = 0.1  # tensor grids coarsen inside bodies too; slower growth matches the triangle cell count
WIRE_LATTICE = 4.5 * DISC_RADIUS  # lattice-seeded zone covering the wire sampling window out to 5a
BOX = 1.0

MAGNET = {"M": (0.0, MAGNETIZATION, 0.0)}
FERRO = {"mu_r": MU_R_FERRO}
CONDUCTOR = {"J": (0.0, 0.0, CURRENT_DENSITY)}


@dataclass
class CaseSpec:
    """Geometry, materials and solver settings of one example case."""

    name: str
    shapes: list[Shape]
    materials: dict[str, dict]
    mesh_kind: str = "tri"  # tri | quad
    h_near: float = H_NEAR
    growth: float = GROWTH
    perturb: float = 0.0
    lattice: float = 0.0
    outer: str = "fixed_value"
    outer_B: tuple[float, float, float] = (0.0, 0.0, 0.0)
    solver: dict[str, str] = field(default_factory=dict)
    samples: dict[str, tuple] = field(default_factory=dict)
    description: str = ""

    def planar_mesh(self) -> PlanarMesh:
        if self.mesh_kind == "quad":
            return structured_box(self.shapes, box=BOX, h_near=self.h_near, growth=self.growth, perturb=self.perturb)
        return triangulated_box(self.shapes, box=BOX, h_near=self.h_near, growth=self.growth, lattice=self.lattice)

    def config_text(self, mesh_file: str = "mesh.msh") -> str:
        lines = [f"# {self.description}" if self.description else "# example case", "", "[mesh]", f"path = {mesh_file}", ""]
        names = ["air"] + [s.name for s in self.shapes]
        for name in names:
            lines.append(f"[region.{name}]")
            for key, val in self.materials.get(name, {}).items():
                lines.append(f"{key} = {_fmt(val)}")
            lines.append("")
        lines.append(f"[boundary.air.{OUTER}]")
        lines.append(f"type = {self.outer}")
        if self.outer == "uniform_b":
            lines.append(f"B = {_fmt(self.outer_B)}")
        lines.append("")
        if self.solver:
            lines.append("[solver]")
            lines += [f"{k} = {v}" for k, v in self.solver.items()]
            lines.append("")
        for sname, (p0, p1, n) in self.samples.items():
            lines += [f"[sample.{sname}]", f"p0 = {_fmt(p0)}", f"p1 = {_fmt(p1)}", f"n = {n}", ""]
        lines += ["[output]", "directory = output", "vtk = true", ""]
        return "\n".join(lines)


def _fmt(val) -> str:
    if isinstance(val, (tuple, list, np.ndarray)):
        return " ".join(f"{float(v):.10g}" for v in val)
    return f"{float(val):.10g}"


def interface_patch(a: str, b: str) -> str:
    """Name of the interface patch between regions ``a`` and ``b`` in generated meshes."""
    return _interface_name(a, b)


CENTRELINE = ((0.0, -0.25, 0.0), (0.0, 0.25, 0.0), 401)


def case1(**kw) -> CaseSpec:
    """Square magnet next to a permeable disc."""
    return CaseSpec(
        "case1",
        [Shape("magnet", "rect", (-0.1, 0.0), (0.1, 0.1)), Shape("ferro", "circle", (0.1, 0.0), (DISC_RADIUS, DISC_RADIUS))],
        {"magnet": MAGNET, "ferro": FERRO},
        samples={"path": ((-0.25, 0.0, 0.0), (0.25, 0.0, 0.0), 401), "offset": ((-0.25, 0.03, 0.0), (0.25, 0.03, 0.0), 401)},
        description="square magnet beside a permeable disc",
        **kw,
    )


def case2(**kw) -> CaseSpec:
    """Magnetized disc below a permeable disc on the vertical centreline."""
    return CaseSpec(
        "case2",
        [Shape("magnet", "circle", (0.0, -0.07), (MAGNET_DISC_RADIUS, MAGNET_DISC_RADIUS)), Shape("ferro", "circle", (0.0, 0.07), (DISC_RADIUS, DISC_RADIUS))],
        {"magnet": MAGNET, "ferro": FERRO},
        samples={"centreline": CENTRELINE},
        description="magnetized disc and permeable disc stacked on the centreline",
        **kw,
    )


def case3(**kw) -> CaseSpec:
    """Magnet, permeable disc and current-carrying disc."""
    return CaseSpec(
        "case3",
        [
            Shape("magnet", "circle", (0.0, -0.08), (MAGNET_DISC_RADIUS, MAGNET_DISC_RADIUS)),
            Shape("ferro", "circle", (-0.08, 0.06), (DISC_RADIUS, DISC_RADIUS)),
            Shape("conductor", "circle", (0.08, 0.06), (DISC_RADIUS, DISC_RADIUS)),
        ],
        {"magnet": MAGNET, "ferro": FERRO, "conductor": CONDUCTOR},
        samples={"upper": ((-0.25, 0.06, 0.0), (0.25, 0.06, 0.0), 401), "centreline": CENTRELINE},
        description="magnet, permeable disc and conductor",
        **kw,
    )


def case4(mesh_kind: str = "quad", **kw) -> CaseSpec:
    """Square magnet under a permeable bar; rectangular so both mesh kinds fit the outlines."""
    kw.setdefault("growth", QUAD_GROWTH if mesh_kind == "quad" else GROWTH)
    return CaseSpec(
        f"case4_{mesh_kind}",
        [Shape("magnet", "rect", (0.0, -0.06), (0.1, 0.1)), Shape("ferro", "rect", (0.0, 0.04), (0.1, 0.05))],
        {"magnet": MAGNET, "ferro": FERRO},
        mesh_kind=mesh_kind,
        samples={"centreline": CENTRELINE},
        description=f"magnet under a permeable bar, {mesh_kind} mesh",
        **kw,
    )


def null_case(**kw) -> CaseSpec:
    return CaseSpec("null", [], {}, h_near=0.05, description="empty air box without sources", **kw)


def oracle_spec(kind: str, h_near: float = H_NEAR, mesh_kind: str = "tri") -> tuple[CaseSpec, AnalyticCase]:
    """Case spec and matching closed form for a named single-cylinder oracle."""
    disc = [Shape("cylinder", "circle", (0.0, 0.0), (DISC_RADIUS, DISC_RADIUS))]
    if kind == MAGNETIZED_CYLINDER:
        spec = CaseSpec(kind, disc, {"cylinder": MAGNET}, h_near=h_near, mesh_kind=mesh_kind)
        oracle = AnalyticCase(kind, DISC_RADIUS, M=MAGNET["M"])
    elif kind == CURRENT_WIRE:
        spec = CaseSpec(kind, disc, {"cylinder": CONDUCTOR}, h_near=h_near, mesh_kind=mesh_kind, lattice=WIRE_LATTICE)
        oracle = AnalyticCase(kind, DISC_RADIUS, J=CURRENT_DENSITY)
    elif kind == PERMEABLE_CYLINDER:
        spec = CaseSpec(
            kind, disc, {"cylinder": FERRO}, h_near=h_near, mesh_kind=mesh_kind,
            outer="uniform_b", outer_B=(B0_APPLIED, 0.0, 0.0),
            solver={"lambda_div": "1.0"},
        )
        oracle = AnalyticCase(kind, DISC_RADIUS, mu_r=MU_R_FERRO, B0=(B0_APPLIED, 0.0, 0.0))
    else:
        raise KeyError(f"unknown oracle case {kind!r}")
    spec.samples = {"radial": ((0.0, 0.0, 0.0), (5 * DISC_RADIUS, 0.0, 0.0), 201)}
    return spec, oracle


BUILDERS = {"case1": case1, "case2": case2, "case3": case3, "null": null_case}


def write_case(spec: CaseSpec, directory: str | Path) -> Path:
    """Write ``mesh.msh`` and ``config.ini`` for ``spec``; returns the directory."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_gmsh(spec.planar_mesh(), out / "mesh.msh")
    (out / "config.ini").write_text(spec.config_text("mesh.msh"))
    return out

"""Cell-centred fields, boundary conditions and material properties."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ferrovolt.mesh import EMPTY, INTERFACE, MultiRegionMesh, Region

log = logging.getLogger(__name__)

MU0 = 4e-7 * np.pi  # H/m

FIXED_VALUE = "fixed_value"
ZERO_GRADIENT = "zero_gradient"
INTERFACE_COUPLED = "interface"
PLANAR_EXCLUDED = "empty"
BC_KINDS = (FIXED_VALUE, ZERO_GRADIENT, INTERFACE_COUPLED, PLANAR_EXCLUDED)


class MaterialWarning(UserWarning):
    """A region combines permanent magnetisation with mu_r != 1."""


def chi_from_mu_r(mu_r):
    """Normalised susceptibility (mu_r - 1) / (mu_r mu0) in 1/(H/m)."""
    mu_r = np.asarray(mu_r, dtype=float)
    if np.any(mu_r <= 0):
        raise ValueError(f"relative permeability must be positive, got {mu_r}")
    chi = (mu_r - 1.0) / (mu_r * MU0)
    return float(chi) if chi.ndim == 0 else chi


def mu_r_from_chi(chi):
    """Inverse of :func:`chi_from_mu_r`."""
    chi = np.asarray(chi, dtype=float)
    if np.any(chi * MU0 >= 1.0):
        raise ValueError("chi * mu0 must be below 1")
    mu_r = 1.0 / (1.0 - chi * MU0)
    return float(mu_r) if mu_r.ndim == 0 else mu_r


def magnetization_from_B(chi, B):
    """Induced magnetisation chi * B (A/m)."""
    chi = np.asarray(chi, dtype=float)
    B = np.asarray(B, dtype=float)
    return chi[..., None] * B if chi.ndim else chi * B


@dataclass
class CellScalarField:
    region: str
    values: np.ndarray  # (nc,)
    boundary: np.ndarray  # (nb,)
    units: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=float)
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.boundary))):
            raise ValueError(f"field on {self.region} has non-finite entries")

    @classmethod
    def uniform(cls, region: Region, value: float, units: str = "") -> "CellScalarField":
        return cls(region.name, np.full(region.n_cells, float(value)), np.full(region.n_boundary, float(value)), units)

    def __add__(self, other: "CellScalarField") -> "CellScalarField":
        return CellScalarField(self.region, self.values + other.values, self.boundary + other.boundary, self.units)

    def scale(self, a: float) -> "CellScalarField":
        return CellScalarField(self.region, a * self.values, a * self.boundary, self.units)


@dataclass
class CellVectorField:
    region: str
    values: np.ndarray  # (nc, 3)
    boundary: np.ndarray  # (nb, 3)
    units: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 3)
        self.boundary = np.asarray(self.boundary, dtype=float).reshape(-1, 3)
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.boundary))):
            raise ValueError(f"field on {self.region} has non-finite entries")

    @classmethod
    def uniform(cls, region: Region, value, units: str = "") -> "CellVectorField":
        v = np.asarray(value, dtype=float).reshape(3)
        return cls(region.name, np.tile(v, (region.n_cells, 1)), np.tile(v, (region.n_boundary, 1)), units)

    @classmethod
    def zeros(cls, region: Region, units: str = "") -> "CellVectorField":
        return cls.uniform(region, (0.0, 0.0, 0.0), units)

    def __add__(self, other: "CellVectorField") -> "CellVectorField":
        return CellVectorField(self.region, self.values + other.values, self.boundary + other.boundary, self.units)

    def scale(self, a: float) -> "CellVectorField":
        return CellVectorField(self.region, a * self.values, a * self.boundary, self.units)


@dataclass(frozen=True)
class BoundaryCondition:
    """Condition on one patch.  ``value`` is a 3-vector or an (nfaces, 3) array."""

    patch: str
    kind: str
    value: np.ndarray | None = None
    interface: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in BC_KINDS:
            raise ValueError(f"patch {self.patch}: unknown condition {self.kind!r}")
        if self.kind == FIXED_VALUE and self.value is None:
            raise ValueError(f"patch {self.patch}: fixed_value needs a value")

    @classmethod
    def fixed(cls, patch: str, value=(0.0, 0.0, 0.0)) -> "BoundaryCondition":
        return cls(patch, FIXED_VALUE, np.asarray(value, dtype=float))

    def face_values(self, n: int) -> np.ndarray:
        v = np.asarray(self.value, dtype=float)
        return np.tile(v.reshape(3), (n, 1)) if v.size == 3 else v.reshape(n, 3)


def uniform_field_potential(face_centres: np.ndarray, B) -> np.ndarray:
    """Planar vector potential (0, 0, Bx*y - By*x) whose curl is the in-plane field B."""
    B = np.asarray(B, dtype=float)
    out = np.zeros((len(face_centres), 3))
    out[:, 2] = B[0] * face_centres[:, 1] - B[1] * face_centres[:, 0]
    return out


def default_conditions(region: Region, given: Mapping[str, BoundaryCondition] | None = None) -> dict[str, BoundaryCondition]:
    """Complete a patch -> condition map: empty and interface patches are automatic."""
    given = dict(given or {})
    out = {}
    for p in region.patches:
        if p.kind == EMPTY:
            out[p.name] = BoundaryCondition(p.name, PLANAR_EXCLUDED)
        elif p.kind == INTERFACE:
            out[p.name] = BoundaryCondition(p.name, INTERFACE_COUPLED, interface=p.name)
        elif p.name in given:
            out[p.name] = given[p.name]
        else:
            raise KeyError(f"region {region.name!r}: no boundary condition for patch {p.name!r}")
    return out


@dataclass(frozen=True)
class MaterialSpec:
    mu_r: float = 1.0
    M: tuple[float, float, float] = (0.0, 0.0, 0.0)  # A/m
    J: tuple[float, float, float] = (0.0, 0.0, 0.0)  # A/m^2

    def __post_init__(self) -> None:
        if not self.mu_r > 0:
            raise ValueError(f"relative permeability must be positive, got {self.mu_r}")

    @property
    def chi(self) -> float:
        return chi_from_mu_r(self.mu_r)

    @property
    def combined_law_valid(self) -> bool:
        return self.mu_r == 1.0 or not np.any(self.M)


@dataclass
class RegionFields:
    """Everything the solver stores per region."""

    region: Region
    chi: CellScalarField
    M: CellVectorField
    J: CellVectorField
    A: CellVectorField
    B: CellVectorField
    bcs: dict[str, BoundaryCondition] = field(default_factory=dict)


def map_config_to_fields(
    materials: Mapping[str, MaterialSpec],
    mesh: MultiRegionMesh,
    conditions: Mapping[str, Mapping[str, BoundaryCondition]] | None = None,
) -> dict[str, RegionFields]:
    """Uniform material fields per region, A and B initialised to zero."""
    names = set(mesh.region_names)
    missing = sorted(names - set(materials))
    if missing:
        raise KeyError(f"no material given for regions: {', '.join(missing)}")
    extra = sorted(set(materials) - names)
    if extra:
        raise KeyError(f"materials given for regions not in the mesh: {', '.join(extra)}")
    conditions = conditions or {}
    out = {}
    for r in mesh.regions:
        mat = materials[r.name]
        if not mat.combined_law_valid:
            msg = (
                f"region {r.name!r} has mu_r={mat.mu_r:g} and nonzero M; the combined "
                "Ampere law assumes magnetised media have unit permeability"
            )
            warnings.warn(msg, MaterialWarning, stacklevel=2)
            log.warning(msg)
        out[r.name] = RegionFields(
            region=r,
            chi=CellScalarField.uniform(r, mat.chi, "m/H"),
            M=CellVectorField.uniform(r, mat.M, "A/m"),
            J=CellVectorField.uniform(r, mat.J, "A/m^2"),
            A=CellVectorField.zeros(r, "T m"),
            B=CellVectorField.zeros(r, "T"),
            bcs=default_conditions(r, conditions.get(r.name)),
        )
    return out

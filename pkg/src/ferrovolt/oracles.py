"""Closed-form planar magnetostatic fields and a dense direct reference solver."""
from __future__ import annotations

import warnings

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ferrovolt.field import MU0
from ferrovolt.linalg import SparseSystem

MAGNETIZED_CYLINDER = "magnetized_cylinder"
CURRENT_WIRE = "current_wire"
PERMEABLE_CYLINDER = "permeable_cylinder_uniform_field"
KINDS = (MAGNETIZED_CYLINDER, CURRENT_WIRE, PERMEABLE_CYLINDER)
DENSE_LIMIT = 2000


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyticCase:
    """Infinite cylinder of radius ``a`` along z in unbounded air.

    magnetized_cylinder uses ``M`` (transverse, A/m), current_wire uses ``J``
    (axial, A/m^2), permeable_cylinder_uniform_field uses ``mu_r`` and the
    applied field ``B0`` (T, in-plane vector).
    """

    kind: str
    a: float
    M: tuple[float, float, float] = (0.0, 0.0, 0.0)
    J: float = 0.0
    mu_r: float = 1.0
    B0: tuple[float, float, float] = (0.0, 0.0, 0.0)
    centre: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise OracleError(f"unknown analytic case {self.kind!r}; choose from {', '.join(KINDS)}")
        if not self.a > 0:
            raise OracleError("radius must be positive")
        values = np.concatenate([self.M, [self.J, self.mu_r], self.B0, self.centre])
        if not np.all(np.isfinite(values)):
            raise OracleError("case parameters must be finite")
        if self.mu_r <= 0:
            raise OracleError("relative permeability must be positive")

    def interior_B(self) -> np.ndarray:
        """Uniform interior field where one exists (zero vector for the wire)."""
        if self.kind == MAGNETIZED_CYLINDER:
            return MU0 * np.asarray(self.M, float) / 2.0
        if self.kind == PERMEABLE_CYLINDER:
            return 2.0 * self.mu_r / (self.mu_r + 1.0) * np.asarray(self.B0, float)
        return np.zeros(3)


def _dipole(D: np.ndarray, rhat: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """scale * [2 (D.rhat) rhat - D] for in-plane D."""
    Dr = rhat @ D
    return scale[:, None] * (2.0 * Dr[:, None] * rhat - D[None, :])


def analytic_B(case: AnalyticCase, points) -> np.ndarray:
    """B (T) at ``points`` (shape (3,) or (n, 2|3)); returns the matching shape."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    single = np.ndim(points) == 1
    xy = pts[:, :2] - np.asarray(case.centre, float)
    r = np.hypot(xy[:, 0], xy[:, 1])
    inside = r < case.a
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat3 = np.column_stack([xy / np.where(r > 0, r, 1.0)[:, None], np.zeros(len(r))])
    out = np.zeros((len(pts), 3))

    if case.kind == MAGNETIZED_CYLINDER:
        M = np.asarray(case.M, float)
        out[inside] = MU0 * M / 2.0
        o = ~inside
        out[o] = _dipole(M, rhat3[o], MU0 * case.a**2 / (2.0 * r[o] ** 2))
    elif case.kind == CURRENT_WIRE:
        theta = np.column_stack([-rhat3[:, 1], rhat3[:, 0], np.zeros(len(r))])
        Bt = np.where(inside, MU0 * case.J * r / 2.0, MU0 * case.J * case.a**2 / (2.0 * np.where(r > 0, r, 1.0)))
        out = Bt[:, None] * theta
    else:
        B0 = np.asarray(case.B0, float)
        k = (case.mu_r - 1.0) / (case.mu_r + 1.0)
        out[inside] = case.interior_B()
        o = ~inside
        out[o] = B0 + _dipole(B0, rhat3[o], k * case.a**2 / r[o] ** 2)
    return out[0] if single else out


def analytic_Az(case: AnalyticCase, points) -> np.ndarray:
    """A_z for the current wire, gauged so that A_z = 0 on the axis."""
    if case.kind != CURRENT_WIRE:
        raise OracleError("A_z closed form is provided for the current wire only")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.hypot(pts[:, 0] - case.centre[0], pts[:, 1] - case.centre[1])
    a, k = case.a, MU0 * case.J
    inner = -k * r**2 / 4.0
    with np.errstate(divide="ignore"):
        outer = -k * a**2 / 4.0 - k * a**2 / 2.0 * np.log(np.where(r > 0, r, 1.0) / a)
    return np.where(r < a, inner, outer)


def dense_reference_solve(system: SparseSystem) -> np.ndarray:
    """Solve the identical system by dense LU with partial pivoting."""
    n = system.n
    if n > DENSE_LIMIT:
        raise OracleError(f"dense reference limited to {DENSE_LIMIT} unknowns, got {n}")
    C = system.matrix.toarray()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(C, check_finite=True)
    except (ValueError, np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
        raise OracleError(f"dense factorization failed: {exc}") from exc
    if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * np.abs(C).max() * n):
        raise OracleError("matrix is numerically singular")
    return scipy.linalg.lu_solve((lu, piv), system.source)

"""Multi-region vector-potential magnetostatics with Block Gauss-Seidel coupling.

Each region solves

    -sum_f |s_f| n.grad(A)_f = mu0 [V J_f - sum_f chi_f s_f.(grad A - grad A^T)_f + V curl M]

as three scalar systems sharing one matrix.  Regions talk to each other only
through interface faces, where continuity of A and the normal-gradient jump
g_B - g_A = -mu0 K (gradients along e_n, which points from side A to side B)
are imposed by a two-sided flux match.  K = -K_f + [(chi B + M)_A - (chi B + M)_B] x e_n
is evaluated from the latest one-sided face fields.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ferrovolt import fvops
from ferrovolt import linalg as la
from ferrovolt.field import MU0, RegionFields
from ferrovolt.mesh import INTERFACE, InterfacePatch, MultiRegionMesh, Region

log = logging.getLogger(__name__)

IMPLICIT = "implicit"
EXPLICIT = "explicit"
SIMULTANEOUS = "simultaneous"
REGION_WISE = "region_wise"

STATUS_CONVERGED = "converged"
STATUS_DIVERGED = "diverged"
STATUS_MAX_ITER = "max_iterations"
STATUS_BREAKDOWN = "breakdown"

SOURCE_TERMS = ("freeCurrent", "boundSkew", "magnetCurl", "nonOrthCorrection", "interfaceContrib", "boundary")
NON_ORTH_THRESHOLD_DEG = 5.0
WARM_SKEW_ITERATIONS = 3  # the lagged gradient is a good start, the outer loop finishes the job
DEFAULT_CORRECTORS = 2
LOG_FIELDS = (
    "iteration", "region", "init_x", "init_y", "init_z", "final_x", "final_y", "final_z",
    "lambda_div", "lambda_K", "relaxation", "K_max",
)


@dataclass
class OuterIterationControl:
    max_outer_iterations: int = 3000
    tolerance: float = 1e-6
    n_non_orth_correctors: int | None = None  # None: 2 if the mesh is non-orthogonal else 0
    lambda_div: float = 0.8
    lambda_K: float = 1.0
    relaxation_mode: str = IMPLICIT
    relaxation_application: str = SIMULTANEOUS
    divergence_guard: float = 10.0
    divergence_window: int = 5
    divergence_warmup: int = 20  # growth is not judged before this iteration (fields still propagating)
    gradient_scheme: str = fvops.GAUSS
    non_orth_limiter: float = 1.0
    region_order: list[str] | None = None
    max_wall_time: float | None = None  # seconds
    solver: la.SolverConfig = field(default_factory=la.SolverConfig)

    def __post_init__(self) -> None:
        for name in ("lambda_div", "lambda_K"):
            lam = getattr(self, name)
            if not 0.0 < lam <= 1.0:
                raise la.SolverConfigError(f"{name} must lie in (0, 1], got {lam}")
        if self.relaxation_mode not in (IMPLICIT, EXPLICIT):
            raise la.SolverConfigError(f"unknown relaxation mode {self.relaxation_mode!r}")
        if self.relaxation_application not in (SIMULTANEOUS, REGION_WISE):
            raise la.SolverConfigError(f"unknown relaxation application {self.relaxation_application!r}")
        if self.n_non_orth_correctors is not None and self.n_non_orth_correctors < 0:
            raise la.SolverConfigError("n_non_orth_correctors must be non-negative")
        if self.max_outer_iterations < 1:
            raise la.SolverConfigError("max_outer_iterations must be at least 1")
        if not 0.0 <= self.non_orth_limiter <= 1.0:
            raise la.SolverConfigError("non_orth_limiter must lie in [0, 1]")
        if self.gradient_scheme not in (fvops.GAUSS, fvops.GAUSS_UNCORRECTED, fvops.LEAST_SQUARES):
            raise la.SolverConfigError(f"unknown gradient scheme {self.gradient_scheme!r}")

    def correctors_for(self, mesh: MultiRegionMesh) -> int:
        if self.n_non_orth_correctors is not None:
            return self.n_non_orth_correctors
        worst = max((float(r.geometry.non_orth_deg.max(initial=0.0)) for r in mesh.regions), default=0.0)
        return DEFAULT_CORRECTORS if worst > NON_ORTH_THRESHOLD_DEG else 0


# ---------------------------------------------------------------------------
# interface algebra
# ---------------------------------------------------------------------------


def interface_coefficients(d_C, d_E):
    """(a_C, a_E, a_K) with outward gradient g_C = a_C A_C + a_E A_E + a_K K on side C."""
    d_C = np.asarray(d_C, dtype=float)
    d_E = np.asarray(d_E, dtype=float)
    if np.any(d_C <= 0) or np.any(d_E <= 0):
        raise ValueError("interface distances must be positive")
    inv = 1.0 / (d_C + d_E)
    return -inv, inv, MU0 * d_E * inv


def flux_match(A_C, A_E, d_C, d_E, K):
    """Shared face value and the one-sided normal gradients along e_n (C -> E).

    Returns (A_f, g_C, g_E) with A_f = (A_C/d_C + A_E/d_E + mu0 K)/(1/d_C + 1/d_E),
    g_C = (A_f - A_C)/d_C and g_E = (A_E - A_f)/d_E, so that g_E - g_C = -mu0 K.
    """
    A_C, A_E, K = (np.asarray(v, dtype=float) for v in (A_C, A_E, K))
    d_C = np.asarray(d_C, dtype=float)
    d_E = np.asarray(d_E, dtype=float)
    if A_C.ndim > d_C.ndim:
        d_C, d_E = d_C[..., None], d_E[..., None]
    A_f = (A_C / d_C + A_E / d_E + MU0 * K) / (1.0 / d_C + 1.0 / d_E)
    return A_f, (A_f - A_C) / d_C, (A_E - A_f) / d_E


def interface_sn_grad(A_C, A_E, d_C, d_E, K):
    """Implicit diagonal coefficient and explicit part of the outward gradient on side C.

    g_C = a_C A_C + (a_E A_E + a_K K); the first part goes to the matrix.
    """
    a_C, a_E, a_K = interface_coefficients(d_C, d_E)
    A_E = np.asarray(A_E, dtype=float)
    K = np.asarray(K, dtype=float)
    if A_E.ndim > np.ndim(a_E):
        a_E, a_K = np.asarray(a_E)[..., None], np.asarray(a_K)[..., None]
    return a_C, a_E * A_E + a_K * K


@dataclass
class InterfaceState:
    patch: InterfacePatch
    K: np.ndarray  # generalized surface current per face pair, A/m
    K_f: np.ndarray  # free surface current, A/m
    jump: np.ndarray  # lagged [(chi B + M)_A - (chi B + M)_B]
    K_previous: np.ndarray

    @classmethod
    def zeros(cls, patch: InterfacePatch, K_f=None) -> "InterfaceState":
        n = len(patch)
        Kf = np.zeros((n, 3)) if K_f is None else np.broadcast_to(np.asarray(K_f, float), (n, 3)).copy()
        return cls(patch, np.zeros((n, 3)), Kf, np.zeros((n, 3)), np.zeros((n, 3)))


def compute_surface_current(e_n, chiB_M_a, chiB_M_b, K_f=None):
    """K = -K_f + (q_A - q_B) x e_n with q = chi B + M on each side of the face."""
    K = np.cross(np.asarray(chiB_M_a, float) - np.asarray(chiB_M_b, float), np.asarray(e_n, float))
    return K if K_f is None else K - np.asarray(K_f, float)


# ---------------------------------------------------------------------------
# per-region state and assembly
# ---------------------------------------------------------------------------


@dataclass
class RegionState:
    fields: RegionFields
    grad: np.ndarray  # cell gradient of A, (nc, 3, 3)
    bnd_grad: np.ndarray  # face gradient on boundary faces, (nb, 3, 3)
    bnd_values: np.ndarray  # patch values of A, (nb, 3)
    face_grad_B: np.ndarray  # boundary face gradient used for B, (nb, 3, 3)
    chi_f: np.ndarray  # face susceptibility, (nf,)
    curl_M: np.ndarray  # V curl M per cell, (nc, 3)
    div_skew: np.ndarray  # relaxed sum_f chi_f s_f.(G - G^T)_f, (nc, 3)
    norm: list = field(default_factory=lambda: [None, None, None])
    coupled: dict = field(default_factory=dict)  # patch -> (coeff, value)
    _matrix: object = None
    _matrix_key: np.ndarray | None = None

    @property
    def region(self) -> Region:
        return self.fields.region

    @property
    def A(self) -> np.ndarray:
        return self.fields.A.values

    @property
    def has_susceptibility(self) -> bool:
        return bool(np.any(self.chi_f))

    def matrix(self, stencil: fvops.LaplacianStencil):
        """Stencil matrix, rebuilt only when the boundary coefficients change."""
        key = stencil.boundary_coeff
        if self._matrix is None or not np.array_equal(self._matrix_key, key):
            self._matrix = stencil.matrix()
            self._matrix_key = key.copy()
        return self._matrix

    def face_B(self, faces: np.ndarray) -> np.ndarray:
        """One-sided B on boundary faces (region face ids)."""
        return fvops.curl_via_hodge(self.face_grad_B[faces - self.region.n_internal])

    def shifted(self, faces: np.ndarray) -> np.ndarray:
        """A_C + t . G_C for the owner cells of the given boundary faces."""
        r = self.region
        own = r.owner[faces]
        t = r.geometry.bnd_tangent[faces - r.n_internal]
        return self.A[own] + np.einsum("fd,fdk->fk", t, self.grad[own])


def _magnet_curl(region: Region, M: np.ndarray) -> np.ndarray:
    """V curl M with a Gauss gradient; boundary faces take the owner value (no smearing)."""
    bvals = M[region.owner[region.n_internal :]]
    G = fvops.gauss_cell_gradient(region, fvops.interpolate_faces(region, M, bvals))
    return region.geometry.cell_volume[:, None] * fvops.curl_via_hodge(G)


def init_region_state(fields: RegionFields) -> RegionState:
    r = fields.region
    nc, nb = r.n_cells, r.n_boundary
    A = fields.A.values
    grad = np.zeros((nc, 3, 3))
    if np.any(A):
        grad = fvops.cell_gradient(r, A, fields.A.boundary)
    st = RegionState(
        fields=fields,
        grad=grad,
        bnd_grad=grad[r.owner[r.n_internal :]].copy(),
        bnd_values=fields.A.boundary.copy(),
        face_grad_B=grad[r.owner[r.n_internal :]].copy(),
        chi_f=fvops.susceptibility_face_values(r, fields.chi.values),
        curl_M=_magnet_curl(r, fields.M.values),
        div_skew=np.zeros((nc, 3)),
    )
    st.div_skew = current_div_skew(st)
    return st


def face_gradients(st: RegionState) -> np.ndarray:
    r = st.region
    return fvops.face_gradient(r, st.grad, st.bnd_grad)


def current_div_skew(st: RegionState) -> np.ndarray:
    if not np.any(st.chi_f):
        return np.zeros((st.region.n_cells, 3))
    return fvops.explicit_div_skew(st.region, st.chi_f, face_gradients(st))


@dataclass
class RegionSystem:
    region: str
    system: la.SparseSystem  # unrelaxed
    breakdown: dict[str, np.ndarray]
    stencil: fvops.LaplacianStencil

    @property
    def total_source(self) -> np.ndarray:
        return sum(self.breakdown[k] for k in SOURCE_TERMS)

    def term_norms(self) -> dict[str, float]:
        return {k: float(np.abs(v).sum()) for k, v in self.breakdown.items()}


def _boundary_coefficients(st: RegionState) -> tuple[np.ndarray, np.ndarray]:
    return fvops.boundary_coefficients(st.region, st.fields.bcs, st.coupled)


def assemble_region(st: RegionState, correct: bool = True, limiter: float = 1.0) -> RegionSystem:
    """Assemble the unrelaxed system for the current lagged state."""
    r = st.region
    g = r.geometry
    coeff, value = _boundary_coefficients(st)
    grad = st.grad if correct else None
    stencil = fvops.assemble_laplacian(r, coeff, value, grad, st.bnd_grad, limiter)
    kinds = np.array([p.kind for p in r.patches])[r.boundary_patch_index]
    iface = (kinds == INTERFACE).astype(float)
    breakdown = {
        "freeCurrent": MU0 * g.cell_volume[:, None] * st.fields.J.values,
        "boundSkew": -MU0 * st.div_skew,
        "magnetCurl": MU0 * st.curl_M,
        "nonOrthCorrection": stencil.non_orth_source,
        "interfaceContrib": stencil.boundary_cell_source(iface),
        "boundary": stencil.boundary_cell_source(1.0 - iface),
    }
    total = sum(breakdown[k] for k in SOURCE_TERMS)
    return RegionSystem(r.name, la.SparseSystem(st.matrix(stencil), total), breakdown, stencil)


def update_boundary(st: RegionState, correct: bool = True) -> fvops.BoundaryState:
    coeff, value = _boundary_coefficients(st)
    bs = fvops.boundary_state(st.region, st.A, st.grad, coeff, value, correct)
    st.bnd_values = bs.values
    st.bnd_grad = fvops.boundary_face_gradient(st.region, st.grad, bs.sn_grad)
    st.face_grad_B = fvops.interface_face_gradient(st.region, st.grad, bs.sn_grad, bs.values)
    st.fields.A.boundary = bs.values
    return bs


def update_gradient(st: RegionState, scheme: str = fvops.GAUSS) -> None:
    r = st.region
    if scheme == fvops.GAUSS:
        st.grad = fvops.skew_corrected_gradient(r, st.A, st.bnd_values, max_iter=WARM_SKEW_ITERATIONS, initial=st.grad)
    else:
        st.grad = fvops.cell_gradient(r, st.A, st.bnd_values, scheme)


def compute_B(region: Region, A: np.ndarray, boundary_values: np.ndarray, scheme: str = fvops.GAUSS) -> np.ndarray:
    """Cell B = curl A from the cell gradient of A."""
    return fvops.curl_via_hodge(fvops.cell_gradient(region, A, boundary_values, scheme))


# ---------------------------------------------------------------------------
# interface refresh
# ---------------------------------------------------------------------------


def _side_quantity(st: RegionState, faces: np.ndarray) -> np.ndarray:
    """chi_f B_f + M on one side of an interface (one-sided face values)."""
    r = st.region
    chi = st.chi_f[faces]
    M = st.fields.M.values[r.owner[faces]]
    return chi[:, None] * st.face_B(faces) + M


def refresh_interface(ifc: InterfaceState, states: Mapping[str, RegionState], lambda_K: float = 1.0) -> None:
    p = ifc.patch
    qa = _side_quantity(states[p.region_a], p.faces_a)
    qb = _side_quantity(states[p.region_b], p.faces_b)
    ifc.jump = qa - qb
    K_new = compute_surface_current(p.e_n, qa, qb, ifc.K_f)
    ifc.K_previous = ifc.K
    ifc.K = la.explicit_relax(K_new, ifc.K, lambda_K) if lambda_K < 1.0 else K_new


def couple_region(name: str, interfaces: list[InterfaceState], states: Mapping[str, RegionState]) -> None:
    """Set (coeff, value) for every interface patch of ``name`` from the latest neighbour state."""
    st = states[name]
    r = st.region
    for ifc in interfaces:
        p = ifc.patch
        if name == p.region_a:
            own_patch, own_faces, d_own, other, other_faces, d_other = p.patch_a, p.faces_a, p.d_a, p.region_b, p.faces_b, p.d_b
        elif name == p.region_b:
            own_patch, own_faces, d_own, other, other_faces, d_other = p.patch_b, p.faces_b, p.d_b, p.region_a, p.faces_a, p.d_a
        else:
            continue
        patch = r.patch(own_patch)
        local = own_faces - patch.start
        coeff = np.zeros(patch.size)
        value = np.zeros((patch.size, 3))
        coeff[local] = 1.0 / (d_own + d_other)
        value[local] = states[other].shifted(other_faces) + MU0 * ifc.K * d_other[:, None]
        st.coupled[own_patch] = (coeff, value)


# ---------------------------------------------------------------------------
# outer loop
# ---------------------------------------------------------------------------


@dataclass
class DivergenceReport:
    iteration: int
    region: str
    residual: float
    min_residual: float
    dominant_term: str
    term_norms: dict[str, float]
    reason: str

    def format(self) -> str:
        terms = ", ".join(f"{k}={v:.3e}" for k, v in sorted(self.term_norms.items()))
        return (
            f"divergence at outer iteration {self.iteration} in region {self.region!r}: {self.reason}; "
            f"normalized residual {self.residual:.3e} (minimum {self.min_residual:.3e}); "
            f"dominant source term {self.dominant_term}; term L1 norms: {terms}"
        )


@dataclass
class Solution:
    mesh: MultiRegionMesh
    states: dict[str, RegionState]
    interfaces: list[InterfaceState]
    control: OuterIterationControl
    status: str
    iterations: int
    history: list[float]
    log_rows: list[dict]
    wall_time: float
    divergence: DivergenceReport | None = None
    n_correctors: int = 0

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED

    @property
    def fields(self) -> dict[str, RegionFields]:
        return {k: s.fields for k, s in self.states.items()}

    def interface_state(self, region_a: str, region_b: str) -> InterfaceState:
        for ifc in self.interfaces:
            if {ifc.patch.region_a, ifc.patch.region_b} == {region_a, region_b}:
                return ifc
        raise KeyError(f"no interface between {region_a!r} and {region_b!r}")

    def log_text(self) -> str:
        return format_log(self.log_rows)

    def write_log(self, path: str | Path) -> None:
        Path(path).write_text(self.log_text())

    def summary(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "final_residual": self.history[-1] if self.history else 0.0,
            "wall_time_s": round(self.wall_time, 3),
            "lambda_div": self.control.lambda_div,
            "lambda_K": self.control.lambda_K,
            "relaxation_mode": self.control.relaxation_mode,
            "relaxation_application": self.control.relaxation_application,
            "non_orth_correctors": self.n_correctors,
        }


def format_log(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LOG_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.6e}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def default_order(fields: Mapping[str, RegionFields], order: list[str] | None) -> list[str]:
    if order:
        unknown = [n for n in order if n not in fields]
        if unknown or sorted(order) != sorted(fields):
            raise KeyError(f"region order must list every region exactly once; got {order}")
        return list(order)
    # high susceptibility first, ties in mesh order
    names = list(fields)
    return sorted(names, key=lambda n: (-float(np.max(fields[n].chi.values, initial=0.0)), names.index(n)))


def _normalized(st: RegionState, l1: np.ndarray) -> np.ndarray:
    out = np.zeros(3)
    for k in range(3):
        if st.norm[k] is None and l1[k] > 0:
            st.norm[k] = float(l1[k])
        out[k] = l1[k] / st.norm[k] if st.norm[k] else 0.0
    return out


def _solve_region(
    name: str,
    st: RegionState,
    control: OuterIterationControl,
    n_corr: int,
) -> tuple[np.ndarray, np.ndarray, RegionSystem, str]:
    """Corrector passes for one region; returns (initial, final) normalized residuals.

    The initial residual is that of the unrelaxed system at the lagged state,
    before any solve of this outer iteration; the final one is evaluated on
    the last corrector's system after its solve.
    """
    initial = np.zeros(3)
    rs = None
    status = la.CONVERGED
    relax = control.relaxation_mode == IMPLICIT and control.lambda_div < 1.0 and st.has_susceptibility
    for k in range(n_corr + 1):
        if k:
            update_gradient(st, control.gradient_scheme)
        update_boundary(st)
        rs = assemble_region(st, correct=True, limiter=control.non_orth_limiter)
        if k == 0:
            initial = _normalized(st, np.abs(rs.system.residual(st.A)).sum(axis=0))
        system = la.implicit_relax(rs.system, st.A, control.lambda_div) if relax else rs.system
        res = la.solve(system, st.A, control.solver)
        if res.status == la.BREAKDOWN:
            status = la.BREAKDOWN
        st.fields.A.values = res.x
    l1 = np.abs(rs.system.residual(st.A)).sum(axis=0)
    final = np.array([l1[k] / st.norm[k] if st.norm[k] else 0.0 for k in range(3)])
    update_gradient(st, control.gradient_scheme)
    update_boundary(st)
    st.fields.B.values = fvops.curl_via_hodge(st.grad)
    st.fields.B.boundary = fvops.curl_via_hodge(st.face_grad_B)
    return initial, final, rs, status


def _refresh_div_skew(st: RegionState, control: OuterIterationControl) -> None:
    new = current_div_skew(st)
    if control.relaxation_mode == EXPLICIT:
        st.div_skew = la.explicit_relax(new, st.div_skew, control.lambda_div)
    else:
        st.div_skew = new


def bgs_outer_loop(
    mesh: MultiRegionMesh,
    fields: Mapping[str, RegionFields],
    control: OuterIterationControl | None = None,
    K_f: Mapping[str, np.ndarray] | None = None,
    log_path: str | Path | None = None,
) -> Solution:
    """Sweep the regions until every normalized residual is below the tolerance."""
    control = control or OuterIterationControl()
    t0 = time.perf_counter()
    order = default_order(fields, control.region_order)
    n_corr = control.correctors_for(mesh)
    states = {n: init_region_state(fields[n]) for n in order}
    for st in states.values():
        if control.relaxation_mode == EXPLICIT:
            st.div_skew = np.zeros_like(st.div_skew)
    K_f = K_f or {}
    interfaces = [InterfaceState.zeros(p, K_f.get(p.name)) for p in mesh.interfaces]
    by_region = {n: [i for i in interfaces if n in (i.patch.region_a, i.patch.region_b)] for n in order}
    for ifc in interfaces:
        refresh_interface(ifc, states, 1.0)
    for n in order:
        couple_region(n, by_region[n], states)

    history: list[float] = []
    rows: list[dict] = []
    status = STATUS_MAX_ITER
    report = None
    it = 0
    log.info("outer loop: regions %s, %d non-orthogonal correctors, lambda_div=%g (%s, %s)",
             order, n_corr, control.lambda_div, control.relaxation_mode, control.relaxation_application)
    for it in range(1, control.max_outer_iterations + 1):
        if control.relaxation_application == SIMULTANEOUS:
            for n in order:
                _refresh_div_skew(states[n], control)
        worst, worst_region, systems = 0.0, order[0], {}
        breakdown = False
        for n in order:
            st = states[n]
            for ifc in by_region[n]:
                refresh_interface(ifc, states, control.lambda_K)
            couple_region(n, by_region[n], states)
            if control.relaxation_application == REGION_WISE:
                _refresh_div_skew(st, control)
            initial, final, rs, sstat = _solve_region(n, st, control, n_corr)
            breakdown |= sstat == la.BREAKDOWN
            systems[n] = rs
            k_max = max((float(np.linalg.norm(i.K, axis=1).max(initial=0.0)) for i in by_region[n]), default=0.0)
            rows.append({
                "iteration": it, "region": n,
                "init_x": float(initial[0]), "init_y": float(initial[1]), "init_z": float(initial[2]),
                "final_x": float(final[0]), "final_y": float(final[1]), "final_z": float(final[2]),
                "lambda_div": float(control.lambda_div), "lambda_K": float(control.lambda_K),
                "relaxation": control.relaxation_mode, "K_max": k_max,
            })
            r = float(np.max(initial)) if np.all(np.isfinite(initial)) else math.inf
            if not np.all(np.isfinite(st.A)):
                r = math.inf
            if r > worst or not np.isfinite(r):
                worst, worst_region = r, n
        history.append(worst)
        log.debug("outer %d: max normalized residual %.3e (%s)", it, worst, worst_region)
        if breakdown:
            status = STATUS_BREAKDOWN
            break
        if worst < control.tolerance:
            status = STATUS_CONVERGED
            break
        reason = _diverging(history, control)
        if reason:
            rs = systems[worst_region]
            norms = rs.term_norms()
            finite = {k: v for k, v in norms.items() if np.isfinite(v)}
            dominant = max(finite, key=finite.get) if finite else "unknown"
            floor = min(history[max(control.divergence_warmup - 1, 0):])
            report = DivergenceReport(it, worst_region, worst, floor, dominant, norms, reason)
            log.error(report.format())
            status = STATUS_DIVERGED
            break
        if control.max_wall_time is not None and time.perf_counter() - t0 > control.max_wall_time:
            log.warning("wall-clock limit of %.1f s reached at outer iteration %d", control.max_wall_time, it)
            status = STATUS_MAX_ITER
            break
    sol = Solution(mesh, states, interfaces, control, status, it, history, rows,
                   time.perf_counter() - t0, report, n_corr)
    if log_path is not None:
        sol.write_log(log_path)
    log.info("outer loop %s after %d iterations (%.2f s)", status, it, sol.wall_time)
    return sol


def _diverging(history: list[float], control: OuterIterationControl) -> str | None:
    r = history[-1]
    if not np.isfinite(r):
        return "non-finite residual"
    w = control.divergence_window
    if len(history) <= max(w, control.divergence_warmup):
        return None
    tail = history[-(w + 1):]
    rising = all(b > a for a, b in zip(tail[:-1], tail[1:]))
    reference = min(history[max(control.divergence_warmup - 1, 0):])
    if rising and r > control.divergence_guard * reference:
        return f"residual rose over {w} consecutive iterations to more than {control.divergence_guard:g}x its minimum"
    return None


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceStats:
    region: str
    div_B_max: float
    div_B_l2: float
    div_A_max: float
    div_A_l2: float


def divergence_diagnostics(solution_or_states) -> list[DivergenceStats]:
    """Gauss divergence of interpolated face values of B and A, per region."""
    states = solution_or_states.states if isinstance(solution_or_states, Solution) else solution_or_states
    out = []
    for name, st in states.items():
        r = st.region
        V = r.geometry.cell_volume
        B = st.fields.B.values
        Bf = fvops.interpolate_faces(r, B, fvops.curl_via_hodge(st.face_grad_B))
        Af = fvops.interpolate_faces(r, st.A, st.bnd_values)
        dB = fvops.gauss_divergence(r, Bf[:, :, None])[:, 0]
        dA = fvops.gauss_divergence(r, Af[:, :, None])[:, 0]
        l2 = lambda v: float(np.sqrt(np.sum(V * v**2) / V.sum()))
        out.append(DivergenceStats(name, float(np.abs(dB).max(initial=0.0)), l2(dB),
                                   float(np.abs(dA).max(initial=0.0)), l2(dA)))
    return out

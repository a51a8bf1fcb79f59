"""Sparse systems C x = D, under-relaxation, iterative solvers and residual norms.

Vector unknowns are stored as ``(n, 3)`` sources sharing one matrix; each
component is solved as an independent scalar system.
"""
from __future__ import annotations

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

GAUSS_SEIDEL = "gauss_seidel"
CONJUGATE_GRADIENT = "conjugate_gradient"
BICGSTAB = "bicgstab"
DIRECT = "direct"  # cached sparse LU, for experiments where the same matrix is solved many times
METHODS = (GAUSS_SEIDEL, CONJUGATE_GRADIENT, BICGSTAB, DIRECT)
_LU_CACHE_SIZE = 16

CONVERGED = "converged"
MAX_ITERATIONS = "max_iterations"
BREAKDOWN = "breakdown"

_TINY = 1e-300


class SolverConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SparseSystem:
    matrix: sp.csr_matrix
    source: np.ndarray

    def __post_init__(self) -> None:
        C = sp.csr_matrix(self.matrix)
        object.__setattr__(self, "matrix", C)
        D = np.asarray(self.source, dtype=float)
        object.__setattr__(self, "source", D)
        n = C.shape[0]
        if C.shape != (n, n) or D.shape[0] != n:
            raise ValueError(f"inconsistent system shapes {C.shape} and {D.shape}")
        if not np.all(np.isfinite(C.data)) or not np.all(np.isfinite(D)):
            raise ValueError("system has non-finite coefficients")
        if np.any(C.diagonal() == 0):
            raise ValueError(f"zero diagonal entry in row {int(np.flatnonzero(C.diagonal() == 0)[0])}")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def off_diagonal(self) -> sp.csr_matrix:
        return (self.matrix - sp.diags(self.diagonal)).tocsr()

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x - self.source

    def component(self, k: int) -> "SparseSystem":
        return SparseSystem(self.matrix, self.source[:, k])

    def dominance_ratio(self) -> float:
        """min_P |C_PP| / sum_nb |C_Pnb| (inf for a diagonal matrix)."""
        off = abs(self.off_diagonal()).sum(axis=1).A1
        with np.errstate(divide="ignore"):
            ratio = np.abs(self.diagonal) / off
        return float(ratio.min())


@dataclass(frozen=True)
class SolverConfig:
    method: str = CONJUGATE_GRADIENT
    tolerance: float = 1e-7
    max_iterations: int = 1000
    preconditioner: str = "diagonal"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise SolverConfigError(f"unknown solver {self.method!r}; choose from {', '.join(METHODS)}")
        if not 0 < self.tolerance < 1:
            raise SolverConfigError(f"tolerance must lie in (0, 1), got {self.tolerance}")
        if self.max_iterations < 1:
            raise SolverConfigError("max_iterations must be at least 1")
        if self.preconditioner not in ("none", "diagonal"):
            raise SolverConfigError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    initial_residual: float
    final_residual: float
    status: str

    @property
    def ok(self) -> bool:
        return self.status == CONVERGED


def _pcg(C, b, x, tol_abs, maxit, Minv):
    r = b - C @ x
    z = Minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Cp = C @ p
        pCp = p @ Cp
        if abs(pCp) < _TINY:
            return x, it, np.linalg.norm(r), BREAKDOWN
        alpha = rz / pCp
        x = x + alpha * p
        r = r - alpha * Cp
        res = np.linalg.norm(r)
        if res <= tol_abs:
            return x, it, res, CONVERGED
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxit, np.linalg.norm(r), MAX_ITERATIONS


def _bicgstab(C, b, x, tol_abs, maxit, Minv):
    r = b - C @ x
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for it in range(1, maxit + 1):
        rho_new = r_hat @ r
        if abs(rho_new) < _TINY or abs(omega) < _TINY:
            return x, it, np.linalg.norm(r), BREAKDOWN
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        y = Minv * p
        v = C @ y
        denom = r_hat @ v
        if abs(denom) < _TINY:
            return x, it, np.linalg.norm(r), BREAKDOWN
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= tol_abs:
            return x + alpha * y, it, np.linalg.norm(s), CONVERGED
        z = Minv * s
        t = C @ z
        tt = t @ t
        if tt < _TINY:
            return x + alpha * y, it, np.linalg.norm(s), BREAKDOWN
        omega = (t @ s) / tt
        x = x + alpha * y + omega * z
        r = s - omega * t
        res = np.linalg.norm(r)
        if res <= tol_abs:
            return x, it, res, CONVERGED
    return x, maxit, np.linalg.norm(r), MAX_ITERATIONS


def _gauss_seidel(C, b, x, tol_abs, maxit, Minv):
    L = sp.tril(C, format="csr")
    U = sp.triu(C, k=1, format="csr")
    res = np.linalg.norm(b - C @ x)
    for it in range(1, maxit + 1):
        x = spla.spsolve_triangular(L, b - U @ x, lower=True)
        res = np.linalg.norm(b - C @ x)
        if not np.isfinite(res):
            return x, it, res, BREAKDOWN
        if res <= tol_abs:
            return x, it, res, CONVERGED
    return x, maxit, res, MAX_ITERATIONS


_lu_cache: "OrderedDict[tuple, object]" = OrderedDict()


def _factor(C: sp.csr_matrix):
    key = (C.shape, C.nnz, hashlib.sha1(C.data.tobytes()).hexdigest(), hashlib.sha1(C.indices.tobytes()).hexdigest())
    lu = _lu_cache.get(key)
    if lu is None:
        lu = spla.splu(C.tocsc())
        _lu_cache[key] = lu
        if len(_lu_cache) > _LU_CACHE_SIZE:
            _lu_cache.popitem(last=False)
    else:
        _lu_cache.move_to_end(key)
    return lu


def _direct(C, b, x, tol_abs, maxit, Minv):
    try:
        x = _factor(C).solve(b)
    except RuntimeError:
        return x, 1, np.inf, BREAKDOWN
    res = np.linalg.norm(b - C @ x)
    return x, 1, res, CONVERGED if np.isfinite(res) else BREAKDOWN


_SOLVERS = {CONJUGATE_GRADIENT: _pcg, BICGSTAB: _bicgstab, GAUSS_SEIDEL: _gauss_seidel, DIRECT: _direct}


def solve_scalar(C: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, cfg: SolverConfig) -> SolveResult:
    x0 = np.asarray(x0, dtype=float).copy()
    r0 = float(np.linalg.norm(b - C @ x0))
    if r0 == 0.0:
        return SolveResult(x0, 0, 0.0, 0.0, CONVERGED)
    Minv = 1.0 / C.diagonal() if cfg.preconditioner == "diagonal" else np.ones(C.shape[0])
    x, it, res, status = _SOLVERS[cfg.method](C, b, x0, cfg.tolerance * max(r0, _TINY), cfg.max_iterations, Minv)
    return SolveResult(x, it, r0, float(res), status)


def solve(system: SparseSystem, x0: np.ndarray, cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Solve each source column; residuals are reported as the worst relative value."""
    D = system.source
    if D.ndim == 1:
        return solve_scalar(system.matrix, D, x0, cfg)
    x0 = np.asarray(x0, dtype=float)
    parts = [solve_scalar(system.matrix, D[:, k], x0[:, k], cfg) for k in range(D.shape[1])]
    status = CONVERGED
    for p in parts:
        if p.status == BREAKDOWN:
            status = BREAKDOWN
        elif p.status == MAX_ITERATIONS and status == CONVERGED:
            status = MAX_ITERATIONS
    return SolveResult(
        np.column_stack([p.x for p in parts]),
        max(p.iterations for p in parts),
        max(p.initial_residual for p in parts),
        max(p.final_residual for p in parts),
        status,
    )


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam <= 1.0:
        raise SolverConfigError(f"relaxation factor must lie in (0, 1], got {lam}")


def implicit_relax(system: SparseSystem, phi_old: np.ndarray, lam: float) -> SparseSystem:
    """C_PP -> C_PP/lam and D_P -> D_P + (1-lam)/lam C_PP phi_old,P."""
    _check_lambda(lam)
    if lam == 1.0:
        return system
    diag = system.diagonal
    C = system.matrix + sp.diags(diag * (1.0 / lam - 1.0))
    extra = ((1.0 - lam) / lam) * diag
    phi_old = np.asarray(phi_old, dtype=float)
    D = system.source + (extra[:, None] * phi_old if phi_old.ndim == 2 else extra * phi_old)
    return SparseSystem(C.tocsr(), D)


def explicit_relax(phi_new, phi_old, lam: float) -> np.ndarray:
    """phi_old + lam (phi_new - phi_old)."""
    _check_lambda(lam)
    phi_new = np.asarray(phi_new, dtype=float)
    phi_old = np.asarray(phi_old, dtype=float)
    if phi_new.shape != phi_old.shape:
        raise ValueError(f"shape mismatch {phi_new.shape} vs {phi_old.shape}")
    return phi_old + lam * (phi_new - phi_old)


@dataclass(frozen=True)
class ResidualNorms:
    l1: float
    l2: float
    linf: float
    normalized: float


def residual_norms(system: SparseSystem, x: np.ndarray, normalization: float | None = None) -> ResidualNorms:
    """Norms of C x - D.  ``normalized`` is l1/normalization (1.0 when none is given yet)."""
    r = np.abs(system.residual(x))
    l1 = float(r.sum())
    if normalization is None:
        normalized = 1.0 if l1 > 0 else 0.0
    else:
        normalized = l1 / normalization if normalization > 0 else 0.0
    return ResidualNorms(l1, float(np.sqrt((r**2).sum())), float(r.max(initial=0.0)), normalized)


def dump_matrix_market(system: SparseSystem, path: str | Path) -> None:
    """Write the matrix (and ``<stem>_rhs.mtx`` for the source) in Matrix Market format."""
    path = Path(path)
    scipy.io.mmwrite(str(path), system.matrix)
    D = system.source.reshape(system.n, -1)
    scipy.io.mmwrite(str(path.with_name(path.stem + "_rhs.mtx")), D)


def with_source(system: SparseSystem, source: np.ndarray) -> SparseSystem:
    return replace(system, source=source)

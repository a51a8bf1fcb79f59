"""Finite volume operators on a single region.

Array conventions: cell fields are ``(nc, ...)``, face fields ``(nf, ...)``
over all faces of the region (internal first), boundary arrays ``(nb, ...)``.
Gradient tensors follow G[j, k] = d(a_k)/d(x_j), i.e. the Gauss sum of
s_f (outer) a_f.  Faces in ``empty`` patches are ignored throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from ferrovolt.field import (
    FIXED_VALUE,
    INTERFACE_COUPLED,
    PLANAR_EXCLUDED,
    ZERO_GRADIENT,
    BoundaryCondition,
)
from ferrovolt.mesh import Region

GAUSS = "gauss"
LEAST_SQUARES = "least_squares"
GAUSS_UNCORRECTED = "gauss_uncorrected"
SKEW_ITERATIONS = 50


def _pad_internal(region: Region, values: np.ndarray) -> np.ndarray:
    out = np.zeros((region.n_faces,) + values.shape[1:])
    out[: region.n_internal] = values
    return out


def _sum_to_cells(region: Region, face_values: np.ndarray) -> np.ndarray:
    """Signed owner(+)/neighbour(-) sum of face quantities; trailing dims kept."""
    flat = face_values.reshape(region.n_faces, -1)
    return (region.surface_sum @ flat).reshape((region.n_cells,) + face_values.shape[1:])


def interpolate_faces(region: Region, cell_values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
    """phi_f = w phi_C + (1 - w) phi_E on internal faces, patch values on boundary faces."""
    ni = region.n_internal
    w = region.geometry.weight
    own, nei = region.owner[:ni], region.neighbour
    shape = (ni,) + (1,) * (cell_values.ndim - 1)
    internal = w.reshape(shape) * cell_values[own] + (1 - w).reshape(shape) * cell_values[nei]
    return np.concatenate([internal, np.asarray(boundary_values, dtype=float)])


def gauss_cell_gradient(region: Region, face_values: np.ndarray) -> np.ndarray:
    """(1/V) sum_f s_f (outer) phi_f; scalars give (nc, 3), vectors (nc, 3, 3)."""
    s = region.geometry.face_area
    phi = face_values.reshape(region.n_faces, -1)
    flux = s[:, :, None] * phi[:, None, :]
    g = _sum_to_cells(region, flux) / region.geometry.cell_volume[:, None, None]
    return g.reshape((region.n_cells, 3) + face_values.shape[1:])


def least_squares_gradient(region: Region, cell_values: np.ndarray, boundary_values: np.ndarray) -> np.ndarray:
    """Inverse-distance-squared weighted least-squares cell gradient."""
    g = region.geometry
    ni, nc = region.n_internal, region.n_cells
    phi = cell_values.reshape(nc, -1)
    bphi = np.asarray(boundary_values, dtype=float).reshape(region.n_boundary, -1)
    own, nei = region.owner[:ni], region.neighbour
    bown = region.owner[ni:]
    act = region.active_faces[ni:]

    d = g.delta
    w = 1.0 / np.einsum("fd,fd->f", d, d)
    dd = w[:, None, None] * d[:, :, None] * d[:, None, :]
    dphi = phi[nei] - phi[own]
    rhs_f = w[:, None, None] * d[:, :, None] * dphi[:, None, :]

    db = g.bnd_delta[act]
    wb = 1.0 / np.einsum("fd,fd->f", db, db)
    ddb = wb[:, None, None] * db[:, :, None] * db[:, None, :]
    rhs_b = wb[:, None, None] * db[:, :, None] * (bphi[act] - phi[bown[act]])[:, None, :]

    k = phi.shape[1]
    M = np.zeros((nc, 3, 3))
    R = np.zeros((nc, 3, k))
    for a in range(3):
        for b in range(3):
            M[:, a, b] = np.bincount(own, dd[:, a, b], nc) + np.bincount(nei, dd[:, a, b], nc)
            M[:, a, b] += np.bincount(bown[act], ddb[:, a, b], nc)
        for c in range(k):
            # d points owner -> neighbour, so the neighbour sees (-d)(-dphi)
            R[:, a, c] = np.bincount(own, rhs_f[:, a, c], nc) + np.bincount(nei, rhs_f[:, a, c], nc)
            R[:, a, c] += np.bincount(bown[act], rhs_b[:, a, c], nc)
    G = np.linalg.pinv(M) @ R
    return G.reshape((nc, 3) + cell_values.shape[1:])


def face_gradient(region: Region, cell_grad: np.ndarray, boundary_grad: np.ndarray) -> np.ndarray:
    """w G_C + (1 - w) G_E on internal faces; given one-sided values on boundary faces."""
    return interpolate_faces(region, cell_grad, boundary_grad)


def sn_grad_orthogonal(A_C, A_E, r_mag):
    """Central difference (A_E - A_C)/|r| along the owner -> neighbour direction."""
    r_mag = np.asarray(r_mag, dtype=float)
    diff = np.asarray(A_E, dtype=float) - np.asarray(A_C, dtype=float)
    return diff / (r_mag[..., None] if diff.ndim > r_mag.ndim else r_mag)


def non_orthogonal_correction(face_grad: np.ndarray, n_hat: np.ndarray, r_hat: np.ndarray) -> np.ndarray:
    """(n - r) . grad(A)_f, the explicit part of the face-normal gradient."""
    k = np.asarray(n_hat, dtype=float) - np.asarray(r_hat, dtype=float)
    return np.einsum("...j,...jk->...k", k, face_grad)


def limit_correction(orth: np.ndarray, corr: np.ndarray, limiter: float) -> np.ndarray:
    """Scale corrections so |corr| <= limiter/(1-limiter) |orth| (1 keeps all, 0 drops all)."""
    if limiter >= 1.0:
        return corr
    if limiter <= 0.0:
        return np.zeros_like(corr)
    bound = limiter / (1.0 - limiter) * np.abs(orth)
    mag = np.abs(corr)
    scale = np.where(mag > bound, bound / np.where(mag > 0, mag, 1.0), 1.0)
    return corr * scale


def gauss_divergence(region: Region, face_vectors: np.ndarray) -> np.ndarray:
    flux = np.einsum("fd,fd...->f...", region.geometry.face_area, face_vectors.reshape(region.n_faces, 3, -1))
    return (_sum_to_cells(region, flux) / region.geometry.cell_volume[:, None]).reshape(
        (region.n_cells,) + face_vectors.shape[2:]
    )


def gauss_tensor_divergence(region: Region, face_tensors: np.ndarray) -> np.ndarray:
    """(1/V) sum_f s_f . T_f for (nf, 3, 3) face tensors."""
    flux = np.einsum("fj,fjk->fk", region.geometry.face_area, face_tensors)
    return _sum_to_cells(region, flux) / region.geometry.cell_volume[:, None]


def gauss_curl(region: Region, face_vectors: np.ndarray) -> np.ndarray:
    """(1/V) sum_f s_f x a_f."""
    flux = np.cross(region.geometry.face_area, face_vectors)
    return _sum_to_cells(region, flux) / region.geometry.cell_volume[:, None]


def curl_via_hodge(grad: np.ndarray) -> np.ndarray:
    """Axial vector of the skew part of G: c_i = eps_ijk G_jk (exact curl for linear fields)."""
    G = np.asarray(grad, dtype=float)
    return np.stack(
        [G[..., 1, 2] - G[..., 2, 1], G[..., 2, 0] - G[..., 0, 2], G[..., 0, 1] - G[..., 1, 0]], axis=-1
    )


def susceptibility_face_values(region: Region, chi: np.ndarray) -> np.ndarray:
    """Face susceptibility: linear interpolation inside, one-sided extrapolation on boundary faces.

    Boundary faces (including region interfaces) never average across media:
    chi_f = chi_C + r_Cf . grad(chi)_C with a Gauss gradient built from the
    interpolated values and zero-gradient boundary values.
    """
    chi = np.asarray(chi, dtype=float)
    ni = region.n_internal
    bown = region.owner[ni:]
    faces = interpolate_faces(region, chi, chi[bown])
    grad = gauss_cell_gradient(region, faces)
    faces[ni:] = chi[bown] + np.einsum("fd,fd->f", region.geometry.bnd_delta, grad[bown])
    return faces


def explicit_div_skew(region: Region, chi_f: np.ndarray, face_grad: np.ndarray) -> np.ndarray:
    """Volume-integrated div(chi (grad A - grad A^T)) by Gauss: sum_f chi_f s_f . (G_f - G_f^T)."""
    s = region.geometry.face_area
    skew = face_grad - np.swapaxes(face_grad, -1, -2)
    flux = np.asarray(chi_f)[:, None] * np.einsum("fj,fjk->fk", s, skew)
    return _sum_to_cells(region, flux)


# ---------------------------------------------------------------------------
# boundary treatment and Laplacian assembly
# ---------------------------------------------------------------------------


def boundary_coefficients(
    region: Region,
    bcs: Mapping[str, BoundaryCondition],
    coupled: Mapping[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per boundary face (coeff, value) such that the outward normal gradient is
    ``coeff * (value - A_C')``, A_C' being the cell value moved to the face normal line.

    ``coupled`` supplies (coeff, value) arrays for interface patches.
    """
    nb, ni = region.n_boundary, region.n_internal
    coeff = np.zeros(nb)
    value = np.zeros((nb, 3))
    dn = region.geometry.bnd_dn
    coupled = coupled or {}
    for p in region.patches:
        if p.name not in bcs:
            raise KeyError(f"region {region.name!r}: patch {p.name!r} has no boundary condition")
        bc = bcs[p.name]
        sl = slice(p.start - ni, p.start - ni + p.size)
        if bc.kind == FIXED_VALUE:
            coeff[sl] = 1.0 / dn[sl]
            value[sl] = bc.face_values(p.size)
        elif bc.kind == INTERFACE_COUPLED:
            if p.name not in coupled:
                raise KeyError(f"region {region.name!r}: interface patch {p.name!r} is not coupled")
            c, v = coupled[p.name]
            coeff[sl] = c
            value[sl] = v
        elif bc.kind in (ZERO_GRADIENT, PLANAR_EXCLUDED):
            pass
        else:
            raise ValueError(f"unsupported condition {bc.kind!r}")
    return coeff, value


@dataclass
class BoundaryState:
    sn_grad: np.ndarray  # outward normal gradient per boundary face, (nb, 3)
    values: np.ndarray  # patch values, (nb, 3)
    shifted: np.ndarray  # A_C + t . G_C, (nb, 3)


def boundary_state(
    region: Region,
    cell_values: np.ndarray,
    cell_grad: np.ndarray,
    coeff: np.ndarray,
    value: np.ndarray,
    correct: bool = True,
) -> BoundaryState:
    ni = region.n_internal
    g = region.geometry
    bown = region.owner[ni:]
    shifted = cell_values[bown].copy()
    if correct:
        shifted += np.einsum("fd,fdk->fk", g.bnd_tangent, cell_grad[bown])
    sn = coeff[:, None] * (value - shifted)
    values = shifted + g.bnd_dn[:, None] * sn
    return BoundaryState(sn, values, shifted)


def boundary_face_gradient(region: Region, cell_grad: np.ndarray, sn_grad: np.ndarray) -> np.ndarray:
    """Owner-cell gradient with its face-normal component replaced by ``sn_grad``."""
    ni = region.n_internal
    n = region.geometry.face_normal[ni:]
    G = cell_grad[region.owner[ni:]]
    normal_part = np.einsum("fj,fjk->fk", n, G)
    return G + n[:, :, None] * (sn_grad - normal_part)[:, None, :]


def interface_face_gradient(region: Region, cell_grad: np.ndarray, sn_grad: np.ndarray, bnd_values: np.ndarray) -> np.ndarray:
    """Boundary face gradient whose tangential part comes from the face values.

    Along the directions resolved by neighbouring faces of the same patch the
    surface gradient of the face values replaces the owner-cell gradient; the
    normal part is ``sn_grad``.  Faces on either side of a conformal interface
    share their values, so the tangential derivatives and with them the
    normal component of the curl agree across the interface.
    """
    ni = region.n_internal
    n = region.geometry.face_normal[ni:]
    G = cell_grad[region.owner[ni:]]
    S, P = region.surface_fit
    T = (S @ bnd_values).reshape(-1, 3, 3)
    eye = np.eye(3)
    tangent = eye - n[:, :, None] * n[:, None, :]
    rest = np.einsum("fij,fjk->fik", tangent - P, G)
    return rest + T + n[:, :, None] * sn_grad[:, None, :]


@dataclass
class LaplacianStencil:
    """Implicit/explicit split of -sum_f |s_f| n . grad(A)_f for one region.

    The matrix is the negative Laplacian (positive diagonal, non-positive
    off-diagonals); explicit parts are right-hand-side contributions.
    """

    region: Region
    internal_coeff: np.ndarray  # |s_f| / |r|, (ni,)
    boundary_coeff: np.ndarray  # |s_f| * coeff, (nb,)
    boundary_source: np.ndarray  # |s_f| * coeff * value per boundary face, (nb, 3)
    non_orth_source: np.ndarray  # per cell, (nc, 3)

    def matrix(self) -> sp.csr_matrix:
        r = self.region
        ni, nc = r.n_internal, r.n_cells
        own, nei = r.owner[:ni], r.neighbour
        a = self.internal_coeff
        diag = np.bincount(own, a, nc) + np.bincount(nei, a, nc)
        diag += np.bincount(r.owner[ni:], self.boundary_coeff, nc)
        rows = np.concatenate([own, nei, np.arange(nc)])
        cols = np.concatenate([nei, own, np.arange(nc)])
        vals = np.concatenate([-a, -a, diag])
        return sp.csr_matrix((vals, (rows, cols)), shape=(nc, nc))

    def boundary_cell_source(self, mask: np.ndarray | None = None) -> np.ndarray:
        r = self.region
        src = self.boundary_source if mask is None else self.boundary_source * mask[:, None]
        out = np.zeros((r.n_cells, 3))
        for d in range(3):
            out[:, d] = np.bincount(r.owner[r.n_internal :], src[:, d], r.n_cells)
        return out

    def source(self) -> np.ndarray:
        return self.boundary_cell_source() + self.non_orth_source


def assemble_laplacian(
    region: Region,
    coeff: np.ndarray,
    value: np.ndarray,
    cell_grad: np.ndarray | None = None,
    boundary_grad: np.ndarray | None = None,
    limiter: float = 1.0,
) -> LaplacianStencil:
    """Central-difference implicit part plus explicit non-orthogonal corrections.

    ``cell_grad`` is the lagged cell gradient used for the corrections;
    ``None`` switches corrections off.  ``boundary_grad`` supplies the face
    gradient on boundary faces for interpolation (defaults to owner values).
    """
    g = region.geometry
    ni, nc = region.n_internal, region.n_cells
    mag = g.face_mag
    a = mag[:ni] / g.delta_mag
    bmag = mag[ni:] * region.active_faces[ni:]
    bcoeff = bmag * coeff
    bsrc = bcoeff[:, None] * value

    non_orth = np.zeros((nc, 3))
    if cell_grad is not None:
        if boundary_grad is None:
            boundary_grad = cell_grad[region.owner[ni:]]
        gf = face_gradient(region, cell_grad, boundary_grad)[:ni]
        corr = non_orthogonal_correction(gf, g.face_normal[:ni], g.delta_hat)
        if limiter < 1.0:
            orth = np.einsum("fj,fjk->fk", g.delta_hat, gf)
            corr = limit_correction(orth, corr, limiter)
        non_orth = _sum_to_cells(region, _pad_internal(region, mag[:ni, None] * corr))
        # boundary faces: -coeff t . G_C moves the cell value onto the face normal line
        tcorr = -bcoeff[:, None] * np.einsum("fd,fdk->fk", g.bnd_tangent, cell_grad[region.owner[ni:]])
        if limiter < 1.0:
            tcorr = limit_correction(bsrc, tcorr, limiter)
        for d in range(3):
            non_orth[:, d] += np.bincount(region.owner[ni:], tcorr[:, d], nc)
    return LaplacianStencil(region, a, bcoeff, bsrc, non_orth)


def skew_vectors(region: Region) -> np.ndarray:
    """x_f - x_p per internal face, x_p being the interpolation point on the C-E line."""
    g = region.geometry
    ni = region.n_internal
    xp = g.cell_centre[region.owner[:ni]] + (1.0 - g.weight)[:, None] * g.delta
    return g.face_centre[:ni] - xp


def skew_corrected_gradient(
    region: Region,
    cell_values: np.ndarray,
    boundary_values: np.ndarray,
    max_iter: int = SKEW_ITERATIONS,
    rtol: float = 1e-13,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Gauss gradient with face values corrected by (x_f - x_p) . grad(phi)_f.

    Iterated to a fixed point, which makes the gradient exact for linear fields
    on skewed meshes; ``max_iter=0`` gives the plain Gauss-linear gradient.
    ``initial`` warm-starts the iteration (e.g. with the previous gradient).
    """
    ni = region.n_internal
    faces = interpolate_faces(region, cell_values, boundary_values)
    G = gauss_cell_gradient(region, faces) if initial is None else initial
    if max_iter == 0:
        return G
    k = skew_vectors(region)
    base = faces[:ni].copy()
    w = region.geometry.weight.reshape((ni,) + (1,) * (G.ndim - 1))
    scale = np.abs(G).max() + 1e-300
    for _ in range(max_iter):
        gf = w * G[region.owner[:ni]] + (1 - w) * G[region.neighbour]
        faces[:ni] = base + np.einsum("fd,fd...->f...", k, gf)
        G_new = gauss_cell_gradient(region, faces)
        change = np.abs(G_new - G).max()
        G = G_new
        if change <= rtol * scale:
            break
    return G


def cell_gradient(region: Region, cell_values: np.ndarray, boundary_values: np.ndarray, scheme: str = GAUSS) -> np.ndarray:
    if scheme == GAUSS:
        return skew_corrected_gradient(region, cell_values, boundary_values)
    if scheme == GAUSS_UNCORRECTED:
        return gauss_cell_gradient(region, interpolate_faces(region, cell_values, boundary_values))
    if scheme == LEAST_SQUARES:
        return least_squares_gradient(region, cell_values, boundary_values)
    raise ValueError(f"unknown gradient scheme {scheme!r}")


def laplacian_operator(region: Region, cell_values: np.ndarray, boundary_values: np.ndarray, scheme: str = GAUSS) -> np.ndarray:
    """Explicit cell Laplacian (1/V) sum_f |s_f| snGrad_f with non-orthogonal correction.

    Boundary faces use the one-sided normal gradient to the given patch values.
    """
    g = region.geometry
    ni = region.n_internal
    G = cell_gradient(region, cell_values, boundary_values, scheme)
    bown = region.owner[ni:]
    shifted = cell_values[bown] + np.einsum("fd,fd...->f...", g.bnd_tangent, G[bown])
    shape = (-1,) + (1,) * (cell_values.ndim - 1)
    bsn = (boundary_values - shifted) / g.bnd_dn.reshape(shape)
    gf = interpolate_faces(region, G, G[bown])[:ni]
    isn = (cell_values[region.neighbour] - cell_values[region.owner[:ni]]) / g.delta_mag.reshape(shape)
    isn = isn + np.einsum("fj,fj...->f...", g.face_normal[:ni] - g.delta_hat, gf)
    flux = np.concatenate([isn, bsn]) * g.face_mag.reshape(shape)
    return _sum_to_cells(region, flux) / g.cell_volume.reshape(shape)

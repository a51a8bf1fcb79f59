"""Polynomial fields and the discrete vector identities checked by the test suite.

Each identity returns (lhs, rhs, exact) cell arrays computed with the library
operators, given exact values of the field (and its gradient) on boundary faces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from ferrovolt import fvops as fv

# coefficient matrices c[i, j] of x^i y^j for the three components of a
QUARTIC = (
    {(4, 0): 1.0, (1, 3): 1.0, (2, 1): -0.5},
    {(2, 2): 1.0, (0, 4): -1.0, (1, 0): 1.0, (3, 0): 0.3},
    {(3, 1): 1.0, (2, 2): 0.5, (0, 3): -0.7},
)
SCALAR = {(2, 1): 1.0, (0, 3): 0.5, (1, 0): 2.0, (3, 0): -0.4}
INTERIOR = (0.25, 0.75)  # identities are measured on cells with centroids in this square


def _coeffs(terms: dict) -> np.ndarray:
    c = np.zeros((6, 6))
    for (i, j), v in terms.items():
        c[i, j] = v
    return c


@dataclass
class PolyVector:
    comps: tuple = QUARTIC

    def __post_init__(self):
        self.c = [_coeffs(t) for t in self.comps]

    @staticmethod
    def _ev(c, p):
        return P.polyval2d(p[:, 0], p[:, 1], c)

    def value(self, p):
        return np.column_stack([self._ev(c, p) for c in self.c])

    def grad(self, p):
        G = np.zeros((len(p), 3, 3))
        for k, c in enumerate(self.c):
            G[:, 0, k] = self._ev(P.polyder(c, axis=0), p)
            G[:, 1, k] = self._ev(P.polyder(c, axis=1), p)
        return G

    def laplacian(self, p):
        return np.column_stack([self._ev(P.polyder(c, 2, axis=0), p) + self._ev(P.polyder(c, 2, axis=1), p) for c in self.c])

    def grad_div(self, p):
        cx = P.polyder(self.c[0], axis=0)
        cy = P.polyder(self.c[1], axis=1)
        d = np.zeros((6, 6))
        d[: cx.shape[0], : cx.shape[1]] += cx
        d[: cy.shape[0], : cy.shape[1]] += cy
        return np.column_stack([self._ev(P.polyder(d, axis=0), p), self._ev(P.polyder(d, axis=1), p), np.zeros(len(p))])

    def div(self, p):
        G = self.grad(p)
        return np.trace(G, axis1=1, axis2=2)


def scalar_value(p, terms=SCALAR):
    return P.polyval2d(p[:, 0], p[:, 1], _coeffs(terms))


def scalar_grad(p, terms=SCALAR):
    c = _coeffs(terms)
    return np.column_stack([P.polyval2d(p[:, 0], p[:, 1], P.polyder(c, axis=0)),
                            P.polyval2d(p[:, 0], p[:, 1], P.polyder(c, axis=1)), np.zeros(len(p))])


class IdentityContext:
    """Discrete gradients of the polynomial field on one region."""

    def __init__(self, region, field: PolyVector | None = None):
        self.r = region
        self.a = field or PolyVector()
        g = region.geometry
        ni = region.n_internal
        self.xc, self.xb = g.cell_centre, g.face_centre[ni:]
        self.A, self.Ab = self.a.value(self.xc), self.a.value(self.xb)
        self.G = fv.cell_gradient(region, self.A, self.Ab)
        self.Gb = self.a.grad(self.xb)
        self.Gf = fv.interpolate_faces(region, self.G, self.Gb)
        lo, hi = INTERIOR
        self.mask = np.all((self.xc[:, :2] > lo) & (self.xc[:, :2] < hi), axis=1)

    def error(self, u, exact) -> float:
        """Volume-weighted relative L2 error over the interior cells."""
        V = self.r.geometry.cell_volume[self.mask][:, None]
        u, exact = u[self.mask], exact[self.mask]
        return float(np.sqrt(np.sum(V * (u - exact) ** 2) / np.sum(V * exact**2)))

    def laplacian_by_divergence(self):
        return fv.gauss_tensor_divergence(self.r, self.Gf)

    def grad_div_by_divergence(self):
        return fv.gauss_tensor_divergence(self.r, np.swapaxes(self.Gf, 1, 2))

    def grad_div_by_gradient(self):
        d = np.trace(self.G, axis1=1, axis2=2)
        return fv.cell_gradient(self.r, d, np.trace(self.Gb, axis1=1, axis2=2))

    def curl_curl(self):
        b = fv.curl_via_hodge(self.G)
        return fv.gauss_curl(self.r, fv.interpolate_faces(self.r, b, fv.curl_via_hodge(self.Gb)))

    def I10(self):
        """div(grad a) = laplacian a: Gauss divergence of face gradients vs the corrected face-normal Laplacian."""
        return self.laplacian_by_divergence(), fv.laplacian_operator(self.r, self.A, self.Ab), self.a.laplacian(self.xc)

    def I11(self):
        """div(grad a^T) = grad(div a)."""
        return self.grad_div_by_divergence(), self.grad_div_by_gradient(), self.a.grad_div(self.xc)

    def I03(self):
        """curl curl a = grad div a - laplacian a."""
        rhs = self.grad_div_by_gradient() - fv.laplacian_operator(self.r, self.A, self.Ab)
        return self.curl_curl(), rhs, self.a.grad_div(self.xc) - self.a.laplacian(self.xc)

    def I04(self):
        """curl(c a) = c curl a + grad c x a."""
        c, cb = scalar_value(self.xc), scalar_value(self.xb)
        ca = fv.interpolate_faces(self.r, c[:, None] * self.A, cb[:, None] * self.Ab)
        lhs = fv.gauss_curl(self.r, ca)
        gc = fv.cell_gradient(self.r, c, cb)
        rhs = c[:, None] * fv.curl_via_hodge(self.G) + np.cross(gc, self.A)
        exact = c[:, None] * fv.curl_via_hodge(self.a.grad(self.xc)) + np.cross(scalar_grad(self.xc), self.A)
        return lhs, rhs, exact

    def I09(self):
        """div(phi T) = phi div T + T^T grad phi, with T = grad a."""
        phi, phib = scalar_value(self.xc), scalar_value(self.xb)
        phif = fv.interpolate_faces(self.r, phi, phib)
        lhs = fv.gauss_tensor_divergence(self.r, phif[:, None, None] * self.Gf)
        gphi = fv.cell_gradient(self.r, phi, phib)
        rhs = phi[:, None] * self.laplacian_by_divergence() + np.einsum("cjk,cj->ck", self.G, gphi)
        Gx = self.a.grad(self.xc)
        exact = phi[:, None] * self.a.laplacian(self.xc) + np.einsum("cjk,cj->ck", Gx, scalar_grad(self.xc))
        return lhs, rhs, exact


def observed_orders(errors, hs) -> np.ndarray:
    e, h = np.asarray(errors, float), np.asarray(hs, float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])

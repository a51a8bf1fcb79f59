"""Multi-region polyhedral meshes and the geometry the discretisation needs.

Each region owns its own point list and an OpenFOAM-like face list: internal
faces first (owner < neighbour, area vector pointing owner -> neighbour),
then boundary faces grouped by patch.  Two-dimensional meshes are stored as
one-cell-thick prisms whose front/back faces live in an ``empty`` patch and
never contribute fluxes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)

EMPTY = "empty"
BOUNDARY = "boundary"
INTERFACE = "interface"
PATCH_KINDS = (EMPTY, BOUNDARY, INTERFACE)

FRONT_AND_BACK = "frontAndBack"


class MeshError(ValueError):
    """Invalid connectivity or degenerate geometry."""


@dataclass(frozen=True)
class Patch:
    name: str
    start: int
    size: int
    kind: str = BOUNDARY

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True)
class GeometryCache:
    """Per-face, per-internal-face and per-cell geometric quantities of a region."""

    face_area: np.ndarray  # s_f, (nf, 3)
    face_mag: np.ndarray  # |s_f|, (nf,)
    face_normal: np.ndarray  # n, (nf, 3)
    face_centre: np.ndarray  # (nf, 3)
    cell_centre: np.ndarray  # (nc, 3)
    cell_volume: np.ndarray  # (nc,)
    delta: np.ndarray  # r = x_E - x_C, (ni, 3)
    delta_mag: np.ndarray  # (ni,)
    delta_hat: np.ndarray  # (ni, 3)
    weight: np.ndarray  # w, phi_f = w phi_C + (1 - w) phi_E, (ni,)
    non_orth_deg: np.ndarray  # (ni,)
    bnd_delta: np.ndarray  # x_f - x_C for boundary faces, (nb, 3)
    bnd_dn: np.ndarray  # n . (x_f - x_C), (nb,)
    bnd_tangent: np.ndarray  # (x_f - x_C) - dn n, (nb, 3)


@dataclass
class Region:
    """One material region: cells, faces, owner/neighbour topology, patches.

    Treat as immutable once built; geometry and operator caches are computed
    on first access.
    """

    name: str
    points: np.ndarray
    faces: list[np.ndarray]
    owner: np.ndarray
    neighbour: np.ndarray
    patches: list[Patch]
    n_cells: int

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=float)
        self.owner = np.asarray(self.owner, dtype=np.int64)
        self.neighbour = np.asarray(self.neighbour, dtype=np.int64)
        self.faces = [np.asarray(f, dtype=np.int64) for f in self.faces]
        self._validate()

    # -- topology ----------------------------------------------------------
    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_internal(self) -> int:
        return len(self.neighbour)

    @property
    def n_boundary(self) -> int:
        return self.n_faces - self.n_internal

    def patch(self, name: str) -> Patch:
        for p in self.patches:
            if p.name == name:
                return p
        raise KeyError(f"region {self.name!r} has no patch {name!r}")

    def patch_faces(self, name: str) -> np.ndarray:
        return np.arange(self.patch(name).start, self.patch(name).start + self.patch(name).size)

    @cached_property
    def boundary_patch_index(self) -> np.ndarray:
        """Patch index of every boundary face, (nb,)."""
        idx = np.empty(self.n_boundary, dtype=np.int64)
        for k, p in enumerate(self.patches):
            idx[p.start - self.n_internal : p.start - self.n_internal + p.size] = k
        return idx

    @cached_property
    def active_faces(self) -> np.ndarray:
        """Boolean mask of faces that carry fluxes (everything except ``empty``)."""
        mask = np.ones(self.n_faces, dtype=bool)
        for p in self.patches:
            if p.kind == EMPTY:
                mask[p.slice] = False
        return mask

    @cached_property
    def patch_face_neighbours(self) -> list[np.ndarray]:
        """Boundary-local indices of same-patch faces sharing a vertex, per boundary face.

        Faces of ``empty`` patches get no neighbours.
        """
        ni = self.n_internal
        out: list[np.ndarray] = [np.zeros(0, dtype=np.int64) for _ in range(self.n_boundary)]
        for p in self.patches:
            if p.kind == EMPTY or p.size == 0:
                continue
            by_point: dict[int, list[int]] = {}
            for f in range(p.start, p.start + p.size):
                for v in self.faces[f]:
                    by_point.setdefault(int(v), []).append(f - ni)
            for f in range(p.start, p.start + p.size):
                near = {g for v in self.faces[f] for g in by_point[int(v)]}
                near.discard(f - ni)
                out[f - ni] = np.array(sorted(near), dtype=np.int64)
        return out

    @cached_property
    def surface_fit(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Least-squares surface-gradient operator over same-patch neighbour faces.

        Returns ``(S, P)``: ``(S @ values).reshape(nb, 3, k)`` is the gradient
        of boundary face values along each patch, and ``P[f]`` projects onto the
        directions that the neighbours of face ``f`` resolve.  Offsets are
        projected onto the face plane, so both lie in the tangent plane.
        """
        nb = self.n_boundary
        xf = self.geometry.face_centre[self.n_internal :]
        nf = self.geometry.face_normal[self.n_internal :]
        rows, cols, vals = [], [], []
        P = np.zeros((nb, 3, 3))
        for f, nbr in enumerate(self.patch_face_neighbours):
            if len(nbr) == 0:
                continue
            D = xf[nbr] - xf[f]
            D = D - np.outer(D @ nf[f], nf[f])  # offsets projected onto the face plane
            Dp = np.linalg.pinv(D, rcond=1e-10)
            P[f] = Dp @ D
            for d in range(3):
                rows += [3 * f + d] * (len(nbr) + 1)
                cols += list(nbr) + [f]
                vals += list(Dp[d]) + [-Dp[d].sum()]
        S = sp.csr_matrix((vals, (rows, cols)), shape=(3 * nb, nb))
        return S, P

    @cached_property
    def is_planar(self) -> bool:
        return any(p.kind == EMPTY for p in self.patches)

    @cached_property
    def cell_faces(self) -> list[np.ndarray]:
        cells_of = np.concatenate([self.owner, self.neighbour])
        face_ids = np.concatenate([np.arange(self.n_faces), np.arange(self.n_internal)])
        order = np.argsort(cells_of, kind="stable")
        splits = np.cumsum(np.bincount(cells_of, minlength=self.n_cells))[:-1]
        return np.split(face_ids[order], splits)

    def _validate(self) -> None:
        nf, ni = self.n_faces, self.n_internal
        if len(self.owner) != nf:
            raise MeshError(f"{self.name}: owner list has {len(self.owner)} entries for {nf} faces")
        npts = len(self.points)
        for i, f in enumerate(self.faces):
            if len(f) < 3:
                raise MeshError(f"{self.name}: face {i} has fewer than 3 vertices")
            if f.min() < 0 or f.max() >= npts:
                raise MeshError(f"{self.name}: face {i} references a missing point")
        if ni and (self.neighbour.min() < 0 or self.neighbour.max() >= self.n_cells):
            raise MeshError(f"{self.name}: neighbour index out of range")
        if nf and (self.owner.min() < 0 or self.owner.max() >= self.n_cells):
            raise MeshError(f"{self.name}: owner index out of range")
        if ni and np.any(self.owner[:ni] == self.neighbour):
            bad = int(np.flatnonzero(self.owner[:ni] == self.neighbour)[0])
            raise MeshError(f"{self.name}: internal face {bad} has owner == neighbour")
        # patches must tile the boundary range exactly
        pos = ni
        for p in self.patches:
            if p.kind not in PATCH_KINDS:
                raise MeshError(f"{self.name}: patch {p.name!r} has unknown kind {p.kind!r}")
            if p.start != pos:
                raise MeshError(f"{self.name}: patch {p.name!r} starts at {p.start}, expected {pos}")
            pos += p.size
        if pos != nf:
            raise MeshError(f"{self.name}: patches cover {pos - ni} of {nf - ni} boundary faces")
        counts = np.bincount(self.owner, minlength=self.n_cells) + np.bincount(
            self.neighbour, minlength=self.n_cells
        )
        if np.any(counts < 4):
            bad = int(np.flatnonzero(counts < 4)[0])
            raise MeshError(f"{self.name}: cell {bad} has only {counts[bad]} faces")

    # -- caches ------------------------------------------------------------
    @cached_property
    def geometry(self) -> GeometryCache:
        return build_geometry(self)

    @cached_property
    def surface_sum(self) -> sp.csr_matrix:
        """(nc, nf) matrix summing outward face quantities into cells; empty faces dropped."""
        nf, ni = self.n_faces, self.n_internal
        act = self.active_faces
        rows = np.concatenate([self.owner, self.neighbour])
        cols = np.concatenate([np.arange(nf), np.arange(ni)])
        vals = np.concatenate([np.ones(nf), -np.ones(ni)])
        keep = act[cols]
        return sp.csr_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(self.n_cells, nf)
        )


@dataclass(frozen=True)
class InterfacePatch:
    """Conformal face pairing between two regions; ``e_n`` points from A into B."""

    region_a: str
    region_b: str
    patch_a: str
    patch_b: str
    faces_a: np.ndarray
    faces_b: np.ndarray
    e_n: np.ndarray
    d_a: np.ndarray
    d_b: np.ndarray

    @property
    def name(self) -> str:
        return f"{self.region_a}:{self.patch_a}|{self.region_b}:{self.patch_b}"

    def __len__(self) -> int:
        return len(self.faces_a)

    def other(self, region: str) -> str:
        return self.region_b if region == self.region_a else self.region_a

    def pair(self, region: str, face: int) -> tuple[str, int]:
        """Partner (region, face) of ``face`` in ``region``."""
        if region == self.region_a:
            k = int(np.flatnonzero(self.faces_a == face)[0])
            return self.region_b, int(self.faces_b[k])
        k = int(np.flatnonzero(self.faces_b == face)[0])
        return self.region_a, int(self.faces_a[k])


@dataclass
class MultiRegionMesh:
    points: np.ndarray
    regions: list[Region]
    interfaces: list[InterfacePatch] = field(default_factory=list)

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(f"mesh has no region {name!r}")

    @property
    def region_names(self) -> list[str]:
        return [r.name for r in self.regions]

    def interfaces_of(self, name: str) -> list[InterfacePatch]:
        return [i for i in self.interfaces if name in (i.region_a, i.region_b)]

    @property
    def bounding_diagonal(self) -> float:
        pts = np.concatenate([r.points for r in self.regions])
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def _polygon_geometry(points: np.ndarray, faces: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Area vectors and centroids by fan triangulation about the vertex average."""
    nf = len(faces)
    area = np.zeros((nf, 3))
    centre = np.zeros((nf, 3))
    sizes = np.fromiter((len(f) for f in faces), dtype=np.int64, count=nf)
    for n in np.unique(sizes):
        ids = np.flatnonzero(sizes == n)
        verts = points[np.stack([faces[i] for i in ids])]  # (m, n, 3)
        c0 = verts.mean(axis=1)
        p = verts - c0[:, None, :]
        q = np.roll(p, -1, axis=1)
        tri_area = 0.5 * np.cross(p, q)  # (m, n, 3)
        tri_ctr = c0[:, None, :] + (p + q) / 3.0
        s = tri_area.sum(axis=1)
        smag = np.linalg.norm(s, axis=1)
        nhat = s / np.where(smag > 0, smag, 1.0)[:, None]
        wts = np.einsum("mkd,md->mk", tri_area, nhat)
        wsum = wts.sum(axis=1)
        ctr = np.einsum("mk,mkd->md", wts, tri_ctr) / np.where(wsum != 0, wsum, 1.0)[:, None]
        area[ids] = s
        centre[ids] = np.where(wsum[:, None] != 0, ctr, c0)
    return area, centre


def build_geometry(region: Region) -> GeometryCache:
    """Compute face/cell geometry; hard error on degenerate faces or inverted cells."""
    area, fctr = _polygon_geometry(region.points, region.faces)
    fmag = np.linalg.norm(area, axis=1)
    if np.any(fmag <= 0):
        bad = int(np.flatnonzero(fmag <= 0)[0])
        raise MeshError(f"{region.name}: face {bad} has zero area")
    normal = area / fmag[:, None]
    nc, ni = region.n_cells, region.n_internal
    own, nei = region.owner, region.neighbour

    # estimated centres from face-centre averages, then pyramid decomposition
    nfaces = np.bincount(own, minlength=nc) + np.bincount(nei, minlength=nc)
    est = np.zeros((nc, 3))
    for d in range(3):
        est[:, d] = (np.bincount(own, fctr[:, d], nc) + np.bincount(nei, fctr[:ni, d], nc)) / nfaces
    pyr_own = np.einsum("fd,fd->f", area, fctr - est[own]) / 3.0
    pyr_nei = -np.einsum("fd,fd->f", area[:ni], fctr[:ni] - est[nei]) / 3.0
    vol = np.bincount(own, pyr_own, nc) + np.bincount(nei, pyr_nei, nc)
    if np.any(vol <= 0):
        bad = int(np.flatnonzero(vol <= 0)[0])
        raise MeshError(f"{region.name}: cell {bad} has non-positive volume {vol[bad]:g}")
    cctr = np.zeros((nc, 3))
    for d in range(3):
        c_own = pyr_own * (0.75 * fctr[:, d] + 0.25 * est[own, d])
        c_nei = pyr_nei * (0.75 * fctr[:ni, d] + 0.25 * est[nei, d])
        cctr[:, d] = (np.bincount(own, c_own, nc) + np.bincount(nei, c_nei, nc)) / vol

    delta = cctr[nei] - cctr[own[:ni]]
    dmag = np.linalg.norm(delta, axis=1)
    if np.any(dmag <= 0):
        bad = int(np.flatnonzero(dmag <= 0)[0])
        raise MeshError(f"{region.name}: coincident cell centres across face {bad}")
    dhat = delta / dmag[:, None]
    # projection of x_f onto the C->E line gives |r_fE| / |r_CE|
    weight = np.einsum("fd,fd->f", cctr[nei] - fctr[:ni], dhat) / dmag
    cosang = np.clip(np.einsum("fd,fd->f", normal[:ni], dhat), -1.0, 1.0)
    non_orth = np.degrees(np.arccos(cosang))

    bd = fctr[ni:] - cctr[own[ni:]]
    bdn = np.einsum("fd,fd->f", bd, normal[ni:])
    btan = bd - bdn[:, None] * normal[ni:]
    return GeometryCache(
        face_area=area,
        face_mag=fmag,
        face_normal=normal,
        face_centre=fctr,
        cell_centre=cctr,
        cell_volume=vol,
        delta=delta,
        delta_mag=dmag,
        delta_hat=dhat,
        weight=weight,
        non_orth_deg=non_orth,
        bnd_delta=bd,
        bnd_dn=bdn,
        bnd_tangent=btan,
    )


def closure_error(region: Region) -> np.ndarray:
    """|sum of outward area vectors| / total surface area, per cell."""
    g = region.geometry
    nc, ni = region.n_cells, region.n_internal
    tot = np.zeros((nc, 3))
    for d in range(3):
        tot[:, d] = np.bincount(region.owner, g.face_area[:, d], nc) - np.bincount(
            region.neighbour, g.face_area[:ni, d], nc
        )
    surf = np.bincount(region.owner, g.face_mag, nc) + np.bincount(region.neighbour, g.face_mag[:ni], nc)
    return np.linalg.norm(tot, axis=1) / surf


# ---------------------------------------------------------------------------
# quality
# ---------------------------------------------------------------------------


@dataclass
class QualityFlag:
    region: str
    face: int
    non_orth_deg: float
    level: str  # "warn" | "error"


@dataclass
class RegionQuality:
    name: str
    n_cells: int
    n_faces: int
    max_non_orth: float
    mean_non_orth: float
    max_skewness: float
    min_volume: float
    max_volume: float


@dataclass
class QualityReport:
    regions: list[RegionQuality]
    flags: list[QualityFlag]
    warn_deg: float
    error_deg: float

    @property
    def ok(self) -> bool:
        return not any(f.level == "error" for f in self.flags)

    @property
    def max_non_orth(self) -> float:
        return max((r.max_non_orth for r in self.regions), default=0.0)

    def format(self) -> str:
        lines = [
            f"{'region':<16}{'cells':>8}{'faces':>8}{'maxNonOrth':>12}{'meanNonOrth':>12}"
            f"{'maxSkew':>10}{'minVol':>12}{'maxVol':>12}"
        ]
        for r in self.regions:
            lines.append(
                f"{r.name:<16}{r.n_cells:>8d}{r.n_faces:>8d}{r.max_non_orth:>12.3f}"
                f"{r.mean_non_orth:>12.3f}{r.max_skewness:>10.4f}{r.min_volume:>12.4g}{r.max_volume:>12.4g}"
            )
        n_warn = sum(f.level == "warn" for f in self.flags)
        n_err = sum(f.level == "error" for f in self.flags)
        lines.append(f"flags: {n_warn} warn (>{self.warn_deg:g} deg), {n_err} error (>{self.error_deg:g} deg)")
        for f in self.flags[:20]:
            lines.append(f"  {f.level}: region {f.region} face {f.face} non-orthogonality {f.non_orth_deg:.2f} deg")
        return "\n".join(lines)


def skewness(region: Region) -> np.ndarray:
    """Distance of each internal face centroid from where the C->E line pierces the face, over |r|."""
    g = region.geometry
    ni = region.n_internal
    xc = g.cell_centre[region.owner[:ni]]
    n = g.face_normal[:ni]
    denom = np.einsum("fd,fd->f", n, g.delta)
    t = np.einsum("fd,fd->f", n, g.face_centre[:ni] - xc) / np.where(np.abs(denom) > 0, denom, 1.0)
    hit = xc + t[:, None] * g.delta
    return np.linalg.norm(g.face_centre[:ni] - hit, axis=1) / g.delta_mag


def check_quality(mesh: MultiRegionMesh, warn_deg: float = 70.0, error_deg: float = 85.0) -> QualityReport:
    regions, flags = [], []
    for r in mesh.regions:
        g = r.geometry
        no = g.non_orth_deg
        skew = skewness(r) if r.n_internal else np.zeros(0)
        regions.append(
            RegionQuality(
                name=r.name,
                n_cells=r.n_cells,
                n_faces=r.n_faces,
                max_non_orth=float(no.max()) if len(no) else 0.0,
                mean_non_orth=float(no.mean()) if len(no) else 0.0,
                max_skewness=float(skew.max()) if len(skew) else 0.0,
                min_volume=float(g.cell_volume.min()),
                max_volume=float(g.cell_volume.max()),
            )
        )
        for f in np.flatnonzero(no > warn_deg):
            level = "error" if no[f] > error_deg else "warn"
            flags.append(QualityFlag(r.name, int(f), float(no[f]), level))
    return QualityReport(regions, flags, warn_deg, error_deg)


# ---------------------------------------------------------------------------
# interface pairing
# ---------------------------------------------------------------------------


def pair_interfaces(regions: list[Region], rel_tol: float = 1e-9) -> tuple[list[Region], list[InterfacePatch]]:
    """Pair coincident boundary faces of different regions.

    Every patch is either fully paired with exactly one patch of one other
    region (it becomes an ``interface`` patch) or not paired at all.
    Returns regions with patch kinds updated and the interface list.
    """
    if len(regions) < 2:
        return regions, []
    pts = np.concatenate([r.points for r in regions])
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    tol = rel_tol * diag

    # candidate boundary faces (non-empty) per region
    cand = []
    for r in regions:
        g = r.geometry
        ids = np.arange(r.n_internal, r.n_faces)
        ids = ids[r.active_faces[ids]]
        cand.append((ids, g.face_centre[ids]))

    matches: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for ia in range(len(regions)):
        ids_a, ctr_a = cand[ia]
        if not len(ids_a):
            continue
        for ib in range(ia + 1, len(regions)):
            ids_b, ctr_b = cand[ib]
            if not len(ids_b):
                continue
            tree = cKDTree(ctr_b)
            dist, k = tree.query(ctr_a, distance_upper_bound=max(tol, 1e-300))
            hit = np.isfinite(dist)
            if hit.any():
                matches[(ia, ib)] = list(zip(ids_a[hit].tolist(), ids_b[k[hit]].tolist()))

    # face -> partner lookup per region, then classify patches
    partner: list[dict[int, tuple[int, int]]] = [dict() for _ in regions]
    for (ia, ib), pairs in matches.items():
        for fa, fb in pairs:
            if fa in partner[ia] or fb in partner[ib]:
                raise MeshError(f"face {fa} of {regions[ia].name} matched more than once")
            partner[ia][fa] = (ib, fb)
            partner[ib][fb] = (ia, fa)

    new_regions = []
    patch_target: list[dict[str, tuple[int, str]]] = []
    for ir, r in enumerate(regions):
        targets: dict[str, tuple[int, str]] = {}
        patches = []
        for p in r.patches:
            if p.kind == EMPTY:
                patches.append(p)
                continue
            faces = range(p.start, p.start + p.size)
            paired = [partner[ir].get(f) for f in faces]
            n_paired = sum(x is not None for x in paired)
            if n_paired == 0:
                patches.append(replace(p, kind=BOUNDARY) if p.kind == INTERFACE else p)
                continue
            if n_paired != p.size:
                bad = next(f for f, x in zip(faces, paired) if x is None)
                raise MeshError(
                    f"non-conformal interface: face {bad} of patch {p.name!r} in region "
                    f"{r.name!r} has no partner"
                )
            other_regions = {x[0] for x in paired}
            if len(other_regions) != 1:
                raise MeshError(
                    f"patch {p.name!r} of region {r.name!r} touches several regions; split it"
                )
            nb = other_regions.pop()
            nb_region = regions[nb]
            nb_patches = {int(nb_region.boundary_patch_index[x[1] - nb_region.n_internal]) for x in paired}
            if len(nb_patches) != 1:
                raise MeshError(f"patch {p.name!r} of region {r.name!r} pairs with several patches")
            targets[p.name] = (nb, nb_region.patches[nb_patches.pop()].name)
            patches.append(replace(p, kind=INTERFACE))
        patch_target.append(targets)
        nr = Region(r.name, r.points, r.faces, r.owner, r.neighbour, patches, r.n_cells)
        nr.__dict__["geometry"] = r.geometry
        new_regions.append(nr)

    interfaces = []
    for ia, r in enumerate(new_regions):
        g = r.geometry
        for pname, (ib, pb_name) in patch_target[ia].items():
            if ib < ia:
                continue
            p = r.patch(pname)
            fa = np.arange(p.start, p.start + p.size)
            fb = np.array([partner[ia][f][1] for f in fa], dtype=np.int64)
            rb = new_regions[ib]
            gb = rb.geometry
            sa, sb = g.face_area[fa], gb.face_area[fb]
            rel = np.linalg.norm(sa + sb, axis=1) / np.linalg.norm(sa, axis=1)
            if np.any(rel > 1e-8):
                bad = int(fa[np.argmax(rel)])
                raise MeshError(f"interface faces not anti-parallel at face {bad} of {r.name!r}")
            e_n = g.face_normal[fa]
            xf = g.face_centre[fa]
            d_a = np.einsum("fd,fd->f", e_n, xf - g.cell_centre[r.owner[fa]])
            d_b = np.einsum("fd,fd->f", e_n, gb.cell_centre[rb.owner[fb]] - gb.face_centre[fb])
            if np.any(d_a <= 0) or np.any(d_b <= 0):
                raise MeshError(f"interface {r.name}/{rb.name}: non-positive centroid distance")
            interfaces.append(InterfacePatch(r.name, rb.name, pname, pb_name, fa, fb, e_n, d_a, d_b))
    return new_regions, interfaces


# ---------------------------------------------------------------------------
# construction from 2D cells
# ---------------------------------------------------------------------------


def _signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def extrude_2d(
    points2d: np.ndarray,
    cells: Sequence[Sequence[int]],
    cell_region: Sequence[str],
    edge_tags: dict[tuple[int, int], str] | None = None,
    region_order: Sequence[str] | None = None,
    thickness: float = 1.0,
    rel_tol: float = 1e-9,
) -> MultiRegionMesh:
    """Build a multi-region prism mesh from 2D polygons (triangles/quads).

    ``edge_tags`` maps sorted vertex pairs to patch names.  Region boundary
    edges without a tag that are shared with another region become an
    automatically named interface patch; untagged outer edges are an error.
    """
    points2d = np.asarray(points2d, dtype=float)[:, :2]
    edge_tags = dict(edge_tags or {})
    cells = [np.asarray(c, dtype=np.int64) for c in cells]
    cell_region = list(cell_region)
    names = list(region_order) if region_order is not None else list(dict.fromkeys(cell_region))
    missing = set(cell_region) - set(names)
    if missing:
        raise MeshError(f"cells reference unknown regions {sorted(missing)}")

    # orient all cells counter-clockwise
    for i, c in enumerate(cells):
        a = _signed_area(points2d[c])
        if a == 0:
            raise MeshError(f"2D cell {i} is degenerate")
        if a < 0:
            cells[i] = c[::-1].copy()

    # global edge -> regions touching it
    edge_regions: dict[tuple[int, int], set[str]] = {}
    for c, rname in zip(cells, cell_region):
        for a, b in zip(c, np.roll(c, -1)):
            edge_regions.setdefault((min(a, b), max(a, b)), set()).add(rname)

    regions = []
    for rname in names:
        ids = [i for i, r in enumerate(cell_region) if r == rname]
        if not ids:
            raise MeshError(f"region {rname!r} has no cells")
        used = np.unique(np.concatenate([cells[i] for i in ids]))
        local = -np.ones(len(points2d), dtype=np.int64)
        local[used] = np.arange(len(used))
        npl = len(used)
        pts = np.zeros((2 * npl, 3))
        pts[:npl, :2] = points2d[used]
        pts[npl:, :2] = points2d[used]
        pts[npl:, 2] = thickness

        edges: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
        for lc, gi in enumerate(ids):
            c = local[cells[gi]]
            for a, b in zip(c, np.roll(c, -1)):
                edges.setdefault((min(a, b), max(a, b)), []).append((lc, int(a), int(b)))

        internal = []
        bnd: dict[str, list[tuple[int, list[int]]]] = {}
        for key in sorted(edges):
            occ = edges[key]
            if len(occ) == 2:
                (c0, a0, b0), (c1, _, _) = sorted(occ)
                internal.append((c0, c1, [a0, b0, b0 + npl, a0 + npl]))
            elif len(occ) == 1:
                c0, a0, b0 = occ[0]
                gkey = (int(used[key[0]]), int(used[key[1]]))
                tag = edge_tags.get(gkey)
                if tag is None:
                    others = edge_regions[gkey] - {rname}
                    if not others:
                        raise MeshError(
                            f"boundary edge {gkey} of region {rname!r} has no physical tag"
                        )
                    tag = f"{rname}_to_{sorted(others)[0]}"
                bnd.setdefault(tag, []).append((c0, [a0, b0, b0 + npl, a0 + npl]))
            else:
                raise MeshError(f"edge {key} of region {rname!r} shared by {len(occ)} cells")

        internal.sort(key=lambda t: (t[0], t[1]))
        faces = [f for _, _, f in internal]
        owner = [c0 for c0, _, _ in internal]
        neighbour = [c1 for _, c1, _ in internal]
        patches = []
        for tag in sorted(bnd):
            start = len(faces)
            for c0, f in bnd[tag]:
                faces.append(f)
                owner.append(c0)
            patches.append(Patch(tag, start, len(bnd[tag]), BOUNDARY))
        start = len(faces)
        for lc, gi in enumerate(ids):
            c = local[cells[gi]]
            faces.append(c[::-1].tolist())
            owner.append(lc)
        for lc, gi in enumerate(ids):
            c = local[cells[gi]]
            faces.append((c + npl).tolist())
            owner.append(lc)
        patches.append(Patch(FRONT_AND_BACK, start, 2 * len(ids), EMPTY))
        regions.append(Region(rname, pts, faces, owner, neighbour, patches, len(ids)))

    regions, interfaces = pair_interfaces(regions, rel_tol)
    pts3 = np.zeros((len(points2d), 3))
    pts3[:, :2] = points2d
    return MultiRegionMesh(pts3, regions, interfaces)


def front_polygons(region: Region) -> list[np.ndarray]:
    """2D polygon (CCW, z=0 vertex indices) of every cell of a planar region."""
    p = region.patch(FRONT_AND_BACK)
    half = p.size // 2
    out = [None] * region.n_cells
    for f in range(p.start, p.start + half):
        out[region.owner[f]] = region.faces[f][::-1]
    return out


# ---------------------------------------------------------------------------
# plain-text mesh format
# ---------------------------------------------------------------------------


def write_text_mesh(mesh: MultiRegionMesh, path: str | Path) -> None:
    """Write the sectioned plain-text format (REGION/POINTS/FACES/CELLS/PATCHES/END)."""
    lines = ["# ferrovolt mesh v1"]
    for r in mesh.regions:
        lines.append(f"REGION {r.name}")
        lines.append(f"POINTS {len(r.points)}")
        lines.extend(" ".join(repr(float(v)) for v in p) for p in r.points)
        lines.append(f"FACES {r.n_faces}")
        pidx = r.boundary_patch_index
        for i, f in enumerate(r.faces):
            tail = str(r.neighbour[i]) if i < r.n_internal else r.patches[pidx[i - r.n_internal]].name
            lines.append(f"{len(f)} {' '.join(map(str, f))} {r.owner[i]} {tail}")
        lines.append(f"CELLS {r.n_cells}")
        for cf in r.cell_faces:
            lines.append(f"{len(cf)} {' '.join(map(str, cf))}")
        lines.append(f"PATCHES {len(r.patches)}")
        lines.extend(f"{p.name} {p.kind}" for p in r.patches)
        lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_text_region(name: str, rows: Iterable[list[str]]) -> Region:
    it = iter(rows)
    points = faces = cells = patch_defs = None
    for row in it:
        key, n = row[0], int(row[1])
        block = [next(it) for _ in range(n)]
        if key == "POINTS":
            points = np.array([[float(v) for v in b] for b in block])
        elif key == "FACES":
            faces = block
        elif key == "CELLS":
            cells = [[int(v) for v in b[1:]] for b in block]
        elif key == "PATCHES":
            patch_defs = [(b[0], b[1] if len(b) > 1 else BOUNDARY) for b in block]
        else:
            raise MeshError(f"region {name}: unknown section {key!r}")
    if points is None or faces is None or patch_defs is None:
        raise MeshError(f"region {name}: POINTS, FACES and PATCHES sections are required")

    internal, bnd = [], {p: [] for p, _ in patch_defs}
    n_cells = 0
    for i, b in enumerate(faces):
        k = int(b[0])
        verts = [int(v) for v in b[1 : 1 + k]]
        own = int(b[1 + k])
        tail = b[2 + k]
        n_cells = max(n_cells, own + 1)
        if tail.lstrip("-").isdigit():
            nb = int(tail)
            n_cells = max(n_cells, nb + 1)
            internal.append((verts, own, nb, i))
        else:
            if tail not in bnd:
                raise MeshError(f"region {name}: face {i} references undeclared patch {tail!r}")
            bnd[tail].append((verts, own, i))
    if cells is not None:
        n_cells = len(cells)

    face_list, owner, neighbour, order = [], [], [], []
    for verts, own, nb, i in internal:
        if own > nb:  # keep owner < neighbour, flip orientation
            own, nb, verts = nb, own, verts[::-1]
        face_list.append(verts)
        owner.append(own)
        neighbour.append(nb)
        order.append(i)
    patches = []
    for pname, kind in patch_defs:
        start = len(face_list)
        for verts, own, i in bnd[pname]:
            face_list.append(verts)
            owner.append(own)
            order.append(i)
        patches.append(Patch(pname, start, len(bnd[pname]), kind))
    region = Region(name, points, face_list, owner, neighbour, patches, n_cells)

    if cells is not None:
        remap = np.empty(len(order), dtype=np.int64)
        remap[np.array(order)] = np.arange(len(order))
        for c, cf in enumerate(cells):
            expect = set(region.cell_faces[c].tolist())
            got = set(remap[cf].tolist())
            if got != expect:
                raise MeshError(f"region {name}: CELLS entry {c} disagrees with owner/neighbour")
    return region


def read_text_mesh(path: str | Path, rel_tol: float = 1e-9) -> MultiRegionMesh:
    blocks: list[tuple[str, list[list[str]]]] = []
    current: list[list[str]] | None = None
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "REGION":
            current = []
            blocks.append((tok[1], current))
        elif tok[0] == "END":
            current = None
        elif current is None:
            raise MeshError(f"{path}: data outside a REGION block: {line!r}")
        else:
            current.append(tok)
    if not blocks:
        raise MeshError(f"{path}: no REGION blocks")
    regions = [_parse_text_region(name, rows) for name, rows in blocks]
    regions, interfaces = pair_interfaces(regions, rel_tol)
    pts = np.concatenate([r.points for r in regions])
    return MultiRegionMesh(pts, regions, interfaces)


def load_mesh(path: str | Path, fmt: str | None = None) -> MultiRegionMesh:
    """Load a ``.msh`` (Gmsh ASCII) or plain-text mesh, choosing by suffix unless ``fmt`` is given."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    fmt = fmt or ("gmsh" if path.suffix == ".msh" else "text")
    if fmt == "gmsh":
        from ferrovolt.gmsh_io import load_gmsh

        return load_gmsh(path)
    if fmt == "text":
        return read_text_mesh(path)
    raise MeshError(f"unknown mesh format {fmt!r}")


@dataclass
class PlanarMesh:
    """2D cell soup with region labels and tagged edges, before extrusion."""

    points: np.ndarray  # (n, 2)
    cells: list[np.ndarray]
    cell_region: list[str]
    edge_tags: dict[tuple[int, int], str] = field(default_factory=dict)
    region_order: list[str] | None = None

    def to_mesh(self, thickness: float = 1.0) -> MultiRegionMesh:
        return extrude_2d(
            self.points, self.cells, self.cell_region, self.edge_tags, self.region_order, thickness
        )

    @property
    def regions(self) -> list[str]:
        return list(self.region_order) if self.region_order else list(dict.fromkeys(self.cell_region))

"""Line sampling, interface jump diagnostics and file export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from ferrovolt import fvops
from ferrovolt.field import MU0
from ferrovolt.mesh import Region, front_polygons

VTK_WEDGE = 13
VTK_HEXAHEDRON = 12
CANDIDATES = 12  # nearest centroids tested per sample point


def _states(solution) -> Mapping:
    return solution.states if hasattr(solution, "states") else solution


# ---------------------------------------------------------------------------
# line sampling
# ---------------------------------------------------------------------------


@dataclass
class SampleTable:
    s: np.ndarray  # arc length from p0, (n,)
    points: np.ndarray  # (n, 3)
    values: np.ndarray  # (n, k), NaN where the point lies outside the mesh
    region: list  # region name per point or None
    name: str = "B"

    @property
    def present(self) -> np.ndarray:
        return np.array([r is not None for r in self.region], dtype=bool)

    def __len__(self) -> int:
        return len(self.s)


def _point_in_polygon(xy: np.ndarray, poly: np.ndarray) -> bool:
    """Even-odd rule; points on an edge count as inside."""
    x, y = xy
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if min(x1, x2) - 1e-14 <= x <= max(x1, x2) + 1e-14 and min(y1, y2) - 1e-14 <= y <= max(y1, y2) + 1e-14:
            if abs(cross) <= 1e-14 * max(1.0, abs(x2 - x1) + abs(y2 - y1)):
                return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


class CellLocator:
    """Find the cell containing a planar point across all regions."""

    def __init__(self, regions: list[Region]):
        regions = sorted(regions, key=lambda r: r.name)
        self.regions = regions
        cents, owners, polys = [], [], []
        for r in regions:
            fp = front_polygons(r)
            xy = r.points[:, :2]
            for c in range(r.n_cells):
                polys.append(xy[fp[c]])
                owners.append((r.name, c))
            cents.append(r.geometry.cell_centre[:, :2])
        self.centres = np.concatenate(cents)
        self.owners = owners
        self.polys = polys
        self.tree = cKDTree(self.centres)
        self.radius = max(float(np.max(np.linalg.norm(p - c, axis=1))) for p, c in zip(polys, self.centres))

    def locate(self, xy) -> tuple[str, int] | None:
        xy = np.asarray(xy, dtype=float)[:2]
        k = min(CANDIDATES, len(self.owners))
        dist, idx = self.tree.query(xy, k=k)
        idx = np.atleast_1d(idx)
        dist = np.atleast_1d(dist)
        # ties are broken by (region name, cell id), making the result order-independent
        for d, i in sorted(zip(dist, idx), key=lambda t: (round(t[0], 15), self.owners[t[1]])):
            if d > self.radius:
                break
            if _point_in_polygon(xy, self.polys[i]):
                return self.owners[i]
        return None


def sample_line(solution, p0, p1, n: int, field: str = "B", locator: CellLocator | None = None) -> SampleTable:
    """Cell-centroid values at ``n`` uniformly spaced points from p0 to p1."""
    if n < 2:
        raise ValueError("a line sample needs at least 2 points")
    states = _states(solution)
    p0 = np.asarray(p0, dtype=float).reshape(-1)
    p1 = np.asarray(p1, dtype=float).reshape(-1)
    p0 = np.pad(p0, (0, 3 - len(p0)))
    p1 = np.pad(p1, (0, 3 - len(p1)))
    t = np.linspace(0.0, 1.0, n)
    pts = p0 + t[:, None] * (p1 - p0)
    s = t * np.linalg.norm(p1 - p0)
    loc = locator or CellLocator([st.region for st in states.values()])
    values = np.full((n, 3), np.nan)
    where = []
    for i, p in enumerate(pts):
        hit = loc.locate(p)
        where.append(hit[0] if hit else None)
        if hit:
            arr = getattr(states[hit[0]].fields, field).values
            values[i] = arr[hit[1]]
    return SampleTable(s, pts, values, where, field)


def write_csv_samples(table: SampleTable, path: str | Path) -> None:
    """Columns s, x, y, z, <field>_x, <field>_y, <field>_z; absent points leave values empty."""
    path = Path(path)
    comps = [f"{table.name}_{c}" for c in "xyz"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "x", "y", "z", *comps])
        for i in range(len(table)):
            row = [repr(float(table.s[i]))] + [repr(float(v)) for v in table.points[i]]
            if table.region[i] is None:
                row += ["", "", ""]
            else:
                row += [repr(float(v)) for v in table.values[i]]
            w.writerow(row)


# ---------------------------------------------------------------------------
# interface jumps
# ---------------------------------------------------------------------------


@dataclass
class InterfaceJumps:
    name: str
    area: np.ndarray  # |s_f|, (n,)
    e_n: np.ndarray
    B_a: np.ndarray
    B_b: np.ndarray
    K: np.ndarray
    normal_jump: np.ndarray  # (B_b - B_a) . e_n
    tangential_jump: np.ndarray  # (B_b - B_a) minus its normal part
    residual: np.ndarray  # |(B_b - B_a) - mu0 K x e_n|

    def _l2(self, v: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.area * v**2) / np.sum(self.area))) if len(v) else 0.0

    @property
    def residual_l2(self) -> float:
        return self._l2(self.residual)

    @property
    def normal_l2(self) -> float:
        return self._l2(self.normal_jump)

    @property
    def mu0K_l2(self) -> float:
        return self._l2(MU0 * np.linalg.norm(self.K, axis=1))


@dataclass
class JumpReport:
    interfaces: list[InterfaceJumps]
    max_B: float

    def format(self) -> str:
        lines = [f"{'interface':<40} {'faces':>6} {'|dB.n| L2':>11} {'resid L2':>11} {'mu0|K| L2':>11} {'max resid':>11}"]
        for j in self.interfaces:
            lines.append(
                f"{j.name:<40} {len(j.area):>6d} {j.normal_l2:>11.4e} {j.residual_l2:>11.4e} "
                f"{j.mu0K_l2:>11.4e} {float(j.residual.max(initial=0.0)):>11.4e}"
            )
        lines.append(f"max |B| = {self.max_B:.4e} T")
        return "\n".join(lines)


def interface_jump_report(solution, interfaces=None, values: str = "face") -> JumpReport:
    """Jump of B across every interface versus mu0 K x e_n.

    ``values='face'`` uses the one-sided face fields each region sees at the
    interface; ``'centroid'`` uses the adjacent cell values.  The jump is taken
    as B on the e_n side (region B) minus B on the other side (region A).
    """
    states = _states(solution)
    if interfaces is None:
        interfaces = solution.interfaces
    out = []
    for ifc in interfaces:
        p = ifc.patch
        sa, sb = states[p.region_a], states[p.region_b]
        if values == "face":
            Ba, Bb = sa.face_B(p.faces_a), sb.face_B(p.faces_b)
        elif values == "centroid":
            Ba = sa.fields.B.values[sa.region.owner[p.faces_a]]
            Bb = sb.fields.B.values[sb.region.owner[p.faces_b]]
        else:
            raise ValueError(f"unknown value choice {values!r}")
        dB = Bb - Ba
        dn = np.einsum("fd,fd->f", dB, p.e_n)
        resid = np.linalg.norm(dB - MU0 * np.cross(ifc.K, p.e_n), axis=1)
        area = sa.region.geometry.face_mag[p.faces_a]
        out.append(InterfaceJumps(p.name, area, p.e_n, Ba, Bb, ifc.K.copy(), dn, dB - dn[:, None] * p.e_n, resid))
    max_B = max((float(np.linalg.norm(st.fields.B.values, axis=1).max(initial=0.0)) for st in states.values()), default=0.0)
    return JumpReport(out, max_B)


def potential_jump(solution, interfaces=None) -> float:
    """Largest mismatch of the A face values across paired interface faces.

    Returned relative to the largest |A| over all cells (0 for a zero field).
    """
    states = _states(solution)
    if interfaces is None:
        interfaces = [ifc.patch for ifc in solution.interfaces]
    worst = 0.0
    for p in interfaces:
        sa, sb = states[p.region_a], states[p.region_b]
        Aa = sa.fields.A.boundary[p.faces_a - sa.region.n_internal]
        Ab = sb.fields.A.boundary[p.faces_b - sb.region.n_internal]
        worst = max(worst, float(np.linalg.norm(Aa - Ab, axis=1).max(initial=0.0)))
    scale = max(float(np.linalg.norm(st.fields.A.values, axis=1).max(initial=0.0)) for st in states.values())
    return worst / scale if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# VTK export
# ---------------------------------------------------------------------------


def _prism_cells(region: Region) -> tuple[np.ndarray, list[list[int]], list[int]]:
    """Points and wedge/hexahedron connectivity of a planar prism region."""
    fp = front_polygons(region)
    pts = region.points
    top_z = pts[:, 2].max()
    lookup = {(round(x, 12), round(y, 12)): i for i, (x, y, z) in enumerate(pts) if abs(z - top_z) < 1e-12}
    cells, types = [], []
    for c, poly in enumerate(fp):
        if poly is None or len(poly) not in (3, 4):
            raise ValueError(f"region {region.name!r}: cell {c} is not a triangle or quad prism")
        top = [lookup[(round(pts[v, 0], 12), round(pts[v, 1], 12))] for v in poly]
        cells.append([int(v) for v in poly] + top)
        types.append(VTK_WEDGE if len(poly) == 3 else VTK_HEXAHEDRON)
    return pts, cells, types


def _vtk_block(points, cells, types, arrays: dict[str, np.ndarray], title: str) -> str:
    out = ["# vtk DataFile Version 3.0", title[:250], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {len(points)} double")
    out += [f"{x!r} {y!r} {z!r}" for x, y, z in np.asarray(points, float).tolist()]
    size = sum(len(c) + 1 for c in cells)
    out.append(f"CELLS {len(cells)} {size}")
    out += [f"{len(c)} " + " ".join(str(v) for v in c) for c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += [str(t) for t in types]
    out.append(f"CELL_DATA {len(cells)}")
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.ndim == 2:
            out.append(f"VECTORS {name} double")
            out += [" ".join(repr(float(v)) for v in row) for row in arr]
        elif arr.dtype.kind in "iu":
            out.append(f"SCALARS {name} int 1")
            out.append("LOOKUP_TABLE default")
            out += [str(int(v)) for v in arr]
        else:
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out += [repr(float(v)) for v in arr]
    return "\n".join(out) + "\n"


def _region_arrays(st) -> dict[str, np.ndarray]:
    f = st.fields
    return {"A": f.A.values, "B": f.B.values, "M": f.M.values, "J_f": f.J.values, "chi": f.chi.values}


def write_vtk(solution, path: str | Path) -> list[Path]:
    """One legacy ASCII file per region (``<stem>_<region>.vtk``) plus the combined ``<stem>.vtk``."""
    states = _states(solution)
    path = Path(path)
    if path.suffix != ".vtk":
        path = path / "solution.vtk"
    path.parent.mkdir(parents=True, exist_ok=True)
    written = []
    all_pts, all_cells, all_types, offset = [], [], [], 0
    combined: dict[str, list] = {k: [] for k in ("A", "B", "M", "J_f", "chi", "region")}
    for idx, name in enumerate(sorted(states)):
        st = states[name]
        pts, cells, types = _prism_cells(st.region)
        arrays = _region_arrays(st)
        rp = path.with_name(f"{path.stem}_{name}.vtk")
        rp.write_text(_vtk_block(pts, cells, types, arrays, f"region {name}"))
        written.append(rp)
        all_pts.append(pts)
        all_cells += [[v + offset for v in c] for c in cells]
        all_types += types
        offset += len(pts)
        for k, v in arrays.items():
            combined[k].append(v)
        combined["region"].append(np.full(st.region.n_cells, idx, dtype=np.int64))
    arrays = {k: np.concatenate(v) for k, v in combined.items()}
    path.write_text(_vtk_block(np.concatenate(all_pts), all_cells, all_types, arrays,
                               "regions " + " ".join(f"{i}={n}" for i, n in enumerate(sorted(states)))))
    written.append(path)
    return written


def read_vtk_counts(path: str | Path) -> dict[str, int]:
    """Minimal legacy-VTK reader returning the declared POINTS and CELLS counts."""
    counts = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts and parts[0] in ("POINTS", "CELLS", "CELL_TYPES", "CELL_DATA"):
            counts[parts[0]] = int(parts[1])
    return counts


def gauss_divergence_of_B(st) -> np.ndarray:
    """Cell divergence of B from interpolated face values (diagnostic helper)."""
    r = st.region
    Bf = fvops.interpolate_faces(r, st.fields.B.values, fvops.curl_via_hodge(st.face_grad_B))
    return fvops.gauss_divergence(r, Bf[:, :, None])[:, 0]

"""Built-in planar mesh generators for the benchmark and oracle cases.

Unstructured triangulations go through Shewchuk's Triangle (``triangle``
package) with a graded size field; structured quad grids are built directly
so that every internal face is exactly orthogonal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import triangle as tr

from ferrovolt.mesh import PlanarMesh

OUTER = "outer"


@dataclass(frozen=True)
class Shape:
    """A closed body inside the air box: ``kind`` is ``circle`` or ``rect``."""

    name: str
    kind: str
    centre: tuple[float, float]
    size: tuple[float, float]  # (radius, radius) for circles, (width, height) for rects

    def boundary(self, h: float) -> np.ndarray:
        cx, cy = self.centre
        if self.kind == "circle":
            r = self.size[0]
            n = max(12, int(np.ceil(2 * np.pi * r / h)))
            t = 2 * np.pi * np.arange(n) / n
            return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        if self.kind == "rect":
            w, hh = self.size
            corners = np.array(
                [[cx - w / 2, cy - hh / 2], [cx + w / 2, cy - hh / 2], [cx + w / 2, cy + hh / 2], [cx - w / 2, cy + hh / 2]]
            )
            return _subdivide_closed(corners, h)
        raise ValueError(f"unknown shape kind {self.kind!r}")

    def contains(self, xy: np.ndarray) -> np.ndarray:
        cx, cy = self.centre
        if self.kind == "circle":
            return np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) < self.size[0]
        w, hh = self.size
        return (np.abs(xy[:, 0] - cx) < w / 2) & (np.abs(xy[:, 1] - cy) < hh / 2)

    def distance(self, xy: np.ndarray) -> np.ndarray:
        """Unsigned distance to the shape outline."""
        cx, cy = self.centre
        if self.kind == "circle":
            return np.abs(np.hypot(xy[:, 0] - cx, xy[:, 1] - cy) - self.size[0])
        w, hh = self.size
        dx = np.abs(xy[:, 0] - cx) - w / 2
        dy = np.abs(xy[:, 1] - cy) - hh / 2
        outside = np.hypot(np.maximum(dx, 0), np.maximum(dy, 0))
        inside = np.minimum(np.maximum(dx, dy), 0)
        return np.abs(outside + inside)


def _subdivide_closed(corners: np.ndarray, h: float) -> np.ndarray:
    pts = []
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / h)))
        t = np.arange(n)[:, None] / n
        pts.append(a + t * (b - a))
    return np.concatenate(pts)


def _interface_name(a: str, b: str) -> str:
    return "_".join(sorted((a, b)))


def _tag_edges(points: np.ndarray, cells: list[np.ndarray], regions: list[str], half: float) -> dict:
    """Tag box-boundary edges ``outer`` and region-boundary edges by region pair."""
    owners: dict[tuple[int, int], list[str]] = {}
    for c, r in zip(cells, regions):
        for a, b in zip(c, np.roll(c, -1)):
            owners.setdefault((min(a, b), max(a, b)), []).append(r)
    tags = {}
    tol = 1e-9 * half
    for e, rs in owners.items():
        if len(rs) == 1:
            mid = 0.5 * (points[e[0]] + points[e[1]])
            if np.max(np.abs(mid)) < half - tol:
                raise RuntimeError(f"dangling edge {e} inside the box")
            tags[e] = OUTER
        elif rs[0] != rs[1]:
            tags[e] = _interface_name(rs[0], rs[1])
    return tags


def size_field(xy: np.ndarray, shapes: list[Shape], h_near: float, h_far: float, growth: float) -> np.ndarray:
    if not shapes:
        return np.full(len(xy), h_far)
    d = np.min([s.distance(xy) for s in shapes], axis=0)
    return np.minimum(h_far, h_near + growth * d)


def _in_lattice_zone(xy: np.ndarray, shapes: list[Shape], reach: float) -> np.ndarray:
    near = np.zeros(len(xy), dtype=bool)
    for s in shapes:
        near |= s.contains(xy) | (s.distance(xy) < reach)
    return near


def hex_lattice(shapes: list[Shape], h: float, reach: float) -> np.ndarray:
    """Equilateral lattice points (spacing ``h``) inside or within ``reach`` of any shape.

    Points closer than ``0.55 h`` to an outline are dropped so that the
    outline vertices are not crowded.
    """
    lo = np.min([np.subtract(s.centre, np.max(s.size)) for s in shapes], axis=0) - reach - h
    hi = np.max([np.add(s.centre, np.max(s.size)) for s in shapes], axis=0) + reach + h
    dy = h * np.sqrt(3) / 2
    i = np.arange(int(np.floor(lo[0] / h)) - 1, int(np.ceil(hi[0] / h)) + 2)
    j = np.arange(int(np.floor(lo[1] / dy)) - 1, int(np.ceil(hi[1] / dy)) + 2)
    ii, jj = np.meshgrid(i, j)
    pts = np.column_stack([(h * (ii + 0.5 * (jj % 2))).ravel(), (dy * jj).ravel()])
    keep = _in_lattice_zone(pts, shapes, reach)
    gap = np.min([s.distance(pts) for s in shapes], axis=0)
    return pts[keep & (gap > 0.55 * h)]


def triangulated_box(
    shapes: list[Shape],
    box: float = 1.0,
    h_near: float = 5e-3,
    h_far: float = 0.08,
    growth: float = 0.25,
    min_angle: float = 28.0,
    air: str = "air",
    passes: int = 6,
    lattice: float = 0.0,
) -> PlanarMesh:
    """Graded conforming triangulation of ``shapes`` inside a square air box centred at 0.

    With ``lattice > 0`` every point within that distance of a shape outline
    (and every interior point) is seeded from an equilateral lattice of
    spacing ``h_near`` and left unrefined.  Near-equilateral cells make the
    first-order terms of the cell gradient cancel, which markedly improves the
    reconstructed field compared with the same cell count placed by
    Delaunay refinement.
    """
    half = box / 2
    corners = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    outline = [_subdivide_closed(corners, h_far)]
    for s in shapes:
        outline.append(s.boundary(h_near))
    verts, segs, start = [], [], 0
    for loop in outline:
        n = len(loop)
        verts.append(loop)
        idx = start + np.arange(n)
        segs.append(np.column_stack([idx, np.roll(idx, -1)]))
        start += n
    names = [air] + [s.name for s in shapes]
    seeds = [[-half + 1e-3 * box, -half + 1e-3 * box, 0, 0]]
    for k, s in enumerate(shapes):
        cx, cy = s.centre
        seeds.append([cx, cy, k + 1, 0])
    seeded = np.zeros((0, 2))
    if lattice > 0 and shapes:
        seeded = hex_lattice(shapes, h_near, lattice)
        seeded = seeded[np.all(np.abs(seeded) < half - h_near, axis=1)]
        verts.append(seeded)
    pslg = dict(
        vertices=np.concatenate(verts),
        segments=np.concatenate(segs),
        regions=np.array(seeds, dtype=float),
    )
    opts = f"pq{min_angle:g}A"
    t = tr.triangulate(pslg, opts)
    for _ in range(passes):
        xy = t["vertices"][t["triangles"]].mean(axis=1)
        h = size_field(xy, shapes, h_near, h_far, growth)
        if len(seeded):
            h = np.where(_in_lattice_zone(xy, shapes, lattice), h_far, h)
        target = np.sqrt(3) / 4 * h**2
        tri = t["vertices"][t["triangles"]]
        e1, e2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.all(area <= 1.2 * target):
            break
        t = tr.triangulate(dict(t, triangle_max_area=target), opts + "ra")
    attr = t["triangle_attributes"].ravel().astype(int)
    cells = [np.array(c) for c in t["triangles"]]
    regions = [names[a] for a in attr]
    tags = _tag_edges(t["vertices"], cells, regions, half)
    return PlanarMesh(t["vertices"], cells, regions, tags, region_order=names)


def graded_coords(breaks: list[float], h_near: float, h_far: float, growth: float, lo: float, hi: float) -> np.ndarray:
    """1D grid on [lo, hi] that contains every break point, finest at the breaks."""
    pts = sorted({lo, hi, *[b for b in breaks if lo < b < hi]})
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        seg_near = [x for x in (a, b) if x in breaks]
        length = b - a
        # local spacing as a function of distance to the nearest break
        xs = np.linspace(a, b, 4097)
        if seg_near:
            d = np.min([np.abs(xs - x) for x in seg_near], axis=0)
        else:
            d = np.full_like(xs, np.inf)
        h = np.minimum(h_far, h_near + growth * d)
        s = np.concatenate([[0], np.cumsum(0.5 * (1 / h[1:] + 1 / h[:-1]) * np.diff(xs))])
        n = max(1, int(np.round(s[-1])))
        targets = np.linspace(0, s[-1], n + 1)[1:]
        out.extend(np.interp(targets, s, xs))
        out[-1] = b
        del length
    return np.array(out)


def structured_box(
    shapes: list[Shape],
    box: float = 1.0,
    h_near: float = 5e-3,
    h_far: float = 0.08,
    growth: float = 0.25,
    air: str = "air",
    perturb: float = 0.0,
    seed: int = 0,
) -> PlanarMesh:
    """Tensor-product quad mesh aligned with rectangular shapes (orthogonal unless perturbed).

    ``perturb`` moves interior nodes that do not lie on shape outlines by up
    to that fraction of the local spacing, giving a non-orthogonal variant.
    """
    if any(s.kind != "rect" for s in shapes):
        raise ValueError("structured meshes support rectangular shapes only")
    half = box / 2
    bx, by = [], []
    for s in shapes:
        (cx, cy), (w, hh) = s.centre, s.size
        bx += [cx - w / 2, cx + w / 2]
        by += [cy - hh / 2, cy + hh / 2]
    xs = graded_coords(bx, h_near, h_far, growth, -half, half)
    ys = graded_coords(by, h_near, h_far, growth, -half, half)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    nx, ny = len(xs), len(ys)

    def nid(i, j):
        return i * ny + j

    cells, regions = [], []
    for i in range(nx - 1):
        for j in range(ny - 1):
            cells.append(np.array([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]))
            c = np.array([[0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])]])
            name = air
            for s in shapes:
                if s.contains(c)[0]:
                    name = s.name
            regions.append(name)

    if perturb > 0:
        rng = np.random.default_rng(seed)
        on_line = np.zeros(len(pts), dtype=bool)
        for s in shapes:
            on_line |= s.distance(pts) < 1e-12
        i_idx, j_idx = np.divmod(np.arange(len(pts)), ny)
        free = (~on_line) & (i_idx > 0) & (i_idx < nx - 1) & (j_idx > 0) & (j_idx < ny - 1)
        hx = np.minimum(np.diff(xs)[np.clip(i_idx - 1, 0, nx - 2)], np.diff(xs)[np.clip(i_idx, 0, nx - 2)])
        hy = np.minimum(np.diff(ys)[np.clip(j_idx - 1, 0, ny - 2)], np.diff(ys)[np.clip(j_idx, 0, ny - 2)])
        jitter = rng.uniform(-1, 1, size=pts.shape) * perturb * np.column_stack([hx, hy])
        moved = pts + jitter
        # never let a node cross a shape outline
        for s in shapes:
            moved = np.where((s.contains(moved) != s.contains(pts))[:, None], pts, moved)
        pts = np.where(free[:, None], moved, pts)

    names = [air] + [s.name for s in shapes]
    tags = _tag_edges(pts, cells, regions, half)
    return PlanarMesh(pts, cells, regions, tags, region_order=names)


def unit_square(
    n: int,
    kind: str = "quad",
    shear: float = 0.0,
    perturb: float = 0.0,
    seed: int = 0,
    name: str = "domain",
    warp: float = 0.0,
) -> PlanarMesh:
    """Single-region mesh of [0,1]^2 for operator tests.

    ``kind``: ``quad`` (orthogonal), ``tri`` (each quad split along the
    diagonal, then sheared by ``shear``: x += shear*(y - 1/2) * h-periodic
    pattern) or ``tri_random`` (Triangle with max area 1/n^2).  ``warp``
    applies the smooth map x += warp sin(pi x) sin(2 pi y), y += warp
    sin(2 pi x) sin(pi y), which keeps the boundary fixed and makes the mesh
    non-orthogonal without cell-to-cell irregularity.
    """
    if kind == "tri_random":
        box = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
        pslg = dict(vertices=_subdivide_closed(box, 1.0 / n))
        m = len(pslg["vertices"])
        pslg["segments"] = np.column_stack([np.arange(m), np.roll(np.arange(m), -1)])
        t = tr.triangulate(pslg, f"pq30a{0.5 / n**2:.12f}")
        cells = [np.array(c) for c in t["triangles"]]
        pts = t["vertices"]
    else:
        x = np.linspace(0, 1, n + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        cells = []
        for i in range(n):
            for j in range(n):
                a, b, c, d = i * (n + 1) + j, (i + 1) * (n + 1) + j, (i + 1) * (n + 1) + j + 1, i * (n + 1) + j + 1
                if kind == "quad":
                    cells.append(np.array([a, b, c, d]))
                else:
                    cells.append(np.array([a, b, c]))
                    cells.append(np.array([a, c, d]))
        if shear:
            # shift every other row of interior nodes: uniform but skewed triangles
            h = 1.0 / n
            row = np.round(pts[:, 1] / h).astype(int)
            interior = (pts[:, 0] > 0) & (pts[:, 0] < 1) & (pts[:, 1] > 0) & (pts[:, 1] < 1)
            pts = pts.copy()
            pts[:, 0] += np.where(interior & (row % 2 == 1), shear * h, 0.0)
        if perturb:
            rng = np.random.default_rng(seed)
            interior = (pts[:, 0] > 0) & (pts[:, 0] < 1) & (pts[:, 1] > 0) & (pts[:, 1] < 1)
            pts = pts + np.where(interior[:, None], rng.uniform(-1, 1, pts.shape) * perturb / n, 0.0)
    if warp:
        x, y = pts[:, 0].copy(), pts[:, 1].copy()
        pts = np.column_stack([
            x + warp * np.sin(np.pi * x) * np.sin(2 * np.pi * y),
            y + warp * np.sin(2 * np.pi * x) * np.sin(np.pi * y),
        ])
    tags = {}
    owners: dict[tuple[int, int], int] = {}
    for c in cells:
        for a, b in zip(c, np.roll(c, -1)):
            e = (min(a, b), max(a, b))
            owners[e] = owners.get(e, 0) + 1
    for e, k in owners.items():
        if k == 1:
            mid = 0.5 * (pts[e[0]] + pts[e[1]])
            if abs(mid[1]) < 1e-12:
                tags[e] = "bottom"
            elif abs(mid[1] - 1) < 1e-12:
                tags[e] = "top"
            elif abs(mid[0]) < 1e-12:
                tags[e] = "left"
            else:
                tags[e] = "right"
    return PlanarMesh(np.asarray(pts, float), cells, [name] * len(cells), tags, region_order=[name])

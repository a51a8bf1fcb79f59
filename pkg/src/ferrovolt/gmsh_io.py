"""Gmsh MSH ASCII readers (v2.2, v4.1) and writers for planar meshes.

Only 2D meshes are accepted: surface elements (triangles, quads) carry the
region as a physical surface, line elements carry patch names as physical
curves.  Volume elements are rejected.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ferrovolt.mesh import MeshError, MultiRegionMesh, PlanarMesh

# element type -> (dimension, node count)
ELEMENTS = {1: (1, 2), 2: (2, 3), 3: (2, 4), 15: (0, 1)}
VOLUME_TYPES = {4: "tetrahedron", 5: "hexahedron", 6: "prism", 7: "pyramid"}


class GmshError(MeshError):
    pass


def _sections(text: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("$") and not line.startswith("$End"):
            name = line[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                j += 1
            if j == len(lines):
                raise GmshError(f"section ${name} is not terminated")
            out[name] = [ln.strip() for ln in lines[i + 1 : j]]
            i = j + 1
        else:
            i += 1
    return out


def _physical_names(sec: dict[str, list[str]]) -> dict[tuple[int, int], str]:
    names = {}
    for line in sec.get("PhysicalNames", [])[1:]:
        dim, tag, name = line.split(maxsplit=2)
        names[(int(dim), int(tag))] = name.strip('"')
    return names


def _check_type(etype: int, where: str) -> None:
    if etype in VOLUME_TYPES:
        raise GmshError(f"{where}: 3D {VOLUME_TYPES[etype]} elements are not supported")
    if etype not in ELEMENTS:
        raise GmshError(f"{where}: unsupported element type {etype}")


def _read_v2(sec: dict[str, list[str]]):
    names = _physical_names(sec)
    nodes = sec["Nodes"]
    n = int(nodes[0])
    tags = np.empty(n, dtype=np.int64)
    xyz = np.empty((n, 3))
    for k, line in enumerate(nodes[1 : 1 + n]):
        v = line.split()
        tags[k] = int(v[0])
        xyz[k] = [float(x) for x in v[1:4]]
    surfaces, lines = [], []
    elems = sec["Elements"]
    for line in elems[1 : 1 + int(elems[0])]:
        v = [int(x) for x in line.split()]
        eid, etype, ntags = v[0], v[1], v[2]
        _check_type(etype, f"element {eid}")
        dim, nn = ELEMENTS[etype]
        phys, geo = (v[3], v[4]) if ntags >= 2 else (v[3] if ntags else 0, 0)
        conn = v[3 + ntags : 3 + ntags + nn]
        if dim == 2:
            if phys == 0:
                raise GmshError(f"surface {geo} (element {eid}) has no physical tag")
            surfaces.append((conn, names.get((2, phys), f"region_{phys}")))
        elif dim == 1:
            if phys == 0:
                raise GmshError(f"curve {geo} (element {eid}) has no physical tag")
            lines.append((conn, names.get((1, phys), f"patch_{phys}")))
    return tags, xyz, surfaces, lines


def _read_v4(sec: dict[str, list[str]]):
    names = _physical_names(sec)
    entity_phys: dict[tuple[int, int], list[int]] = {}
    if "Entities" in sec:
        ent = sec["Entities"]
        counts = [int(x) for x in ent[0].split()]
        row = 1
        for dim, cnt in enumerate(counts):
            for _ in range(cnt):
                v = ent[row].split()
                row += 1
                tag = int(v[0])
                k = 4 if dim == 0 else 7
                nphys = int(v[k])
                entity_phys[(dim, tag)] = [int(x) for x in v[k + 1 : k + 1 + nphys]]

    nodes = sec["Nodes"]
    nblocks, nnodes = (int(x) for x in nodes[0].split()[:2])
    tags = np.empty(nnodes, dtype=np.int64)
    xyz = np.empty((nnodes, 3))
    row, k = 1, 0
    for _ in range(nblocks):
        _, _, parametric, m = (int(x) for x in nodes[row].split())
        if parametric:
            raise GmshError("parametric node blocks are not supported")
        row += 1
        tags[k : k + m] = [int(x) for x in nodes[row : row + m]]
        row += m
        for j in range(m):
            xyz[k + j] = [float(x) for x in nodes[row + j].split()[:3]]
        row += m
        k += m

    surfaces, lines = [], []
    elems = sec["Elements"]
    nblocks = int(elems[0].split()[0])
    row = 1
    for _ in range(nblocks):
        dim, etag, etype, m = (int(x) for x in elems[row].split())
        row += 1
        _check_type(etype, f"entity ({dim}, {etag})")
        _, nn = ELEMENTS[etype]
        phys = entity_phys.get((dim, etag), [])
        block = [[int(x) for x in elems[row + j].split()] for j in range(m)]
        row += m
        if dim == 2:
            if not phys:
                raise GmshError(f"surface {etag} has no physical tag")
            name = names.get((2, phys[0]), f"region_{phys[0]}")
            surfaces.extend((b[1 : 1 + nn], name) for b in block)
        elif dim == 1:
            if not phys:
                raise GmshError(f"curve {etag} has no physical tag")
            name = names.get((1, phys[0]), f"patch_{phys[0]}")
            lines.extend((b[1 : 1 + nn], name) for b in block)
    return tags, xyz, surfaces, lines


def read_gmsh_planar(path: str | Path) -> PlanarMesh:
    sec = _sections(Path(path).read_text())
    if "MeshFormat" not in sec:
        raise GmshError(f"{path}: missing $MeshFormat")
    fmt = sec["MeshFormat"][0].split()
    version, filetype = fmt[0], int(fmt[1])
    if filetype != 0:
        raise GmshError(f"{path}: binary MSH files are not supported")
    readers = {"2": _read_v2, "4": _read_v4}
    if version[0] not in readers:
        raise GmshError(f"{path}: unknown MSH version {version}")
    try:
        tags, xyz, surfaces, lines = readers[version[0]](sec)
    except (ValueError, IndexError, KeyError) as exc:
        if isinstance(exc, GmshError):
            raise
        raise GmshError(f"{path}: malformed MSH {version} data: {exc}") from exc
    if not surfaces:
        raise GmshError(f"{path}: no surface elements")
    if np.ptp(xyz[:, 2]) > 1e-12 * max(np.ptp(xyz[:, 0]), np.ptp(xyz[:, 1]), 1.0):
        raise GmshError(f"{path}: surface mesh is not planar in z")

    index = {int(t): i for i, t in enumerate(tags)}
    used = sorted({index[t] for conn, _ in surfaces for t in conn})
    remap = {g: i for i, g in enumerate(used)}
    cells = [np.array([remap[index[t]] for t in conn]) for conn, _ in surfaces]
    regions = [name for _, name in surfaces]
    edge_tags = {}
    for conn, name in lines:
        a, b = (index[t] for t in conn)
        if a not in remap or b not in remap:
            continue
        a, b = remap[a], remap[b]
        edge_tags[(min(a, b), max(a, b))] = name
    return PlanarMesh(xyz[used, :2], cells, regions, edge_tags)


def load_gmsh(path: str | Path) -> MultiRegionMesh:
    """Read a Gmsh ASCII mesh and extrude it to unit-thickness prisms."""
    return read_gmsh_planar(path).to_mesh()


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


def _tag_tables(pm: PlanarMesh):
    regions = pm.regions
    patches = sorted(set(pm.edge_tags.values()))
    surf_tag = {r: i + 1 for i, r in enumerate(regions)}
    curve_tag = {p: len(regions) + i + 1 for i, p in enumerate(patches)}
    return regions, patches, surf_tag, curve_tag


def write_gmsh(pm: PlanarMesh, path: str | Path, version: str = "2.2") -> None:
    """Write a planar mesh as Gmsh ASCII; one entity per region and per patch."""
    regions, patches, surf_tag, curve_tag = _tag_tables(pm)
    out = ["$MeshFormat", f"{version} 0 8", "$EndMeshFormat", "$PhysicalNames"]
    out.append(str(len(regions) + len(patches)))
    out += [f'1 {curve_tag[p]} "{p}"' for p in patches]
    out += [f'2 {surf_tag[r]} "{r}"' for r in regions]
    out.append("$EndPhysicalNames")
    n = len(pm.points)
    edges_by_patch = {p: [e for e, t in sorted(pm.edge_tags.items()) if t == p] for p in patches}
    cells_by_region = {r: [c for c, cr in zip(pm.cells, pm.cell_region) if cr == r] for r in regions}

    if version.startswith("2"):
        out += ["$Nodes", str(n)]
        out += [f"{i + 1} {x!r} {y!r} 0" for i, (x, y) in enumerate(np.asarray(pm.points, float).tolist())]
        out += ["$EndNodes", "$Elements"]
        rows = []
        for p in patches:
            for a, b in edges_by_patch[p]:
                rows.append(f"1 2 {curve_tag[p]} {curve_tag[p]} {a + 1} {b + 1}")
        for r in regions:
            for c in cells_by_region[r]:
                et = 2 if len(c) == 3 else 3
                rows.append(f"{et} 2 {surf_tag[r]} {surf_tag[r]} " + " ".join(str(v + 1) for v in c))
        out.append(str(len(rows)))
        out += [f"{i + 1} {row}" for i, row in enumerate(rows)]
        out.append("$EndElements")
    elif version.startswith("4"):
        lo, hi = pm.points.min(axis=0), pm.points.max(axis=0)
        box = " ".join(repr(float(v)) for v in (lo[0], lo[1], 0.0, hi[0], hi[1], 0.0))
        out += ["$Entities", f"0 {len(patches)} {len(regions)} 0"]
        out += [f"{curve_tag[p]} {box} 1 {curve_tag[p]} 0" for p in patches]
        out += [f"{surf_tag[r]} {box} 1 {surf_tag[r]} 0" for r in regions]
        out += ["$EndEntities", "$Nodes", f"1 {n} 1 {n}", f"2 1 0 {n}"]
        out += [str(i + 1) for i in range(n)]
        out += [f"{x!r} {y!r} 0" for x, y in np.asarray(pm.points, float).tolist()]
        out.append("$EndNodes")
        blocks = []
        for p in patches:
            blocks.append((1, curve_tag[p], 1, [list(e) for e in edges_by_patch[p]]))
        for r in regions:
            tri = [list(c) for c in cells_by_region[r] if len(c) == 3]
            quad = [list(c) for c in cells_by_region[r] if len(c) == 4]
            if tri:
                blocks.append((2, surf_tag[r], 2, tri))
            if quad:
                blocks.append((2, surf_tag[r], 3, quad))
        total = sum(len(b[3]) for b in blocks)
        out += ["$Elements", f"{len(blocks)} {total} 1 {total}"]
        eid = 1
        for dim, tag, et, conn in blocks:
            out.append(f"{dim} {tag} {et} {len(conn)}")
            for c in conn:
                out.append(f"{eid} " + " ".join(str(v + 1) for v in c))
                eid += 1
        out.append("$EndElements")
    else:
        raise GmshError(f"cannot write MSH version {version}")
    Path(path).write_text("\n".join(out) + "\n")

"""Triangle meshes: OBJ / ASCII PLY input, OBJ output, sampling and containment."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = ["TriangleMesh", "MeshFormatError", "load_mesh", "save_obj", "tube_mesh", "revolution_mesh"]

# Sub-voxel offset applied to every containment ray origin so rays do not
# graze edges or vertices lying on regular grid lines.
RAY_JITTER = np.array([0.7548776662466927e-7, 0.5698402909980532e-7])


class MeshFormatError(ValueError):
    """Raised for malformed or unsupported mesh files."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(M, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.corners
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extents(self) -> np.ndarray:
        lo, hi = self.bounds()
        return hi - lo

    def volume(self) -> float:
        """Signed enclosed volume (divergence theorem); positive for outward winding."""
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def cleaned(self, area_tol: float = 1e-14) -> "TriangleMesh":
        """Merge coincident vertices, drop degenerate triangles and unused vertices."""
        v, inverse = np.unique(self.vertices, axis=0, return_inverse=True)
        t = inverse.reshape(-1)[self.triangles]
        distinct = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
        t = t[distinct]
        c = v[t]
        area = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
        scale = max(float(np.ptp(v, axis=0).max()) if len(v) else 1.0, 1e-300)
        t = t[area > area_tol * scale * scale]
        used, remap = np.unique(t, return_inverse=True)
        return TriangleMesh(v[used], remap.reshape(-1, 3))

    def transformed(self, scale=1.0, offset=(0.0, 0.0, 0.0)) -> "TriangleMesh":
        return TriangleMesh(self.vertices * np.asarray(scale, dtype=float) + np.asarray(offset), self.triangles)

    def scaled_to(self, extents) -> "TriangleMesh":
        """Anisotropically rescale so the bounding box has the given extents, centred at the origin."""
        lo, hi = self.bounds()
        s = np.asarray(extents, dtype=float) / (hi - lo)
        return TriangleMesh((self.vertices - 0.5 * (lo + hi)) * s, self.triangles)

    @cached_property
    def components(self) -> list[np.ndarray]:
        """Triangle index arrays of the edge/vertex-connected components."""
        m = self.n_triangles
        if m == 0:
            return []
        rows = np.repeat(np.arange(m), 3)
        graph = coo_matrix(
            (np.ones(3 * m), (rows, self.triangles.reshape(-1))), shape=(m, self.n_vertices)
        ).tocsr()
        tri_graph = graph @ graph.T
        n, labels = connected_components(tri_graph, directed=False)
        return [np.flatnonzero(labels == i) for i in range(n)]

    # ---------------------------------------------------------------- queries

    def _crossings(self, tri_idx: np.ndarray, px: np.ndarray, py: np.ndarray):
        """Upward-ray crossings of jittered (px, py) columns with a triangle subset.

        Yields ``(column_index, z)`` arrays for every triangle hit.
        """
        c = self.corners[tri_idx]
        x, y, z = c[..., 0], c[..., 1], c[..., 2]
        det = (y[:, 1] - y[:, 2]) * (x[:, 0] - x[:, 2]) + (x[:, 2] - x[:, 1]) * (y[:, 0] - y[:, 2])
        keep = np.abs(det) > 0.0  # vertical triangles are never crossed by a vertical ray
        x, y, z, det = x[keep], y[keep], z[keep], det[keep]
        qx = px + RAY_JITTER[0]
        qy = py + RAY_JITTER[1]
        cols, zs = [], []
        order = np.argsort(qx)
        sx = qx[order]
        for i in range(len(det)):
            lo = np.searchsorted(sx, x[i].min(), side="left")
            hi = np.searchsorted(sx, x[i].max(), side="right")
            if lo == hi:
                continue
            cand = order[lo:hi]
            cy = qy[cand]
            cand = cand[(cy >= y[i].min()) & (cy <= y[i].max())]
            if cand.size == 0:
                continue
            dx = qx[cand] - x[i, 2]
            dy = qy[cand] - y[i, 2]
            l0 = ((y[i, 1] - y[i, 2]) * dx + (x[i, 2] - x[i, 1]) * dy) / det[i]
            l1 = ((y[i, 2] - y[i, 0]) * dx + (x[i, 0] - x[i, 2]) * dy) / det[i]
            l2 = 1.0 - l0 - l1
            hit = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
            if not hit.any():
                continue
            cols.append(cand[hit])
            zs.append(l0[hit] * z[i, 0] + l1[hit] * z[i, 1] + l2[hit] * z[i, 2])
        if not cols:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        return np.concatenate(cols), np.concatenate(zs)

    def contains(self, points) -> np.ndarray:
        """Ray-parity containment; overlapping closed components are united."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        for comp in self.components:
            cols, zs = self._crossings(comp, pts[:, 0], pts[:, 1])
            above = zs > pts[cols, 2]
            counts = np.bincount(cols[above], minlength=len(pts))
            inside |= counts % 2 == 1
        return inside

    def occupancy(self, xc: np.ndarray, yc: np.ndarray, zc: np.ndarray) -> np.ndarray:
        """Containment of all grid centres ``xc x yc x zc``; shape (nx, ny, nz).

        Equivalent to :meth:`contains` on the grid points, but casts one ray
        per (x, y) column.
        """
        nx, ny, nz = len(xc), len(yc), len(zc)
        px, py = (a.reshape(-1) for a in np.meshgrid(xc, yc, indexing="ij"))
        occ = np.zeros((nx * ny, nz), dtype=bool)
        for comp in self.components:
            cols, zs = self._crossings(comp, px, py)
            # a crossing at z toggles every centre strictly below it
            k0 = np.searchsorted(zc, zs, side="left")
            hist = np.zeros((nx * ny, nz + 1), dtype=np.int64)
            np.add.at(hist, (cols, k0), 1)
            above = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1][:, 1:]
            occ |= above % 2 == 1
        return occ.reshape(nx, ny, nz)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Area-weighted uniform surface samples.

        For meshes made of several overlapping closed parts, samples falling
        inside another part are rejected and redrawn.
        """
        if self.n_triangles == 0:
            raise ValueError("cannot sample an empty mesh")
        comps = self.components
        if len(comps) == 1:
            return self._sample_raw(n, rng)
        out = np.zeros((0, 3))
        while len(out) < n:
            pts, tri = self._sample_raw(max(2 * (n - len(out)), 16), rng, return_triangles=True)
            label = np.empty(self.n_triangles, dtype=np.int64)
            for i, comp in enumerate(comps):
                label[comp] = i
            ok = np.ones(len(pts), dtype=bool)
            for i, comp in enumerate(comps):
                others = label[tri] != i
                if not others.any():
                    continue
                cols, zs = self._crossings(comp, pts[others, 0], pts[others, 1])
                counts = np.bincount(cols[zs > pts[others][cols, 2]], minlength=int(others.sum()))
                idx = np.flatnonzero(others)
                ok[idx[counts % 2 == 1]] = False
            out = np.vstack([out, pts[ok]])
        return out[:n]

    def _sample_raw(self, n, rng, return_triangles=False):
        areas = self.areas
        tri = rng.choice(self.n_triangles, size=n, p=areas / areas.sum())
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        c = self.corners[tri]
        pts = (1 - r1)[:, None] * c[:, 0] + (r1 * (1 - r2))[:, None] * c[:, 1] + (r1 * r2)[:, None] * c[:, 2]
        return (pts, tri) if return_triangles else pts


# ------------------------------------------------------------------ file I/O


def _parse_obj(lines) -> TriangleMesh:
    verts, tris = [], []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                if len(rest) < 3:
                    raise ValueError("vertex needs 3 coordinates")
                verts.append([float(c) for c in rest[:3]])
            elif tag == "f":
                if len(rest) < 3:
                    raise ValueError("face needs at least 3 vertices")
                idx = []
                for token in rest:
                    i = int(token.split("/")[0])
                    if i == 0:
                        raise ValueError("OBJ indices are 1-based")
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
        except ValueError as exc:
            raise MeshFormatError(f"line {lineno}: {exc}: {raw.strip()!r}") from None
    return _build(verts, tris)


def _parse_ply(lines) -> TriangleMesh:
    it = iter(enumerate(lines, 1))
    first = next(it, (1, ""))[1].strip()
    if first != "ply":
        raise MeshFormatError("line 1: missing 'ply' magic")
    elements, current = [], None
    for lineno, raw in it:
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise MeshFormatError(f"line {lineno}: only ASCII PLY is supported, got {tokens[1]}")
        elif tokens[0] == "element":
            current = [tokens[1], int(tokens[2]), []]
            elements.append(current)
        elif tokens[0] == "property":
            if current is None:
                raise MeshFormatError(f"line {lineno}: property before element")
            current[2].append(tokens[-1])
        elif tokens[0] == "end_header":
            break
        else:
            raise MeshFormatError(f"line {lineno}: unexpected header line {raw.strip()!r}")
    verts, tris = [], []
    for name, count, props in elements:
        for _ in range(count):
            try:
                lineno, raw = next(it)
            except StopIteration:
                raise MeshFormatError(f"unexpected end of file in element {name!r}") from None
            tokens = raw.split()
            try:
                if name == "vertex":
                    xyz = [tokens[props.index(k)] for k in ("x", "y", "z")]
                    verts.append([float(c) for c in xyz])
                elif name == "face":
                    n = int(tokens[0])
                    idx = [int(t) for t in tokens[1:n + 1]]
                    if len(idx) != n or n < 3:
                        raise ValueError("bad face record")
                    for k in range(1, n - 1):
                        tris.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise MeshFormatError(f"line {lineno}: {exc}: {raw.strip()!r}") from None
    return _build(verts, tris)


def _build(verts, tris) -> TriangleMesh:
    try:
        mesh = TriangleMesh(np.array(verts, dtype=float).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3))
    except ValueError as exc:
        raise MeshFormatError(str(exc)) from None
    return mesh.cleaned()


def load_mesh(path) -> TriangleMesh:
    """Read an OBJ or ASCII PLY file, merging duplicate vertices and dropping degenerate faces."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".obj", ".ply"):
        raise MeshFormatError(f"unsupported mesh format {suffix!r} ({path})")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    try:
        return _parse_obj(lines) if suffix == ".obj" else _parse_ply(lines)
    except MeshFormatError as exc:
        raise MeshFormatError(f"{path}: {exc}") from None


def save_obj(mesh: TriangleMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for t in mesh.triangles + 1:
            fh.write(f"f {t[0]} {t[1]} {t[2]}\n")


# ---------------------------------------------------------- mesh builders


def revolution_mesh(z: np.ndarray, r: np.ndarray, n_around: int = 48) -> TriangleMesh:
    """Closed surface of revolution about the z axis from a profile (z_i, r_i).

    The profile should start and end with r = 0 (the poles).
    """
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    ang = 2 * math.pi * np.arange(n_around) / n_around
    verts = [[0.0, 0.0, z[0]]]
    rings = []
    for zi, ri in zip(z[1:-1], r[1:-1]):
        rings.append(len(verts))
        verts.extend(np.column_stack([ri * np.cos(ang), ri * np.sin(ang), np.full(n_around, zi)]).tolist())
    verts.append([0.0, 0.0, z[-1]])
    mesh = TriangleMesh(np.array(verts), _ring_triangles(rings, n_around, 0, len(verts) - 1))
    if mesh.volume() < 0:
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1])
    return mesh


def tube_mesh(centerline: np.ndarray, radii: np.ndarray, n_around: int = 24) -> TriangleMesh:
    """Closed tube swept along a centreline lying in the xz plane, capped at both ends."""
    c = np.asarray(centerline, dtype=float)
    tangent = np.gradient(c, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    n1 = np.tile([0.0, 1.0, 0.0], (len(c), 1))
    n2 = np.cross(tangent, n1)
    n2 /= np.linalg.norm(n2, axis=1, keepdims=True)
    ang = 2 * math.pi * np.arange(n_around) / n_around
    verts = [c[0].tolist()]
    rings = []
    for i in range(len(c)):
        rings.append(len(verts))
        ring = c[i] + radii[i] * (np.cos(ang)[:, None] * n1[i] + np.sin(ang)[:, None] * n2[i])
        verts.extend(ring.tolist())
    verts.append(c[-1].tolist())
    mesh = TriangleMesh(np.array(verts), _ring_triangles(rings, n_around, 0, len(verts) - 1))
    if mesh.volume() < 0:
        mesh = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1])
    return mesh


def _ring_triangles(rings, n_around, first_pole, last_pole) -> np.ndarray:
    tris = []
    j = np.arange(n_around)
    jn = (j + 1) % n_around
    a = rings[0]
    tris.extend(np.column_stack([np.full(n_around, first_pole), a + jn, a + j]).tolist())
    for a, b in zip(rings[:-1], rings[1:]):
        tris.extend(np.column_stack([a + j, a + jn, b + jn]).tolist())
        tris.extend(np.column_stack([a + j, b + jn, b + j]).tolist())
    b = rings[-1]
    tris.extend(np.column_stack([np.full(n_around, last_pole), b + j, b + jn]).tolist())
    return np.array(tris, dtype=np.int64)

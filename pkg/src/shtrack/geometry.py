"""Star-convex shapes, ground-truth primitives, tessellation and voxel IoU."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import TriangleMesh, _ring_triangles
from .sh import TWO_PI, Rotation3, ShCoefficients, SphericalDirection, _unit_to_directions, eval_series

__all__ = [
    "cartesian_to_spherical",
    "spherical_to_cartesian",
    "to_spherical",
    "unit_vectors",
    "cuboid_radial",
    "StarConvexShape",
    "SphereShape",
    "CuboidShape",
    "MeshShape",
    "ShShape",
    "contains",
    "sample_surface",
    "tessellate",
    "VoxelGrid",
    "iou",
]


def to_spherical(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``(r, theta, phi)`` of points; zero vectors map to (0, 0, 0)."""
    p = np.asarray(points, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    safe = np.where(r > 0, r, 1.0)
    theta = np.where(r > 0, np.arccos(np.clip(p[..., 2] / safe, -1.0, 1.0)), 0.0)
    rho = np.hypot(p[..., 0], p[..., 1])
    # phi is arbitrary on the polar axis; pin it to zero there
    phi = np.where(rho > 0, np.mod(np.arctan2(p[..., 1], p[..., 0]), TWO_PI), 0.0)
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    return r, theta, phi


def unit_vectors(theta, phi) -> np.ndarray:
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def cartesian_to_spherical(v) -> tuple[float, SphericalDirection]:
    r, theta, phi = to_spherical(np.asarray(v, dtype=float).reshape(3))
    return float(r), SphericalDirection(float(theta), float(phi))


def spherical_to_cartesian(r, theta, phi) -> np.ndarray:
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be non-negative")
    return np.asarray(r, dtype=float)[..., None] * unit_vectors(theta, phi)


def cuboid_radial(half_extents, theta, phi):
    """Distance from the centre of an axis-aligned box to its surface along (theta, phi)."""
    h = np.asarray(half_extents, dtype=float)
    if np.any(h <= 0):
        raise ValueError("half extents must be positive")
    u = np.abs(unit_vectors(theta, phi))
    with np.errstate(divide="ignore", over="ignore"):
        ratios = np.where(u > 0, h / np.where(u > 0, u, 1.0), np.inf)
    out = ratios.min(axis=-1)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- shapes


class StarConvexShape:
    """Base class: a solid with a star point.

    Subclasses implement ``contains`` (vectorized over points), ``bounds``
    and ``sample_surface``.
    """

    star_point: np.ndarray

    def contains(self, points) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def occupancy(self, grid: "VoxelGrid") -> np.ndarray:
        return self.contains(grid.centers().reshape(-1, 3)).reshape(grid.resolution)


@dataclass(frozen=True, eq=False)
class SphereShape(StarConvexShape):
    radius: float
    star_point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        object.__setattr__(self, "star_point", np.asarray(self.star_point, dtype=float))

    def contains(self, points):
        d = np.atleast_2d(np.asarray(points, dtype=float)) - self.star_point
        return np.linalg.norm(d, axis=1) <= self.radius

    def bounds(self):
        return self.star_point - self.radius, self.star_point + self.radius

    def sample_surface(self, n, rng):
        g = rng.standard_normal((n, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return self.star_point + self.radius * g

    def radial(self, theta, phi):
        return np.full(np.broadcast_shapes(np.shape(theta), np.shape(phi)), float(self.radius))


@dataclass(frozen=True, eq=False)
class CuboidShape(StarConvexShape):
    """A box with centre ``star_point``, ``half_extents`` and orientation ``rotation``."""

    half_extents: np.ndarray
    star_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: Rotation3 = field(default_factory=Rotation3.identity)

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=float)
        if h.shape != (3,) or np.any(h <= 0):
            raise ValueError("need three positive half extents")
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "star_point", np.asarray(self.star_point, dtype=float))

    def to_local(self, points) -> np.ndarray:
        return (np.atleast_2d(np.asarray(points, dtype=float)) - self.star_point) @ self.rotation.matrix

    def contains(self, points):
        return np.all(np.abs(self.to_local(points)) <= self.half_extents, axis=1)

    def bounds(self):
        corners = np.array(np.meshgrid([-1, 1], [-1, 1], [-1, 1])).reshape(3, -1).T * self.half_extents
        world = self.rotation.apply(corners) + self.star_point
        return world.min(axis=0), world.max(axis=0)

    def face_areas(self) -> np.ndarray:
        hx, hy, hz = 2 * self.half_extents
        return np.array([hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy])

    def sample_surface(self, n, rng):
        a = self.face_areas()
        face = rng.choice(6, size=n, p=a / a.sum())
        local = rng.uniform(-1.0, 1.0, (n, 3)) * self.half_extents
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        local[np.arange(n), axis] = sign * self.half_extents[axis]
        return self.rotation.apply(local) + self.star_point

    def radial(self, theta, phi):
        """Radial function in world-frame directions about the box centre."""
        u = self.rotation.inverse().apply(unit_vectors(theta, phi))
        t, p = _unit_to_directions(u)
        return cuboid_radial(self.half_extents, t, p)


@dataclass(frozen=True, eq=False)
class MeshShape(StarConvexShape):
    """A closed triangle mesh; containment is tested against the mesh itself."""

    mesh: TriangleMesh
    star_point: np.ndarray = None

    def __post_init__(self):
        if self.star_point is None:
            lo, hi = self.mesh.bounds()
            object.__setattr__(self, "star_point", 0.5 * (lo + hi))
        object.__setattr__(self, "star_point", np.asarray(self.star_point, dtype=float))

    def contains(self, points):
        return self.mesh.contains(points)

    def occupancy(self, grid):
        return self.mesh.occupancy(*grid.axes())

    def bounds(self):
        return self.mesh.bounds()

    def sample_surface(self, n, rng):
        return self.mesh.sample_surface(n, rng)


@dataclass(frozen=True, eq=False)
class ShShape(StarConvexShape):
    """Solid bounded by a spherical-harmonics radial function; negative radii clamp to 0."""

    coeffs: ShCoefficients
    star_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    chunk: int = 1 << 16

    def __post_init__(self):
        object.__setattr__(self, "star_point", np.asarray(self.star_point, dtype=float))

    def radial(self, theta, phi):
        return np.maximum(eval_series(self.coeffs, theta, phi), 0.0)

    def contains(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts), dtype=bool)
        for s in range(0, len(pts), self.chunk):
            r, theta, phi = to_spherical(pts[s:s + self.chunk] - self.star_point)
            out[s:s + self.chunk] = r <= self.radial(theta, phi)
        return out

    def bounds(self, n_theta: int = 48, n_phi: int = 96, pad: float = 0.03):
        """Bounding box from a dense tessellation, padded by ``pad`` times the max radius."""
        v = tessellate(self.coeffs, self.star_point, n_theta, n_phi).vertices
        rmax = float(np.linalg.norm(v - self.star_point, axis=1).max())
        return v.min(axis=0) - pad * rmax, v.max(axis=0) + pad * rmax

    def sample_surface(self, n, rng, n_theta: int = 64, n_phi: int = 128):
        return tessellate(self.coeffs, self.star_point, n_theta, n_phi).sample_surface(n, rng)


def contains(shape: StarConvexShape, point) -> bool | np.ndarray:
    """Containment of one point (returns bool) or an (N, 3) batch."""
    res = shape.contains(point)
    return bool(res[0]) if np.ndim(point) == 1 else res


def sample_surface(shape: StarConvexShape, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    return shape.sample_surface(n, rng)


def tessellate(coeffs: ShCoefficients, star_point, n_theta: int, n_phi: int) -> TriangleMesh:
    """Closed triangulation of an SH surface.

    ``n_theta`` latitude bands (``n_theta - 1`` interior rings) and ``n_phi``
    vertices per ring, plus the two poles.
    """
    if n_theta < 2 or n_phi < 3:
        raise ValueError("need n_theta >= 2 and n_phi >= 3")
    star = np.asarray(star_point, dtype=float)
    theta = math.pi * np.arange(n_theta + 1) / n_theta
    phi = TWO_PI * np.arange(n_phi) / n_phi
    tt, pp = np.meshgrid(theta[1:-1], phi, indexing="ij")
    t_all = np.concatenate([[0.0], tt.reshape(-1), [math.pi]])
    p_all = np.concatenate([[0.0], pp.reshape(-1), [0.0]])
    r = np.maximum(eval_series(coeffs, t_all, p_all), 0.0)
    verts = star + r[:, None] * unit_vectors(t_all, p_all)
    rings = [1 + i * n_phi for i in range(n_theta - 1)]
    tris = _ring_triangles(rings, n_phi, 0, len(verts) - 1)
    # outward orientation for a positive radial function
    mesh = TriangleMesh(verts, tris)
    if _orientation(tris, unit_vectors(t_all, p_all)) < 0:
        mesh = TriangleMesh(verts, tris[:, ::-1])
    return mesh


def _orientation(tris, unit):
    c = unit[tris]
    return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum())


# ------------------------------------------------------------------- IoU


@dataclass(frozen=True)
class VoxelGrid:
    """Axis-aligned box ``[lo, hi]`` split into ``resolution`` cells per axis."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    resolution: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        res = tuple(int(v) for v in np.broadcast_to(self.resolution, 3))
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("voxel grid box is degenerate")
        if any(n < 1 for n in res):
            raise ValueError("resolution must be >= 1 per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "resolution", res)

    @classmethod
    def covering(cls, *shapes: StarConvexShape, resolution: int = 128, padding: float = 0.02) -> "VoxelGrid":
        """Grid over the union of bounding boxes with near-cubic cells.

        ``resolution`` cells span the longest side; ``padding`` is relative
        to that side.
        """
        boxes = [s.bounds() for s in shapes]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        span = float((hi - lo).max())
        lo = lo - padding * span
        hi = hi + padding * span
        cell = (span * (1 + 2 * padding)) / resolution
        res = np.maximum(np.ceil((hi - lo) / cell - 1e-9).astype(int), 1)
        return cls(tuple(lo), tuple(hi), tuple(res))

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            l + (np.arange(n) + 0.5) * (h - l) / n for l, h, n in zip(self.lo, self.hi, self.resolution)
        )

    def centers(self) -> np.ndarray:
        xc, yc, zc = self.axes()
        return np.stack(np.meshgrid(xc, yc, zc, indexing="ij"), axis=-1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod((np.array(self.hi) - np.array(self.lo)) / np.array(self.resolution)))

    def covers(self, shape: StarConvexShape, tol: float = 1e-9) -> bool:
        lo, hi = shape.bounds()
        return bool(np.all(lo >= np.array(self.lo) - tol) and np.all(hi <= np.array(self.hi) + tol))


def iou(a: StarConvexShape, b: StarConvexShape, grid: VoxelGrid | None = None, resolution: int = 128) -> float:
    """Jaccard index of two solids from voxel-centre containment."""
    if grid is None:
        grid = VoxelGrid.covering(a, b, resolution=resolution)
    elif not (grid.covers(a) and grid.covers(b)):
        raise ValueError("voxel grid does not cover both shapes")
    occ_a = a.occupancy(grid)
    occ_b = b.occupancy(grid)
    union = int(np.count_nonzero(occ_a | occ_b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(occ_a & occ_b)) / union

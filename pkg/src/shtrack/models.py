"""Built-in ground-truth meshes."""
from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh, revolution_mesh, tube_mesh

TEAPOT_EXTENTS = (3.5, 2.2, 1.8)


def _merge(*meshes: TriangleMesh) -> TriangleMesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.n_vertices
    return TriangleMesh(np.vstack(verts), np.vstack(tris))


def teapot_like_mesh(extents=TEAPOT_EXTENTS, n_around: int = 48) -> TriangleMesh:
    """A teapot-shaped solid: body, lid with knob, spout and handle as overlapping closed parts.

    Proportions follow the classic teapot (body radius 2, height 3.15, spout
    tip near x = 3.4, handle reaching x = -3); spout along +x, handle along
    -x, z up.  The result is centred on its bounding box and scaled to
    ``extents``.
    """
    body = revolution_mesh(
        z=[0.0, 0.0, 0.15, 0.45, 0.9, 1.35, 1.875, 2.25, 2.4, 2.4],
        r=[0.0, 1.45, 1.5, 1.8, 2.0, 2.0, 1.75, 1.5, 1.4, 0.0],
        n_around=n_around,
    )
    lid = revolution_mesh(
        z=[2.35, 2.35, 2.45, 2.55, 2.7, 2.85, 3.0, 3.15],
        r=[0.0, 1.3, 0.8, 0.25, 0.2, 0.4, 0.35, 0.0],
        n_around=n_around,
    )
    s = np.linspace(0.0, 1.0, 24)[:, None]
    p0, p1, p2 = np.array([1.4, 0.0, 0.85]), np.array([2.6, 0.0, 0.9]), np.array([3.35, 0.0, 2.3])
    spout = tube_mesh((1 - s) ** 2 * p0 + 2 * s * (1 - s) * p1 + s**2 * p2, 0.55 - 0.37 * s[:, 0], n_around=n_around // 2)
    ang = np.radians(np.linspace(55.0, 305.0, 32))
    handle = tube_mesh(
        np.column_stack([-1.9 + 0.95 * np.cos(ang), np.zeros_like(ang), 1.3 + 0.7 * np.sin(ang)]),
        np.full(ang.size, 0.17),
        n_around=n_around // 3,
    )
    return _merge(body, lid, spout, handle).cleaned().scaled_to(extents)

"""Uniform periodic triangulation of the torus."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..spectral import TorusGeometry

__all__ = ["PeriodicMesh", "build_periodic_mesh"]

# Edge kinds attached to the lower-left corner (i, j) of a square.
HORIZONTAL, VERTICAL, DIAGONAL = 0, 1, 2


@dataclass(frozen=True, eq=False)
class PeriodicMesh:
    """m x m squares, each cut along its rising diagonal into two triangles.

    Attributes
    ----------
    triangles : int array (2 m^2, 3)
        Global vertex classes (periodically identified) of each triangle.
    edges : int array (2 m^2, 3)
        Global edge id opposite each local vertex.
    coords : float array (2 m^2, 3, 2)
        Unwrapped vertex coordinates, so every triangle is a genuine planar
        triangle even when it straddles the periodic seam.
    vertex_coords : float array (m^2, 2)
        Representative coordinates in [0, L)^2.
    """

    geometry: TorusGeometry
    m: int
    triangles: np.ndarray
    edges: np.ndarray
    coords: np.ndarray
    vertex_coords: np.ndarray
    edge_midpoints: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.m * self.m

    @property
    def n_edges(self) -> int:
        return 3 * self.m * self.m

    @property
    def n_triangles(self) -> int:
        return 2 * self.m * self.m

    @property
    def h(self) -> float:
        """Largest triangle diameter (the diagonal of a square)."""
        return math.sqrt(2.0) * self.geometry.L / self.m

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_triangles

    def areas(self) -> np.ndarray:
        d1 = self.coords[:, 1] - self.coords[:, 0]
        d2 = self.coords[:, 2] - self.coords[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.coords.mean(axis=1)


def build_periodic_mesh(geometry: TorusGeometry, m: int) -> PeriodicMesh:
    """Triangulate [0, L]^2 with 2 m^2 congruent right triangles."""
    if int(m) != m or m < 2:
        raise ValueError(f"mesh subdivision must be an integer >= 2, got {m}")
    m = int(m)
    s = geometry.L / m
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    i, j = i.ravel(), j.ravel()

    def vid(a, b):
        return (a % m) * m + (b % m)

    def eid(a, b, kind):
        return 3 * vid(a, b) + kind

    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    # Lower triangle (00, 10, 11) and upper triangle (00, 11, 01).
    tri_a = np.stack([v00, v10, v11], axis=1)
    tri_b = np.stack([v00, v11, v01], axis=1)
    edg_a = np.stack([eid(i + 1, j, VERTICAL), eid(i, j, DIAGONAL), eid(i, j, HORIZONTAL)], axis=1)
    edg_b = np.stack([eid(i, j + 1, HORIZONTAL), eid(i, j, VERTICAL), eid(i, j, DIAGONAL)], axis=1)

    x0 = np.stack([i * s, j * s], axis=1)
    ex, ey = np.array([s, 0.0]), np.array([0.0, s])
    crd_a = np.stack([x0, x0 + ex, x0 + ex + ey], axis=1)
    crd_b = np.stack([x0, x0 + ex + ey, x0 + ey], axis=1)

    # Interleave so that the two triangles of a square are adjacent.
    T = 2 * m * m
    triangles = np.empty((T, 3), int)
    edges = np.empty((T, 3), int)
    coords = np.empty((T, 3, 2))
    triangles[0::2], triangles[1::2] = tri_a, tri_b
    edges[0::2], edges[1::2] = edg_a, edg_b
    coords[0::2], coords[1::2] = crd_a, crd_b

    vcoords = np.stack([i * s, j * s], axis=1)
    mid = np.empty((3 * m * m, 2))
    mid[0::3] = vcoords + 0.5 * ex
    mid[1::3] = vcoords + 0.5 * ey
    mid[2::3] = vcoords + 0.5 * (ex + ey)
    for arr in (triangles, edges, coords, vcoords, mid):
        arr.flags.writeable = False
    return PeriodicMesh(geometry, m, triangles, edges, coords, vcoords, mid)

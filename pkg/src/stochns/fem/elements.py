"""
Inf-sup stable velocity/pressure pairs on a periodic mesh.

Two pairs are provided, both with continuous piecewise-linear pressure:

* ``"taylor-hood"``: continuous piecewise-quadratic velocity (P2/P1).
* ``"mini"``: continuous piecewise-linear velocity enriched by one cubic
  bubble per triangle (P1+bubble/P1).

Velocity coefficient vectors are component-blocked: ``U[:n]`` holds the
first component at every scalar dof, ``U[n:]`` the second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import PeriodicMesh
from .quadrature import triangle_rule

__all__ = ["FemSpacePair", "FemState", "ELEMENTS"]

# d(lambda_i)/d(xi) on the reference triangle, lambda = (1 - x - y, x, y).
_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _barycentric(ref_pts: np.ndarray) -> np.ndarray:
    x, y = ref_pts[:, 0], ref_pts[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


def _p1(lam):
    vals = lam.copy()
    dl = np.broadcast_to(np.eye(3), (len(lam), 3, 3)).copy()
    return vals, dl


def _p2(lam):
    l0, l1, l2 = lam.T
    vals = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l1 * l2, 4 * l0 * l2, 4 * l0 * l1], axis=1)
    z = np.zeros_like(l0)
    dl = np.stack([
        np.stack([4 * l0 - 1, z, z], axis=1),
        np.stack([z, 4 * l1 - 1, z], axis=1),
        np.stack([z, z, 4 * l2 - 1], axis=1),
        np.stack([z, 4 * l2, 4 * l1], axis=1),
        np.stack([4 * l2, z, 4 * l0], axis=1),
        np.stack([4 * l1, 4 * l0, z], axis=1),
    ], axis=1)
    return vals, dl


def _p1_bubble(lam):
    l0, l1, l2 = lam.T
    v1, d1 = _p1(lam)
    b = 27 * l0 * l1 * l2
    db = 27 * np.stack([l1 * l2, l0 * l2, l0 * l1], axis=1)
    return np.concatenate([v1, b[:, None]], axis=1), np.concatenate([d1, db[:, None, :]], axis=1)


# name -> (local basis, velocity quadrature degree)
ELEMENTS = {
    "taylor-hood": (_p2, 5),
    "mini": (_p1_bubble, 8),
}


@dataclass
class _QuadData:
    points: np.ndarray        # (T, nq, 2) physical points
    weights: np.ndarray       # (T, nq) physical weights
    phi: np.ndarray           # (nq, nloc) velocity basis values
    dphi: np.ndarray          # (T, nq, nloc, 2) physical gradients
    psi: np.ndarray           # (nq, 3) pressure basis values


@dataclass(frozen=True, eq=False)
class FemSpacePair:
    """Mean-zero velocity space H_h and pressure space L_h on ``mesh``.

    Parameters
    ----------
    mesh : PeriodicMesh
    element : {"taylor-hood", "mini"}
    quad_degree : int, optional
        Degree of the assembly rule; defaults to the element's exact degree
        for the convection form (5 for Taylor-Hood, 8 for MINI).
    """

    mesh: PeriodicMesh
    element: str = "taylor-hood"
    quad_degree: int | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.element not in ELEMENTS:
            raise ValueError(f"unknown element {self.element!r}; choose from {sorted(ELEMENTS)}")
        if self.quad_degree is None:
            object.__setattr__(self, "quad_degree", ELEMENTS[self.element][1])
        mesh = self.mesh
        nv = mesh.n_vertices
        if self.element == "taylor-hood":
            dofs = np.concatenate([mesh.triangles, nv + mesh.edges], axis=1)
            n = nv + mesh.n_edges
        else:
            bub = nv + np.arange(mesh.n_triangles)[:, None]
            dofs = np.concatenate([mesh.triangles, bub], axis=1)
            n = nv + mesh.n_triangles
        dofs.flags.writeable = False
        object.__setattr__(self, "vel_dofs", dofs)
        object.__setattr__(self, "n_vel", n)
        # Inverse Jacobians of the affine maps, shared by every rule.
        c = mesh.coords
        J = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=2)  # columns are edge vectors
        object.__setattr__(self, "_jac", J)
        object.__setattr__(self, "_jinv", np.linalg.inv(J))
        object.__setattr__(self, "_det", np.linalg.det(J))

    # -- sizes ----------------------------------------------------------
    @property
    def geometry(self):
        return self.mesh.geometry

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def n_pres(self) -> int:
        return self.mesh.n_vertices

    @property
    def pres_dofs(self) -> np.ndarray:
        return self.mesh.triangles

    @property
    def n_local(self) -> int:
        return self.vel_dofs.shape[1]

    @property
    def velocity_size(self) -> int:
        return 2 * self.n_vel

    # -- basis evaluation --------------------------------------------------
    def basis(self, ref_pts: np.ndarray):
        """Velocity basis values (nq, nloc) and reference gradients (nq, nloc, 2)."""
        lam = _barycentric(ref_pts)
        vals, dl = ELEMENTS[self.element][0](lam)
        return vals, dl @ _DLAMBDA

    def quadrature(self, degree: int | None = None, subdivisions: int = 1) -> _QuadData:
        """Physical quadrature data for a rule of the given degree (cached)."""
        degree = self.quad_degree if degree is None else int(degree)
        key = ("quad", degree, subdivisions)
        if key not in self._cache:
            ref, w = triangle_rule(degree, subdivisions)
            phi, dref = self.basis(ref)
            pts = self.mesh.coords[:, :1, :] + np.einsum("tij,qj->tqi", self._jac, ref)
            weights = np.abs(self._det)[:, None] * w[None, :]
            dphi = np.einsum("qai,tij->tqaj", dref, self._jinv)
            psi = _barycentric(ref)
            self._cache[key] = _QuadData(pts, weights, phi, dphi, psi)
        return self._cache[key]

    def pressure_gradients(self) -> np.ndarray:
        """Constant physical gradients of the P1 pressure basis, shape (T, 3, 2)."""
        return np.einsum("ai,tij->taj", _DLAMBDA, self._jinv)

    # -- dof geometry ------------------------------------------------------
    def dof_coords(self) -> np.ndarray:
        """Nodal points of the Lagrange velocity dofs, shape (n_vel, 2).

        For MINI the bubble rows hold the triangle centroids.
        """
        mesh = self.mesh
        if self.element == "taylor-hood":
            return np.concatenate([mesh.vertex_coords, mesh.edge_midpoints])
        return np.concatenate([mesh.vertex_coords, mesh.centroids()])

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(points) -> (P, 2)`` as a velocity vector."""
        vals = np.asarray(func(self.dof_coords()), dtype=float)
        if self.element == "mini":
            nv = self.mesh.n_vertices
            corner = vals[self.mesh.triangles].mean(axis=1)
            vals = vals.copy()
            vals[nv:] -= corner
        return np.concatenate([vals[:, 0], vals[:, 1]])

    def evaluate(self, U: np.ndarray, degree: int | None = None, subdivisions: int = 1):
        """Values (T, nq, 2) and gradients (T, nq, 2, 2) of U at quadrature points."""
        q = self.quadrature(degree, subdivisions)
        n = self.n_vel
        comps = np.stack([U[:n], U[n:]])[:, self.vel_dofs]  # (2, T, nloc)
        vals = np.einsum("qa,cta->tqc", q.phi, comps)
        grads = np.einsum("tqad,cta->tqcd", q.dphi, comps)
        return vals, grads


@dataclass(eq=False)
class FemState:
    """Velocity coefficients U (length 2 n_vel) and pressure coefficients Pi (length n_pres)."""

    space: FemSpacePair
    U: np.ndarray
    Pi: np.ndarray | None = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        if self.U.shape != (self.space.velocity_size,):
            raise ValueError(f"velocity vector has shape {self.U.shape}, expected ({self.space.velocity_size},)")
        if self.Pi is None:
            self.Pi = np.zeros(self.space.n_pres)
        self.Pi = np.asarray(self.Pi, dtype=float)

    @classmethod
    def zeros(cls, space: FemSpacePair) -> "FemState":
        return cls(space, np.zeros(space.velocity_size), np.zeros(space.n_pres))

    def l2_norm(self) -> float:
        from .assembly import assemble_operators
        ops = assemble_operators(self.space)
        return float(np.sqrt(max(self.U @ (ops.Mv @ self.U), 0.0)))

    def grad_l2_norm(self) -> float:
        from .assembly import assemble_operators
        ops = assemble_operators(self.space)
        return float(np.sqrt(max(self.U @ (ops.Sv @ self.U), 0.0)))

"""Sparse assembly of the bilinear forms and load vectors on a FemSpacePair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..spectral import SpectralVelocity
from .elements import FemSpacePair, FemState

__all__ = [
    "AssembledOperators",
    "assemble_operators",
    "assemble_convection_btilde",
    "btilde",
    "spectral_load",
    "modal_loads",
    "evaluate_spectral_on_mesh",
    "cross_norms",
    "CROSS_NORM_DEGREE",
]

CROSS_NORM_DEGREE = 10


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, shape) -> sp.csr_matrix:
    """Sum local matrices (T, a, b) into a sparse matrix.

    COO -> CSR conversion sums duplicates in a fixed order, so the result is
    reproducible bit for bit.
    """
    T, a, b = local.shape
    r = np.broadcast_to(rows[:, :, None], (T, a, b)).ravel()
    c = np.broadcast_to(cols[:, None, :], (T, a, b)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    """Matrices of the linear forms on one space pair.

    M, S       scalar velocity mass and stiffness (n_vel x n_vel)
    Mv, Sv     the same, block-diagonal over the two components
    Mp, Sp     pressure mass and stiffness (n_pres x n_pres)
    B          divergence coupling, B[p, (c, i)] = (lambda_p, d_c phi_i)
    vel_mean   integrals of the scalar velocity basis functions
    pres_mean  integrals of the pressure basis functions
    """

    space: FemSpacePair
    M: sp.csr_matrix
    S: sp.csr_matrix
    Mv: sp.csr_matrix
    Sv: sp.csr_matrix
    Mp: sp.csr_matrix
    Sp: sp.csr_matrix
    B: sp.csr_matrix
    vel_mean: np.ndarray
    pres_mean: np.ndarray

    def divergence(self, U: np.ndarray) -> np.ndarray:
        """(div U, Lambda_p) for every pressure basis function."""
        return self.B @ U

    def velocity_mean_constraints(self) -> sp.csr_matrix:
        """2 x (2 n_vel) matrix whose rows integrate each velocity component."""
        n = self.space.n_vel
        z = np.zeros(n)
        return sp.csr_matrix(np.stack([np.concatenate([self.vel_mean, z]),
                                       np.concatenate([z, self.vel_mean])]))


def assemble_operators(space: FemSpacePair) -> AssembledOperators:
    """Mass, stiffness and divergence matrices (cached per space)."""
    if "ops" in space._cache:
        return space._cache["ops"]
    q = space.quadrature()
    n, npr = space.n_vel, space.n_pres
    W = q.weights
    Ml = np.einsum("tq,qa,qb->tab", W, q.phi, q.phi)
    Sl = np.einsum("tq,tqad,tqbd->tab", W, q.dphi, q.dphi)
    Mpl = np.einsum("tq,qa,qb->tab", W, q.psi, q.psi)
    gp = space.pressure_gradients()
    area = W.sum(axis=1)
    Spl = np.einsum("t,tad,tbd->tab", area, gp, gp)
    vd, pd = space.vel_dofs, space.pres_dofs
    M = _scatter(vd, vd, Ml, (n, n))
    S = _scatter(vd, vd, Sl, (n, n))
    Mp = _scatter(pd, pd, Mpl, (npr, npr))
    Sp = _scatter(pd, pd, Spl, (npr, npr))
    Bc = [_scatter(pd, vd, np.einsum("tq,qp,tqa->tpa", W, q.psi, q.dphi[..., c]), (npr, n)) for c in range(2)]
    B = sp.hstack(Bc).tocsr()
    Mv = sp.block_diag([M, M]).tocsr()
    Sv = sp.block_diag([S, S]).tocsr()
    vel_mean = np.zeros(n)
    np.add.at(vel_mean, vd.ravel(), np.einsum("tq,qa->ta", W, q.phi).ravel())
    pres_mean = np.zeros(npr)
    np.add.at(pres_mean, pd.ravel(), np.einsum("tq,qa->ta", W, q.psi).ravel())
    ops = AssembledOperators(space, M, S, Mv, Sv, Mp, Sp, B, vel_mean, pres_mean)
    space._cache["ops"] = ops
    return ops


def assemble_convection_btilde(space: FemSpacePair, w) -> sp.csr_matrix:
    """Matrix C(w) with Phi^T C(w) Psi = b~(w, Psi, Phi).

    b~(w, Psi, Phi) = ((w . grad) Psi, Phi) + 1/2 ((div w) Psi, Phi); the
    quadrature is exact for this integrand, so Phi^T C(w) Phi vanishes to
    round-off for every w.
    """
    W_vec = w.U if isinstance(w, FemState) else np.asarray(w, dtype=float)
    q = space.quadrature()
    vals, grads = space.evaluate(W_vec)
    divw = grads[..., 0, 0] + grads[..., 1, 1]
    adv = np.einsum("tqd,tqbd->tqb", vals, q.dphi)  # w . grad phi_b
    Cl = np.einsum("tq,qa,tqb->tab", q.weights, q.phi, adv)
    Cl += 0.5 * np.einsum("tq,tq,qa,qb->tab", q.weights, divw, q.phi, q.phi)
    n = space.n_vel
    C = _scatter(space.vel_dofs, space.vel_dofs, Cl, (n, n))
    return sp.block_diag([C, C]).tocsr()


def btilde(space: FemSpacePair, U1, U2, U3, degree: int | None = None) -> float:
    """Direct quadrature of b~(U1, U2, U3) from point values."""
    q = space.quadrature(degree)
    v1, g1 = space.evaluate(np.asarray(U1, float), degree)
    v2, g2 = space.evaluate(np.asarray(U2, float), degree)
    v3, _ = space.evaluate(np.asarray(U3, float), degree)
    conv = np.einsum("tqd,tqcd->tqc", v1, g2)
    div1 = g1[..., 0, 0] + g1[..., 1, 1]
    integrand = np.sum(conv * v3, axis=-1) + 0.5 * div1 * np.sum(v2 * v3, axis=-1)
    return float(np.sum(q.weights * integrand))


# ---------------------------------------------------------------------------
# Spectral fields on the mesh
# ---------------------------------------------------------------------------

def evaluate_spectral_on_mesh(z: SpectralVelocity, space: FemSpacePair,
                              degree: int = CROSS_NORM_DEGREE, subdivisions: int = 1,
                              gradient: bool = True):
    """Exact values (T, nq, 2) and gradients (T, nq, 2, 2) of z at quadrature points."""
    q = space.quadrature(degree, subdivisions)
    pts = q.points.reshape(-1, 2)
    T, nq = q.weights.shape
    vals = z.evaluate(pts).reshape(T, nq, 2)
    if not gradient:
        return vals, None
    grads = z.evaluate_gradient(pts).reshape(T, nq, 2, 2)
    return vals, grads


def spectral_load(z: SpectralVelocity, space: FemSpacePair,
                  degree: int = CROSS_NORM_DEGREE, subdivisions: int = 1) -> np.ndarray:
    """(z, phi_i) for every velocity basis function, component-blocked."""
    q = space.quadrature(degree, subdivisions)
    vals, _ = evaluate_spectral_on_mesh(z, space, degree, subdivisions, gradient=False)
    return _load_from_values(space, q, vals)


def _load_from_values(space, q, vals):
    n = space.n_vel
    out = np.zeros(2 * n)
    for c in range(2):
        loc = np.einsum("tq,qa,tq->ta", q.weights, q.phi, vals[..., c])
        acc = np.zeros(n)
        np.add.at(acc, space.vel_dofs.ravel(), loc.ravel())
        out[c * n:(c + 1) * n] = acc
    return out


def modal_loads(cov, space: FemSpacePair, degree: int = CROSS_NORM_DEGREE,
                subdivisions: int = 1) -> np.ndarray:
    """F[j] = (e_j, phi_i) for every noise mode, shape (J, 2 n_vel), cached."""
    key = ("modal", id(cov), degree, subdivisions)
    if key in space._cache and space._cache[key][0] is cov:
        return space._cache[key][1]
    q = space.quadrature(degree, subdivisions)
    T, nq = q.weights.shape
    E = cov.evaluate(q.points.reshape(-1, 2)).reshape(cov.J, T, nq, 2)
    F = np.stack([_load_from_values(space, q, E[j]) for j in range(cov.J)]) if cov.J else np.zeros((0, 2 * space.n_vel))
    F.flags.writeable = False
    space._cache[key] = (cov, F)
    return F


def cross_norms(z: SpectralVelocity | None, U, space: FemSpacePair,
                degree: int = CROSS_NORM_DEGREE, subdivisions: int = 1) -> tuple[float, float]:
    """(|z - U|^2, |grad(z - U)|^2) by quadrature; either argument may be None for zero."""
    q = space.quadrature(degree, subdivisions)
    T, nq = q.weights.shape
    dv = np.zeros((T, nq, 2))
    dg = np.zeros((T, nq, 2, 2))
    if z is not None:
        zv, zg = evaluate_spectral_on_mesh(z, space, degree, subdivisions)
        dv += zv
        dg += zg
    if U is not None:
        Uv = U.U if isinstance(U, FemState) else np.asarray(U, float)
        uv, ug = space.evaluate(Uv, degree, subdivisions)
        dv -= uv
        dg -= ug
    l2 = float(np.sum(q.weights * np.sum(dv * dv, axis=-1)))
    g2 = float(np.sum(q.weights * np.sum(dg * dg, axis=(-1, -2))))
    return l2, g2

"""Saddle-point solves, L^2 projections and the discrete inf-sup constant."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..spectral import SpectralVelocity
from .assembly import CROSS_NORM_DEGREE, assemble_operators, spectral_load
from .elements import FemSpacePair, FemState

__all__ = [
    "SolverError",
    "SaddleSolution",
    "solve_saddle_point",
    "project_Qh0",
    "project_Ph0",
    "check_inf_sup",
    "inf_sup_quotient",
]

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """A linear solve missed its residual target."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SaddleSolution:
    U: np.ndarray
    multiplier: np.ndarray  # Lagrange multiplier of the divergence constraint
    residual: float
    method: str

    def pressure(self, k: float) -> np.ndarray:
        """Pi = -multiplier / k for the system M U + ... - k (Pi, div Phi) = rhs."""
        if k == 0:
            return np.zeros_like(self.multiplier)
        return -self.multiplier / k


def _core_matrix(A: sp.spmatrix, space: FemSpacePair) -> sp.csc_matrix:
    """[[A, B'^T], [B', 0]] with B' = B minus its first row.

    The rows of B sum to zero (constants lie in the velocity space), so the
    dropped equation is implied by the others; dropping it pins the
    multiplier's free constant, which is restored to mean zero afterwards.
    """
    Bp = assemble_operators(space).B[1:]
    return sp.bmat([[A, Bp.T], [Bp, None]], format="csc")


def _core_solver(K: sp.csc_matrix, A, space: FemSpacePair, method: str, tol: float,
                 visc_scale: float, maxiter: int):
    if method == "direct":
        lu = spla.splu(K)

        def solve(b):
            x = lu.solve(b)
            r = b - K @ x
            if np.linalg.norm(r) > 1e-3 * tol * max(np.linalg.norm(b), 1e-300):
                x += lu.solve(r)  # one step of iterative refinement
            return x
        return solve
    if method == "gmres":
        P = _block_preconditioner(A, space, visc_scale)

        def solve(b):
            if not np.any(b):
                return np.zeros_like(b)
            x, info = spla.gmres(K, b, M=P, rtol=1e-3 * tol, atol=0.0, restart=200, maxiter=maxiter)
            if info < 0:
                raise SolverError(f"GMRES breakdown (info={info})")
            return x
        return solve
    raise ValueError(f"unknown method {method!r}")


def _block_preconditioner(A, space: FemSpacePair, k_visc: float):
    """Block-diagonal preconditioner: A^-1 on velocity, Cahouet-Chabard on pressure."""
    ops = assemble_operators(space)
    nu_ = 2 * space.n_vel
    Alu = spla.splu(sp.csc_matrix(A))
    Mp_diag = ops.Mp.diagonal()[1:]
    Splu = spla.splu(ops.Sp[1:, 1:].tocsc())

    def apply(x):
        y = np.empty_like(x)
        y[:nu_] = Alu.solve(x[:nu_])
        xp = x[nu_:]
        y[nu_:] = -(k_visc * xp / Mp_diag + Splu.solve(xp))
        return y

    n = nu_ + space.n_pres - 1
    return spla.LinearOperator((n, n), matvec=apply)


def solve_saddle_point(A: sp.spmatrix, space: FemSpacePair, rhs: np.ndarray,
                       rhs_div: np.ndarray | None = None, *, tol: float = DEFAULT_TOL,
                       method: str = "direct", visc_scale: float = 1.0,
                       maxiter: int = 500) -> SaddleSolution:
    """Solve A U + B^T lam + Cv^T mu = rhs, B U = rhs_div, Cv U = 0.

    Cv integrates each velocity component, so the solution is mean-zero and
    the equation holds against mean-zero test functions; lam is returned
    with zero mean.

    Parameters
    ----------
    A : sparse (2 n_vel, 2 n_vel)
        Velocity block, e.g. M + nu k S + k C(w).
    rhs : array (2 n_vel,)
    rhs_div : array (n_pres,), optional
        Defaults to zero (discretely divergence-free solution).
    method : {"direct", "gmres"}
        Sparse LU, or preconditioned GMRES against the same residual target.
    visc_scale : float
        nu * k, used by the iterative preconditioner only.

    Raises
    ------
    SolverError
        If the relative residual of the constrained system exceeds ``tol``.
    """
    ops = assemble_operators(space)
    A = sp.csr_matrix(A)
    nu_ = 2 * space.n_vel
    npr = space.n_pres
    rhs = np.asarray(rhs, dtype=float)
    rdiv = np.zeros(npr) if rhs_div is None else np.asarray(rhs_div, dtype=float)
    bnorm = math.sqrt(np.dot(rhs, rhs) + np.dot(rdiv, rdiv))
    if bnorm == 0.0:
        return SaddleSolution(np.zeros(nu_), np.zeros(npr), 0.0, method)
    Cv = ops.velocity_mean_constraints()
    K = _core_matrix(A, space)
    solve = _core_solver(K, A, space, method, tol, visc_scale, maxiter)
    # Mean constraints through a 2x2 capacitance system: x = x0 - X mu.
    x0 = solve(np.concatenate([rhs, rdiv[1:]]))
    CvT = Cv.T.toarray()
    X = np.stack([solve(np.concatenate([CvT[:, c], np.zeros(npr - 1)])) for c in range(2)], axis=1)
    cap = Cv @ X[:nu_]
    mu = np.linalg.solve(cap, Cv @ x0[:nu_])
    x = x0 - X @ mu
    U = x[:nu_]
    lam = np.concatenate([[0.0], x[nu_:]])
    lam -= (ops.pres_mean @ lam) / ops.pres_mean.sum()
    r1 = rhs - A @ U - ops.B.T @ lam - CvT @ mu
    r2 = rdiv - ops.B @ U
    r2 -= ops.pres_mean * (ops.pres_mean @ r2) / (ops.pres_mean @ ops.pres_mean)
    r3 = Cv @ U
    res = float(math.sqrt(r1 @ r1 + r2 @ r2 + r3 @ r3) / bnorm)
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"saddle-point residual {res:.3e} exceeds tolerance {tol:.1e}", res)
    return SaddleSolution(U, lam, res, method)


def project_Qh0(z, space: FemSpacePair, *, tol: float = DEFAULT_TOL,
                degree: int = CROSS_NORM_DEGREE, subdivisions: int = 1) -> FemState:
    """L^2 projection onto the discretely divergence-free subspace V_h.

    ``z`` is a SpectralVelocity (load integrated by quadrature) or a velocity
    coefficient vector already in H_h.
    """
    ops = assemble_operators(space)
    if isinstance(z, SpectralVelocity):
        rhs = spectral_load(z, space, degree, subdivisions)
    else:
        rhs = ops.Mv @ np.asarray(z, dtype=float)
    sol = solve_saddle_point(ops.Mv, space, rhs, tol=tol)
    return FemState(space, sol.U, np.zeros(space.n_pres))


def project_Ph0(z, space: FemSpacePair, degree: int = CROSS_NORM_DEGREE) -> np.ndarray:
    """L^2 projection of a scalar ``z(points) -> (P,)`` onto mean-zero L_h."""
    ops = assemble_operators(space)
    q = space.quadrature(degree)
    T, nq = q.weights.shape
    vals = np.asarray(z(q.points.reshape(-1, 2)), dtype=float).reshape(T, nq)
    loc = np.einsum("tq,qa,tq->ta", q.weights, q.psi, vals)
    rhs = np.zeros(space.n_pres)
    np.add.at(rhs, space.pres_dofs.ravel(), loc.ravel())
    mp = ops.pres_mean
    K = sp.bmat([[ops.Mp, sp.csr_matrix(mp[:, None])], [sp.csr_matrix(mp[None, :]), None]], format="csc")
    x = spla.spsolve(K, np.concatenate([rhs, [0.0]]))
    return x[:-1]


def _mean_free_basis(weights: np.ndarray) -> np.ndarray:
    """Orthonormal basis of {x : weights . x = 0}."""
    Q, _ = np.linalg.qr(np.concatenate([weights[:, None], np.eye(len(weights))], axis=1))
    return Q[:, 1:len(weights)]


def _stiffness_solver(space: FemSpacePair):
    """Solve Sv x = f for f orthogonal to constants; returns the mean-zero solution."""
    ops = assemble_operators(space)
    n = space.n_vel
    keep = np.ones(2 * n, bool)
    keep[[0, n]] = False  # pin one dof per component
    lu = spla.splu(ops.Sv[keep][:, keep].tocsc())
    w = ops.vel_mean / ops.vel_mean.sum()

    def solve(F):
        F = np.asarray(F, dtype=float)
        F2 = F.reshape(2 * n, -1)
        x = np.zeros_like(F2)
        x[keep] = lu.solve(np.ascontiguousarray(F2[keep]))
        for c in range(2):
            blk = slice(c * n, (c + 1) * n)
            x[blk] -= w @ x[blk]
        return x.reshape(F.shape)

    return solve


def check_inf_sup(space: FemSpacePair) -> float:
    """Smallest mean-zero value of sup_Phi (div Phi, Pi) / (|grad Phi| |Pi|).

    This is sqrt of the least eigenvalue of B S^-1 B^T against the pressure
    mass matrix, restricted to mean-zero pressures; computed densely.
    """
    ops = assemble_operators(space)
    solve = _stiffness_solver(space)
    BT = ops.B.T.toarray()
    X = solve(BT)
    schur = ops.B @ X
    schur = 0.5 * (schur + schur.T)
    Z = _mean_free_basis(ops.pres_mean / np.linalg.norm(ops.pres_mean))
    Mp = ops.Mp.toarray()
    try:
        ev = sla.eigh(Z.T @ schur @ Z, Z.T @ Mp @ Z, eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"inf-sup eigensolve failed: {exc}") from exc
    lam = float(ev[0])
    if not lam > 0:
        raise SolverError(f"degenerate inf-sup spectrum (smallest eigenvalue {lam:.3e})")
    return math.sqrt(lam)


def inf_sup_quotient(space: FemSpacePair, pressure: np.ndarray) -> float:
    """sup over velocities of (div Phi, Pi) / |grad Phi| for one pressure, divided by |Pi|."""
    ops = assemble_operators(space)
    p = np.asarray(pressure, float)
    p = p - (ops.pres_mean @ p) / ops.pres_mean.sum()
    f = ops.B.T @ p
    x = _stiffness_solver(space)(f)
    return float(math.sqrt(max(f @ x, 0.0)) / math.sqrt(p @ (ops.Mp @ p)))

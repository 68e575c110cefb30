"""
Time and space-time discretizations driven by one Wiener path.

``"time"``
    Fully implicit Euler on the spectral space at cutoff K_ref: find u^l with
    (I + nu k A) u^l + k B(u^l, u^l) = u^{l-1} + P_H G(u^{l-1}) Delta_l W,
    solved by damped Picard iteration.
``"alg1"``
    Mixed finite elements with convection frozen in its transport slot:
    (U^l - U^{l-1}, Phi) + k nu (grad U^l, grad Phi) + k b~(U^{l-1}, U^l, Phi)
    - k (Pi^l, div Phi) = (G(U^{l-1}) Delta_l W, Phi) and (div U^l, Lambda) = 0.
    One saddle-point solve per step.
``"alg2"``
    The same linearly implicit step on the exactly divergence-free space of
    Fourier modes |m|_inf <= K_h, where b~ coincides with b.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .fem import (
    FemSpacePair,
    FemState,
    SolverError,
    assemble_convection_btilde,
    assemble_operators,
    build_periodic_mesh,
    cross_norms,
    modal_loads,
    project_Qh0,
    solve_saddle_point,
)
from .noise import DiffusionSpec, ModalField, WienerPath, apply_G, coarsen_path
from .spectral import (
    SpectralVelocity,
    TorusGeometry,
    _hermitian,
    _modes,
    leray_project,
    nonlinear_B,
    stokes_solve,
    v_norm_sq,
)

__all__ = [
    "SchemeParams",
    "PicardError",
    "SchemeError",
    "Trajectory",
    "ErrorSeries",
    "step_time_euler",
    "step_algorithm1",
    "step_algorithm2",
    "run_scheme",
    "compute_error_series",
    "SCHEMES",
]

SCHEMES = ("time", "alg1", "alg2")


class SchemeError(RuntimeError):
    """A step failed; ``step`` is the index l of the failing step when known."""

    def __init__(self, message: str, step: int | None = None, residual: float = math.nan):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.residual = residual


class PicardError(SchemeError):
    """The fixed-point iteration of the implicit step did not converge."""


@dataclass(frozen=True)
class SchemeParams:
    """Discretization parameters shared by the three schemes.

    Attributes
    ----------
    T, N, nu : horizon, number of steps, viscosity.
    K_ref : spectral cutoff of the time scheme.
    K_h : spectral cutoff of the divergence-free space-time scheme.
    m : mesh subdivision of the finite-element scheme.
    element : velocity/pressure pair of the finite-element scheme.
    """

    T: float = 1.0
    N: int = 16
    nu: float = 1.0
    K_ref: int = 16
    K_h: int = 8
    m: int = 8
    element: str = "taylor-hood"
    L: float = 2 * math.pi
    picard_tol: float = 1e-11
    picard_maxiter: int = 50
    solver_tol: float = 1e-10
    solver: str = "direct"

    def __post_init__(self):
        if not (self.T > 0 and self.nu > 0):
            raise ValueError("T and nu must be positive")
        if self.N < 1 or self.K_ref < 1 or self.K_h < 1 or self.m < 2:
            raise ValueError("N, K_ref, K_h >= 1 and m >= 2 required")

    @property
    def k(self) -> float:
        return self.T / self.N

    @property
    def geometry(self) -> TorusGeometry:
        return TorusGeometry(self.L)

    def h(self, kind: str = "alg1") -> float:
        """Mesh width: triangle diameter for finite elements, L / (2 K_h) for the spectral subspace.

        L / (2 K_h) is the grid spacing that resolves the highest retained mode.
        """
        if kind == "alg2":
            return self.L / (2 * self.K_h)
        return math.sqrt(2.0) * self.L / self.m

    def localization_admissible(self, M: float, C0: float) -> bool:
        """Whether k M <= C0, the step-size condition of the localized error bounds."""
        return self.k * M <= C0

    def with_(self, **kw) -> "SchemeParams":
        d = asdict(self)
        d.update(kw)
        return SchemeParams(**d)


# ---------------------------------------------------------------------------
# Steps
# ---------------------------------------------------------------------------

def _forcing(u_prev, increment, diffusion: DiffusionSpec | None) -> ModalField | SpectralVelocity:
    if isinstance(increment, (ModalField, SpectralVelocity)):
        return increment
    if diffusion is None:
        raise ValueError("a DiffusionSpec is needed to turn an increment into a forcing")
    return apply_G(diffusion, u_prev, increment)


def _spectral_forcing(forcing, K: int, geometry) -> SpectralVelocity:
    if isinstance(forcing, ModalField):
        f = forcing.to_spectral(K)
    else:
        f = forcing.resize(K)
    return leray_project(f)


def step_time_euler(u_prev: SpectralVelocity, increment, params: SchemeParams,
                    diffusion: DiffusionSpec | None = None, *, info: dict | None = None) -> SpectralVelocity:
    """One fully implicit Euler step by damped Picard iteration.

    ``increment`` is Delta_l W in the noise basis (with ``diffusion``), or a
    ready-made forcing G(u^{l-1}) Delta_l W as ModalField/SpectralVelocity.
    The iterate is u <- u + theta (Phi(u) - u) with
    Phi(u) = (I + nu k A)^-1 [u^{l-1} - k B(u, u) + P_H G Delta W];
    theta starts at 1 and halves whenever the residual grows.
    """
    k, nu = params.k, params.nu
    K = u_prev.K
    f = u_prev + _spectral_forcing(_forcing(u_prev, increment, diffusion), K, u_prev.geometry)
    f = f.with_coeffs(f.coeffs, divergence_free=True)
    scale = max(1.0, float(np.max(np.abs(f.coeffs))))

    def fixed_map(u):
        return stokes_solve(f - k * nonlinear_B(u), 1.0, nu * k)

    u = stokes_solve(f, 1.0, nu * k)
    theta, it = 1.0, 0
    cand = fixed_map(u)
    res = float(np.max(np.abs(cand.coeffs - u.coeffs))) / scale
    while res > params.picard_tol:
        if it >= params.picard_maxiter:
            raise PicardError(f"Picard iteration stalled at residual {res:.3e} after {it} iterations",
                              residual=res)
        trial = u + theta * (cand - u)
        trial = trial.with_coeffs(_hermitian(trial.coeffs), divergence_free=True)
        cand_t = fixed_map(trial)
        res_t = float(np.max(np.abs(cand_t.coeffs - trial.coeffs))) / scale
        it += 1
        if res_t > res and theta > 1.0 / 64:
            theta *= 0.5
            continue
        u, cand, res = trial, cand_t, res_t
    if info is not None:
        info.update(picard_iterations=it, picard_residual=res, damping=theta)
    return cand.with_coeffs(_hermitian(cand.coeffs), divergence_free=True)


def step_algorithm1(state_prev: FemState, increment, params: SchemeParams,
                    diffusion: DiffusionSpec | None = None, *, info: dict | None = None) -> FemState:
    """One linearly implicit mixed finite-element step (one saddle-point solve)."""
    space = state_prev.space
    ops = assemble_operators(space)
    k, nu = params.k, params.nu
    forcing = _forcing(state_prev, increment, diffusion)
    if not isinstance(forcing, ModalField):
        raise TypeError("the finite-element step needs the forcing in the noise basis")
    rhs = ops.Mv @ state_prev.U
    if forcing.amplitudes.size and np.any(forcing.amplitudes):
        rhs = rhs + forcing.amplitudes @ modal_loads(forcing.cov, space)
    A = ops.Mv + (nu * k) * ops.Sv
    if np.any(state_prev.U):
        A = A + k * assemble_convection_btilde(space, state_prev.U)
    try:
        sol = solve_saddle_point(A, space, rhs, tol=params.solver_tol, method=params.solver,
                                 visc_scale=nu * k)
    except SolverError as exc:
        raise SchemeError(str(exc), residual=exc.residual) from exc
    if info is not None:
        info.update(solver_residual=sol.residual,
                    divergence=float(np.max(np.abs(ops.B @ sol.U), initial=0.0)))
    return FemState(space, sol.U, sol.pressure(k))


def _alg2_operator(K: int, geometry: TorusGeometry):
    """Index data for the amplitude form of the divergence-free step at cutoff K."""
    m1, m2 = _modes(K)
    mask = (m1 != 0) | (m2 != 0)
    M = np.stack([m1[mask], m2[mask]], axis=1)
    norm = np.linalg.norm(M, axis=1)
    tau = np.stack([-M[:, 1], M[:, 0]], axis=1) / norm[:, None]
    diff = M[:, None, :] - M[None, :, :]
    valid = np.all(np.abs(diff) <= K, axis=2)
    di = np.where(valid, diff[..., 0] + K, 0)
    dj = np.where(valid, diff[..., 1] + K, 0)
    kq = geometry.k0 * M.astype(float)
    ksq = np.sum(kq * kq, axis=1)
    return dict(M=M, tau=tau, valid=valid, di=di, dj=dj, kq=kq, ksq=ksq,
                tt=tau @ tau.T, idx=(M[:, 0] + K, M[:, 1] + K))


_ALG2_CACHE: dict = {}


def step_algorithm2(u_prev: SpectralVelocity, increment, params: SchemeParams,
                    diffusion: DiffusionSpec | None = None, *, info: dict | None = None) -> SpectralVelocity:
    """One linearly implicit step on the divergence-free Fourier space |m|_inf <= K_h.

    Writing u_m = a_m tau_m with tau_m = m^perp / |m|, the step is the dense
    linear system
        (1 + nu k |k_m|^2) a_m + k sum_q (w_{m-q} . i k_q)(tau_m . tau_q) a_q = tau_m . f_m,
    with w = u^{l-1} and f = u^{l-1} + P_H G(u^{l-1}) Delta_l W.
    """
    K = u_prev.K
    key = (K, u_prev.geometry.L)
    if key not in _ALG2_CACHE:
        _ALG2_CACHE[key] = _alg2_operator(K, u_prev.geometry)
    d = _ALG2_CACHE[key]
    k, nu = params.k, params.nu
    f = u_prev + _spectral_forcing(_forcing(u_prev, increment, diffusion), K, u_prev.geometry)
    fm = f.coeffs[:, d["idx"][0], d["idx"][1]].T  # (n, 2)
    rhs = np.sum(d["tau"] * fm, axis=1)
    w = u_prev.coeffs
    wd = w[:, d["di"], d["dj"]] * d["valid"][None]  # (2, n, n): w_{m-q}
    adv = 1j * (wd[0] * d["kq"][None, :, 0] + wd[1] * d["kq"][None, :, 1])
    Amat = k * adv * d["tt"]
    Amat[np.diag_indices_from(Amat)] += 1.0 + nu * k * d["ksq"]
    try:
        a = np.linalg.solve(Amat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SchemeError(f"divergence-free step is singular: {exc}") from exc
    res = float(np.max(np.abs(Amat @ a - rhs), initial=0.0) / max(1.0, np.max(np.abs(rhs), initial=0.0)))
    if res > params.solver_tol:
        raise SchemeError(f"linear residual {res:.3e} exceeds {params.solver_tol:.1e}", residual=res)
    n = 2 * K + 1
    c = np.zeros((2, n, n), complex)
    c[:, d["idx"][0], d["idx"][1]] = (a[:, None] * d["tau"]).T
    if info is not None:
        info.update(solver_residual=res)
    return SpectralVelocity(u_prev.geometry, _hermitian(c), divergence_free=True)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    """States at t_0..t_N with per-step diagnostics."""

    kind: str
    params: SchemeParams
    states: list
    diagnostics: list = field(default_factory=list)
    space: FemSpacePair | None = None

    @property
    def N(self) -> int:
        return len(self.states) - 1

    @property
    def k(self) -> float:
        return self.params.T / self.N

    @property
    def spectral(self) -> bool:
        return self.kind in ("time", "alg2")

    def restrict(self, N: int) -> "Trajectory":
        """The states at the coarse times t_l = l T / N (N must divide self.N)."""
        if N < 1 or self.N % N:
            raise ValueError(f"N={N} does not divide {self.N}")
        f = self.N // N
        diags = [dict(d) for d in self.diagnostics[f - 1::f]] if self.diagnostics else []
        return Trajectory(self.kind, self.params.with_(N=N), self.states[::f], diags, self.space)

    def l2_sq(self) -> np.ndarray:
        if self.spectral:
            return np.array([s.l2_norm() ** 2 for s in self.states])
        ops = assemble_operators(self.space)
        return np.array([s.U @ (ops.Mv @ s.U) for s in self.states])

    def grad_sq(self) -> np.ndarray:
        if self.spectral:
            return np.array([v_norm_sq(s) - s.l2_norm() ** 2 for s in self.states])
        ops = assemble_operators(self.space)
        return np.array([s.U @ (ops.Sv @ s.U) for s in self.states])

    def v_norm_sq(self) -> np.ndarray:
        """||u^l||_V^2 = |u^l|^2 + |grad u^l|^2."""
        return self.l2_sq() + self.grad_sq()

    def stokes_sq(self) -> np.ndarray:
        if not self.spectral:
            raise ValueError("|A u|^2 is only defined for spectral trajectories")
        from .spectral import _stokes_sq
        return np.array([_stokes_sq(s) for s in self.states])

    def pressure_grad_sq(self) -> np.ndarray:
        """|grad Pi^l|^2 for l = 1..N (finite-element trajectories only)."""
        if self.kind != "alg1":
            raise ValueError("pressures are only available for finite-element trajectories")
        ops = assemble_operators(self.space)
        return np.array([s.Pi @ (ops.Sp @ s.Pi) for s in self.states[1:]])

    def to_array(self) -> np.ndarray:
        """(N+1, block) real array: Re/Im coefficients, or [U, Pi] per state."""
        if self.spectral:
            return np.stack([np.concatenate([s.coeffs.real.ravel(), s.coeffs.imag.ravel()]) for s in self.states])
        return np.stack([np.concatenate([s.U, s.Pi]) for s in self.states])


def _prepare_initial(initial, kind: str, params: SchemeParams, space):
    if kind == "time":
        if not isinstance(initial, SpectralVelocity):
            raise TypeError("the time scheme needs a spectral initial condition")
        return leray_project(initial.resize(params.K_ref))
    if kind == "alg2":
        if not isinstance(initial, SpectralVelocity):
            raise TypeError("the divergence-free scheme needs a spectral initial condition")
        return leray_project(initial.resize(params.K_h))
    if isinstance(initial, FemState):
        return initial
    if isinstance(initial, SpectralVelocity):
        return project_Qh0(initial, space, tol=params.solver_tol)
    raise TypeError("unsupported initial condition")


def make_space(params: SchemeParams) -> FemSpacePair:
    return FemSpacePair(build_periodic_mesh(params.geometry, params.m), params.element)


def run_scheme(initial, path: WienerPath, params: SchemeParams, scheme_kind: str,
               diffusion: DiffusionSpec, space: FemSpacePair | None = None) -> Trajectory:
    """Advance ``initial`` over the path coarsened to params.N steps.

    Raises
    ------
    SchemeError
        With the failing step index attached.
    """
    if scheme_kind not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme_kind!r}")
    if path.N % params.N:
        raise ValueError(f"path with {path.N} steps cannot be coarsened to N={params.N}")
    if abs(path.T - params.T) > 1e-12 * params.T:
        raise ValueError("path horizon differs from params.T")
    if path.J != diffusion.cov.J:
        raise ValueError("path and diffusion use different noise bases")
    coarse = coarsen_path(path, path.N // params.N)
    if scheme_kind == "alg1" and space is None:
        space = make_space(params)
    step = {"time": step_time_euler, "alg1": step_algorithm1, "alg2": step_algorithm2}[scheme_kind]
    state = _prepare_initial(initial, scheme_kind, params, space)
    states, diags = [state], []
    for l in range(1, params.N + 1):
        info: dict = {}
        try:
            state = step(state, coarse.increment(l), params, diffusion, info=info)
        except SchemeError as exc:
            cls = type(exc)
            raise cls(str(exc), step=l, residual=exc.residual) from exc
        states.append(state)
        diags.append(info)
    return Trajectory(scheme_kind, params, states, diags, space if scheme_kind == "alg1" else None)


# ---------------------------------------------------------------------------
# Error series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorSeries:
    """|E^l|^2 and |grad E^l|^2 for l = 0..N with E^l = u^l - U^l."""

    l2_sq: np.ndarray
    grad_sq: np.ndarray
    k: float

    @property
    def N(self) -> int:
        return len(self.l2_sq) - 1

    @property
    def max_l2_sq(self) -> float:
        return float(np.max(self.l2_sq))

    @property
    def grad_sum(self) -> float:
        """k sum_{l=1}^N |grad E^l|^2."""
        return float(self.k * np.sum(self.grad_sq[1:]))

    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.l2_sq)


def _pair_error(a, b, space) -> tuple[float, float]:
    if isinstance(a, SpectralVelocity) and isinstance(b, SpectralVelocity):
        d = a - b
        l2 = d.l2_norm() ** 2
        return l2, v_norm_sq(d) - l2
    if isinstance(a, SpectralVelocity) and isinstance(b, FemState):
        return cross_norms(a, b, space)
    if isinstance(a, FemState) and isinstance(b, FemState):
        return cross_norms(None, FemState(space, a.U - b.U), space)
    raise TypeError("unsupported pair of states")


def compute_error_series(time_traj: Trajectory, other: Trajectory) -> ErrorSeries:
    """Pointwise-in-time errors between two trajectories on the same path."""
    if time_traj.N != other.N:
        raise ValueError(f"trajectories have different N ({time_traj.N} vs {other.N})")
    space = other.space or time_traj.space
    l2 = np.empty(time_traj.N + 1)
    g2 = np.empty(time_traj.N + 1)
    for l, (a, b) in enumerate(zip(time_traj.states, other.states)):
        l2[l], g2[l] = _pair_error(a, b, space)
    return ErrorSeries(np.maximum(l2, 0.0), np.maximum(g2, 0.0), time_traj.k)

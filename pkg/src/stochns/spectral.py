"""
Fourier representation of mean-zero periodic vector fields on [0, L]^2.

A field is stored as a dense square block of complex coefficients

    u(x) = sum_{0 < |m|_inf <= K} u_m exp(2 pi i m.x / L)

with ``coeffs[c, m1 + K, m2 + K] = (u_m)_c``.  The m = 0 entry is always zero
(mean-zero fields) and the block is Hermitian, u_{-m} = conj(u_m), so the
represented field is real.

Products are evaluated pseudo-spectrally on a padded grid large enough that
every trigonometric polynomial involved is integrated exactly; this is what
keeps the antisymmetry identities of the convection term at round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TorusGeometry",
    "SpectralVelocity",
    "NormBundle",
    "ResolutionError",
    "DivergenceError",
    "leray_project",
    "stokes_apply",
    "compute_norms",
    "trilinear_b",
    "nonlinear_B",
    "inner",
    "random_field",
    "sine_shear",
    "poincare_ctilde",
    "ctilde_stokes",
    "ctilde_v_norm",
    "estimate_gn_constant",
    "DEFAULT_GN_CONSTANT",
]

DEFAULT_GN_CONSTANT = 2.0


class ResolutionError(ValueError):
    """Quadrature grid too coarse for an exact evaluation."""


class DivergenceError(ValueError):
    """Operation requires a divergence-free field."""


@dataclass(frozen=True)
class TorusGeometry:
    """Periodic square [0, L]^2."""

    L: float = 2 * math.pi

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValueError(f"side length must be positive, got {self.L}")

    @property
    def area(self) -> float:
        return self.L * self.L

    @property
    def k0(self) -> float:
        """Fundamental wavenumber 2 pi / L."""
        return 2 * math.pi / self.L


def _modes(K: int) -> tuple[np.ndarray, np.ndarray]:
    m = np.arange(-K, K + 1)
    return np.meshgrid(m, m, indexing="ij")


@dataclass(frozen=True, eq=False)
class SpectralVelocity:
    """Real, mean-zero, Fourier-truncated vector field.

    Parameters
    ----------
    geometry : TorusGeometry
    coeffs : complex array, shape (2, 2K+1, 2K+1)
    divergence_free : bool
        Set when m . u_m = 0 for every mode.  Operations that need the flag
        verify it numerically rather than trusting it.
    """

    geometry: TorusGeometry
    coeffs: np.ndarray
    divergence_free: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex, copy=True)
        if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] != c.shape[2] or c.shape[1] % 2 != 1:
            raise ValueError(f"coefficient block must have shape (2, 2K+1, 2K+1), got {c.shape}")
        K = c.shape[1] // 2
        c[:, K, K] = 0.0
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    # -- construction -----------------------------------------------------
    @classmethod
    def zeros(cls, geometry: TorusGeometry, K: int) -> "SpectralVelocity":
        n = 2 * K + 1
        return cls(geometry, np.zeros((2, n, n), complex), divergence_free=True)

    @classmethod
    def from_grid(cls, geometry: TorusGeometry, values: np.ndarray, K: int,
                  divergence_free: bool = False) -> "SpectralVelocity":
        """Fourier coefficients |m|_inf <= K of samples on a uniform N x N grid."""
        values = np.asarray(values, dtype=float)
        N = values.shape[-1]
        if N < 2 * K + 1:
            raise ResolutionError(f"grid of {N} points cannot resolve K={K}")
        hat = np.fft.fft2(values, norm="forward")
        idx = np.arange(-K, K + 1) % N
        c = hat[:, idx[:, None], idx[None, :]]
        return cls(geometry, _hermitian(c), divergence_free=divergence_free)

    @classmethod
    def from_function(cls, geometry: TorusGeometry, func, K: int, N: int | None = None,
                      divergence_free: bool = False) -> "SpectralVelocity":
        """Sample ``func(x, y) -> (u1, u2)`` on a grid and truncate to K."""
        N = N or max(4 * K + 4, 16)
        x = np.arange(N) * geometry.L / N
        X, Y = np.meshgrid(x, x, indexing="ij")
        u1, u2 = func(X, Y)
        vals = np.stack([np.broadcast_to(u1, X.shape), np.broadcast_to(u2, X.shape)])
        return cls.from_grid(geometry, vals, K, divergence_free=divergence_free)

    # -- basic properties ---------------------------------------------------
    @property
    def K(self) -> int:
        return self.coeffs.shape[1] // 2

    def wavevectors(self) -> tuple[np.ndarray, np.ndarray]:
        m1, m2 = _modes(self.K)
        k0 = self.geometry.k0
        return k0 * m1, k0 * m2

    def with_coeffs(self, coeffs, divergence_free: bool | None = None) -> "SpectralVelocity":
        if divergence_free is None:
            divergence_free = self.divergence_free
        return SpectralVelocity(self.geometry, coeffs, divergence_free=divergence_free)

    def resize(self, K: int) -> "SpectralVelocity":
        """Zero-pad or truncate to cutoff K."""
        K0 = self.K
        n = 2 * K + 1
        out = np.zeros((2, n, n), complex)
        r = min(K, K0)
        out[:, K - r:K + r + 1, K - r:K + r + 1] = self.coeffs[:, K0 - r:K0 + r + 1, K0 - r:K0 + r + 1]
        return self.with_coeffs(out)

    def divergence_residual(self) -> float:
        """max |m . u_m| relative to max |u_m| (0 for the zero field)."""
        m1, m2 = _modes(self.K)
        div = m1 * self.coeffs[0] + m2 * self.coeffs[1]
        scale = np.max(np.abs(self.coeffs)) if self.coeffs.size else 0.0
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(div)) / (scale * max(self.K, 1)))

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        c = self.coeffs
        return bool(np.max(np.abs(c - np.conj(c[:, ::-1, ::-1]))) <= tol * max(np.max(np.abs(c)), 1.0))

    # -- arithmetic ---------------------------------------------------------
    def _check_compatible(self, other: "SpectralVelocity"):
        if self.geometry != other.geometry:
            raise ValueError("fields live on different tori")

    def __add__(self, other: "SpectralVelocity") -> "SpectralVelocity":
        self._check_compatible(other)
        K = max(self.K, other.K)
        a, b = self.resize(K), other.resize(K)
        return SpectralVelocity(self.geometry, a.coeffs + b.coeffs,
                                divergence_free=self.divergence_free and other.divergence_free)

    def __sub__(self, other: "SpectralVelocity") -> "SpectralVelocity":
        return self + (-1.0) * other

    def __mul__(self, s: float) -> "SpectralVelocity":
        return self.with_coeffs(float(s) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralVelocity":
        return (-1.0) * self

    # -- physical space -----------------------------------------------------
    def to_grid(self, N: int) -> np.ndarray:
        """Point values on the N x N grid x_j = j L / N, shape (2, N, N)."""
        return _to_grid(self.coeffs, N)

    def gradient_grid(self, N: int) -> np.ndarray:
        """grad[c, d] = d u_c / d x_d on the N x N grid, shape (2, 2, N, N)."""
        k1, k2 = self.wavevectors()
        out = np.empty((2, 2, N, N))
        for d, kd in enumerate((k1, k2)):
            out[:, d] = _to_grid(1j * kd[None] * self.coeffs, N)
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values at arbitrary points, shape (P, 2)."""
        return _evaluate(self.coeffs, self.geometry, self.K, points)

    def evaluate_gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradient at arbitrary points, shape (P, 2, 2) with [p, c, d] = d u_c / d x_d."""
        k1, k2 = self.wavevectors()
        out = np.empty((len(points), 2, 2))
        for d, kd in enumerate((k1, k2)):
            out[:, :, d] = _evaluate(1j * kd[None] * self.coeffs, self.geometry, self.K, points)
        return out

    # -- convenience wrappers -------------------------------------------
    def norms(self, quad_resolution: int | None = None) -> "NormBundle":
        return compute_norms(self, quad_resolution)

    def l2_norm(self) -> float:
        return math.sqrt(inner(self, self))


def _hermitian(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.conj(c[:, ::-1, ::-1]))


def _to_grid(coeffs: np.ndarray, N: int) -> np.ndarray:
    K = coeffs.shape[-1] // 2
    if N < 2 * K + 1:
        raise ResolutionError(f"grid of {N} points cannot hold K={K}")
    idx = np.arange(-K, K + 1) % N
    full = np.zeros(coeffs.shape[:-2] + (N, N), complex)
    full[..., idx[:, None], idx[None, :]] = coeffs
    return np.fft.ifft2(full, norm="forward").real


def _evaluate(coeffs: np.ndarray, geometry: TorusGeometry, K: int, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    m = np.arange(-K, K + 1)
    E1 = np.exp(1j * geometry.k0 * pts[:, :1] * m[None, :])
    E2 = np.exp(1j * geometry.k0 * pts[:, 1:] * m[None, :])
    out = np.empty((len(pts), 2))
    for c in range(2):
        out[:, c] = np.sum((E1 @ coeffs[c]) * E2, axis=1).real
    return out


def inner(u: SpectralVelocity, v: SpectralVelocity) -> float:
    """L^2 inner product (u, v) via Parseval."""
    u._check_compatible(v)
    K = max(u.K, v.K)
    a, b = u.resize(K).coeffs, v.resize(K).coeffs
    return float(u.geometry.area * np.sum(a * np.conj(b)).real)


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------

def leray_project(v: SpectralVelocity) -> SpectralVelocity:
    """Per-mode projection u_m -> (I - m m^T / |m|^2) u_m onto divergence-free fields."""
    m1, m2 = _modes(v.K)
    msq = (m1 * m1 + m2 * m2).astype(float)
    msq[v.K, v.K] = 1.0
    c = v.coeffs
    dot = (m1 * c[0] + m2 * c[1]) / msq
    out = np.stack([c[0] - m1 * dot, c[1] - m2 * dot])
    return v.with_coeffs(out, divergence_free=True)


def stokes_apply(u: SpectralVelocity) -> SpectralVelocity:
    """A u = -Laplacian u, i.e. multiplication by |2 pi m / L|^2."""
    k1, k2 = u.wavevectors()
    return u.with_coeffs((k1 * k1 + k2 * k2)[None] * u.coeffs)


def stokes_solve(u: SpectralVelocity, shift: float, scale: float) -> SpectralVelocity:
    """Solve (shift I + scale A) w = u mode by mode."""
    k1, k2 = u.wavevectors()
    return u.with_coeffs(u.coeffs / (shift + scale * (k1 * k1 + k2 * k2))[None])


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormBundle:
    l2: float
    grad_l2: float
    v_norm_sq: float
    l4: float
    stokes_l2: float


def _grad_sq(u: SpectralVelocity) -> float:
    k1, k2 = u.wavevectors()
    return float(u.geometry.area * np.sum((k1 * k1 + k2 * k2)[None] * np.abs(u.coeffs) ** 2))


def _stokes_sq(u: SpectralVelocity) -> float:
    k1, k2 = u.wavevectors()
    ksq = k1 * k1 + k2 * k2
    return float(u.geometry.area * np.sum((ksq * ksq)[None] * np.abs(u.coeffs) ** 2))


def compute_norms(u: SpectralVelocity, quad_resolution: int | None = None) -> NormBundle:
    """|u|, |grad u|, ||u||_V^2, ||u||_L4 and |A u|.

    The quadratic norms come straight from Parseval.  The L4 norm integrates
    |u|^4, a trigonometric polynomial of degree 4K, on a grid of at least
    4K+1 points per axis so the quadrature is exact; ``quad_resolution``
    below 2K+1 is rejected.
    """
    K = u.K
    if quad_resolution is None:
        quad_resolution = 2 * K + 1
    if quad_resolution < 2 * K + 1:
        raise ResolutionError(f"quad_resolution={quad_resolution} < 2K+1={2 * K + 1}")
    l2sq = float(u.geometry.area * np.sum(np.abs(u.coeffs) ** 2))
    gsq = _grad_sq(u)
    N = max(quad_resolution, 4 * K + 1)
    g = u.to_grid(N)
    s = g[0] ** 2 + g[1] ** 2
    l4 = (np.mean(s * s) * u.geometry.area) ** 0.25
    return NormBundle(
        l2=math.sqrt(l2sq),
        grad_l2=math.sqrt(gsq),
        v_norm_sq=l2sq + gsq,
        l4=float(l4),
        stokes_l2=math.sqrt(_stokes_sq(u)),
    )


def v_norm_sq(u: SpectralVelocity) -> float:
    """||u||_V^2 = |u|^2 + |grad u|^2 without the quadrature pass."""
    return float(u.geometry.area * np.sum(np.abs(u.coeffs) ** 2)) + _grad_sq(u)


# ---------------------------------------------------------------------------
# Convection
# ---------------------------------------------------------------------------

def _convection_coeffs(u1: SpectralVelocity, u2: SpectralVelocity, K_out: int, N: int) -> np.ndarray:
    """Coefficients |m| <= K_out of (u1 . grad) u2 from an N x N grid."""
    a = u1.to_grid(N)
    g = u2.gradient_grid(N)
    conv = np.einsum("dij,cdij->cij", a, g)
    hat = np.fft.fft2(conv, norm="forward")
    idx = np.arange(-K_out, K_out + 1) % N
    return hat[:, idx[:, None], idx[None, :]]


def trilinear_b(u1: SpectralVelocity, u2: SpectralVelocity, u3: SpectralVelocity,
                quad_resolution: int | None = None) -> float:
    """b(u1, u2, u3) = int (u1 . grad u2) . u3 dx, exact for truncated fields.

    The integrand has degree at most 3K, so any grid with N >= 3K+1 points per
    axis integrates it without aliasing.
    """
    u1._check_compatible(u2)
    u1._check_compatible(u3)
    K = max(u1.K, u2.K, u3.K)
    need = 3 * K + 1
    if quad_resolution is None:
        quad_resolution = need
    if quad_resolution < need:
        raise ResolutionError(f"quad_resolution={quad_resolution} < 3K+1={need}")
    w = _convection_coeffs(u1, u2, u3.K, quad_resolution)
    return float(u1.geometry.area * np.sum(w * np.conj(u3.coeffs)).real)


def nonlinear_B(u: SpectralVelocity, v: SpectralVelocity | None = None, tol: float = 1e-10) -> SpectralVelocity:
    """Leray-projected convection P_H[(u . grad) v], truncated to the cutoff of v.

    With ``v`` omitted this is B(u, u).  The first argument must be
    divergence-free; that is checked, not assumed.
    """
    if u.divergence_residual() > tol:
        raise DivergenceError("nonlinear_B needs a divergence-free transport field")
    v = u if v is None else v
    K = max(u.K, v.K)
    N = _fft_size(3 * K + 1)
    w = _convection_coeffs(u, v, v.K, N)
    return leray_project(SpectralVelocity(u.geometry, _hermitian(w)))


def _fft_size(n: int) -> int:
    """Smallest even size >= n with only small prime factors."""
    m = n + (n % 2)
    while True:
        r = m
        for p in (2, 3, 5):
            while r % p == 0:
                r //= p
        if r == 1:
            return m
        m += 2


# ---------------------------------------------------------------------------
# Sample fields and constants
# ---------------------------------------------------------------------------

def random_field(geometry: TorusGeometry, K: int, rng: np.random.Generator, *,
                 n_modes: int | None = None, decay: float = 1.0,
                 divergence_free: bool = True, amplitude: float = 1.0) -> SpectralVelocity:
    """Gaussian coefficients with spectrum ~ (1 + |m|^2)^(-decay).

    ``n_modes`` restricts the support to |m|_inf <= n_modes (default K).
    """
    n = 2 * K + 1
    c = rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))
    m1, m2 = _modes(K)
    c *= (1.0 + m1 * m1 + m2 * m2)[None] ** (-decay)
    if n_modes is not None:
        c *= (np.maximum(np.abs(m1), np.abs(m2)) <= n_modes)[None]
    u = SpectralVelocity(geometry, _hermitian(c))
    if divergence_free:
        u = leray_project(u)
    scale = u.l2_norm()
    return u if scale == 0 else (amplitude / scale) * u


def sine_shear(geometry: TorusGeometry, K: int, amplitude: float = 1.0, mode: int = 1) -> SpectralVelocity:
    """u = amplitude * (sin(2 pi mode y / L), 0), a steady solution of the Euler nonlinearity."""
    n = 2 * K + 1
    c = np.zeros((2, n, n), complex)
    # sin(t) = (e^{it} - e^{-it}) / 2i
    c[0, K, K + mode] = amplitude / 2j
    c[0, K, K - mode] = -amplitude / 2j
    return SpectralVelocity(geometry, c, divergence_free=True)


def poincare_ctilde(geometry: TorusGeometry) -> float:
    """Sharp constant C with |grad u|^2 <= C |A u|^2 on mean-zero fields: (L / 2 pi)^2."""
    return (geometry.L / (2 * math.pi)) ** 2


def ctilde_stokes(geometry: TorusGeometry, K: int) -> float:
    """max over retained modes of |k|^2 / |k|^4."""
    m1, m2 = _modes(K)
    lam = (geometry.k0 ** 2) * (m1 * m1 + m2 * m2).astype(float)
    lam = lam[lam > 0]
    return float(np.max(1.0 / lam))


def ctilde_v_norm(geometry: TorusGeometry, K: int) -> float:
    """Smallest C with |u|^2 + |grad u|^2 <= C (|grad u|^2 + |A u|^2) on the truncated space."""
    m1, m2 = _modes(K)
    lam = (geometry.k0 ** 2) * (m1 * m1 + m2 * m2).astype(float)
    lam = lam[lam > 0]
    return float(np.max((1.0 + lam) / (lam + lam * lam)))


def estimate_gn_constant(geometry: TorusGeometry, K: int, n_fields: int,
                         rng: np.random.Generator, decay: float = 0.75) -> float:
    """max over random fields of ||u||_L4^2 / (|u| |grad u|)."""
    best = 0.0
    for _ in range(n_fields):
        u = random_field(geometry, K, rng, decay=decay, divergence_free=bool(rng.integers(2)))
        nb = compute_norms(u)
        best = max(best, nb.l4 ** 2 / (nb.l2 * nb.grad_l2))
    return best

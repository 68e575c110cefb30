"""
Trace-class Q-Wiener noise on the torus and the diffusion coefficients it drives.

The covariance is diagonal in a real Fourier basis,

    e_j(x) = (sqrt(2) / L) * tau_j * cos(k_j . x)   or   ... * sin(k_j . x),

with tau_j either the solenoidal direction k_j^perp / |k_j| or the potential
direction k_j / |k_j|.  The e_j are orthonormal in L^2, and W = sum_j
sqrt(q_j) beta^j e_j.  A path stores the standard increments of beta^j; the
sqrt(q_j) weights are applied when increments are read, so coarsening is a
plain sum of fine increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralVelocity, TorusGeometry, random_field

__all__ = [
    "CovarianceSpec",
    "fourier_covariance",
    "WienerPath",
    "sample_path",
    "coarsen_path",
    "sample_rng",
    "ModalField",
    "DiffusionSpec",
    "Additive",
    "DiagonalMultiplicative",
    "apply_G",
    "GConditionReport",
    "check_G_conditions",
    "gaussian_increment_mgf",
]

SOLENOIDAL = 0
POTENTIAL = 1


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Eigenpairs (q_j, e_j) of a diagonal covariance on real Fourier modes.

    Attributes
    ----------
    geometry : TorusGeometry
    wavevectors : int array (J, 2)
        Integer mode m_j; the physical wavevector is 2 pi m_j / L.
    parity : int array (J,)
        0 for cosine, 1 for sine.
    polarization : int array (J,)
        0 for k^perp / |k| (divergence-free), 1 for k / |k| (gradient).
    q : float array (J,)
        Nonnegative eigenvalues.
    """

    geometry: TorusGeometry
    wavevectors: np.ndarray
    parity: np.ndarray
    polarization: np.ndarray
    q: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = np.asarray(self.wavevectors, dtype=int).reshape(-1, 2)
        J = len(m)
        arrays = {
            "wavevectors": m,
            "parity": np.asarray(self.parity, dtype=int).reshape(J),
            "polarization": np.asarray(self.polarization, dtype=int).reshape(J),
            "q": np.asarray(self.q, dtype=float).reshape(J),
        }
        if np.any(arrays["q"] < 0) or not np.all(np.isfinite(arrays["q"])):
            raise ValueError("covariance eigenvalues must be finite and nonnegative")
        if np.any(np.all(m == 0, axis=1)):
            raise ValueError("the zero mode is excluded (mean-zero fields)")
        for name, arr in arrays.items():
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def J(self) -> int:
        return len(self.q)

    @property
    def trace(self) -> float:
        return float(np.sum(self.q))

    @property
    def divergence_free(self) -> bool:
        return bool(np.all(self.polarization == SOLENOIDAL))

    @property
    def max_wavenumber(self) -> int:
        return int(np.max(np.abs(self.wavevectors))) if self.J else 0

    def directions(self) -> np.ndarray:
        """Unit polarization vectors tau_j, shape (J, 2)."""
        m = self.wavevectors.astype(float)
        norm = np.linalg.norm(m, axis=1, keepdims=True)
        perp = np.stack([-m[:, 1], m[:, 0]], axis=1)
        return np.where(self.polarization[:, None] == SOLENOIDAL, perp, m) / norm

    def physical_wavevectors(self) -> np.ndarray:
        return self.geometry.k0 * self.wavevectors.astype(float)

    def w12_weights(self) -> np.ndarray:
        """||e_j||^2 in W^{1,2}: 1 + |k_j|^2."""
        k = self.physical_wavevectors()
        return 1.0 + np.sum(k * k, axis=1)

    def mode_coeffs(self, K: int) -> np.ndarray:
        """Fourier coefficients of every e_j at cutoff K, shape (J, 2, 2K+1, 2K+1)."""
        if K in self._cache:
            return self._cache[K]
        if self.max_wavenumber > K:
            raise ValueError(f"cutoff {K} does not contain noise mode {self.max_wavenumber}")
        n = 2 * K + 1
        out = np.zeros((self.J, 2, n, n), complex)
        amp = math.sqrt(2.0) / self.geometry.L / 2.0
        tau = self.directions()
        for j, (m1, m2) in enumerate(self.wavevectors):
            if self.parity[j] == 0:
                cp, cm = amp, amp
            else:
                cp, cm = amp / 1j, -amp / 1j
            out[j, :, K + m1, K + m2] += cp * tau[j]
            out[j, :, K - m1, K - m2] += cm * tau[j]
        out.flags.writeable = False
        self._cache[K] = out
        return out

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """e_j at points, shape (J, P, 2)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        phase = pts @ self.physical_wavevectors().T  # (P, J)
        wave = np.where(self.parity[None, :] == 0, np.cos(phase), np.sin(phase))
        amp = math.sqrt(2.0) / self.geometry.L
        return amp * wave.T[:, :, None] * self.directions()[:, None, :]

    def evaluate_gradient(self, points: np.ndarray) -> np.ndarray:
        """grad e_j at points, shape (J, P, 2, 2) with [..., c, d] = d(e_j)_c / dx_d."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        k = self.physical_wavevectors()
        phase = pts @ k.T
        dwave = np.where(self.parity[None, :] == 0, -np.sin(phase), np.cos(phase))
        amp = math.sqrt(2.0) / self.geometry.L
        tau = self.directions()
        return amp * dwave.T[:, :, None, None] * tau[:, None, :, None] * k[:, None, None, :]

    def with_q(self, q) -> "CovarianceSpec":
        return CovarianceSpec(self.geometry, self.wavevectors, self.parity, self.polarization, q)

    def to_dict(self) -> dict:
        return {
            "wavevectors": self.wavevectors.tolist(),
            "parity": self.parity.tolist(),
            "polarization": self.polarization.tolist(),
            "q": self.q.tolist(),
        }


def _half_plane_modes(count: int) -> list[tuple[int, int]]:
    R = int(math.ceil(math.sqrt(count))) + 2
    modes = [(a, b) for a in range(0, R + 1) for b in range(-R, R + 1)
             if a > 0 or (a == 0 and b > 0)]
    modes.sort(key=lambda m: (m[0] ** 2 + m[1] ** 2, m[0], m[1]))
    return modes[:count]


def fourier_covariance(geometry: TorusGeometry, J: int = 16, *, strength: float = 1.0,
                       decay: float = 2.0, polarization: str = "solenoidal") -> CovarianceSpec:
    """Default covariance: the J lowest real Fourier modes with q_j = strength * j^-decay.

    ``polarization`` is "solenoidal" (divergence-free noise), "potential", or
    "mixed" (each wavevector carries both directions).
    """
    if J < 1 or J > 64:
        raise ValueError("J must lie in [1, 64]")
    per_wave = {"solenoidal": (SOLENOIDAL,), "potential": (POTENTIAL,),
                "mixed": (SOLENOIDAL, POTENTIAL)}[polarization]
    block = 2 * len(per_wave)
    waves = _half_plane_modes(-(-J // block))
    m, par, pol = [], [], []
    for w in waves:
        for p in per_wave:
            for s in (0, 1):
                m.append(w)
                par.append(s)
                pol.append(p)
    m, par, pol = m[:J], par[:J], pol[:J]
    j = np.arange(1, J + 1, dtype=float)
    return CovarianceSpec(geometry, np.array(m), np.array(par), np.array(pol), strength * j ** (-decay))


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def sample_rng(master_seed: int, sample_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (master_seed, sample_index, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(sample_index), int(stream)])))


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Standard Brownian increments dbeta (N, J) on [0, T] plus the weights sqrt(q_j)."""

    T: float
    dbeta: np.ndarray
    sqrt_q: np.ndarray
    seed: tuple = ()
    _inc: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        db = np.array(self.dbeta, dtype=float, copy=True)
        sq = np.array(self.sqrt_q, dtype=float, copy=True)
        if db.ndim != 2 or db.shape[1] != sq.shape[0]:
            raise ValueError("dbeta must have shape (N, J) matching sqrt_q")
        inc = db * sq[None, :]
        for name, arr in (("dbeta", db), ("sqrt_q", sq), ("_inc", inc)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.dbeta.shape[0]

    @property
    def J(self) -> int:
        return self.dbeta.shape[1]

    @property
    def k(self) -> float:
        return self.T / self.N

    @property
    def increments(self) -> np.ndarray:
        """Delta_l W in the e_j basis, shape (N, J): sqrt(q_j) dbeta^j_l."""
        return self._inc

    def increment(self, l: int) -> np.ndarray:
        """Delta_l W for l = 1..N."""
        if not 1 <= l <= self.N:
            raise IndexError(f"step {l} outside 1..{self.N}")
        return self._inc[l - 1]

    def k_norms_sq(self) -> np.ndarray:
        """||Delta_l W||_K^2 per step."""
        return np.sum(self._inc ** 2, axis=1)

    def checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.dbeta, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.sqrt_q, dtype="<f8").tobytes())
        return h.hexdigest()


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def sample_path(spec: CovarianceSpec, seed: int, N_fine: int, T: float = 1.0,
                sample_index: int = 0) -> WienerPath:
    """Draw one path at the finest resolution; deterministic in (seed, sample_index)."""
    if not _is_pow2(N_fine):
        raise ValueError(f"N_fine must be a power of two, got {N_fine}")
    if T <= 0:
        raise ValueError("T must be positive")
    rng = sample_rng(seed, sample_index)
    dbeta = rng.standard_normal((N_fine, spec.J)) * math.sqrt(T / N_fine)
    return WienerPath(T, dbeta, np.sqrt(spec.q), seed=(int(seed), int(sample_index)))


def coarsen_path(path: WienerPath, factor: int) -> WienerPath:
    """Sum blocks of ``factor`` consecutive increments.

    Power-of-two factors are reduced by repeated pairwise halving, so
    coarsening twice by 2 is bit-identical to coarsening once by 4.
    """
    if factor < 1 or path.N % factor:
        raise ValueError(f"factor {factor} does not divide N={path.N}")
    db = path.dbeta
    if _is_pow2(factor):
        f = factor
        while f > 1:
            db = db[0::2] + db[1::2]
            f //= 2
    else:
        db = db.reshape(path.N // factor, factor, path.J).sum(axis=1)
    return WienerPath(path.T, db, path.sqrt_q, seed=path.seed)


def gaussian_increment_mgf(q: np.ndarray, k: float, beta: float) -> float:
    """E exp(beta ||Delta W||_K^2) = prod_j (1 - 2 beta k q_j)^(-1/2)."""
    x = 2.0 * beta * k * np.asarray(q, dtype=float)
    if np.any(x >= 1.0):
        return math.inf
    return float(np.exp(-0.5 * np.sum(np.log1p(-x))))


# ---------------------------------------------------------------------------
# Diffusion coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModalField:
    """sum_j c_j e_j for a covariance basis; the output of G(u) Delta W."""

    cov: CovarianceSpec
    amplitudes: np.ndarray

    @property
    def divergence_free(self) -> bool:
        pol = self.cov.polarization
        return bool(np.all((pol == SOLENOIDAL) | (self.amplitudes == 0)))

    def to_spectral(self, K: int) -> SpectralVelocity:
        c = np.tensordot(self.amplitudes, self.cov.mode_coeffs(K), axes=(0, 0))
        return SpectralVelocity(self.cov.geometry, c, divergence_free=self.divergence_free)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.tensordot(self.amplitudes, self.cov.evaluate(points), axes=(0, 0))


class DiffusionSpec:
    """Diagonal diffusion G(u) e_j = g_j(u) e_j.

    Subclasses provide ``gains(r)`` as a function of r = |u|_{L^2} and declare
    the constants K0, K1, L1 of the growth and Lipschitz conditions, for the
    operator norms into L^2 and W^{1,2} (or H and V when every e_j is
    divergence-free).
    """

    cov: CovarianceSpec
    K0: float
    K1: float
    L1: float

    kind = "abstract"

    def gains(self, r: float) -> np.ndarray:
        raise NotImplementedError

    @property
    def condition(self) -> str:
        """"G2" when G maps into divergence-free fields, else "G1"."""
        return "G2" if self.cov.divergence_free else "G1"

    @property
    def additive(self) -> bool:
        return self.K1 == 0 and self.L1 == 0

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Additive(DiffusionSpec):
    """G(u) e_j = a_j e_j, independent of u."""

    cov: CovarianceSpec
    a: np.ndarray | None = None

    kind = "additive"

    def __post_init__(self):
        a = np.ones(self.cov.J) if self.a is None else np.asarray(self.a, dtype=float).reshape(self.cov.J)
        a.flags.writeable = False
        object.__setattr__(self, "a", a)

    def gains(self, r: float) -> np.ndarray:
        return self.a

    @property
    def K0(self) -> float:
        return float(np.max(self.a ** 2 * self.cov.w12_weights())) if self.cov.J else 0.0

    K1 = 0.0
    L1 = 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a.tolist()}


@dataclass(frozen=True, eq=False)
class DiagonalMultiplicative(DiffusionSpec):
    """G(u) e_j = (a_j + b_j psi(|u|)) e_j with psi(r) = r / sqrt(1 + (r/s)^2).

    psi is 1-Lipschitz, bounded by s and psi(r) <= r, which gives the declared
    constants K0 = 2 max a_j^2 w_j, K1 = 2 max b_j^2 w_j and L1 = max b_j^2
    with w_j = 1 + |k_j|^2.
    """

    cov: CovarianceSpec
    a: np.ndarray | None = None
    b: np.ndarray | None = None
    saturation: float = 10.0

    kind = "multiplicative"

    def __post_init__(self):
        J = self.cov.J
        a = np.ones(J) if self.a is None else np.asarray(self.a, dtype=float).reshape(J)
        b = np.full(J, 0.5) if self.b is None else np.asarray(self.b, dtype=float).reshape(J)
        if not self.saturation > 0:
            raise ValueError("saturation must be positive")
        for name, arr in (("a", a), ("b", b)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def psi(self, r: float) -> float:
        return r / math.sqrt(1.0 + (r / self.saturation) ** 2)

    def gains(self, r: float) -> np.ndarray:
        return self.a + self.b * self.psi(r)

    @property
    def K0(self) -> float:
        return float(2 * np.max(self.a ** 2 * self.cov.w12_weights()))

    @property
    def K1(self) -> float:
        return float(2 * np.max(self.b ** 2 * self.cov.w12_weights()))

    @property
    def L1(self) -> float:
        return float(np.max(self.b ** 2))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b.tolist(),
                "saturation": self.saturation}


def _l2_of(u) -> float:
    if isinstance(u, SpectralVelocity):
        return u.l2_norm()
    if hasattr(u, "l2_norm"):
        return float(u.l2_norm())
    return float(u)


def apply_G(spec: DiffusionSpec, u, increment: np.ndarray) -> ModalField:
    """G(u) Delta W as a modal field.

    ``u`` is a spectral field, an FE state exposing ``l2_norm()``, or the
    number |u|_{L^2} itself; the diagonal coefficients only see that norm.
    """
    inc = np.asarray(increment, dtype=float)
    if inc.shape != (spec.cov.J,):
        raise ValueError(f"increment has shape {inc.shape}, expected ({spec.cov.J},)")
    r = 0.0 if spec.additive else _l2_of(u)
    return ModalField(spec.cov, spec.gains(r) * inc)


def spec_from_dict(cov: CovarianceSpec, d: dict) -> DiffusionSpec:
    kind = d.get("kind", "additive")
    if kind == "additive":
        return Additive(cov, d.get("a"))
    if kind == "multiplicative":
        return DiagonalMultiplicative(cov, d.get("a"), d.get("b"), d.get("saturation", 10.0))
    raise ValueError(f"unknown diffusion kind {kind!r}")


# ---------------------------------------------------------------------------
# Empirical condition check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GConditionReport:
    condition: str
    declared: dict
    growth_l2_ratio: float
    """Worst ||G(u)||^2 / (K0 + K1 |u|^2) over the samples; <= 1 when the declaration holds."""
    growth_w12_ratio: float
    lipschitz_ratio: float
    empirical_K1: float
    empirical_L1: float
    max_divergence: float

    @property
    def satisfied(self) -> bool:
        tol = 1 + 1e-10
        return (self.growth_l2_ratio <= tol and self.growth_w12_ratio <= tol
                and self.lipschitz_ratio <= tol)


def _operator_norm_sq(spec: DiffusionSpec, r: float, K: int, weighted: bool) -> float:
    """||G(u)||^2 in L(K, L^2) or L(K, W^{1,2}) from the Gram matrix of the images G(u) e_j."""
    coeffs = spec.cov.mode_coeffs(K)
    g = spec.gains(r)
    cols = (g[:, None, None, None] * coeffs).reshape(spec.cov.J, -1)
    if weighted:
        m = np.arange(-K, K + 1)
        m1, m2 = np.meshgrid(m, m, indexing="ij")
        w = 1.0 + spec.cov.geometry.k0 ** 2 * (m1 * m1 + m2 * m2)
        wflat = np.concatenate([w.ravel(), w.ravel()])
    else:
        wflat = 1.0
    gram = spec.cov.geometry.area * np.real(np.conj(cols) @ (cols * wflat).T)
    return float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[-1])


def check_G_conditions(spec: DiffusionSpec, n_samples: int = 100, seed: int = 0,
                       K: int | None = None) -> GConditionReport:
    """Sample random fields u, v and report the worst quotients against K0, K1, L1."""
    geometry = spec.cov.geometry
    K = max(K or 0, spec.cov.max_wavenumber, 4)
    rng = sample_rng(seed, 0, 7)
    div_free = spec.condition == "G2"
    g_ratio_l2 = g_ratio_w = lip = k1 = l1 = 0.0
    for _ in range(n_samples):
        amp_u, amp_v = np.exp(rng.normal(0.0, 2.0, size=2))
        u = random_field(geometry, K, rng, divergence_free=div_free, amplitude=amp_u)
        v = random_field(geometry, K, rng, divergence_free=div_free, amplitude=amp_v)
        ru, rv = u.l2_norm(), v.l2_norm()
        vnorm = ru ** 2 + u.norms().grad_l2 ** 2
        nl2 = _operator_norm_sq(spec, ru, K, weighted=False)
        nw = _operator_norm_sq(spec, ru, K, weighted=True)
        g_ratio_l2 = max(g_ratio_l2, nl2 / (spec.K0 + spec.K1 * ru ** 2))
        g_ratio_w = max(g_ratio_w, nw / (spec.K0 + spec.K1 * vnorm))
        diff = float(np.max((spec.gains(ru) - spec.gains(rv)) ** 2)) if spec.cov.J else 0.0
        duv = (u - v).l2_norm() ** 2
        if spec.L1 > 0:
            lip = max(lip, diff / (spec.L1 * duv))
        elif diff > 0:
            lip = math.inf
        k1 = max(k1, max(nl2 - spec.K0, 0.0) / ru ** 2)
        l1 = max(l1, diff / duv)
    maxdiv = 0.0
    if spec.cov.J:
        coeffs = spec.cov.mode_coeffs(K)
        m = np.arange(-K, K + 1)
        m1, m2 = np.meshgrid(m, m, indexing="ij")
        div = np.abs(m1 * coeffs[:, 0] + m2 * coeffs[:, 1])
        maxdiv = float(np.max(div[spec.cov.polarization == SOLENOIDAL], initial=0.0))
    return GConditionReport(
        condition=spec.condition,
        declared={"K0": spec.K0, "K1": spec.K1, "L1": spec.L1},
        growth_l2_ratio=g_ratio_l2,
        growth_w12_ratio=g_ratio_w,
        lipschitz_ratio=lip,
        empirical_K1=k1,
        empirical_L1=l1,
        max_divergence=maxdiv,
    )

"""JSON experiment configuration (schema version 1)."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..analysis import predicted_rates
from ..noise import fourier_covariance, sample_rng, spec_from_dict
from ..schemes import SchemeParams
from ..spectral import (
    DEFAULT_GN_CONSTANT,
    SpectralVelocity,
    TorusGeometry,
    ctilde_stokes,
    ctilde_v_norm,
    poincare_ctilde,
    random_field,
    sine_shear,
)

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "gaussian_initial",
    "gaussian_gamma0",
    "load_config",
    "config_bytes",
]

SCHEMA_VERSION = 1
INITIAL_STREAM = 1  # RNG stream of per-sample Gaussian initial data


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "L": 2 * math.pi,
    "T": 1.0,
    "nu": 1.0,
    "scheme": "alg2",
    "element": "taylor-hood",
    "levels": [{"N": 16, "res": 4}, {"N": 32, "res": 6}, {"N": 64, "res": 8}],
    "K_ref": 16,
    "noise": {"J": 16, "strength": 1.0, "decay": 2.0, "polarization": "solenoidal"},
    "diffusion": {"kind": "additive"},
    "initial": {"kind": "field", "K": 4, "amplitude": 2.0, "decay": 1.0, "seed": 0},
    "samples": 16,
    "seed": 0,
    "out": "run",
    "tolerances": {"picard_tol": 1e-11, "picard_maxiter": 50, "solver_tol": 1e-10, "solver": "direct"},
    "analysis": {
        "moments_q": [1],
        "time_at_levels": False,
        "alpha": None,
        "M": [],
        "localization_variant": "quartic",
        "q0": 3,
        "Cbar": DEFAULT_GN_CONSTANT,
        "delta": 0.1,
        "save_trajectories": False,
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("initial", "diffusion"):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def gaussian_initial(geometry: TorusGeometry, K: int, rng: np.random.Generator, *,
                     amplitude: float = 1.0, decay: float = 1.5) -> SpectralVelocity:
    """Divergence-free Gaussian field u = sum_m a_m tau_m e^{i k_m . x}.

    Re a_m and Im a_m are independent N(0, s_m^2) on a half plane of modes with
    s_m = amplitude (1 + |m|^2)^-decay; a_{-m} = -conj(a_m) keeps u real.
    """
    n = 2 * K + 1
    m = np.arange(-K, K + 1)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    half = (m1 > 0) | ((m1 == 0) & (m2 > 0))
    s = amplitude * (1.0 + m1 * m1 + m2 * m2) ** (-decay)
    a = np.zeros((n, n), complex)
    draws = rng.standard_normal((2, int(half.sum())))
    a[half] = s[half] * (draws[0] + 1j * draws[1])
    a[::-1, ::-1][half] = -np.conj(a[half])
    norm = np.hypot(m1, m2)
    norm[K, K] = 1.0
    tau = np.stack([-m2 / norm, m1 / norm])
    return SpectralVelocity(geometry, a[None] * tau, divergence_free=True)


def gaussian_gamma0(geometry: TorusGeometry, K: int, *, amplitude: float = 1.0, decay: float = 1.5) -> float:
    """Supremum of gamma with E exp(gamma ||u_0||_V^2) finite for ``gaussian_initial``.

    ||u_0||_V^2 = sum over the half plane of 2 L^2 (1 + |k_m|^2) s_m^2 (xi^2 + eta^2)
    with standard normal xi, eta, so the bound is 1 / (4 L^2 max (1 + |k_m|^2) s_m^2).
    """
    m = np.arange(-K, K + 1)
    m1, m2 = np.meshgrid(m, m, indexing="ij")
    mask = (m1 != 0) | (m2 != 0)
    s2 = amplitude ** 2 * (1.0 + m1 * m1 + m2 * m2) ** (-2 * decay)
    w = 1.0 + geometry.k0 ** 2 * (m1 * m1 + m2 * m2)
    return float(1.0 / (4.0 * geometry.L ** 2 * np.max((w * s2)[mask])))


@dataclass
class ExperimentConfig:
    """Validated experiment description; ``data`` holds the merged JSON document."""

    data: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = _merge(DEFAULTS, self.data)
        self.validate()

    # -- access --------------------------------------------------------------
    def __getitem__(self, key):
        return self.data[key]

    @property
    def geometry(self) -> TorusGeometry:
        return TorusGeometry(float(self.data["L"]))

    @property
    def levels(self) -> list[tuple[int, int]]:
        return [(int(lv["N"]), int(lv["res"])) for lv in self.data["levels"]]

    @property
    def N_max(self) -> int:
        return max(N for N, _ in self.levels)

    @property
    def analysis(self) -> dict:
        return self.data["analysis"]

    def validate(self) -> None:
        d = self.data
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d['schema_version']}")
        if d["scheme"] not in ("alg1", "alg2"):
            raise ConfigError("scheme must be 'alg1' or 'alg2'")
        if not (d["L"] > 0 and d["T"] > 0 and d["nu"] > 0):
            raise ConfigError("L, T and nu must be positive")
        if int(d["samples"]) < 1:
            raise ConfigError("sample count must be at least 1")
        if int(d["seed"]) < 0:
            raise ConfigError("seed must be a nonnegative integer")
        levels = self.levels
        if not levels:
            raise ConfigError("the level ladder is empty")
        N0 = min(N for N, _ in levels)
        for N, res in levels:
            r = N // N0
            if N % N0 or r & (r - 1):
                raise ConfigError(f"level N={N} is not a dyadic multiple of {N0}")
            if res < (2 if d["scheme"] == "alg1" else 1):
                raise ConfigError(f"level resolution {res} is too small")
        if d["scheme"] == "alg2" and d["K_ref"] < 2 * max(r for _, r in levels):
            raise ConfigError("K_ref must be at least twice the largest K_h")
        if d["initial"].get("kind", "field") not in ("zero", "shear", "field", "gaussian"):
            raise ConfigError(f"unknown initial condition {d['initial'].get('kind')!r}")
        if d["analysis"]["localization_variant"] not in ("quartic", "quadratic"):
            raise ConfigError("localization_variant must be 'quartic' or 'quadratic'")
        try:
            self.diffusion()
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"invalid noise or diffusion: {exc}") from exc

    # -- builders ------------------------------------------------------------
    def covariance(self):
        n = self.data["noise"]
        return fourier_covariance(self.geometry, int(n["J"]), strength=float(n["strength"]),
                                  decay=float(n["decay"]), polarization=n["polarization"])

    def diffusion(self):
        cov = self.covariance()
        d = dict(self.data["diffusion"])
        for key in ("a", "b"):
            if key in d and np.isscalar(d[key]):
                d[key] = [float(d[key])] * cov.J
        return spec_from_dict(cov, d)

    def params(self, N: int | None = None, res: int | None = None) -> SchemeParams:
        d, tol = self.data, self.data["tolerances"]
        kw = dict(T=float(d["T"]), N=N or self.N_max, nu=float(d["nu"]), K_ref=int(d["K_ref"]),
                  element=d["element"], L=float(d["L"]), picard_tol=float(tol["picard_tol"]),
                  picard_maxiter=int(tol["picard_maxiter"]), solver_tol=float(tol["solver_tol"]),
                  solver=tol["solver"])
        if res is not None:
            kw["m" if d["scheme"] == "alg1" else "K_h"] = int(res)
        return SchemeParams(**kw)

    def initial_condition(self, sample_index: int) -> SpectralVelocity:
        ic = self.data["initial"]
        kind = ic.get("kind", "field")
        g = self.geometry
        K = int(ic.get("K", 4))
        if kind == "zero":
            return SpectralVelocity.zeros(g, K)
        if kind == "shear":
            return sine_shear(g, max(K, int(ic.get("mode", 1))), float(ic.get("amplitude", 1.0)),
                              int(ic.get("mode", 1)))
        if kind == "field":
            rng = sample_rng(int(ic.get("seed", 0)), 0, INITIAL_STREAM)
            return random_field(g, K, rng, decay=float(ic.get("decay", 1.0)),
                                amplitude=float(ic.get("amplitude", 1.0)))
        rng = sample_rng(int(self.data["seed"]), sample_index, INITIAL_STREAM)
        return gaussian_initial(g, K, rng, amplitude=float(ic.get("amplitude", 1.0)),
                                decay=float(ic.get("decay", 1.5)))

    def gamma0(self) -> float | None:
        ic = self.data["initial"]
        if ic.get("kind") != "gaussian":
            return None
        if ic.get("gamma0") is not None:
            return float(ic["gamma0"])
        return gaussian_gamma0(self.geometry, int(ic.get("K", 4)), amplitude=float(ic.get("amplitude", 1.0)),
                               decay=float(ic.get("decay", 1.5)))

    def rates(self, M: float | None = None):
        a = self.analysis
        diff = self.diffusion()
        return predicted_rates(float(self.data["nu"]), diff.K0, diff.cov.trace, float(self.data["T"]),
                               q0=int(a["q0"]), Cbar=float(a["Cbar"]), Ctilde=poincare_ctilde(self.geometry),
                               gamma0=self.gamma0(), M=M, delta=float(a["delta"]))

    def ctilde_report(self) -> dict:
        K = int(self.data["K_ref"])
        g = self.geometry
        return {"gradient_vs_stokes": ctilde_stokes(g, K), "v_norm_vs_graph_norm": ctilde_v_norm(g, K),
                "used": poincare_ctilde(g)}

    def mesh_width(self, res: int) -> float:
        kind = self.data["scheme"]
        return self.params(res=res).h(kind)

    # -- serialization -------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        for key, val in kw.items():
            if val is not None:
                d[key] = val
        return ExperimentConfig(d)


def config_bytes(cfg: ExperimentConfig) -> bytes:
    return cfg.to_json().encode()


def config_hash(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig(data)

"""
Coupled multilevel Monte Carlo runs.

Every sample draws one Wiener path at the finest level N_max, advances the
time scheme at (N_max, K_ref) as the reference, and runs each ladder level on
the coarsened path.  Per-sample results are written as JSON files under
``samples/`` and listed in ``manifest.json``; a rerun with the manifest skips
samples that are already on disk.
"""

from __future__ import annotations

import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis import moment_quantities
from ..noise import coarsen_path, sample_path
from ..schemes import SchemeError, compute_error_series, make_space, run_scheme
from .config import ExperimentConfig, config_bytes, config_hash, load_config
from .snapshot import trajectory_to_file

__all__ = ["run_sample", "run_experiment", "load_samples", "RunError", "MANIFEST_NAME"]

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
SAMPLE_DIR = "samples"
TRAJ_DIR = "trajectories"

_SPACES: dict = {}


class RunError(RuntimeError):
    pass


def _space(params):
    key = (params.L, params.m, params.element)
    if key not in _SPACES:
        _SPACES[key] = make_space(params)
    return _SPACES[key]


def _floats(a) -> list:
    return [float(x) for x in np.asarray(a, dtype=float)]


def sample_file(index: int) -> str:
    return f"{SAMPLE_DIR}/sample_{index:06d}.json"


def level_snapshot(index: int, level: int | str) -> str:
    return f"{TRAJ_DIR}/s{index:06d}_{level}.snstraj"


def run_sample(cfg: ExperimentConfig, index: int, out_dir: Path | None = None) -> dict:
    """All per-sample quantities of one coupled multilevel run.

    Failures of a scheme step are caught and returned as a record with
    ``status = "failed"`` and the step index.
    """
    t0 = time.perf_counter()
    seed = int(cfg["seed"])
    a = cfg.analysis
    qs = [int(q) for q in a["moments_q"]]
    diffusion = cfg.diffusion()
    record = {"index": index, "seed": [seed, index]}
    try:
        path = sample_path(diffusion.cov, seed, cfg.N_max, float(cfg["T"]), sample_index=index)
        record["path_checksum"] = path.checksum()
        u0 = cfg.initial_condition(index)
        ref = run_scheme(u0, path, cfg.params(cfg.N_max), "time", diffusion)
        save = bool(a["save_trajectories"]) and out_dir is not None
        if save:
            trajectory_to_file(out_dir / level_snapshot(index, "ref"), ref)
        time_runs = {cfg.N_max: ref}
        levels = []
        for li, (N, res) in enumerate(cfg.levels):
            params = cfg.params(N, res)
            space = _space(params) if cfg["scheme"] == "alg1" else None
            traj = run_scheme(u0, path, params, cfg["scheme"], diffusion, space=space)
            ref_N = ref.restrict(N)
            err = compute_error_series(ref_N, traj)
            lv = {
                "level_index": li,
                "N": N,
                "res": res,
                "path_checksum": coarsen_path(path, path.N // N).checksum(),
                "max_l2_err": err.max_l2_sq,
                "grad_sum_err": err.grad_sum,
                "err_l2_sq": _floats(err.l2_sq),
                "ref_v_norm_sq": _floats(ref_N.v_norm_sq()),
                "scheme_moments": {str(q): moment_quantities(traj, q) for q in qs},
            }
            if cfg["scheme"] == "alg1":
                lv["pressure_sum"] = float(traj.k * np.sum(traj.pressure_grad_sq()))
                lv["max_divergence"] = max((d.get("divergence", 0.0) for d in traj.diagnostics), default=0.0)
            if a["time_at_levels"]:
                if N not in time_runs:
                    time_runs[N] = run_scheme(u0, path, cfg.params(N), "time", diffusion)
                tN = time_runs[N]
                lv["time_moments"] = {str(q): moment_quantities(tN, q) for q in qs}
                lv["time_max_v_norm_sq"] = float(np.max(tN.v_norm_sq()))
            if save:
                trajectory_to_file(out_dir / level_snapshot(index, li), traj)
            levels.append(lv)
        record["levels"] = levels
        record["ref_max_v_norm_sq"] = float(np.max(ref.v_norm_sq()))
        record["picard_max_iterations"] = max((d.get("picard_iterations", 0) for d in ref.diagnostics), default=0)
        record["status"] = "ok"
    except SchemeError as exc:
        record.update(status="failed", error=str(exc), step=exc.step)
    record["seconds"] = time.perf_counter() - t0
    return record


def _worker(args):
    data, index, out_dir = args
    cfg = ExperimentConfig(data)
    try:
        return run_sample(cfg, index, Path(out_dir) if out_dir else None)
    except Exception as exc:  # a crash in one sample must not take down the run
        return {"index": index, "seed": [int(cfg["seed"]), index], "status": "failed",
                "error": f"{type(exc).__name__}: {exc}", "step": None,
                "traceback": traceback.format_exc(), "seconds": 0.0}


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _manifest(cfg: ExperimentConfig, blob: bytes, records: dict, wall: float) -> dict:
    n_levels = len(cfg.levels)
    samples = []
    for i in range(int(cfg["samples"])):
        r = records.get(i)
        entry = {"index": i, "seed": [int(cfg["seed"]), i], "file": sample_file(i),
                 "status": r["status"] if r else "pending"}
        if r:
            entry["seconds"] = r.get("seconds", 0.0)
            if "path_checksum" in r:
                entry["path_checksum"] = r["path_checksum"]
                entry["level_path_checksums"] = [lv["path_checksum"] for lv in r.get("levels", [])]
            if r["status"] != "ok":
                entry["error"] = r.get("error")
                entry["step"] = r.get("step")
        samples.append(entry)
    level_files = []
    for li, (N, res) in enumerate(cfg.levels):
        f = {"level_index": li, "N": N, "res": res}
        if cfg.analysis["save_trajectories"]:
            f["trajectory_pattern"] = level_snapshot(0, li).replace("s000000", "s{index:06d}")
        level_files.append(f)
    return {
        "format": "stochns-manifest",
        "schema_version": 1,
        "code_version": __version__,
        "config_file": CONFIG_NAME,
        "config_sha256": config_hash(blob),
        "master_seed": int(cfg["seed"]),
        "samples": samples,
        "levels": level_files,
        "completed": sum(1 for s in samples if s["status"] == "ok"),
        "failed": sum(1 for s in samples if s["status"] == "failed"),
        "wall_seconds": wall,
        "sample_seconds": sum(s.get("seconds", 0.0) for s in samples),
        "n_levels": n_levels,
    }


def _open_resume(manifest_path: Path) -> tuple[ExperimentConfig, Path, bytes]:
    with open(manifest_path) as fh:
        man = json.load(fh)
    out_dir = manifest_path.parent
    blob = (out_dir / man["config_file"]).read_bytes()
    if config_hash(blob) != man["config_sha256"]:
        raise RunError("stored config does not match the manifest hash")
    return load_config(out_dir / man["config_file"]), out_dir, blob


def load_samples(out_dir: Path, cfg: ExperimentConfig) -> dict:
    """Per-sample records found on disk, keyed by sample index."""
    out = {}
    for i in range(int(cfg["samples"])):
        p = Path(out_dir) / sample_file(i)
        if p.exists():
            with open(p) as fh:
                out[i] = json.load(fh)
    return out


def run_experiment(cfg: ExperimentConfig | None = None, out_dir=None, *, threads: int = 1,
                   resume=None, progress=None) -> tuple[dict, dict]:
    """Run (or resume) every sample; returns (manifest, records by index).

    ``resume`` is the path of an existing manifest; its stored config is used
    and samples already on disk are not recomputed.
    """
    t0 = time.perf_counter()
    if resume is not None:
        cfg, out_dir, blob = _open_resume(Path(resume))
    else:
        if cfg is None or out_dir is None:
            raise ValueError("a config and an output directory are required")
        out_dir = Path(out_dir)
        blob = config_bytes(cfg)
        out_dir.mkdir(parents=True, exist_ok=True)
        cpath = out_dir / CONFIG_NAME
        if cpath.exists() and cpath.read_bytes() != blob:
            raise RunError(f"{out_dir} holds a different experiment; use a fresh --out or --resume")
        cpath.write_bytes(blob)
    try:
        (out_dir / SAMPLE_DIR).mkdir(parents=True, exist_ok=True)
        if cfg.analysis["save_trajectories"]:
            (out_dir / TRAJ_DIR).mkdir(exist_ok=True)
    except OSError as exc:
        raise RunError(f"cannot write to {out_dir}: {exc}") from exc
    records = load_samples(out_dir, cfg) if resume is not None else {}
    records = {i: r for i, r in records.items() if r.get("status") == "ok"}
    pending = [i for i in range(int(cfg["samples"])) if i not in records]
    jobs = [(cfg.data, i, str(out_dir)) for i in pending]
    manifest_path = out_dir / MANIFEST_NAME

    def finish(rec):
        records[rec["index"]] = rec
        _write_json(out_dir / sample_file(rec["index"]), rec)
        if progress:
            progress(rec)

    _write_json(manifest_path, _manifest(cfg, blob, records, 0.0))
    if threads <= 1 or len(jobs) <= 1:
        for job in jobs:
            finish(_worker(job))
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for rec in pool.map(_worker, jobs):  # map preserves sample order
                finish(rec)
    manifest = _manifest(cfg, blob, records, time.perf_counter() - t0)
    _write_json(manifest_path, manifest)
    return manifest, dict(sorted(records.items()))

"""
Little-endian binary containers.

Trajectory snapshot (``SNSTRAJ``), 80-byte header followed by the body:

    offset  size  field
    0       8     magic b"SNSTRAJ\\0"
    8       4     u32 format version (1)
    12      4     u32 kind: 0 time scheme, 1 finite elements, 2 divergence-free spectral
    16      32    sha256 digest of the canonical parameter JSON
    48      8     f64 side length L
    56      8     u64 N (number of steps; the body holds N + 1 blocks)
    64      8     u64 block length (float64 values per state)
    72      8     u64 aux: spectral cutoff K, or the number of scalar velocity dofs
    80      ...   (N + 1) * block_len f64 values, one block per time level

Spectral blocks hold the real parts of the (2, 2K+1, 2K+1) coefficient
array in C order followed by the imaginary parts.  Finite-element blocks hold
the velocity vector U (component-blocked) followed by the pressure Pi.

Array bundle (``SNSARRS``), used for mesh and operator dumps:

    magic b"SNSARRS\\0", u32 version, u32 count, then per array:
    u32 name length, UTF-8 name, u32 dtype code (0 float64, 1 int64),
    u32 ndim, ndim x u64 shape, raw little-endian data in C order.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

__all__ = [
    "TRAJ_MAGIC",
    "ARRS_MAGIC",
    "KIND_CODES",
    "params_digest",
    "write_trajectory",
    "read_trajectory",
    "trajectory_to_file",
    "write_arrays",
    "read_arrays",
    "dump_mesh",
    "dump_operators",
]

TRAJ_MAGIC = b"SNSTRAJ\0"
ARRS_MAGIC = b"SNSARRS\0"
VERSION = 1
KIND_CODES = {"time": 0, "alg1": 1, "alg2": 2}
_HEADER = struct.Struct("<8sII32sdQQQ")
assert _HEADER.size == 80


def params_digest(params: dict) -> bytes:
    blob = json.dumps(params, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).digest()


def write_trajectory(path, kind: str, L: float, aux: int, blocks: np.ndarray, params: dict) -> None:
    blocks = np.ascontiguousarray(blocks, dtype="<f8")
    if blocks.ndim != 2:
        raise ValueError("blocks must be a 2-D array (N + 1, block_len)")
    header = _HEADER.pack(TRAJ_MAGIC, VERSION, KIND_CODES[kind], params_digest(params), float(L),
                          blocks.shape[0] - 1, blocks.shape[1], int(aux))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(blocks.tobytes())


def read_trajectory(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, kind, digest, L, N, block, aux = _HEADER.unpack_from(raw, 0)
    if magic != TRAJ_MAGIC:
        raise ValueError(f"{path}: not a trajectory snapshot")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != (N + 1) * block:
        raise ValueError(f"{path}: truncated body")
    names = {v: k for k, v in KIND_CODES.items()}
    header = dict(kind=names[kind], params_sha256=digest.hex(), L=L, N=N, block_len=block, aux=aux)
    return header, body.reshape(N + 1, block).copy()


def trajectory_to_file(path, traj) -> None:
    """Write a schemes.Trajectory."""
    from dataclasses import asdict
    aux = traj.states[0].K if traj.spectral else traj.space.n_vel
    write_trajectory(path, traj.kind, traj.params.L, aux, traj.to_array(), asdict(traj.params))


_DTYPES = {0: "<f8", 1: "<i8"}


def write_arrays(path, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(ARRS_MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            code = 1 if np.issubdtype(arr.dtype, np.integer) else 0
            data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<II", code, data.ndim))
            fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            fh.write(data.tobytes())


def read_arrays(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != ARRS_MAGIC:
        raise ValueError(f"{path}: not an array bundle")
    version, count = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = 16
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + n].decode()
        off += n
        code, ndim = struct.unpack_from("<II", raw, off)
        off += 8
        shape = struct.unpack_from(f"<{ndim}Q", raw, off)
        off += 8 * ndim
        count_items = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(raw, dtype=_DTYPES[code], count=count_items, offset=off).reshape(shape)
        off += 8 * count_items
        out[name] = arr.copy()
    return out


def dump_mesh(path, mesh) -> None:
    write_arrays(path, {
        "m": np.array([mesh.m]),
        "L": np.array([mesh.geometry.L]),
        "triangles": mesh.triangles,
        "edges": mesh.edges,
        "coords": mesh.coords,
        "vertex_coords": mesh.vertex_coords,
    })


def dump_operators(path, ops) -> None:
    arrays = {}
    for name in ("M", "S", "Mp", "Sp", "B"):
        A = getattr(ops, name).tocoo()
        arrays[f"{name}.row"] = A.row.astype(np.int64)
        arrays[f"{name}.col"] = A.col.astype(np.int64)
        arrays[f"{name}.val"] = A.data
        arrays[f"{name}.shape"] = np.array(A.shape, dtype=np.int64)
    arrays["vel_mean"] = ops.vel_mean
    arrays["pres_mean"] = ops.pres_mean
    write_arrays(path, arrays)

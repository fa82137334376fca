"""On-disk formats: field snapshots, hashed CSV tables, atomic writes.

Snapshot layout: one UTF-8 JSON header line terminated by ``\\n``, followed
by ``N*N*4`` little-endian float64 values.  Modes run row-major over xi_1
then xi_2, each from ``-N/2`` to ``N/2 - 1``; every mode stores
``(Re u1, Im u1, Re u2, Im u2)``.  Several snapshots may be concatenated in
one file.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .spectral import NORMALIZATION_TAG, SpectralVelocity, leray_project, space

SNAPSHOT_FORMAT = "mvns-snapshot-1"


def _block(u: SpectralVelocity) -> bytes:
    c = np.fft.fftshift(u.coeffs, axes=(-2, -1))     # (2, N, N), xi from -N/2
    arr = np.empty((u.N, u.N, 4), dtype="<f8")
    arr[..., 0], arr[..., 1] = c[0].real, c[0].imag
    arr[..., 2], arr[..., 3] = c[1].real, c[1].imag
    return arr.tobytes()


def snapshot_bytes(u: SpectralVelocity, nu: float, time: float, **extra) -> bytes:
    header = {"format": SNAPSHOT_FORMAT, "N": u.N, "nu": nu, "time": time,
              "normalization": NORMALIZATION_TAG, "order": "xi1-major,xi2-minor,from -N/2",
              "dtype": "<f8", **extra}
    return json.dumps(header, sort_keys=True).encode() + b"\n" + _block(u)


def read_snapshots(data: bytes) -> list[tuple[dict, SpectralVelocity]]:
    out = []
    pos = 0
    while pos < len(data):
        nl = data.index(b"\n", pos)
        header = json.loads(data[pos:nl])
        if header.get("normalization") != NORMALIZATION_TAG:
            raise ValueError(f"unsupported normalization {header.get('normalization')!r}")
        N = int(header["N"])
        size = N * N * 4 * 8
        arr = np.frombuffer(data[nl + 1:nl + 1 + size], dtype="<f8").reshape(N, N, 4)
        if arr.shape[0] != N:
            raise ValueError("truncated snapshot block")
        c = np.stack([arr[..., 0] + 1j * arr[..., 1], arr[..., 2] + 1j * arr[..., 3]])
        c = np.fft.ifftshift(c, axes=(-2, -1))
        out.append((header, leray_project(space(N), c)))
        pos = nl + 1 + size
    return out


def write_snapshot(path, u: SpectralVelocity, nu: float, time: float, **extra):
    atomic_write(path, snapshot_bytes(u, nu, time, **extra))


def load_snapshot(path) -> tuple[dict, SpectralVelocity]:
    return read_snapshots(Path(path).read_bytes())[0]


def atomic_write(path, data: bytes | str):
    """Write to a temporary sibling and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes()) if path and Path(path).exists() else "none"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def csv_text(columns, rows, config_hash: str, constants_hash: str) -> str:
    """RFC-4180 table preceded by one ``#`` provenance line."""
    buf = io.StringIO()
    buf.write(f"# config_sha256={config_hash} constants_sha256={constants_hash}\r\n")
    wr = csv.writer(buf, lineterminator="\r\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()

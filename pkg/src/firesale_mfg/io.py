"""File formats: field CSV, binary field snapshots, per-step tables, run manifests.

Field CSV
    Header ``q\\x,<x_0>,...,<x_N>``; every following row is ``<q_i>,<y_i0>,...``.
    Rows run over the q index and columns over the x index.

Binary field snapshot (little-endian)
    4 bytes magic ``b"MFGF"``, uint32 format version (1), uint32 ``ndim``,
    ``ndim`` x uint64 extents, then the values as float64 in row-major order.

Numbers are written with 17 significant digits, so files round-trip exactly
and identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MFGF"
BINARY_VERSION = 1

DIAGNOSTICS_COLUMNS = [
    "t",
    "mass",
    "liquidation_intensity",
    "mean_q",
    "mean_x",
    "mean_q_surviving",
    "mean_x_surviving",
    "mu",
    "active",
    "liquidation",
]
DRIFT_COLUMNS = ["t", "mu", "active", "liquidation", "contribution", "boundary_flux"]
CLOSED_FORM_COLUMNS = ["t", "h0", "h1", "h2", "E", "mu_bar"]


def fmt(v) -> str:
    v = float(v)
    if v == 0.0:
        return "0"  # also folds -0.0
    return format(v, ".17g")


def write_table(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_table(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if data.size == 0:
        data = np.empty((0, len(header)))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_columns(path, columns: dict) -> Path:
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    return write_table(path, names, zip(*arrays))


def write_field_csv(path, field, q, x) -> Path:
    field = np.asarray(field, dtype=float)
    if field.shape != (len(q), len(x)):
        raise ValueError(f"field shape {field.shape} does not match grid ({len(q)}, {len(x)})")
    header = ["q\\x"] + [fmt(v) for v in x]
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for qi, row in zip(q, field):
            w.writerow([fmt(qi)] + [fmt(v) for v in row])
    return path


def read_field_csv(path):
    """Returns ``(field, q, x)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    x = np.array([float(v) for v in rows[0][1:]])
    body = np.array([[float(v) for v in r] for r in rows[1:] if r])
    return body[:, 1:], body[:, 0], x


def write_binary(path, array) -> Path:
    a = np.ascontiguousarray(array, dtype="<f8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", BINARY_VERSION, a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes(order="C"))
    return path


def read_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a field snapshot (bad magic {blob[:4]!r})")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != BINARY_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    shape = struct.unpack_from(f"<{ndim}Q", blob, 12)
    offset = 12 + 8 * ndim
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return data.reshape(shape).astype(float)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def read_json(path):
    return json.loads(Path(path).read_text())


MANIFEST_NAME = "manifest.json"


def artifact_entries(out_dir) -> list[dict]:
    """Every file under ``out_dir`` except the manifest, sorted, with size and digest."""
    out_dir = Path(out_dir)
    entries = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            entries.append(
                {"path": p.relative_to(out_dir).as_posix(), "bytes": p.stat().st_size, "sha256": sha256_file(p)}
            )
    return entries

"""File formats: GSQG1 field snapshots, CSV exports, trajectory JSONL, manifests.

GSQG1 layout (little-endian):

    magic   5 bytes  b"GSQG1"
    N       int32
    s       float64
    count   int64
    count records of (k1 int32, k2 int32, re float64, im float64)

Records list the nonzero coefficients in FFT storage order.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .spectral import FourierField, SpectralGrid

MAGIC = b"GSQG1"
_HEADER = struct.Struct("<5sidq")
RECORD_DTYPE = np.dtype([("k1", "<i4"), ("k2", "<i4"), ("re", "<f8"), ("im", "<f8")])


class FormatError(ValueError):
    pass


def _records(f: FourierField) -> np.ndarray:
    g = f.grid
    idx = np.nonzero(f.coeffs)
    rec = np.empty(len(idx[0]), RECORD_DTYPE)
    rec["k1"] = g.k1[idx]
    rec["k2"] = g.k2[idx]
    rec["re"] = f.coeffs[idx].real
    rec["im"] = f.coeffs[idx].imag
    return rec


def field_to_bytes(f: FourierField, s: float) -> bytes:
    rec = _records(f)
    return _HEADER.pack(MAGIC, f.grid.N, float(s), len(rec)) + rec.tobytes()


def field_from_bytes(buf: bytes, dealias_cutoff: int | None = None) -> tuple[FourierField, float]:
    """Decode a GSQG1 blob; returns (field, s)."""
    if len(buf) < _HEADER.size:
        raise FormatError("truncated GSQG1 header")
    magic, N, s, count = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}; expected {MAGIC!r}")
    body = buf[_HEADER.size:]
    if len(body) != count * RECORD_DTYPE.itemsize:
        raise FormatError(f"expected {count} records, found {len(body) / RECORD_DTYPE.itemsize:g}")
    rec = np.frombuffer(body, RECORD_DTYPE)
    grid = SpectralGrid(int(N), dealias_cutoff)
    c = np.zeros((N, N), np.complex128)
    c[rec["k1"] % N, rec["k2"] % N] = rec["re"] + 1j * rec["im"]
    return FourierField(grid, c), float(s)


def write_field(path, f: FourierField, s: float) -> None:
    Path(path).write_bytes(field_to_bytes(f, s))


def read_field(path, dealias_cutoff: int | None = None) -> tuple[FourierField, float]:
    return field_from_bytes(Path(path).read_bytes(), dealias_cutoff)


def write_field_csv(path, f: FourierField) -> None:
    rec = _records(f)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k1", "k2", "re", "im"])
        for r in rec:
            w.writerow([int(r["k1"]), int(r["k2"]), repr(float(r["re"])), repr(float(r["im"]))])


def read_field_csv(path, N: int, dealias_cutoff: int | None = None) -> FourierField:
    grid = SpectralGrid(N, dealias_cutoff)
    c = np.zeros((N, N), np.complex128)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            c[int(row["k1"]) % N, int(row["k2"]) % N] = complex(float(row["re"]), float(row["im"]))
    return FourierField(grid, c)


def write_path_csv(path, bpath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "W"])
        for t, v in zip(bpath.times, bpath.values):
            w.writerow([repr(float(t)), repr(float(v))])


def read_path_csv(path):
    from .stochastic import BrownianPath

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise FormatError("path CSV needs at least two rows")
    t = np.array([float(r["t"]) for r in rows])
    w = np.array([float(r["W"]) for r in rows])
    return BrownianPath.from_values(w, float(t[1] - t[0]))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV: fixed column order, repr floats, '' for missing, \\n line ends."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])


def write_crossings_csv(path, crossing_times) -> None:
    rows = []
    for i, t in enumerate(crossing_times):
        hit = t is not None and not np.isnan(t)
        rows.append({"path_index": i, "crossed": hit, "crossing_time": float(t) if hit else None})
    write_rows_csv(path, ["path_index", "crossed", "crossing_time"], rows)


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_trajectory_jsonl(path, record) -> None:
    with open(path, "w") as fh:
        for row in record.rows():
            fh.write(json.dumps(row) + "\n")


def read_trajectory_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")

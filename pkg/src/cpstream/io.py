"""On-disk formats: a small binary container for dense tensors, and CSV
round-trips for factor matrices and convergence traces.

Binary layout (little-endian throughout): magic b"NTEN", one version byte
(0x01), uint32 order N, N uint64 extents, then the entries as IEEE-754
doubles in row-major order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .diagnostics import ConvergenceTrace
from .errors import InvalidShapeError
from .tensor import DenseTensor, _as_array

MAGIC = b"NTEN"
VERSION = 1


def write_tensor(path, t) -> None:
    data = _as_array(t)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", data.ndim))
        fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_tensor(path) -> DenseTensor:
    raw = Path(path).read_bytes()
    if len(raw) < 9 or raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor file (bad magic)")
    if raw[4] != VERSION:
        raise ValueError(f"{path}: unsupported version {raw[4]}")
    (order,) = struct.unpack_from("<I", raw, 5)
    header_end = 9 + 8 * order
    if order < 2 or len(raw) < header_end:
        raise ValueError(f"{path}: truncated header (order {order})")
    dims = struct.unpack_from(f"<{order}Q", raw, 9)
    size = int(np.prod(dims))
    if len(raw) != header_end + 8 * size:
        raise ValueError(
            f"{path}: payload is {len(raw) - header_end} bytes, "
            f"expected {8 * size} for extents {dims}"
        )
    data = np.frombuffer(raw, dtype="<f8", count=size, offset=header_end)
    return DenseTensor(data.reshape(dims).astype(np.float64))


def write_matrix_csv(path, mat) -> None:
    """Matrix as CSV with header row c1..cR."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise InvalidShapeError(f"expected a matrix, got ndim={mat.ndim}")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"c{j + 1}" for j in range(mat.shape[1])])
        for row in mat:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "c1":
        raise ValueError(f"{path}: missing c1..cR header row")
    width = len(rows[0])
    if rows[0] != [f"c{j + 1}" for j in range(width)]:
        raise ValueError(f"{path}: malformed header {rows[0][:4]}...")
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body):
        if len(r) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(r)} fields, expected {width}")
    return np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(
        len(body), width
    )


def write_trace_csv(path, trace: ConvergenceTrace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "rmse", "fit", "wall_ms"])
        for e in trace.entries:
            writer.writerow([e.t, repr(e.rmse), repr(e.fit), repr(e.wall_ms)])


def read_trace_csv(path) -> ConvergenceTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "rmse", "fit", "wall_ms"]:
            raise ValueError(f"{path}: expected header t,rmse,fit,wall_ms")
        trace = ConvergenceTrace()
        for row in reader:
            if not row:
                continue
            trace.add(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
    return trace

"""Dense matrix files: text CSV by default, raw binary for large data.

The binary layout is an 8-byte magic, two little-endian uint64 dimensions,
then row-major float64 payload. `load_matrix` sniffs the magic so callers
never have to say which format a file uses.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"CSMAT01\n"


def save_matrix_csv(path, M: np.ndarray) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"v{j}" for j in range(M.shape[1])])
        for row in M:
            writer.writerow([repr(float(x)) for x in row])


def save_matrix_binary(path, M: np.ndarray) -> None:
    M = np.ascontiguousarray(np.atleast_2d(M), dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.array(M.shape, dtype="<u8").tobytes())
        fh.write(M.astype("<f8", copy=False).tobytes())


def load_matrix(path) -> np.ndarray:
    """Load a matrix file, auto-detecting binary vs CSV."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head == MAGIC:
            dims = np.frombuffer(fh.read(16), dtype="<u8")
            if dims.size != 2:
                raise ValidationError(f"{path}: truncated binary matrix header")
            rows, cols = int(dims[0]), int(dims[1])
            payload = fh.read()
            expected = rows * cols * 8
            if len(payload) != expected:
                raise ValidationError(
                    f"{path}: expected {expected} payload bytes, got {len(payload)}")
            return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()

    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty matrix file")
        width = len(header)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise ValidationError(
                    f"{path}:{lineno}: expected {width} columns, got {len(rec)}")
            try:
                rows.append([float(x) for x in rec])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric entry")
    if not rows:
        raise ValidationError(f"{path}: matrix file has a header but no rows")
    return np.array(rows, dtype=np.float64)


def save_matrix(path, M: np.ndarray, binary: bool = False) -> None:
    if binary:
        save_matrix_binary(path, M)
    else:
        save_matrix_csv(path, M)

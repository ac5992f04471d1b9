"""File formats: binary/CSV matrices, eigenvalue CSVs, strategy tables.

Binary matrix layout: a 16-byte header (magic "JHSV", u32 rows, u32 cols,
u32 flags, little-endian), an optional u32 n_plus immediately after the
header when flags bit 0 is set, then the entries as little-endian float64
in column-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .blockkernel import Signature
from .strategy import PStrategy, dump_strategy, parse_strategy

MAGIC = b"JHSV"
FLAG_SIGNATURE = 1


class FormatError(ValueError):
    pass


def write_matrix(path, g: np.ndarray, signature: Optional[Signature] = None) -> None:
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 2:
        raise FormatError("only 2-d matrices are supported")
    rows, cols = g.shape
    flags = FLAG_SIGNATURE if signature is not None else 0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", MAGIC, rows, cols, flags))
        if signature is not None:
            if signature.n != cols:
                raise FormatError("signature order must match the column count")
            fh.write(struct.pack("<I", signature.n_plus))
        fh.write(g.tobytes(order="F"))


def read_matrix(path) -> tuple[np.ndarray, Optional[Signature]]:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a JHSV matrix file")
    _, rows, cols, flags = struct.unpack("<4sIII", data[:16])
    offset = 16
    signature = None
    if flags & FLAG_SIGNATURE:
        if len(data) < 20:
            raise FormatError(f"{path}: truncated signature field")
        (n_plus,) = struct.unpack("<I", data[16:20])
        offset = 20
        signature = Signature(cols, n_plus)
    need = rows * cols * 8
    if len(data) - offset != need:
        raise FormatError(
            f"{path}: expected {need} payload bytes, found {len(data) - offset}"
        )
    flat = np.frombuffer(data, dtype="<f8", offset=offset, count=rows * cols)
    g = np.asfortranarray(flat.reshape((rows, cols), order="F"))
    return g, signature


def write_matrix_csv(path, g: np.ndarray) -> None:
    np.savetxt(path, np.asarray(g, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_matrix_csv(path) -> np.ndarray:
    g = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asfortranarray(g.astype(np.float64))


def write_lambda_csv(path, lam) -> None:
    np.savetxt(path, np.asarray(lam, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_lambda_csv(path) -> np.ndarray:
    lam = np.loadtxt(path, delimiter=",")
    return np.atleast_1d(lam.astype(np.float64))


def save_strategy(path, strat: PStrategy) -> None:
    Path(path).write_text(dump_strategy(strat))


def load_strategy(path, kind: str = "custom") -> PStrategy:
    return parse_strategy(Path(path).read_text(), kind=kind)

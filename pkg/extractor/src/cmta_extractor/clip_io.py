"""Writer for the .cmta embedding-clip wire format and its manifest CSV.

This module is the extractor's own implementation of the downstream wire
format; the detector package is consumed only through these on-disk
contracts, never imported.

Layout (little-endian): magic ``CMTA``, u16 version (1), u32 frame count N,
u32 d_v, u32 d_e, u8 label, then N*d_v float32 visual embeddings followed by
N*d_e float32 textual embeddings, both row-major.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"CMTA"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIB")


class ClipWriteError(Exception):
    """Raised when embeddings cannot be serialized as a valid clip."""


def write_clip(
    path: str | Path,
    visual: np.ndarray,
    textual: np.ndarray,
    label: int,
) -> None:
    """Atomically write one embedding clip.

    The file is staged in a temp file alongside the destination and moved
    into place with ``os.replace``, so readers never observe a partial file
    and reruns overwrite deterministically.
    """
    visual = np.ascontiguousarray(visual, dtype=np.float32)
    textual = np.ascontiguousarray(textual, dtype=np.float32)
    if visual.ndim != 2 or textual.ndim != 2:
        raise ClipWriteError(
            f"embeddings must be 2-D, got visual {visual.shape} "
            f"textual {textual.shape}"
        )
    if visual.shape[0] != textual.shape[0]:
        raise ClipWriteError(
            f"frame count mismatch: visual has {visual.shape[0]} rows, "
            f"textual has {textual.shape[0]}"
        )
    if visual.shape[0] == 0:
        raise ClipWriteError("clip must contain at least one frame")
    if label not in (0, 1):
        raise ClipWriteError(f"label must be 0 or 1, got {label!r}")
    if not np.isfinite(visual).all() or not np.isfinite(textual).all():
        raise ClipWriteError("embeddings contain non-finite values")

    n, d_v = visual.shape
    d_e = textual.shape[1]
    path = Path(path)
    payload = (
        _HEADER.pack(MAGIC, VERSION, n, d_v, d_e, label)
        + visual.tobytes()
        + textual.tobytes()
    )
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_manifest(
    path: str | Path,
    rows: Iterable[Sequence[object]],
) -> None:
    """Write a manifest CSV with header ``path,label,subset``.

    Each row is (path, label, subset); paths should be relative to the
    manifest's directory so the dataset stays relocatable.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "label", "subset"])
            for row in rows:
                writer.writerow(list(row))
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise

"""Writers for the pipeline's binary wire formats.

EMB1: magic "EMB1", u32 LE rows, u32 LE dim, normalized flag byte, then
rows*dim float32 LE row-major. LAB1: magic "LAB1", u32 N, u32 K, N u32
labels. A JSON sidecar `<stem>.json` carries names/source/dim. The formats
are deliberately small enough to reimplement here so the extractor has no
import-time dependency on the consumer.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


def write_emb(values: np.ndarray, path: str | Path, normalized: bool) -> None:
    v = np.ascontiguousarray(values, dtype="<f4")
    if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("refusing to write non-finite values")
    with open(path, "wb") as fh:
        fh.write(b"EMB1" + struct.pack("<II", v.shape[0], v.shape[1]))
        fh.write(bytes([int(normalized)]))
        fh.write(v.tobytes())


def write_lab(labels: np.ndarray, num_classes: int, path: str | Path) -> None:
    v = np.asarray(labels)
    if v.min() < 0 or v.max() >= num_classes:
        raise ValueError("label outside [0, num_classes)")
    with open(path, "wb") as fh:
        fh.write(b"LAB1" + struct.pack("<II", v.size, num_classes))
        fh.write(v.astype("<u4").tobytes())


def write_sidecar(path: str | Path, names: list[str], source: str, dim: int) -> None:
    meta = {"names": names, "source": source, "dim": dim}
    Path(path).with_suffix(".json").write_text(
        json.dumps(meta, indent=2, sort_keys=True)
    )


def l2_normalize(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding row")
    return (v / norms[:, None]).astype(np.float32)

"""Representation-matrix heatmap export and its numeric companion check.

The heatmap sorts rows of C by true class and renders them as a grayscale
PNG with a 1-pixel rule between classes.  Because no test should depend on
pixels, every export also computes the within-class vs between-class mean
row correlation and writes it to a JSON sidecar.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .embio import LabelVector
from .errors import IoFailure, LengthMismatch

BOUNDARY_GRAY = 255  # class-separator rule brightness


MAX_CORRELATION_ROWS = 2000  # caps the pairwise matrix at desk-memory scale


def class_correlation_gap(
    c: np.ndarray, truth: LabelVector, max_rows: int = MAX_CORRELATION_ROWS
) -> tuple[float, float]:
    """Mean Pearson correlation of row pairs within vs between true classes.

    Rows are strided down deterministically when there are more than
    ``max_rows`` of them.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != len(truth):
        raise LengthMismatch(f"{c.shape[0]} rows vs {len(truth)} labels")
    labels = truth.values
    n = c.shape[0]
    if n > max_rows:
        stride = int(np.ceil(n / max_rows))
        keep = np.arange(0, n, stride)
        c = c[keep]
        labels = labels[keep]
        n = keep.size
    centered = c - c.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    unit = centered / norms[:, None]
    corr = unit @ unit.T
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    within_mask = same & off_diag
    between_mask = ~same
    within = float(corr[within_mask].mean()) if within_mask.any() else 1.0
    between = float(corr[between_mask].mean()) if between_mask.any() else 0.0
    return within, between


def export_heatmap(c: np.ndarray, truth: LabelVector, path: str | Path) -> dict:
    """Write the class-sorted grayscale heatmap PNG plus a stats sidecar."""
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != len(truth):
        raise LengthMismatch(f"{c.shape[0]} rows vs {len(truth)} labels")
    order = np.argsort(truth.values, kind="stable")
    sorted_c = c[order]
    sorted_labels = truth.values[order]

    lo, hi = sorted_c.min(), sorted_c.max()
    scale = hi - lo if hi > lo else 1.0
    gray = np.round((sorted_c - lo) / scale * 255.0).astype(np.uint8)

    boundaries = np.flatnonzero(np.diff(sorted_labels)) + 1
    row_chunks = []
    prev = 0
    for b in boundaries:
        row_chunks.append(gray[prev:b])
        row_chunks.append(
            np.full((1, gray.shape[1]), BOUNDARY_GRAY, dtype=np.uint8)
        )
        prev = b
    row_chunks.append(gray[prev:])
    canvas = np.vstack(row_chunks)

    try:
        Image.fromarray(canvas, mode="L").save(path, format="PNG")
    except OSError as e:
        raise IoFailure(f"cannot write heatmap {path}: {e}") from e

    within, between = class_correlation_gap(c, truth)
    stats = {
        "within_class_row_correlation": within,
        "between_class_row_correlation": between,
        "gap": within - between,
        "rows": int(c.shape[0]),
        "cols": int(c.shape[1]),
    }
    Path(str(path) + ".stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True)
    )
    return stats

"""K-means clustering and the NMI / ACC / ARI metric suite.

K-means uses k-means++ seeding, Lloyd iterations with deterministic
tie-breaking (lowest center index on equal distance), empty-cluster repair by
reseeding from the farthest point, and seeded restarts keeping the lowest
inertia.  ACC is Hungarian-matched; NMI uses arithmetic-mean normalization;
all three metrics come from one contingency table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .embio import LabelVector
from .errors import KTooLarge, LengthMismatch, NonSquare


@dataclass(frozen=True)
class KMeansResult:
    labels: LabelVector
    centers: np.ndarray
    inertia: float
    iterations: int
    inertia_trace: tuple[float, ...]


@dataclass(frozen=True)
class MetricsReport:
    nmi: float
    acc: float
    ari: float
    matching: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "nmi": self.nmi,
            "acc": self.acc,
            "ari": self.ari,
            "matching": list(self.matching),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # |x - c|^2 = |x|^2 - 2 x.c + |c|^2; clip tiny negatives from cancellation
    d2 = (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = _squared_distances(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all points coincide with chosen centers; any point works
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, _squared_distances(x, centers[j : j + 1])[:, 0])
    return centers


def _repair_empty(labels: np.ndarray, d2: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k)
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return labels
    assigned = d2[np.arange(labels.size), labels].copy()
    for c in empties:
        far = int(np.argmax(assigned))
        labels[far] = c
        assigned[far] = -1.0  # each donor point reseeds at most one cluster
    return labels


def _lloyd(
    x: np.ndarray, init: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, int, list[float]]:
    k = init.shape[0]
    centers = init.copy()
    trace: list[float] = []
    labels = np.zeros(x.shape[0], dtype=np.int64)
    iterations = 0
    for it in range(max_iter):
        d2 = _squared_distances(x, centers)
        labels = np.argmin(d2, axis=1)  # ties -> lowest center index
        labels = _repair_empty(labels, d2, k)
        trace.append(float(d2[np.arange(x.shape[0]), labels].sum()))
        new_centers = np.empty_like(centers)
        for c in range(k):
            new_centers[c] = x[labels == c].mean(axis=0)
        shift = float(((new_centers - centers) ** 2).sum())
        centers = new_centers
        iterations = it + 1
        if shift < tol:
            break
    # final assignment against the final centers so the nearest-center
    # property holds for what we return
    d2 = _squared_distances(x, centers)
    labels = np.argmin(d2, axis=1)
    labels = _repair_empty(labels, d2, k)
    inertia = float(d2[np.arange(x.shape[0]), labels].sum())
    trace.append(inertia)
    return labels, centers, inertia, iterations, trace


def kmeans(
    data: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    restarts: int = 10,
) -> KMeansResult:
    """Run restarted k-means++ / Lloyd on the rows of ``data``."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise KTooLarge(f"expected 2-D data, got ndim={x.ndim}")
    n = x.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} samples")
    if k < 1 or max_iter < 1:
        raise KTooLarge("k and max_iter must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        init = _kmeans_pp_init(x, k, rng)
        labels, centers, inertia, iters, trace = _lloyd(x, init, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, iters, trace)
    labels, centers, inertia, iters, trace = best
    return KMeansResult(
        labels=LabelVector(labels, num_classes=k),
        centers=centers,
        inertia=inertia,
        iterations=iters,
        inertia_trace=tuple(trace),
    )


# --- metrics ---

def contingency_table(pred: LabelVector, truth: LabelVector) -> np.ndarray:
    """Square count matrix, rows = predicted classes, cols = true classes."""
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} truths")
    k = max(pred.num_classes, truth.num_classes)
    table = np.zeros((k, k), dtype=np.int64)
    np.add.at(table, (pred.values, truth.values), 1)
    return table


def hungarian_match(contingency: np.ndarray) -> tuple[tuple[int, ...], int]:
    """Permutation of columns maximizing the trace, plus the matched count."""
    c = np.asarray(contingency)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise NonSquare(f"contingency shape {c.shape} is not square")
    rows, cols = linear_sum_assignment(-c)
    perm = np.empty(c.shape[0], dtype=np.int64)
    perm[rows] = cols
    matched = int(c[rows, cols].sum())
    return tuple(int(p) for p in perm), matched


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def _mutual_information(table: np.ndarray) -> float:
    n = table.sum()
    nz = table > 0
    pij = table[nz] / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))[nz] / (n * n)
    return float((pij * np.log(pij / outer)).sum())


def _nmi(table: np.ndarray) -> float:
    hu = _entropy(table.sum(axis=1))
    hv = _entropy(table.sum(axis=0))
    if hu == 0.0 and hv == 0.0:
        return 1.0  # both trivial single-cluster partitions
    denom = 0.5 * (hu + hv)
    if denom == 0.0:
        return 0.0
    return _mutual_information(table) / denom


def _comb2(x: np.ndarray) -> np.ndarray:
    return x * (x - 1) / 2.0


def _ari(table: np.ndarray) -> float:
    n = table.sum()
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    # degenerate splits (single cluster on both sides, or all singletons)
    # count as perfect agreement
    if (
        np.count_nonzero(a) == np.count_nonzero(b) == 1
        or (np.count_nonzero(a) == n and np.count_nonzero(b) == n)
    ):
        return 1.0
    sum_comb = _comb2(table.astype(np.float64)).sum()
    sum_a = _comb2(a.astype(np.float64)).sum()
    sum_b = _comb2(b.astype(np.float64)).sum()
    expected = sum_a * sum_b / _comb2(np.float64(n))
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_comb - expected) / (max_index - expected))


def evaluate(pred: LabelVector, truth: LabelVector) -> MetricsReport:
    """NMI / Hungarian-matched ACC / ARI from one contingency table."""
    table = contingency_table(pred, truth)
    matching, matched = hungarian_match(table)
    acc = matched / len(pred)
    return MetricsReport(
        nmi=_nmi(table), acc=acc, ari=_ari(table), matching=matching
    )

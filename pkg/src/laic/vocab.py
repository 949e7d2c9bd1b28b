"""Dataset-specific candidate noun selection.

Image features are clustered into fine-grained centers (cluster means), every
corpus noun is routed to its most-cosine-similar center, and the top nouns per
center form the candidate set.  All argmax / top-k ties break toward the
lowest index so reruns are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import kmeans
from .embio import EmbeddingMatrix, LabelVector, VocabSet
from .errors import EmptyCandidateSet, KTooLarge

FINE_CLUSTER_TARGET = 300  # samples per fine-grained center


@dataclass(frozen=True)
class FineCenters:
    centers: np.ndarray
    assignment: LabelVector
    k_tilde: int


@dataclass(frozen=True)
class CandidateSelection:
    noun_assignment: np.ndarray
    per_center_top: tuple[tuple[int, ...], ...]
    union: VocabSet
    union_indices: tuple[int, ...]


def default_k_tilde(n: int, k: int, small_classes: bool) -> int:
    """Number of fine-grained centers: ceil(n / 300), or 3k for small classes."""
    if n < 1 or k < 2:
        raise KTooLarge(f"need n >= 1 and k >= 2, got n={n}, k={k}")
    if small_classes:
        return 3 * k
    return math.ceil(n / FINE_CLUSTER_TARGET)


def compute_fine_centers(
    x: EmbeddingMatrix, k_tilde: int, seed: int, restarts: int = 10
) -> FineCenters:
    """K-means on image features; centers are exact means of each partition."""
    if k_tilde > x.rows:
        raise KTooLarge(f"k_tilde={k_tilde} exceeds {x.rows} samples")
    result = kmeans(x.values, k_tilde, seed=seed, restarts=restarts)
    data = x.values.astype(np.float64, copy=False)
    labels = result.labels.values
    centers = np.empty((k_tilde, x.dim), dtype=np.float64)
    for r in range(k_tilde):
        centers[r] = data[labels == r].mean(axis=0)
    return FineCenters(centers=centers, assignment=result.labels, k_tilde=k_tilde)


def _cosine_to_centers(w: np.ndarray, centers: np.ndarray) -> np.ndarray:
    wn = np.linalg.norm(w, axis=1)
    cn = np.linalg.norm(centers, axis=1)
    wn = np.where(wn > 0, wn, 1.0)
    cn = np.where(cn > 0, cn, 1.0)
    return (w @ centers.T) / np.outer(wn, cn)


def assign_nouns(w: VocabSet, centers: FineCenters) -> np.ndarray:
    """Index of the nearest fine center per noun; ties go to the lowest index."""
    sims = _cosine_to_centers(
        w.embeddings.values.astype(np.float64, copy=False), centers.centers
    )
    return np.argmax(sims, axis=1)  # first occurrence wins, i.e. lowest index


def select_candidates(
    w: VocabSet, centers: FineCenters, theta: int
) -> CandidateSelection:
    """Top-theta nouns per center among those assigned to it, deduplicated."""
    if theta < 1:
        raise KTooLarge(f"theta must be >= 1, got {theta}")
    sims = _cosine_to_centers(
        w.embeddings.values.astype(np.float64, copy=False), centers.centers
    )
    assignment = np.argmax(sims, axis=1)

    per_center: list[tuple[int, ...]] = []
    any_assigned = False
    for r in range(centers.k_tilde):
        members = np.flatnonzero(assignment == r)
        if members.size == 0:
            per_center.append(())
            continue
        any_assigned = True
        order = np.argsort(-sims[members, r], kind="stable")  # ties: lowest noun index
        top = members[order[: min(theta, members.size)]]
        per_center.append(tuple(int(i) for i in top))
    if not any_assigned:
        raise EmptyCandidateSet("no center received any noun")

    seen: set[int] = set()
    union_idx: list[int] = []
    for top in per_center:
        for i in top:
            if i not in seen:
                seen.add(i)
                union_idx.append(i)

    union = VocabSet(
        names=tuple(w.names[i] for i in union_idx),
        embeddings=EmbeddingMatrix(
            w.embeddings.values[np.array(union_idx)].copy(),
            normalized=w.embeddings.normalized,
        ),
    )
    return CandidateSelection(
        noun_assignment=assignment,
        per_center_top=tuple(per_center),
        union=union,
        union_indices=tuple(union_idx),
    )

"""Neighbor-consistency pseudo-label filtering in representation space.

A sample's neighbor-consistency score is the fraction of its k-nearest
neighbors (exact brute-force cosine over rows of C) sharing its pseudo-label.
Samples at or above the threshold form the high-quality supervision set; the
threshold is relaxed in 1/k steps when the set would otherwise be empty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cluster import contingency_table, hungarian_match
from .embio import LabelVector
from .errors import EmptySelection, KHatTooLarge, LengthMismatch

_CHUNK_ROWS = 1024  # bounds the similarity block to chunk x N


@dataclass(frozen=True)
class PseudoLabelState:
    labels: LabelVector
    neighbors: np.ndarray  # N x k_hat indices, self excluded
    alpha: np.ndarray  # per-sample consistency in [0, 1]
    selected: np.ndarray  # D_L indices
    unselected: np.ndarray  # D_U indices
    tau_effective: float


def knn_graph(c: np.ndarray, k_hat: int) -> np.ndarray:
    """Exact top-k cosine neighbors per row, self excluded, ties to lowest index."""
    c = np.asarray(c, dtype=np.float64)
    n = c.shape[0]
    if k_hat < 1 or k_hat >= n:
        raise KHatTooLarge(f"need 1 <= k_hat < {n}, got {k_hat}")
    norms = np.linalg.norm(c, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    unit = c / norms[:, None]
    neighbors = np.empty((n, k_hat), dtype=np.int64)
    for start in range(0, n, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, n)
        sims = unit[start:stop] @ unit.T
        sims[np.arange(stop - start), np.arange(start, stop)] = -np.inf
        order = np.argsort(-sims, axis=1, kind="stable")
        neighbors[start:stop] = order[:, :k_hat]
    return neighbors


def consistency_scores(labels: LabelVector, neighbors: np.ndarray) -> np.ndarray:
    """Fraction of each sample's neighbors sharing its label."""
    if neighbors.shape[0] != len(labels):
        raise LengthMismatch(
            f"{neighbors.shape[0]} neighbor rows vs {len(labels)} labels"
        )
    same = labels.values[neighbors] == labels.values[:, None]
    return same.mean(axis=1)


def select_high_quality(
    alpha: np.ndarray, tau: float
) -> tuple[np.ndarray, np.ndarray]:
    """Indices with alpha >= tau (inclusive) and the complement."""
    if not 0.0 < tau <= 1.0:
        raise EmptySelection(f"tau must lie in (0, 1], got {tau}")
    selected = np.flatnonzero(alpha >= tau)
    if selected.size == 0:
        raise EmptySelection(f"no sample reaches tau={tau}")
    unselected = np.flatnonzero(alpha < tau)
    return selected, unselected


def select_with_relaxation(
    labels: LabelVector,
    neighbors: np.ndarray,
    alpha: np.ndarray,
    tau: float,
    k: int,
) -> PseudoLabelState:
    """High-quality selection with the documented empty-set fallback.

    If nothing passes at tau, relax in steps of 1/k_hat until at least k
    samples are selected and every non-empty pseudo-class is represented
    where possible (tau floor at 0 selects everything).
    """
    k_hat = neighbors.shape[1]
    present = np.unique(labels.values)

    def goal_met(sel: np.ndarray) -> bool:
        if sel.size < k:
            return False
        covered = np.unique(labels.values[sel])
        return covered.size == present.size

    tau_eff = tau
    selected = np.flatnonzero(alpha >= tau_eff)
    if selected.size == 0:
        # attainable scores are m / k_hat; walk them downward so threshold
        # and score share the same rounding
        m = int(np.ceil(tau * k_hat)) - 1
        while m >= 0:
            tau_eff = m / k_hat
            selected = np.flatnonzero(alpha >= tau_eff)
            if selected.size and goal_met(selected):
                break
            m -= 1
    if selected.size == 0:
        raise EmptySelection("selection empty even at tau=0")
    unselected = np.setdiff1d(np.arange(len(labels)), selected, assume_unique=True)
    return PseudoLabelState(
        labels=labels,
        neighbors=neighbors,
        alpha=alpha,
        selected=selected,
        unselected=unselected,
        tau_effective=tau_eff,
    )


def filter_gain_report(
    state: PseudoLabelState, truth: LabelVector
) -> tuple[float, float, float]:
    """Matched accuracy of all pseudo-labels vs the selected subset.

    The Hungarian matching is computed once on the full set and reused for
    the subset, so the two numbers are comparable.
    """
    table = contingency_table(state.labels, truth)
    perm, matched = hungarian_match(table)
    perm = np.asarray(perm)
    acc_before = matched / len(truth)
    sel = state.selected
    if sel.size == 0:
        return acc_before, 0.0, 0.0
    hits = perm[state.labels.values[sel]] == truth.values[sel]
    acc_after = float(hits.mean())
    return acc_before, acc_after, sel.size / len(truth)

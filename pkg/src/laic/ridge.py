"""Image-text representation by closed-form ridge regression.

Each image feature row is reconstructed as a weighted combination of the
candidate noun embeddings; the coefficient matrix C minimizes
|X - C U|_F^2 + gamma |C|_F^2 and is obtained by solving the M x M
symmetric positive-definite system (U U^T + gamma I) C^T = U X^T via a
Cholesky factorization.  No explicit inverse is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .embio import EmbeddingMatrix, VocabSet
from .errors import DimMismatch, FactorizationFailure, InvariantViolation

RESIDUAL_TOL = 1e-8  # relative residual bound on the normal equations


@dataclass(frozen=True)
class ReprMatrix:
    c: np.ndarray
    gamma: float
    source_dims: tuple[int, int, int]  # (N, M, d)

    def __post_init__(self):
        if not np.isfinite(self.c).all():
            raise InvariantViolation("representation matrix has non-finite entries")
        self.c.setflags(write=False)

    @property
    def rows(self) -> int:
        return self.c.shape[0]


def ridge_representation(
    x: EmbeddingMatrix, u: VocabSet, gamma: float
) -> ReprMatrix:
    """Closed-form minimizer C = X U^T (U U^T + gamma I)^-1 in 64-bit."""
    if gamma <= 0:
        raise FactorizationFailure(f"gamma must be positive, got {gamma}")
    if x.dim != u.embeddings.dim:
        raise DimMismatch(f"image dim {x.dim} != noun dim {u.embeddings.dim}")
    xv = x.values.astype(np.float64, copy=False)
    uv = u.embeddings.values.astype(np.float64, copy=False)
    m = uv.shape[0]
    gram = uv @ uv.T
    gram[np.diag_indices(m)] += gamma
    try:
        factor = cho_factor(gram, lower=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise FactorizationFailure(f"Cholesky failed on the {m}x{m} system: {e}") from e
    c = cho_solve(factor, uv @ xv.T).T
    repr_matrix = ReprMatrix(c=c, gamma=float(gamma), source_dims=(x.rows, m, x.dim))
    _check_normal_equations(repr_matrix, xv, uv)
    return repr_matrix


def _check_normal_equations(r: ReprMatrix, xv: np.ndarray, uv: np.ndarray) -> None:
    m = uv.shape[0]
    gram = uv @ uv.T
    gram[np.diag_indices(m)] += r.gamma
    rhs = xv @ uv.T
    residual = np.linalg.norm(r.c @ gram - rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    if residual / scale > RESIDUAL_TOL:
        raise InvariantViolation(
            f"normal-equation residual {residual / scale:.3e} exceeds {RESIDUAL_TOL}"
        )


def residual_objective(
    x: EmbeddingMatrix, u: VocabSet, c: np.ndarray, gamma: float
) -> float:
    """Value of |X - C U|_F^2 + gamma |C|_F^2 at an arbitrary C."""
    xv = x.values.astype(np.float64, copy=False)
    uv = u.embeddings.values.astype(np.float64, copy=False)
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (xv.shape[0], uv.shape[0]):
        raise DimMismatch(
            f"C shape {c.shape} incompatible with X {xv.shape} and U {uv.shape}"
        )
    fit = xv - c @ uv
    return float((fit * fit).sum() + gamma * (c * c).sum())

"""Planted-cluster synthetic benchmark with aligned nouns and noisy views.

Classes sit on orthonormal directions inside a semantic subspace; images are
noisy unit vectors around them whose noise also has a component in the
complementary nuisance subspace that no noun can express (mirroring how
image features vary in ways text never encodes).  The noun corpus mixes
class-aligned nouns (tightly around each direction) with unrelated
distractors, all inside the semantic subspace, so vocabulary selection, the
ridge representation and center learning all have real work to do while
ground truth stays known.
"""

from __future__ import annotations

import numpy as np

from .embio import EmbeddingMatrix, LabelVector, VocabSet, ViewBundle
from .errors import BadDims

STRONG_VIEW_SIGMA = 0.1
WEAK_VIEW_SIGMA = 0.02
ALIGNED_NOUN_SIGMA = 0.05

# noise anatomy, stds as multiples of the noise level: isotropic semantic
# noise is damped along the class directions, and a few strong shared
# variance factors in the nuisance complement (inexpressible by nouns)
# distract clustering on raw image features
CLASS_NOISE_SCALE = 0.35
SEMANTIC_NOISE_SCALE = 0.8
NUISANCE_FACTORS = 3
NUISANCE_FACTOR_SCALE = 2.5


def _unit_rows(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=1)[:, None]


def _noisy_copies(base: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return _unit_rows(base + sigma * rng.standard_normal(base.shape))


def make_synthetic(
    k: int,
    n_per: int,
    d: int,
    noun_per_class: int,
    noise: float,
    seed: int,
    n_strong_views: int = 2,
    n_weak_views: int = 2,
    n_distractors: int | None = None,
) -> tuple[EmbeddingMatrix, VocabSet, LabelVector, ViewBundle]:
    if d < k:
        raise BadDims(f"need d >= k, got d={d}, k={k}")
    if k < 1 or n_per < 1:
        raise BadDims(f"need k >= 1 and n_per >= 1, got k={k}, n_per={n_per}")
    if n_distractors is None:
        n_distractors = 2 * k
    rng = np.random.default_rng(seed)

    basis = np.linalg.qr(rng.standard_normal((d, d)))[0]
    d_sem = max(k, d // 2)
    semantic = basis[:, :d_sem].T  # orthonormal rows spanning the noun space
    nuisance = basis[:, d_sem:].T
    directions = semantic[:k]

    truth = np.repeat(np.arange(k), n_per)
    n = k * n_per
    sem_scales = np.full(d_sem, SEMANTIC_NOISE_SCALE * noise)
    sem_scales[:k] = CLASS_NOISE_SCALE * noise
    total = (rng.standard_normal((n, d_sem)) * sem_scales) @ semantic
    n_nui_fac = min(NUISANCE_FACTORS, d - d_sem)
    if n_nui_fac > 0:
        factors = NUISANCE_FACTOR_SCALE * noise * rng.standard_normal((n, n_nui_fac))
        total += factors @ nuisance[:n_nui_fac]
    x = _unit_rows(directions[truth] + total)
    base = EmbeddingMatrix(x.astype(np.float32), normalized=True)

    noun_rows = []
    noun_names = []
    for cls in range(k):
        for j in range(noun_per_class):
            jitter = ALIGNED_NOUN_SIGMA * rng.standard_normal(d_sem) @ semantic
            noun_rows.append(directions[cls] + jitter)
            noun_names.append(f"class{cls}_noun{j}")
    for j in range(n_distractors):
        noun_rows.append(rng.standard_normal(d_sem) @ semantic)
        noun_names.append(f"distractor{j}")
    vocab = VocabSet(
        names=tuple(noun_names),
        embeddings=EmbeddingMatrix(
            _unit_rows(np.array(noun_rows)).astype(np.float32), normalized=True
        ),
    )

    strong = tuple(
        EmbeddingMatrix(
            _noisy_copies(x, STRONG_VIEW_SIGMA, rng).astype(np.float32), normalized=True
        )
        for _ in range(n_strong_views)
    )
    weak = tuple(
        EmbeddingMatrix(
            _noisy_copies(x, WEAK_VIEW_SIGMA, rng).astype(np.float32), normalized=True
        )
        for _ in range(n_weak_views)
    )
    views = ViewBundle(base=base, strong_views=strong, weak_views=weak)
    labels = LabelVector(truth, num_classes=k)
    return base, vocab, labels, views

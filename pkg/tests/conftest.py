import numpy as np
import pytest
from hypothesis import settings

from laic.embio import EmbeddingMatrix, VocabSet

settings.register_profile("suite", derandomize=True, max_examples=50, deadline=None)
settings.load_profile("suite")


def random_matrix(rng, rows, dim, dtype=np.float32, normalized=False):
    v = rng.standard_normal((rows, dim))
    if normalized:
        v = v / np.linalg.norm(v, axis=1)[:, None]
    return EmbeddingMatrix(v.astype(dtype), normalized=normalized)


def random_vocab(rng, count, dim, prefix="noun"):
    return VocabSet(
        names=tuple(f"{prefix}{i}" for i in range(count)),
        embeddings=random_matrix(rng, count, dim),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)

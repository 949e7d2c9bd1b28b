import numpy as np
import pytest

from laic.embio import EmbeddingMatrix, VocabSet
from laic.errors import DimMismatch, FactorizationFailure
from laic.ridge import ridge_representation, residual_objective
from conftest import random_matrix, random_vocab


def gradient_descent_minimizer(xv, uv, gamma, steps=3000):
    """Independent iterative solver for the reconstruction objective."""
    m = uv.shape[0]
    gram = uv @ uv.T + gamma * np.eye(m)
    lipschitz = 2.0 * np.linalg.eigvalsh(gram).max()
    c = np.zeros((xv.shape[0], m))
    target = xv @ uv.T
    for _ in range(steps):
        grad = 2.0 * (c @ gram - target)
        c -= grad / lipschitz
        if np.abs(grad).max() < 1e-13:
            break
    return c


def test_zero_images_give_zero_matrix(rng):
    x = EmbeddingMatrix(np.zeros((4, 3), dtype=np.float32))
    u = random_vocab(rng, 5, 3)
    rep = ridge_representation(x, u, 5.0)
    assert np.all(rep.c == 0.0)


def test_scalar_closed_form():
    x = EmbeddingMatrix(np.array([[2.0]], dtype=np.float32))
    u = VocabSet(names=("n",), embeddings=EmbeddingMatrix(np.ones((1, 1), np.float32)))
    rep = ridge_representation(x, u, 1.0)
    assert np.allclose(rep.c, [[1.0]])  # 2*1 / (1+1)


def test_matches_gradient_descent_oracle(rng):
    for _ in range(5):
        n, m, d = 50, 20, 8
        x = random_matrix(rng, n, d)
        u = random_vocab(rng, m, d)
        rep = ridge_representation(x, u, 5.0)
        oracle = gradient_descent_minimizer(
            x.values.astype(np.float64), u.embeddings.values.astype(np.float64), 5.0
        )
        rel = np.linalg.norm(rep.c - oracle) / np.linalg.norm(oracle)
        assert rel < 1e-4


def test_normal_equation_residual(rng):
    x = random_matrix(rng, 30, 6)
    u = random_vocab(rng, 12, 6)
    rep = ridge_representation(x, u, 5.0)
    uv = u.embeddings.values.astype(np.float64)
    gram = uv @ uv.T + 5.0 * np.eye(12)
    rhs = x.values.astype(np.float64) @ uv.T
    rel = np.linalg.norm(rep.c @ gram - rhs) / np.linalg.norm(rhs)
    assert rel <= 1e-8


def test_objective_at_zero_is_frobenius_of_x(rng):
    x = random_matrix(rng, 7, 4)
    u = random_vocab(rng, 3, 4)
    c = np.zeros((7, 3))
    expected = float((x.values.astype(np.float64) ** 2).sum())
    assert residual_objective(x, u, c, 5.0) == pytest.approx(expected, rel=1e-12)


def test_closed_form_is_global_minimum(rng):
    x = random_matrix(rng, 20, 5)
    u = random_vocab(rng, 8, 5)
    rep = ridge_representation(x, u, 5.0)
    base = residual_objective(x, u, rep.c, 5.0)
    for _ in range(100):
        delta = rng.standard_normal(rep.c.shape)
        delta *= 1e-3 / np.linalg.norm(delta)
        assert residual_objective(x, u, rep.c + delta, 5.0) >= base


def test_monotone_shrinkage(rng):
    x = random_matrix(rng, 25, 6)
    u = random_vocab(rng, 10, 6)
    norms = [
        np.linalg.norm(ridge_representation(x, u, g).c)
        for g in (0.5, 1.0, 5.0, 50.0, 500.0)
    ]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_large_gamma_drives_c_to_zero(rng):
    x = random_matrix(rng, 10, 4, normalized=True)
    u = random_vocab(rng, 6, 4)
    rep = ridge_representation(x, u, 1e9)
    assert np.linalg.norm(rep.c) < 1e-6


def test_deterministic_bits(rng):
    x = random_matrix(rng, 15, 5)
    u = random_vocab(rng, 7, 5)
    first = ridge_representation(x, u, 5.0)
    second = ridge_representation(x, u, 5.0)
    assert first.c.tobytes() == second.c.tobytes()


def test_dim_mismatch(rng):
    with pytest.raises(DimMismatch):
        ridge_representation(random_matrix(rng, 4, 3), random_vocab(rng, 5, 4), 5.0)
    with pytest.raises(DimMismatch):
        residual_objective(
            random_matrix(rng, 4, 3), random_vocab(rng, 5, 3), np.zeros((4, 4)), 5.0
        )


def test_nonpositive_gamma_rejected(rng):
    with pytest.raises(FactorizationFailure):
        ridge_representation(random_matrix(rng, 4, 3), random_vocab(rng, 5, 3), 0.0)

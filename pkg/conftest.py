import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_orthogonal(rng):
    """Factory for Haar-distributed m×n matrices with orthonormal columns (m >= n)"""
    def make(m, n=None):
        n = n or m
        q, r = np.linalg.qr(rng.standard_normal((m, n)))
        return q * np.sign(np.diag(r))[None, :]
    return make


@pytest.fixture
def matrix_with_spectrum(random_orthogonal):
    """Factory for U·diag(sigmas)·Vᵀ with random orthogonal U, V; returns (X, U, V)"""
    def make(sigmas, m=None):
        sigmas = np.asarray(sigmas, dtype=np.float64)
        n = sigmas.size
        u = random_orthogonal(m or n, n)
        v = random_orthogonal(n)
        return (u * sigmas[None, :]) @ v.T, u, v
    return make

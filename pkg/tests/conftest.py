import numpy as np
import pytest

from qpopt.states import DensityOperator, density_from_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_hermitian(rng, dim):
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (A + A.conj().T)


def random_density(rng, n_qubits, floor=0.05) -> DensityOperator:
    dim = 2**n_qubits
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = A @ A.conj().T + floor * np.eye(dim)
    rho /= np.trace(rho).real
    return density_from_matrix(rho)


def fd_gradient(f, x, h=1e-5):
    g = np.zeros_like(np.asarray(x, dtype=float))
    for i in range(len(x)):
        e = np.zeros_like(g)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-12))

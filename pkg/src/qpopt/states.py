"""Density operators and the information quantities defined on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .linalg import EIGEN_FLOOR, eigh, require_hermitian


@dataclass(frozen=True)
class DensityOperator:
    """Positive, unit-trace Hermitian matrix over 2^n dimensions."""

    matrix: np.ndarray
    n_qubits: int

    def __post_init__(self):
        dim = 2**self.n_qubits
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"expected shape {(dim, dim)}, got {self.matrix.shape}")
        require_hermitian(self.matrix, "density operator")
        tr = complex(np.trace(self.matrix))
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"trace {tr} is not 1")
        w = np.linalg.eigvalsh(self.matrix)
        if float(np.min(w)) < -1e-10:
            raise ValueError(f"negative eigenvalue {np.min(w)}")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def is_full_rank(self, floor: float = EIGEN_FLOOR) -> bool:
        return float(np.min(self.eigenvalues())) > floor


def density_from_matrix(matrix: np.ndarray) -> DensityOperator:
    n = int(round(np.log2(matrix.shape[0])))
    return DensityOperator(matrix=matrix, n_qubits=n)


def gibbs_state(H: np.ndarray, beta: float) -> DensityOperator:
    """Thermal state exp(-beta*H) / tr(exp(-beta*H))."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    w, V = eigh(H)
    shifted = -beta * (w - np.min(w))
    weights = np.exp(shifted)
    weights /= np.sum(weights)
    rho = (V * weights) @ V.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return density_from_matrix(rho)


def von_neumann_entropy(rho: DensityOperator) -> float:
    """-tr(rho ln rho) in nats, with 0*ln(0) = 0."""
    w = np.clip(rho.eigenvalues(), 0.0, 1.0)
    nz = w[w > 0]
    return float(-np.sum(nz * np.log(nz)))


def relative_entropy(rho: DensityOperator, sigma: DensityOperator) -> float:
    """D(rho || sigma) = tr[rho (ln rho - ln sigma)] in nats."""
    if rho.matrix.shape != sigma.matrix.shape:
        raise ValueError("dimension mismatch")
    ws, Vs = eigh(sigma.matrix)
    if float(np.min(ws)) <= EIGEN_FLOOR:
        raise ValueError("unsupported data state: sigma is singular")
    log_sigma = (Vs * np.log(ws)) @ Vs.conj().T
    cross = float(np.real(np.sum(rho.matrix.conj() * log_sigma)))  # tr(rho log sigma)
    return -von_neumann_entropy(rho) - cross


def fidelity(rho: DensityOperator, sigma: DensityOperator) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if rho.matrix.shape != sigma.matrix.shape:
        raise ValueError("dimension mismatch")
    w, V = eigh(rho.matrix)
    sqrt_rho = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T
    inner = sqrt_rho @ sigma.matrix @ sqrt_rho
    inner = 0.5 * (inner + inner.conj().T)
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    f = float(np.sum(np.sqrt(vals)) ** 2)
    return min(f, 1.0) if f <= 1.0 + 1e-9 else f


def third_order_symmetry_gap(
    path: Callable[[float], DensityOperator], lambdas: Sequence[float]
) -> np.ndarray:
    """|D(rho(l) || rho(0)) - D(rho(0) || rho(l))| for each l.

    The forward and reverse relative entropies agree to second order around
    l = 0, so these gaps scale cubically for smooth paths.
    """
    rho0 = path(0.0)
    gaps = []
    for lam in lambdas:
        rho = path(float(lam))
        gaps.append(abs(relative_entropy(rho, rho0) - relative_entropy(rho0, rho)))
    return np.array(gaps)

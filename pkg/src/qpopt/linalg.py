"""Dense complex linear algebra primitives for operators on up to 8 qubits.

Pauli strings, checked Hermitian eigendecomposition, matrix exponential and
logarithm, Moore-Penrose pseudo-inverse and Tikhonov solves, and the
Hilbert-Schmidt inner product.  Everything is dense and double precision;
the qubit count is hard-capped at ``MAX_QUBITS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 8
EIGEN_FLOOR = 1e-12

_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, qubit 0 leftmost."""

    letters: str
    coefficient: float = 1.0
    n_qubits: int = field(init=False)

    def __post_init__(self):
        if not self.letters or any(c not in _P1 for c in self.letters):
            raise ValueError(f"invalid Pauli letters {self.letters!r}")
        if len(self.letters) > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits supported")
        object.__setattr__(self, "n_qubits", len(self.letters))

    @property
    def is_identity(self) -> bool:
        return set(self.letters) == {"I"}


def pauli_dense(p: PauliString) -> np.ndarray:
    """Dense 2^n x 2^n Hermitian realization of a Pauli string."""
    out = np.array([[p.coefficient]], dtype=complex)
    for c in p.letters:
        out = np.kron(out, _P1[c])
    return out


def max_abs(A: np.ndarray) -> float:
    return float(np.max(np.abs(A))) if A.size else 0.0


def is_hermitian(A: np.ndarray, rel_tol: float = 1e-10) -> bool:
    scale = max(max_abs(A), 1e-300)
    return max_abs(A - A.conj().T) <= rel_tol * scale


def require_hermitian(A: np.ndarray, what: str = "operator") -> np.ndarray:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{what} must be square, got shape {A.shape}")
    if not is_hermitian(A):
        raise ValueError(f"{what} is not Hermitian")
    return A


def eigh(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral decomposition A = V diag(w) V^dag with ascending eigenvalues."""
    require_hermitian(A)
    w, V = np.linalg.eigh(A)
    return w, V


def matrix_exp(A: np.ndarray) -> np.ndarray:
    """exp(A) for Hermitian A via eigendecomposition."""
    w, V = eigh(A)
    return (V * np.exp(w)) @ V.conj().T


def matrix_log(A: np.ndarray, eigen_floor: float = EIGEN_FLOOR) -> np.ndarray:
    """log(A) for positive-definite Hermitian A.

    Raises on eigenvalues at or below ``eigen_floor`` rather than clamping, so
    that singular states surface as errors instead of silently biased results.
    """
    w, V = eigh(A)
    if np.min(w) <= eigen_floor:
        raise ValueError("singular state: eigenvalue below floor in matrix_log")
    return (V * np.log(w)) @ V.conj().T


def pseudo_inverse(A: np.ndarray, rel_tol: float = 1e-8) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD real matrix.

    Eigenvalues below ``rel_tol`` times the largest are treated as zero.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("pseudo_inverse expects a square matrix")
    if max_abs(A - A.T) > 1e-10 * max(max_abs(A), 1e-300):
        raise ValueError("pseudo_inverse expects a symmetric matrix")
    w, V = np.linalg.eigh(A)
    cut = rel_tol * max(float(np.max(w)), 0.0)
    inv = np.where(w > cut, 1.0 / np.where(w > cut, w, 1.0), 0.0)
    return (V * inv) @ V.T


def tikhonov_solve(A: np.ndarray, b: np.ndarray, eps: float) -> np.ndarray:
    """Solve (A + eps*I) x = b for symmetric A."""
    return np.linalg.solve(A + eps * np.eye(A.shape[0]), b)


def hs_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product tr(A^dag B)."""
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch {A.shape} vs {B.shape}")
    return complex(np.sum(A.conj() * B))

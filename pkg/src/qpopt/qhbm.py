"""QHBM ansatz: classical Boltzmann machine eigenvalues rotated by a layered circuit.

The model state is rho = U_phi diag(p_theta) U_phi^dag.  The Boltzmann
machine is evaluated by exact enumeration over all bitstrings (n <= 8), and
the circuit is a layered hardware-efficient ansatz built from e^{i*phi*P}
gates, which makes +-pi/4 parameter shifts exact derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import MAX_QUBITS, PauliString, pauli_dense
from .states import DensityOperator, density_from_matrix

SHIFT = np.pi / 4


# ---------------------------------------------------------------------------
# Energy-based model: fully connected Boltzmann machine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoltzmannMachine:
    """Fully connected Boltzmann machine over spins s = 1 - 2x."""

    n_bits: int
    biases: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_bits <= MAX_QUBITS:
            raise ValueError(f"n_bits must be in [1, {MAX_QUBITS}]")
        if self.biases.shape != (self.n_bits,):
            raise ValueError("bias vector has wrong length")
        if self.weights.shape != (self.n_bits, self.n_bits):
            raise ValueError("weight matrix has wrong shape")
        if np.max(np.abs(self.weights - self.weights.T)) > 1e-12:
            raise ValueError("weights must be symmetric")
        if np.max(np.abs(np.diag(self.weights))) > 0:
            raise ValueError("weights must have zero diagonal")

    @property
    def n_params(self) -> int:
        n = self.n_bits
        return n + n * (n - 1) // 2


def theta_dim(n_bits: int) -> int:
    return n_bits + n_bits * (n_bits - 1) // 2


def bm_from_theta(n_bits: int, theta: np.ndarray) -> BoltzmannMachine:
    """Unpack a flat parameter vector [biases, upper-tri weights]."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (theta_dim(n_bits),):
        raise ValueError(f"theta must have length {theta_dim(n_bits)}")
    biases = theta[:n_bits].copy()
    weights = np.zeros((n_bits, n_bits))
    iu = np.triu_indices(n_bits, k=1)
    weights[iu] = theta[n_bits:]
    weights = weights + weights.T
    return BoltzmannMachine(n_bits=n_bits, biases=biases, weights=weights)


def all_spins(n_bits: int) -> np.ndarray:
    """(2^n, n) array of spins s = 1 - 2x; qubit 0 is the most significant bit."""
    xs = np.arange(2**n_bits)
    bits = (xs[:, None] >> (n_bits - 1 - np.arange(n_bits))[None, :]) & 1
    return 1.0 - 2.0 * bits


def ebm_energy(bm: BoltzmannMachine, x: np.ndarray) -> float:
    """Energy of a single bitstring x (array of 0/1)."""
    x = np.asarray(x)
    if x.shape != (bm.n_bits,):
        raise ValueError(f"bitstring must have length {bm.n_bits}")
    s = 1.0 - 2.0 * x
    return float(-s @ bm.biases - 0.5 * s @ bm.weights @ s)


def ebm_energies(bm: BoltzmannMachine) -> np.ndarray:
    """Energies of all 2^n bitstrings in index order."""
    S = all_spins(bm.n_bits)
    return -S @ bm.biases - 0.5 * np.einsum("xi,ij,xj->x", S, bm.weights, S)


def ebm_log_partition(bm: BoltzmannMachine) -> float:
    """ln Z via exact enumeration with max-subtraction."""
    e = -ebm_energies(bm)
    m = float(np.max(e))
    return m + float(np.log(np.sum(np.exp(e - m))))


def ebm_probabilities(bm: BoltzmannMachine) -> np.ndarray:
    e = -ebm_energies(bm)
    e -= np.max(e)
    p = np.exp(e)
    return p / np.sum(p)


def ebm_energy_gradients(bm: BoltzmannMachine) -> np.ndarray:
    """(2^n, c) matrix of dE/dtheta for every bitstring."""
    S = all_spins(bm.n_bits)
    iu, ju = np.triu_indices(bm.n_bits, k=1)
    return np.concatenate([-S, -S[:, iu] * S[:, ju]], axis=1)


def ebm_sample(bm: BoltzmannMachine, count: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. bitstring indices from the exact categorical distribution."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    cdf = np.cumsum(ebm_probabilities(bm))
    u = rng.random(count)
    return np.searchsorted(cdf, u).astype(np.int64)


def index_to_bits(x: int, n_bits: int) -> np.ndarray:
    return (np.asarray(x) >> (n_bits - 1 - np.arange(n_bits))) & 1


# ---------------------------------------------------------------------------
# Layered hardware-efficient circuit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QheaCircuit:
    """Layered ansatz: per layer an X row, a Z row, and a chain ZZ row.

    Each gate is e^{i*phi*P} for a single Pauli string P, giving (3n - 1)
    angles per layer.
    """

    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        if self.n_layers < 1:
            raise ValueError("n_layers must be positive")

    @property
    def n_params(self) -> int:
        return (3 * self.n_qubits - 1) * self.n_layers


def phi_dim(n_qubits: int, n_layers: int) -> int:
    return (3 * n_qubits - 1) * n_layers


_GENERATOR_CACHE: dict[tuple[int, int], list[np.ndarray]] = {}


def _layer_letters(n: int) -> list[str]:
    rows = []
    for k in range(n):
        rows.append("I" * k + "X" + "I" * (n - k - 1))
    for k in range(n):
        rows.append("I" * k + "Z" + "I" * (n - k - 1))
    for k in range(n - 1):
        rows.append("I" * k + "ZZ" + "I" * (n - k - 2))
    return rows


def circuit_generators(circuit: QheaCircuit) -> list[np.ndarray]:
    """Dense Pauli generators in application order, one per angle."""
    key = (circuit.n_qubits, circuit.n_layers)
    if key not in _GENERATOR_CACHE:
        per_layer = [pauli_dense(PauliString(s)) for s in _layer_letters(circuit.n_qubits)]
        _GENERATOR_CACHE[key] = per_layer * circuit.n_layers
    return _GENERATOR_CACHE[key]


def _check_angles(circuit: QheaCircuit, phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (circuit.n_params,):
        raise ValueError(f"phi must have length {circuit.n_params}")
    return phi


def qnn_unitary(circuit: QheaCircuit, phi: np.ndarray) -> np.ndarray:
    """Product of e^{i*phi_j*P_j} gates in application order."""
    phi = _check_angles(circuit, phi)
    dim = 2**circuit.n_qubits
    U = np.eye(dim, dtype=complex)
    for angle, P in zip(phi, circuit_generators(circuit)):
        gate = np.cos(angle) * np.eye(dim) + 1j * np.sin(angle) * P
        U = gate @ U
    return U


def qnn_unitary_with_shifts(
    circuit: QheaCircuit, phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """U together with stacks of all +-pi/4 single-angle-shifted unitaries.

    Uses prefix products: shifting angle j multiplies U on the right by
    (1 +- i * Ptilde_j)/sqrt(2) with Ptilde_j the generator conjugated by the
    prefix below gate j, so each shifted unitary costs O(1) extra products.
    """
    phi = _check_angles(circuit, phi)
    dim = 2**circuit.n_qubits
    gens = circuit_generators(circuit)
    B = np.eye(dim, dtype=complex)
    conjugated = np.empty((len(gens), dim, dim), dtype=complex)
    for j, (angle, P) in enumerate(zip(phi, gens)):
        conjugated[j] = B.conj().T @ P @ B
        gate = np.cos(angle) * np.eye(dim) + 1j * np.sin(angle) * P
        B = gate @ B
    U = B
    C = np.matmul(U[None, :, :], conjugated)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    u_plus = (U[None, :, :] + 1j * C) * inv_sqrt2
    u_minus = (U[None, :, :] - 1j * C) * inv_sqrt2
    return U, u_plus, u_minus


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QhbmModel:
    """Architecture: fully connected EBM plus a layered circuit on n qubits."""

    n_qubits: int
    n_layers: int
    circuit: QheaCircuit = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "circuit", QheaCircuit(self.n_qubits, self.n_layers))

    @property
    def theta_dim(self) -> int:
        return theta_dim(self.n_qubits)

    @property
    def phi_dim(self) -> int:
        return self.circuit.n_params

    @property
    def dim(self) -> int:
        return self.theta_dim + self.phi_dim

    def split(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.dim,):
            raise ValueError(f"params must have length {self.dim}")
        return params[: self.theta_dim], params[self.theta_dim:]

    def ebm(self, params: np.ndarray) -> BoltzmannMachine:
        theta, _ = self.split(params)
        return bm_from_theta(self.n_qubits, theta)

    def random_init(self, rng: np.random.Generator, scale: float = 0.6) -> np.ndarray:
        """Gaussian start; the scale keeps early information matrices away
        from the singular zero-angle point where Z-type rows vanish."""
        return scale * rng.standard_normal(self.dim)


def qhbm_density(model: QhbmModel, params: np.ndarray) -> DensityOperator:
    """rho = U diag(p_theta) U^dag."""
    theta, phi = model.split(params)
    p = ebm_probabilities(bm_from_theta(model.n_qubits, theta))
    U = qnn_unitary(model.circuit, phi)
    rho = (U * p) @ U.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return density_from_matrix(rho)


def qhbm_modular_hamiltonian(model: QhbmModel, params: np.ndarray) -> np.ndarray:
    """K = U diag(E_theta) U^dag, so that rho = exp(-K)/Z."""
    theta, phi = model.split(params)
    E = ebm_energies(bm_from_theta(model.n_qubits, theta))
    U = qnn_unitary(model.circuit, phi)
    K = (U * E) @ U.conj().T
    return 0.5 * (K + K.conj().T)


def qhbm_log_partition(model: QhbmModel, params: np.ndarray) -> float:
    theta, _ = model.split(params)
    return ebm_log_partition(bm_from_theta(model.n_qubits, theta))


def qhbm_sample_state(
    model: QhbmModel, params: np.ndarray, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Draw x ~ p_theta and return (x, U|x>) for shot-based estimators."""
    theta, phi = model.split(params)
    x = int(ebm_sample(bm_from_theta(model.n_qubits, theta), 1, rng)[0])
    U = qnn_unitary(model.circuit, phi)
    return x, U[:, x].copy()

"""Problem generators: TFIM Hamiltonians, Trotterized channels, GP drives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import MAX_QUBITS, PauliString, eigh, pauli_dense
from .states import DensityOperator, density_from_matrix, gibbs_state


@dataclass(frozen=True)
class TfimSpec:
    """Transverse-field Ising chain with open boundary."""

    n_qubits: int
    coupling: float = 1.0
    field: float = 1.0

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")


def tfim_hamiltonian(spec: TfimSpec) -> np.ndarray:
    """-J sum Z_i Z_{i+1} - lambda sum X_i on a chain."""
    n = spec.n_qubits
    H = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n - 1):
        H -= spec.coupling * pauli_dense(PauliString("I" * i + "ZZ" + "I" * (n - i - 2)))
    for i in range(n):
        H -= spec.field * pauli_dense(PauliString("I" * i + "X" + "I" * (n - i - 1)))
    return H


def tfim_gibbs_target(spec: TfimSpec, beta: float) -> DensityOperator:
    return gibbs_state(tfim_hamiltonian(spec), beta)


def default_substeps(duration: float, coupling: float, field: float) -> int:
    """Substep count keeping the order-2 Trotter unitary error under 1e-3.

    The measured error behaves like 0.11 * t * s / k^2 with s = |J| + |f| and
    substeps = k * t * s; k = 60 keeps it below 1e-3 for s up to about 6.
    """
    return max(1, int(np.ceil(60.0 * abs(duration) * (abs(coupling) + abs(field)))))


@dataclass(frozen=True)
class ChannelSpec:
    """Unitary evolution exp(-i*duration*H_TFIM) with a Trotter realization."""

    tfim: TfimSpec
    duration: float
    trotter_order: int = 2
    substeps: int = 0  # 0 selects the default substep count

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.trotter_order not in (1, 2):
            raise ValueError("trotter_order must be 1 or 2")
        if self.substeps < 0:
            raise ValueError("substeps must be nonnegative")

    def effective_substeps(self) -> int:
        if self.substeps > 0:
            return self.substeps
        return default_substeps(self.duration, self.tfim.coupling, self.tfim.field)


def _zz_phases(spec: TfimSpec) -> np.ndarray:
    """Diagonal of the ZZ-coupling part of the TFIM Hamiltonian."""
    n = spec.n_qubits
    xs = np.arange(2**n)
    bits = (xs[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    s = 1.0 - 2.0 * bits
    return -spec.coupling * np.sum(s[:, :-1] * s[:, 1:], axis=1) if n > 1 else np.zeros(2)


def _x_rotation(spec: TfimSpec, dt: float) -> np.ndarray:
    """exp(-i*dt*(-field * sum X_i)) as a product of commuting 1-qubit gates."""
    n = spec.n_qubits
    angle = dt * spec.field  # exp(+i*angle*X) per qubit
    U = np.eye(2**n, dtype=complex)
    for i in range(n):
        X = pauli_dense(PauliString("I" * i + "X" + "I" * (n - i - 1)))
        U = (np.cos(angle) * np.eye(2**n) + 1j * np.sin(angle) * X) @ U
    return U


def exact_unitary(H: np.ndarray, duration: float) -> np.ndarray:
    """expm(-i*duration*H) via eigendecomposition; the Trotter oracle."""
    w, V = eigh(H)
    return (V * np.exp(-1j * duration * w)) @ V.conj().T


def trotter_unitary(channel: ChannelSpec) -> np.ndarray:
    """Product-formula approximation splitting the ZZ and X parts."""
    spec = channel.tfim
    m = channel.effective_substeps()
    dt = channel.duration / m
    zz = _zz_phases(spec)
    if channel.trotter_order == 1:
        step = _x_rotation(spec, dt) * np.exp(-1j * dt * zz)[None, :]  # U_X @ diag(zz)
    else:
        half = np.exp(-1j * 0.5 * dt * zz)
        step = half[:, None] * _x_rotation(spec, dt) * half[None, :]
    U = np.eye(2**spec.n_qubits, dtype=complex)
    for _ in range(m):
        U = step @ U
    return U


def channel_unitary(channel: ChannelSpec, exact: bool = False) -> np.ndarray:
    if exact:
        return exact_unitary(tfim_hamiltonian(channel.tfim), channel.duration)
    return trotter_unitary(channel)


def apply_channel(channel: ChannelSpec, rho: DensityOperator, exact: bool = False) -> DensityOperator:
    """Conjugate rho by the channel unitary, renormalizing trace drift."""
    U = channel_unitary(channel, exact=exact)
    out = U @ rho.matrix @ U.conj().T
    out = 0.5 * (out + out.conj().T)
    tr = float(np.real(np.trace(out)))
    if abs(tr - 1.0) > 1e-12:
        out = out / tr
    return density_from_matrix(out)


@dataclass(frozen=True)
class GpDriveSpec:
    """Gaussian process with squared-exponential kernel over given times."""

    amplitude: float = 1.0
    length_scale: float = 1.0
    times: tuple[float, ...] = ()
    jitter: float = 1e-9

    def __post_init__(self):
        if self.jitter <= 0:
            raise ValueError("jitter must be positive")
        t = np.asarray(self.times, dtype=float)
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")


def gp_sample(spec: GpDriveSpec, rng: np.random.Generator) -> np.ndarray:
    """One multivariate normal draw with kernel covariance plus jitter."""
    t = np.asarray(spec.times, dtype=float)
    if t.size == 0:
        return np.zeros(0)
    d2 = (t[:, None] - t[None, :]) ** 2
    cov = spec.amplitude**2 * np.exp(-d2 / (2.0 * spec.length_scale**2))
    cov += spec.jitter * np.eye(t.size)
    w, V = np.linalg.eigh(cov)
    if float(np.min(w)) < 0:
        raise ValueError("covariance not positive definite after jitter")
    root = (V * np.sqrt(w)) @ V.T
    return root @ rng.standard_normal(t.size)

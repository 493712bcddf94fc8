"""Canonical quantum exponential-family models over a Pauli operator basis.

A model is rho_mu = exp(-sum_l mu_l E_l) / Z with pairwise HS-orthogonal
traceless Pauli basis operators E_l (tr[E_j E_k] = N delta_jk).  Exponential
coordinates mu and mixture coordinates eta_j = tr(rho E_j)/2 are Legendre
dual through the log-partition potential; the inverse map is solved by
damped Newton on the strictly convex log-partition function.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .linalg import PauliString, eigh, pauli_dense
from .metrics import BKM, InformationMatrix, info_matrix_oracle, metric_weights
from .states import DensityOperator, density_from_matrix


@lru_cache(maxsize=64)
def _dense_basis(basis: tuple[PauliString, ...]) -> np.ndarray:
    return np.stack([pauli_dense(p) for p in basis])


def full_pauli_basis(n_qubits: int) -> tuple[PauliString, ...]:
    """All 4^n - 1 non-identity Pauli strings on n qubits."""
    strings = []
    for letters in itertools.product("IXYZ", repeat=n_qubits):
        s = "".join(letters)
        if set(s) != {"I"}:
            strings.append(PauliString(s))
    return tuple(strings)


@dataclass(frozen=True)
class ExpFamilyModel:
    """Exponential-family state with coefficients mu over a Pauli basis."""

    basis: tuple[PauliString, ...]
    mu: np.ndarray
    n_qubits: int = field(init=False)

    def __post_init__(self):
        if not self.basis:
            raise ValueError("basis must be non-empty")
        n = self.basis[0].n_qubits
        if any(p.n_qubits != n for p in self.basis):
            raise ValueError("basis operators must share the qubit count")
        if any(p.is_identity for p in self.basis):
            raise ValueError("basis operators must be non-identity")
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (len(self.basis),):
            raise ValueError("mu length must match basis size")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "n_qubits", n)
        N = 2**n
        ops = _dense_basis(self.basis)
        gram = np.einsum("jab,kba->jk", ops, ops).real
        if np.max(np.abs(gram - N * np.eye(len(self.basis)))) > 1e-10 * N:
            raise ValueError("basis must satisfy tr(X_j X_k) = N delta_jk")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def with_mu(self, mu: np.ndarray) -> "ExpFamilyModel":
        return ExpFamilyModel(basis=self.basis, mu=np.asarray(mu, dtype=float))

    def dense_basis(self) -> np.ndarray:
        return _dense_basis(self.basis)


@dataclass(frozen=True)
class MixtureCoords:
    """Mixture coordinates eta_j = tr(rho X_j)/2 over the same basis."""

    basis: tuple[PauliString, ...]
    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.shape != (len(self.basis),):
            raise ValueError("eta length must match basis size")
        object.__setattr__(self, "eta", eta)

    @property
    def n_qubits(self) -> int:
        return self.basis[0].n_qubits


def ef_log_partition(model: ExpFamilyModel) -> float:
    K = np.einsum("l,lab->ab", model.mu, model.dense_basis())
    w = np.linalg.eigvalsh(K)
    m = float(np.max(-w))
    return m + float(np.log(np.sum(np.exp(-w - m))))


def ef_density(model: ExpFamilyModel) -> DensityOperator:
    K = np.einsum("l,lab->ab", model.mu, model.dense_basis())
    w, V = eigh(K)
    weights = np.exp(-(w - np.min(w)))
    weights /= np.sum(weights)
    rho = (V * weights) @ V.conj().T
    return density_from_matrix(0.5 * (rho + rho.conj().T))


def ef_expectations(model: ExpFamilyModel) -> np.ndarray:
    """tr(rho E_j) for every basis operator."""
    rho = ef_density(model).matrix
    return np.einsum("ab,jba->j", rho, model.dense_basis()).real


def ef_tangents(model: ExpFamilyModel) -> list[np.ndarray]:
    """Exact d(rho)/d(mu_j): logarithmic-mean smeared basis operators."""
    rho = ef_density(model)
    p, V = eigh(rho.matrix)
    mean_log = 1.0 / metric_weights(p, BKM)  # logarithmic mean of eigenvalue pairs
    expect = ef_expectations(model)
    tangents = []
    for j, op in enumerate(model.dense_basis()):
        M = V.conj().T @ op @ V
        T = V @ (-mean_log * M) @ V.conj().T + expect[j] * rho.matrix
        tangents.append(0.5 * (T + T.conj().T))
    return tangents


def ef_bkm_info_matrix(model: ExpFamilyModel) -> InformationMatrix:
    """BKM information matrix in exponential coordinates (Hessian of ln Z)."""
    rho = ef_density(model)
    return InformationMatrix(
        entries=info_matrix_oracle(ef_tangents(model), rho, BKM).entries,
        metric_kind=BKM,
        params=model.mu.copy(),
    )


def ef_to_mixture(model: ExpFamilyModel) -> MixtureCoords:
    return MixtureCoords(basis=model.basis, eta=0.5 * ef_expectations(model))


def mixture_state(coords: MixtureCoords) -> DensityOperator:
    """Reconstruct the state from mixture coordinates (full basis only)."""
    n = coords.n_qubits
    N = 2**n
    if len(coords.basis) != N * N - 1:
        raise ValueError("state reconstruction requires the full Pauli basis")
    ops = _dense_basis(coords.basis)
    rho = np.eye(N, dtype=complex) / N + np.einsum("j,jab->ab", 2.0 * coords.eta / N, ops)
    if float(np.min(np.linalg.eigvalsh(rho))) <= 0.0:
        raise ValueError("outside mixture simplex: reconstruction is not positive definite")
    return density_from_matrix(0.5 * (rho + rho.conj().T))


def mixture_negentropy_gradient(coords: MixtureCoords) -> np.ndarray:
    """Gradient of tr(rho ln rho) with respect to eta (full basis only)."""
    rho = mixture_state(coords)
    w, V = eigh(rho.matrix)
    log_rho = (V * np.log(w)) @ V.conj().T
    N = rho.dim
    ops = _dense_basis(coords.basis)
    return (2.0 / N) * np.einsum("jab,ba->j", ops, log_rho).real


def ef_from_mixture(
    coords: MixtureCoords, tol: float = 1e-10, max_iter: int = 200
) -> ExpFamilyModel:
    """Invert the Legendre map eta -> mu by damped Newton from mu = 0."""
    n = coords.n_qubits
    if len(coords.basis) == 4**n - 1:
        mixture_state(coords)  # raises if outside the simplex
    model = ExpFamilyModel(basis=coords.basis, mu=np.zeros(len(coords.basis)))
    target = coords.eta
    resid = 0.5 * ef_expectations(model) - target
    for _ in range(max_iter):
        err = float(np.max(np.abs(resid)))
        if err <= tol:
            return model
        info = ef_bkm_info_matrix(model).entries
        step = 2.0 * np.linalg.solve(info, resid)
        scale = 1.0
        for _ in range(40):
            trial = model.with_mu(model.mu + scale * step)
            trial_resid = 0.5 * ef_expectations(trial) - target
            if float(np.max(np.abs(trial_resid))) < err:
                model, resid = trial, trial_resid
                break
            scale *= 0.5
        else:
            raise ValueError("outside mixture simplex: Newton could not reduce the residual")
    raise ValueError("outside mixture simplex: Newton did not converge")


def draw_target_eigenstate(target: DensityOperator, rng: np.random.Generator) -> np.ndarray:
    """Sample an eigenstate of the target with its eigenvalue probability."""
    w, V = eigh(target.matrix)
    probs = np.clip(w, 0.0, None)
    probs /= np.sum(probs)
    idx = int(np.searchsorted(np.cumsum(probs), rng.random()))
    return V[:, min(idx, len(probs) - 1)].copy()


def ef_learning_gradient(model: ExpFamilyModel, target: DensityOperator) -> np.ndarray:
    """Exact gradient of D(target || rho_mu): tr(sigma E_j) - tr(rho_mu E_j)."""
    if not target.is_full_rank():
        raise ValueError("unsupported data state: target must be full rank")
    sig = np.einsum("ab,jba->j", target.matrix, model.dense_basis()).real
    return sig - ef_expectations(model)


def ef_learning_gradient_online(model: ExpFamilyModel, eigenstate: np.ndarray) -> np.ndarray:
    """Single-sample unbiased estimate: <x|E_j|x> - tr(rho_mu E_j)."""
    ops = model.dense_basis()
    obs = np.einsum("a,jab,b->j", eigenstate.conj(), ops, eigenstate).real
    return obs - ef_expectations(model)


def ef_simulation_gradient(model: ExpFamilyModel, K: np.ndarray, beta: float) -> np.ndarray:
    """Exact gradient of D(rho_mu || Gibbs(K, beta)) in exponential coordinates."""
    info = ef_bkm_info_matrix(model).entries
    tangents = ef_tangents(model)
    trK = np.array([float(np.einsum("ab,ba->", T, K).real) for T in tangents])
    return info @ model.mu + beta * trK

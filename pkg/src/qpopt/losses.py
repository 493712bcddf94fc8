"""VQT and QMHL losses on QHBMs with exact and shot-based gradients.

VQT minimizes the free energy -S(rho_theta) + beta*tr(rho H), equal to the
forward relative entropy to the Gibbs state up to -ln(Z_beta).  QMHL
minimizes the cross entropy tr(sigma K) + ln(Z_theta), equal to the reverse
relative entropy up to S(sigma).  Circuit-angle gradients use exact +-pi/4
parameter shifts; EBM-parameter gradients use exact enumeration, with shot
mode replacing quantum-side expectations by eigenstate samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qhbm as q
from .linalg import require_hermitian
from .states import DensityOperator

# Default per-step shot budget, split evenly across required expectations.
DEFAULT_SHOT_BUDGET = 500


@dataclass(frozen=True)
class LossEvaluation:
    """Loss value in nats plus gradients for both parameter groups."""

    value: float
    grad_theta: np.ndarray
    grad_phi: np.ndarray
    shots_used: int = 0

    @property
    def grad(self) -> np.ndarray:
        return np.concatenate([self.grad_theta, self.grad_phi])

    @property
    def grad_inf_norm(self) -> float:
        g = self.grad
        return float(np.max(np.abs(g))) if g.size else 0.0


def _per_expectation(shots: int, groups: int) -> int:
    return max(2, shots // max(groups, 1))


def _sample_indices(prob: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(prob)
    return np.searchsorted(cdf, rng.random(count)).astype(np.int64)


def vqt_loss(
    model: q.QhbmModel,
    params: np.ndarray,
    H: np.ndarray,
    beta: float,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> LossEvaluation:
    """Free-energy loss -S(rho_theta) + beta tr(rho_Omega H)."""
    require_hermitian(H, "Hamiltonian")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    theta, phi = model.split(params)
    bm = q.bm_from_theta(model.n_qubits, theta)
    p = q.ebm_probabilities(bm)
    E = q.ebm_energies(bm)
    G = q.ebm_energy_gradients(bm)
    lnz = q.ebm_log_partition(bm)
    entropy = float(p @ E) + lnz

    U, u_plus, u_minus = q.qnn_unitary_with_shifts(model.circuit, phi)
    h_diag = np.einsum("ax,ax->x", U.conj(), H @ U).real  # <x|U^dag H U|x>
    hp = np.einsum("jax,jax->jx", u_plus.conj(), np.matmul(H, u_plus)).real
    hm = np.einsum("jax,jax->jx", u_minus.conj(), np.matmul(H, u_minus)).real

    if shots == 0:
        value = -entropy + beta * float(p @ h_diag)
        f = beta * h_diag - E
        grad_theta = (G.T @ p) * float(p @ f) - G.T @ (p * f)
        grad_phi = beta * ((hp - hm) @ p)
        return LossEvaluation(value, grad_theta, grad_phi, 0)

    if rng is None:
        raise ValueError("shot mode requires an rng")
    # The budget covers quantum-side expectations (measurements of H against
    # prepared eigenstates); EBM expectations are classical and stay exact.
    nq = model.phi_dim
    k = _per_expectation(shots, 2 * nq + 2)
    used = (2 * nq + 2) * k

    cdf = np.cumsum(p)
    xs_val = np.searchsorted(cdf, rng.random(k))
    value = -entropy + beta * float(np.mean(h_diag[xs_val]))

    # theta gradient: E_y[grad E] is classical-exact, so one sampled batch of
    # H measurements keeps the whole expression unbiased.
    xs_f = np.searchsorted(cdf, rng.random(k))
    f = beta * h_diag - E
    grad_theta = (G.T @ p) * float(np.mean(f[xs_f])) - (f[xs_f, None] * G[xs_f]).mean(axis=0)

    xs = np.searchsorted(cdf, rng.random((2, nq, k)))
    grad_phi = beta * (
        np.take_along_axis(hp, xs[0], axis=1).mean(axis=1)
        - np.take_along_axis(hm, xs[1], axis=1).mean(axis=1)
    )
    return LossEvaluation(value, grad_theta, grad_phi, used)


def qmhl_loss(
    model: q.QhbmModel,
    params: np.ndarray,
    data: DensityOperator,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> LossEvaluation:
    """Cross-entropy loss tr(sigma K_Omega) + ln Z_theta against a data state."""
    theta, phi = model.split(params)
    bm = q.bm_from_theta(model.n_qubits, theta)
    p = q.ebm_probabilities(bm)
    E = q.ebm_energies(bm)
    G = q.ebm_energy_gradients(bm)
    lnz = q.ebm_log_partition(bm)

    U, u_plus, u_minus = q.qnn_unitary_with_shifts(model.circuit, phi)
    sigma = data.matrix
    pulled = U.conj().T @ sigma @ U
    sigma_diag = np.clip(np.real(np.diag(pulled)), 0.0, None)  # data measured in U-frame
    sp = np.einsum("jax,jax->jx", u_plus.conj(), np.matmul(sigma, u_plus)).real
    sm = np.einsum("jax,jax->jx", u_minus.conj(), np.matmul(sigma, u_minus)).real
    # tr[sigma K_{+-j}] = sum_x E(x) <x|U_{+-j}^dag sigma U_{+-j}|x>

    if shots == 0:
        value = float(E @ sigma_diag) + lnz
        grad_theta = G.T @ sigma_diag - G.T @ p
        grad_phi = (sp - sm) @ E
        return LossEvaluation(value, grad_theta, grad_phi, 0)

    if rng is None:
        raise ValueError("shot mode requires an rng")
    # The budget covers data-state measurements; the model-side EBM
    # expectation is classical and stays exact.
    nq = model.phi_dim
    k = _per_expectation(shots, 2 * nq + 2)
    used = (2 * nq + 2) * k

    sig_prob = sigma_diag / np.sum(sigma_diag)
    xs_val = _sample_indices(sig_prob, k, rng)
    value = float(np.mean(E[xs_val])) + lnz

    xs_data = _sample_indices(sig_prob, k, rng)
    grad_theta = G[xs_data].mean(axis=0) - G.T @ p

    # phi gradient: eigenstate samples of the data state against shifted K.
    ws, Vs = np.linalg.eigh(sigma)
    ws = np.clip(ws, 0.0, None)
    cdf = np.cumsum(ws / np.sum(ws))
    grad_phi = np.empty(nq)
    for j in range(nq):
        psi = Vs[:, np.searchsorted(cdf, rng.random(k))]  # (N, k) eigenstates
        ap = u_plus[j].conj().T @ psi
        psi2 = Vs[:, np.searchsorted(cdf, rng.random(k))]
        am = u_minus[j].conj().T @ psi2
        grad_phi[j] = float(np.mean(E @ (np.abs(ap) ** 2)) - np.mean(E @ (np.abs(am) ** 2)))
    return LossEvaluation(value, grad_theta, grad_phi, used)


def relative_entropy_to_anchor_grad(
    model: q.QhbmModel,
    params: np.ndarray,
    anchor_params: np.ndarray,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> LossEvaluation:
    """Value and gradient of D(rho_Omega || rho_anchor) with respect to Omega.

    Realized as a free-energy-type evaluation with the anchor's modular
    Hamiltonian as the target operator at unit inverse temperature:
    D(rho_Omega || rho_a) = -S(rho_Omega) + tr(rho_Omega K_a) + ln Z_a.
    """
    K_anchor = q.qhbm_modular_hamiltonian(model, anchor_params)
    lnz_anchor = q.qhbm_log_partition(model, anchor_params)
    ev = vqt_loss(model, params, K_anchor, 1.0, shots, rng)
    return LossEvaluation(ev.value + lnz_anchor, ev.grad_theta, ev.grad_phi, ev.shots_used)

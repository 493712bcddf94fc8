"""Information matrices on parameterized mixed states.

Two monotone metrics are supported: BKM (reciprocal logarithmic-mean
eigenvalue weights) and BH (reciprocal arithmetic-mean weights).  Each is
available through two routes: a spectral-representation oracle over explicit
tangent operators, and a block assembly for QHBM models built from EBM
covariances and +-pi/4 parameter shifts.  The routes agree to high precision
in exact mode and are tested against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qhbm as q
from .linalg import eigh, max_abs, require_hermitian
from .states import DensityOperator, relative_entropy

BKM = "BKM"
BH = "BH"
_KINDS = (BKM, BH)

_DEGENERACY_REL_TOL = 1e-12


@dataclass(frozen=True)
class InformationMatrix:
    """Symmetric PSD matrix of a monotone metric resolved to coordinates."""

    entries: np.ndarray
    metric_kind: str
    params: np.ndarray | None = None

    def __post_init__(self):
        if self.metric_kind not in _KINDS:
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        e = self.entries
        if max_abs(e - e.T) > 1e-10 * max(max_abs(e), 1e-300):
            raise ValueError("information matrix must be symmetric")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def condition_number(self) -> float:
        w = np.abs(np.linalg.eigvalsh(self.entries))
        lo, hi = float(np.min(w)), float(np.max(w))
        return np.inf if lo == 0.0 else hi / lo


def metric_weights(p: np.ndarray, kind: str) -> np.ndarray:
    """Weight matrix c(p_x, p_y) on eigenvalue pairs for the chosen metric."""
    x = p[:, None]
    y = p[None, :]
    if kind == BH:
        return 2.0 / (x + y)
    if kind == BKM:
        close = np.abs(x - y) < _DEGENERACY_REL_TOL * np.maximum(x, y)
        diff = np.where(close, 1.0, x - y)
        return np.where(close, 1.0 / x, (np.log(x) - np.log(y)) / diff)
    raise ValueError(f"unknown metric kind {kind!r}")


def _eigenbasis(rho: DensityOperator) -> tuple[np.ndarray, np.ndarray]:
    p, V = eigh(rho.matrix)
    if float(np.min(p)) <= 0.0:
        raise ValueError("metric requires a full-rank state")
    return p, V


def info_matrix_oracle(
    tangents: list[np.ndarray], rho: DensityOperator, kind: str = BKM
) -> InformationMatrix:
    """Spectral oracle: [I]_jk = sum_xy c(p_x,p_y) <x|H_j|y><y|H_k|x>."""
    p, V = _eigenbasis(rho)
    c = metric_weights(p, kind)
    mats = []
    for H in tangents:
        require_hermitian(H, "tangent")
        if abs(np.trace(H)) > 1e-8 * max(max_abs(H), 1e-300):
            raise ValueError("tangent must be traceless")
        mats.append(V.conj().T @ H @ V)
    d = len(mats)
    out = np.zeros((d, d))
    for j in range(d):
        wj = c * mats[j]
        for k in range(j, d):
            val = float(np.real(np.sum(wj * mats[k].conj())))
            out[j, k] = out[k, j] = val
    return InformationMatrix(entries=out, metric_kind=kind)


def logarithmic_derivative(
    rho: DensityOperator, tangent: np.ndarray, kind: str = BKM
) -> np.ndarray:
    """Apply the metric lowering operator to a tangent in rho's eigenbasis."""
    p, V = _eigenbasis(rho)
    require_hermitian(tangent, "tangent")
    c = metric_weights(p, kind)
    M = V.conj().T @ tangent @ V
    L = V @ (c * M) @ V.conj().T
    return 0.5 * (L + L.conj().T)


def generalized_covariance(
    observables: list[np.ndarray], rho: DensityOperator, kind: str = BKM
) -> np.ndarray:
    """[Cov]_jk = tr[A_j R(A_k)] - tr(rho A_j) tr(rho A_k), R the raising operator."""
    p, V = _eigenbasis(rho)
    inv_c = 1.0 / metric_weights(p, kind)
    mats = [V.conj().T @ require_hermitian(A, "observable") @ V for A in observables]
    means = [float(np.real(np.sum(p * np.diag(M)))) for M in mats]
    d = len(mats)
    out = np.zeros((d, d))
    for j in range(d):
        wj = inv_c * mats[j]
        for k in range(j, d):
            val = float(np.real(np.sum(wj * mats[k].conj()))) - means[j] * means[k]
            out[j, k] = out[k, j] = val
    return out


# ---------------------------------------------------------------------------
# QHBM block assembly
# ---------------------------------------------------------------------------


def _ebm_block_exact(p: np.ndarray, G: np.ndarray) -> np.ndarray:
    mean = G.T @ p
    return (G.T * p) @ G - np.outer(mean, mean)


def _ebm_block_shots(G: np.ndarray, xs: np.ndarray) -> np.ndarray:
    # Split-batch product of means keeps every entry exactly unbiased.
    g = G[xs]
    second = g.T @ g / len(xs)
    half = len(xs) // 2
    ma, mb = g[:half].mean(axis=0), g[half:].mean(axis=0)
    return second - 0.5 * (np.outer(ma, mb) + np.outer(mb, ma))


def qhbm_info_matrix(
    model: q.QhbmModel,
    params: np.ndarray,
    kind: str = BKM,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> InformationMatrix:
    """Assemble the metric from EBM, circuit, and cross blocks.

    Exact mode computes all traces densely.  Shot mode (BKM only) replaces
    the EBM block with sampled bitstrings and the circuit-involved traces
    with eigenstate samples measured against shifted modular Hamiltonians,
    using ``shots`` samples per expectation.
    """
    theta, phi = model.split(params)
    bm = q.bm_from_theta(model.n_qubits, theta)
    p = q.ebm_probabilities(bm)
    E = q.ebm_energies(bm)
    G = q.ebm_energy_gradients(bm)
    c, nq = model.theta_dim, model.phi_dim
    U, u_plus, u_minus = q.qnn_unitary_with_shifts(model.circuit, phi)

    if shots > 0:
        if rng is None:
            raise ValueError("shot mode requires an rng")
        if kind != BKM:
            raise ValueError("shot mode is implemented for the BKM assembly only")
        if shots < 2:
            raise ValueError("shot mode needs at least 2 samples per expectation")

    out = np.zeros((c + nq, c + nq))

    # theta-theta block: covariance of the energy gradient under p_theta.
    if shots == 0:
        out[:c, :c] = _ebm_block_exact(p, G)
    else:
        out[:c, :c] = _ebm_block_shots(G, q.ebm_sample(bm, shots, rng))

    # M_{+-j} = U^dag @ U_{+-j}; columns give shifted eigenvectors in the
    # unshifted eigenbasis.
    Msp = np.einsum("ba,jbx->jax", U.conj(), u_plus)
    Msm = np.einsum("ba,jbx->jax", U.conj(), u_minus)

    if kind == BKM:
        stack = np.concatenate([u_plus, u_minus], axis=0)  # (2q, N, N)
        # T[b, a] = tr[rho_a K_b] over all shift pairs.
        if shots == 0:
            T = np.empty((2 * nq, 2 * nq))
            for b in range(2 * nq):
                W = np.matmul(stack[b].conj().T, stack)  # (2q, N, N)
                T[b] = np.einsum("jyx,y,x->j", np.abs(W) ** 2, E, p)
        else:
            T = np.zeros((2 * nq, 2 * nq))
            for b in range(2 * nq):
                for a in range(2 * nq):
                    xs = q.ebm_sample(bm, shots, rng)
                    amps = stack[b].conj().T @ stack[a][:, xs]
                    T[b, a] = float(np.mean(E @ (np.abs(amps) ** 2)))
        kp_rp, kp_rm = T[:nq, :nq], T[:nq, nq:]
        km_rp, km_rm = T[nq:, :nq], T[nq:, nq:]
        phi_block = (-kp_rp - km_rm + km_rp + kp_rm).T  # rows rho-shift j, cols K-shift k
        out[c:, c:] = 0.5 * (phi_block + phi_block.T)

        # cross block: energy-gradient observable against shifted densities,
        # [I]_{theta_k, phi_j} = sum_x G[x,k] (diag(U^dag rho_{-j} U) - diag(U^dag rho_{+j} U))_x
        if shots == 0:
            dp = np.einsum("jax,x,jax->ja", Msp, p, Msp.conj()).real
            dm = np.einsum("jax,x,jax->ja", Msm, p, Msm.conj()).real
            cross = G.T @ (dm - dp).T
        else:
            cross = np.zeros((c, nq))
            for j in range(nq):
                xs = q.ebm_sample(bm, shots, rng)
                wp = np.abs(Msp[j][:, xs]) ** 2  # (N, S) weights per sample
                wm = np.abs(Msm[j][:, xs]) ** 2
                cross[:, j] = (G.T @ (wm - wp)).mean(axis=1)
        out[:c, c:] = cross
        out[c:, :c] = cross.T
    else:
        # BH blocks from the spectral formula with shifted-rho matrix
        # elements taken in the eigenbasis U|x>.
        cw = metric_weights(p, BH)
        Dp = np.einsum("jax,x,jbx->jab", Msp, p + 0j, Msp.conj())
        Dm = np.einsum("jax,x,jbx->jab", Msm, p + 0j, Msm.conj())
        delta = Dp - Dm  # (q, N, N)
        phi_block = np.einsum("ab,jab,kab->jk", cw, delta, delta.conj()).real
        out[c:, c:] = 0.5 * (phi_block + phi_block.T)

        mean_g = G.T @ p
        dpdt = (p[:, None] * (mean_g[None, :] - G)).T  # (c, 2^n) = d p(x)/d theta
        diag_delta = np.einsum("jaa->ja", delta).real  # (q, 2^n)
        cross = dpdt @ (diag_delta / p).T
        out[:c, c:] = cross
        out[c:, :c] = cross.T

    return InformationMatrix(
        entries=out, metric_kind=kind, params=np.asarray(params, float).copy()
    )


def bkm_info_qhbm(
    model: q.QhbmModel,
    params: np.ndarray,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> InformationMatrix:
    return qhbm_info_matrix(model, params, BKM, shots, rng)


def bh_info_qhbm(
    model: q.QhbmModel,
    params: np.ndarray,
    shots: int = 0,
    rng: np.random.Generator | None = None,
) -> InformationMatrix:
    return qhbm_info_matrix(model, params, BH, shots, rng)


def qhbm_tangents(model: q.QhbmModel, params: np.ndarray) -> list[np.ndarray]:
    """Exact d(rho)/d(Omega_j) operators, EBM parameters first."""
    theta, phi = model.split(params)
    bm = q.bm_from_theta(model.n_qubits, theta)
    p = q.ebm_probabilities(bm)
    G = q.ebm_energy_gradients(bm)
    U, u_plus, u_minus = q.qnn_unitary_with_shifts(model.circuit, phi)
    mean_g = G.T @ p
    tangents = []
    for k in range(model.theta_dim):
        dp = p * (mean_g[k] - G[:, k])
        H = (U * dp) @ U.conj().T
        tangents.append(0.5 * (H + H.conj().T))
    for j in range(model.phi_dim):
        rp = (u_plus[j] * p) @ u_plus[j].conj().T
        rm = (u_minus[j] * p) @ u_minus[j].conj().T
        H = rp - rm
        tangents.append(0.5 * (H + H.conj().T))
    return tangents


def bkm_hessian_check(model: q.QhbmModel, params: np.ndarray, h: float = 1e-4) -> float:
    """Max deviation between the BKM matrix and the negated mixed
    finite-difference Hessian of D(rho_{O'} || rho_O) at O' = O."""
    if not 1e-6 <= h <= 1e-3:
        raise ValueError("h must be in [1e-6, 1e-3]")
    params = np.asarray(params, dtype=float)
    d = model.dim
    exact = qhbm_info_matrix(model, params, BKM).entries

    def dre(a: np.ndarray, b: np.ndarray) -> float:
        return relative_entropy(q.qhbm_density(model, a), q.qhbm_density(model, b))

    fd = np.zeros((d, d))
    eye = np.eye(d)
    for j in range(d):
        for k in range(d):
            pp = dre(params + h * eye[j], params + h * eye[k])
            pm = dre(params + h * eye[j], params - h * eye[k])
            mp = dre(params - h * eye[j], params + h * eye[k])
            mm = dre(params - h * eye[j], params - h * eye[k])
            fd[j, k] = -(pp - pm - mp + mm) / (4 * h * h)
    return float(np.max(np.abs(fd - exact)))

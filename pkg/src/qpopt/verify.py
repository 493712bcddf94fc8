"""Dual-oracle verification suite behind the ``verify`` CLI subcommand.

Each check recomputes a quantity along an independent route (closed form,
finite differences, brute-force enumeration, or the spectral oracle) and
compares.  These are reduced-count versions of the full test suite, sized to
finish in about a minute.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import exp_family as ef
from . import losses, metrics, qhbm, targets
from .linalg import PauliString, matrix_exp, matrix_log, pauli_dense, pseudo_inverse
from .optimizers import qpngd_step
from .states import (
    DensityOperator,
    density_from_matrix,
    fidelity,
    gibbs_state,
    relative_entropy,
    third_order_symmetry_gap,
    von_neumann_entropy,
)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (A + A.conj().T)


def _random_density(rng: np.random.Generator, n_qubits: int) -> DensityOperator:
    dim = 2**n_qubits
    A = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = A @ A.conj().T + 0.05 * np.eye(dim)
    rho /= np.trace(rho).real
    return density_from_matrix(rho)


def _fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def check_operator_core(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    A = _random_hermitian(rng, 8)
    w, V = np.linalg.eigh(A)
    resid = np.max(np.abs((V * w) @ V.conj().T - A)) / np.max(np.abs(A))
    out.append(CheckResult("eigh reconstruction", resid < 1e-10, f"rel resid {resid:.2e}"))

    P = A @ A.conj().T + 0.1 * np.eye(8)
    round_trip = np.max(np.abs(matrix_exp(matrix_log(P)) - P)) / np.max(np.abs(P))
    out.append(CheckResult("exp/log round trip", round_trip < 1e-9, f"rel resid {round_trip:.2e}"))

    B = rng.standard_normal((6, 3))
    M = B @ B.T  # rank deficient PSD
    Mp = pseudo_inverse(M)
    mp = max(
        np.max(np.abs(M @ Mp @ M - M)),
        np.max(np.abs(Mp @ M @ Mp - Mp)),
        np.max(np.abs((M @ Mp).T - M @ Mp)),
        np.max(np.abs((Mp @ M).T - Mp @ M)),
    )
    out.append(CheckResult("pseudo-inverse identities", mp < 1e-8, f"max resid {mp:.2e}"))

    s = PauliString("XZY")
    D = pauli_dense(s)
    ok = abs(np.trace(D)) < 1e-12 and np.max(np.abs(D @ D - np.eye(8))) < 1e-12
    out.append(CheckResult("pauli traceless involution", ok, "trace and square checked"))
    return out


def check_states(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    Z = pauli_dense(PauliString("Z"))
    g = gibbs_state(Z, 1.0)
    p1 = float(np.real(g.matrix[1, 1]))
    expected = np.e / (2 * np.cosh(1.0))
    out.append(CheckResult("gibbs closed form", abs(p1 - expected) < 1e-12, f"p1 err {abs(p1-expected):.2e}"))

    rho = _random_density(rng, 2)
    sig = _random_density(rng, 2)
    d = relative_entropy(rho, sig)
    alt = -von_neumann_entropy(rho) - float(
        np.real(np.trace(rho.matrix @ matrix_log(sig.matrix)))
    )
    out.append(CheckResult("relative entropy identity", abs(d - alt) < 1e-10 and d > -1e-10, f"err {abs(d-alt):.2e}"))

    f_self = fidelity(rho, rho)
    f_sym = abs(fidelity(rho, sig) - fidelity(sig, rho))
    out.append(CheckResult("fidelity symmetry", abs(f_self - 1) < 1e-9 and f_sym < 1e-10, f"asym {f_sym:.2e}"))

    A = _random_hermitian(rng, 4)
    B = _random_hermitian(rng, 4)

    def path(lam: float) -> DensityOperator:
        M = matrix_exp(A + lam * B)
        return density_from_matrix(M / np.trace(M).real)

    lams = np.array([2e-2, 4e-2, 8e-2])
    gaps = third_order_symmetry_gap(path, lams)
    slope = np.polyfit(np.log(lams), np.log(gaps), 1)[0]
    out.append(CheckResult("third-order symmetry slope", abs(slope - 3) < 0.15, f"slope {slope:.3f}"))
    return out


def check_qhbm(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    model = qhbm.QhbmModel(3, 1)
    params = model.random_init(rng)
    rho = qhbm.qhbm_density(model, params)
    p = np.sort(qhbm.ebm_probabilities(model.ebm(params)))
    spec = np.sort(rho.eigenvalues())
    out.append(CheckResult("qhbm spectrum = ebm probs", np.max(np.abs(p - spec)) < 1e-12, f"err {np.max(np.abs(p-spec)):.2e}"))

    K = qhbm.qhbm_modular_hamiltonian(model, params)
    lnz = qhbm.qhbm_log_partition(model, params)
    recon = matrix_exp(-K) / np.exp(lnz)
    err = np.max(np.abs(recon - rho.matrix))
    out.append(CheckResult("modular hamiltonian", err < 1e-10, f"err {err:.2e}"))

    q6 = qhbm.QhbmModel(6, 2)
    out.append(CheckResult("17 angles per layer at n=6", q6.phi_dim == 34, f"q={q6.phi_dim}"))
    return out


def check_loss_gradients(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    model = qhbm.QhbmModel(3, 1)
    params = model.random_init(rng)
    spec = targets.TfimSpec(3)
    H = targets.tfim_hamiltonian(spec)
    beta = 1.5

    ev = losses.vqt_loss(model, params, H, beta)
    fd = _fd_gradient(lambda x: losses.vqt_loss(model, x, H, beta).value, params)
    out.append(CheckResult("vqt gradients vs FD", _rel_err(ev.grad, fd) < 1e-5, f"rel err {_rel_err(ev.grad, fd):.2e}"))

    data = targets.tfim_gibbs_target(spec, beta)
    ev = losses.qmhl_loss(model, params, data)
    fd = _fd_gradient(lambda x: losses.qmhl_loss(model, x, data).value, params)
    out.append(CheckResult("qmhl gradients vs FD", _rel_err(ev.grad, fd) < 1e-5, f"rel err {_rel_err(ev.grad, fd):.2e}"))

    anchor = model.random_init(rng)
    ev = losses.relative_entropy_to_anchor_grad(model, params, anchor)
    fd = _fd_gradient(
        lambda x: relative_entropy(qhbm.qhbm_density(model, x), qhbm.qhbm_density(model, anchor)),
        params,
    )
    out.append(CheckResult("anchored divergence grad vs FD", _rel_err(ev.grad, fd) < 1e-5, f"rel err {_rel_err(ev.grad, fd):.2e}"))
    return out


def check_metrics(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    model = qhbm.QhbmModel(2, 1)
    params = model.random_init(rng)
    rho = qhbm.qhbm_density(model, params)
    tangents = metrics.qhbm_tangents(model, params)
    for kind in (metrics.BKM, metrics.BH):
        block = metrics.qhbm_info_matrix(model, params, kind).entries
        oracle = metrics.info_matrix_oracle(tangents, rho, kind).entries
        err = np.max(np.abs(block - oracle))
        out.append(CheckResult(f"{kind} blocks vs oracle", err < 1e-8, f"max err {err:.2e}"))
    bkm = metrics.qhbm_info_matrix(model, params, metrics.BKM).entries
    bh = metrics.qhbm_info_matrix(model, params, metrics.BH).entries
    gap = float(np.min(np.linalg.eigvalsh(bkm - bh)))
    out.append(CheckResult("BKM - BH is PSD", gap > -1e-8, f"min eig {gap:.2e}"))
    dev = metrics.bkm_hessian_check(model, params, 1e-4)
    tol = 1e-4 * (1.0 + np.max(np.abs(bkm)))
    out.append(CheckResult("BKM vs FD Hessian of D", dev < tol, f"max dev {dev:.2e}"))
    return out


def check_exp_family(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    basis = ef.full_pauli_basis(1)
    mu = 0.4 * rng.standard_normal(3)
    model = ef.ExpFamilyModel(basis=basis, mu=mu)

    coords = ef.ef_to_mixture(model)
    back = ef.ef_from_mixture(coords)
    err = np.max(np.abs(back.mu - model.mu))
    out.append(CheckResult("mixture round trip", err < 1e-8, f"err {err:.2e}"))

    info = ef.ef_bkm_info_matrix(model).entries
    fd = np.zeros_like(info)
    h = 1e-4
    for j in range(3):
        for k in range(3):
            ej, ek = np.eye(3)[j] * h, np.eye(3)[k] * h
            fd[j, k] = (
                ef.ef_log_partition(model.with_mu(mu + ej + ek))
                - ef.ef_log_partition(model.with_mu(mu + ej - ek))
                - ef.ef_log_partition(model.with_mu(mu - ej + ek))
                + ef.ef_log_partition(model.with_mu(mu - ej - ek))
            ) / (4 * h * h)
    out.append(CheckResult("info = Hessian of lnZ", np.max(np.abs(info - fd)) < 1e-5, f"err {np.max(np.abs(info-fd)):.2e}"))

    # duality: one exact mirror step in mixture coordinates equals one
    # metric-aware step in exponential coordinates
    A = _random_hermitian(rng, 2)
    ops = model.dense_basis()
    grad_eta = (2.0 / 2.0) * np.einsum("jab,ba->j", ops, A).real
    tangents = ef.ef_tangents(model)
    grad_mu = np.array([float(np.einsum("ab,ba->", T, A).real) for T in tangents])
    lam = 10.0
    mu_ngd = mu - (1.0 / lam) * np.linalg.solve(info, grad_mu)
    target_grad_psi = ef.mixture_negentropy_gradient(coords) - (1.0 / lam) * grad_eta
    # solve grad Psi(eta') = target by Newton on eta (3x3, convex)
    eta = coords.eta.copy()
    for _ in range(60):
        cur = ef.MixtureCoords(basis=basis, eta=eta)
        g = ef.mixture_negentropy_gradient(cur) - target_grad_psi
        if np.max(np.abs(g)) < 1e-12:
            break
        mix_info = 4.0 * np.linalg.inv(ef.ef_bkm_info_matrix(ef.ef_from_mixture(cur)).entries)
        eta = eta - np.linalg.solve(mix_info, g)
    mu_md = ef.ef_from_mixture(ef.MixtureCoords(basis=basis, eta=eta)).mu
    err = np.max(np.abs(mu_md - mu_ngd))
    out.append(CheckResult("mirror = metric-aware step", err < 1e-6, f"err {err:.2e}"))
    return out


def check_optimizer_identities(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    A = rng.standard_normal((4, 4))
    A = A @ A.T + 0.5 * np.eye(4)
    x0 = rng.standard_normal(4)
    new = qpngd_step(x0, A @ x0, A, 1.0)
    out.append(CheckResult("metric-aware Newton coincidence", np.max(np.abs(new)) < 1e-10, f"|x1| {np.max(np.abs(new)):.2e}"))
    return out


def check_trotter(rng: np.random.Generator) -> list[CheckResult]:
    out = []
    spec = targets.TfimSpec(4)
    chan = targets.ChannelSpec(tfim=spec, duration=5.0)
    U_trot = targets.trotter_unitary(chan)
    U_exact = targets.exact_unitary(targets.tfim_hamiltonian(spec), 5.0)
    err = float(np.linalg.norm(U_trot - U_exact, ord=2))
    out.append(CheckResult("trotter unitary error", err <= 1e-3, f"2-norm err {err:.2e}"))

    errs = []
    ms = [8, 16, 32, 64]
    for m in ms:
        c = targets.ChannelSpec(tfim=spec, duration=1.0, substeps=m)
        errs.append(
            float(np.linalg.norm(
                targets.trotter_unitary(c)
                - targets.exact_unitary(targets.tfim_hamiltonian(spec), 1.0),
                ord=2,
            ))
        )
    slope = -np.polyfit(np.log(ms), np.log(errs), 1)[0]
    out.append(CheckResult("trotter order-2 slope", abs(slope - 2) < 0.2, f"slope {slope:.3f}"))
    return out


def check_lagrange_convexity(rng: np.random.Generator) -> list[CheckResult]:
    model = qhbm.QhbmModel(2, 1)
    params = model.random_init(rng)
    A = _random_hermitian(rng, 4)

    def loss(x: np.ndarray) -> float:
        return float(np.einsum("ab,ba->", qhbm.qhbm_density(model, x).matrix, A).real)

    d = model.dim
    h = 1e-3
    eye = np.eye(d)
    H_loss = np.zeros((d, d))
    for j in range(d):
        for k in range(j, d):
            v = (
                loss(params + h * (eye[j] + eye[k]))
                - loss(params + h * (eye[j] - eye[k]))
                - loss(params + h * (eye[k] - eye[j]))
                + loss(params - h * (eye[j] + eye[k]))
            ) / (4 * h * h)
            H_loss[j, k] = H_loss[k, j] = v
    info = metrics.bkm_info_qhbm(model, params).entries
    lam_min_metric = float(np.min(np.linalg.eigvalsh(info)))
    lam_min_loss = float(np.min(np.linalg.eigvalsh(H_loss)))
    lam = 1.05 * abs(lam_min_loss) / lam_min_metric
    comp = H_loss + lam * info
    min_eig = float(np.min(np.linalg.eigvalsh(comp)))
    ok = min_eig > -1e-8
    return [CheckResult("lagrange convexity threshold", ok, f"min eig {min_eig:.2e} at lam {lam:.2f}")]


def run_verify(seed: int = 20240) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    results += check_operator_core(rng)
    results += check_states(rng)
    results += check_qhbm(rng)
    results += check_loss_gradients(rng)
    results += check_metrics(rng)
    results += check_exp_family(rng)
    results += check_optimizer_identities(rng)
    results += check_trotter(rng)
    results += check_lagrange_convexity(rng)
    return results


def format_table(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        lines.append(f"{r.name:<{width}}  {status}  {r.detail}")
    n_ok = sum(r.ok for r in results)
    lines.append(f"{n_ok}/{len(results)} checks passed")
    return "\n".join(lines)

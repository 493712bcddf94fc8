import numpy as np
import pytest

from qpopt.exp_family import (
    ExpFamilyModel,
    MixtureCoords,
    ef_bkm_info_matrix,
    ef_from_mixture,
    ef_tangents,
    ef_to_mixture,
    full_pauli_basis,
    mixture_negentropy_gradient,
)
from qpopt.optimizers import (
    OptimizationProblem,
    OptimizerConfig,
    adam_init,
    adam_step,
    lagrange_step,
    parameter_shift_tally,
    qpmd_step,
    qpngd_step,
    run_optimization,
    sgd_step,
)
from qpopt.problems import make_vqt_problem
from qpopt.qhbm import QhbmModel
from qpopt.rng import stream
from qpopt.targets import TfimSpec, tfim_gibbs_target, tfim_hamiltonian
from conftest import random_hermitian


def test_config_validation():
    with pytest.raises(ValueError, match="kind"):
        OptimizerConfig(kind="bogus")
    with pytest.raises(ValueError, match="one_over_j"):
        OptimizerConfig(kind="adam", schedule="one_over_j")
    with pytest.raises(ValueError, match="inner_steps"):
        OptimizerConfig(kind="qpmd", inner_steps=0)


def test_sgd_zero_gradient_fixed_point():
    x = np.array([1.0, -2.0])
    assert np.array_equal(sgd_step(x, np.zeros(2), 0.1), x)


def test_sgd_contracts_on_quadratic():
    x = 3.0
    for _ in range(200):
        x = float(sgd_step(np.array([x]), np.array([2.0 * x]), 0.4)[0])
    assert abs(x) < 1e-6


def test_adam_zero_gradient_fixed_point():
    x = np.array([0.5])
    new, _ = adam_step(x, np.zeros(1), adam_init(1), 0.1)
    assert np.array_equal(new, x)


def test_adam_first_step_magnitude():
    g = np.array([0.3])
    lr, eps = 0.1, 1e-7
    new, _ = adam_step(np.zeros(1), g, adam_init(1), lr, eps=eps)
    assert new[0] == pytest.approx(-lr * g[0] / (abs(g[0]) + eps), rel=1e-6)


def test_qpngd_zero_gradient_fixed_point(rng):
    x = rng.standard_normal(3)
    M = np.eye(3)
    assert np.array_equal(qpngd_step(x, np.zeros(3), M, 0.1), x)


def test_qpngd_newton_coincidence_on_quadratic(rng):
    A = rng.standard_normal((5, 5))
    A = A @ A.T + 0.3 * np.eye(5)
    x = rng.standard_normal(5)
    new = qpngd_step(x, A @ x, A, 1.0)
    assert np.max(np.abs(new)) < 1e-10


def test_qpngd_identity_metric_reduces_to_sgd(rng):
    x = rng.standard_normal(4)
    g = rng.standard_normal(4)
    a = qpngd_step(x, g, np.eye(4), 0.07)
    b = sgd_step(x, g, 0.07)
    assert np.max(np.abs(a - b)) < 1e-12


def test_qpngd_tikhonov_mode(rng):
    A = np.diag([1.0, 1e-12])
    g = np.array([1.0, 1.0])
    x = np.zeros(2)
    out = qpngd_step(x, g, A, 1.0, tikhonov_eps=1e-3)
    expected = -np.linalg.solve(A + 1e-3 * np.eye(2), g)
    assert np.allclose(out, expected)


def test_qpmd_anchor_fixed_point_with_zero_gradient():
    anchor = np.array([0.3, -0.2])
    moved = qpmd_step(anchor, np.zeros(2), lambda x: x - anchor, 10.0, 50, 0.05)
    assert np.max(np.abs(moved - anchor)) < 1e-12


def test_qpmd_shift_tally():
    assert parameter_shift_tally("qpmd", 17, 20) == 2 * 20 * 17
    assert parameter_shift_tally("qpngd", 17, 20) == 2 * 17 * 18 + 2 * 17
    assert parameter_shift_tally("sgd", 17, 20) == 34


def test_lagrange_zero_gradient_stays():
    anchor = np.array([1.0, 2.0])
    out = lagrange_step(anchor, lambda x: np.zeros(2), lambda x: x - anchor, 5.0, 30, 0.05)
    assert np.max(np.abs(out - anchor)) < 1e-12


def test_lagrange_small_step_aligns_with_metric_aware_direction():
    from qpopt.losses import qmhl_loss, vqt_loss
    from qpopt.metrics import bkm_info_qhbm
    from qpopt.linalg import pseudo_inverse
    from qpopt.qhbm import qhbm_density

    model = QhbmModel(2, 1)
    spec = TfimSpec(2)
    H = tfim_hamiltonian(spec)
    gen = np.random.default_rng(31)
    for _ in range(3):
        anchor = model.random_init(gen, scale=0.5)
        lam = 200.0
        moved = lagrange_step(
            anchor,
            lambda x: vqt_loss(model, x, H, 1.5).grad,
            lambda x: qmhl_loss(model, x, qhbm_density(model, anchor)).grad,
            lam,
            4000,
            0.002,
            exit_norm=1e-13,
        )
        delta = moved - anchor
        info = bkm_info_qhbm(model, anchor).entries
        natural = -pseudo_inverse(info, 1e-6) @ vqt_loss(model, anchor, H, 1.5).grad
        cos = delta @ natural / (np.linalg.norm(delta) * np.linalg.norm(natural))
        assert np.degrees(np.arccos(np.clip(cos, -1, 1))) < 5.0


# ---------------------------------------------------------------------------
# Mirror/metric-aware duality on the single-qubit full exponential family
# ---------------------------------------------------------------------------


def _duality_instance(rng, lam=10.0):
    basis = full_pauli_basis(1)
    mu = 0.5 * rng.standard_normal(3)
    model = ExpFamilyModel(basis=basis, mu=mu)
    A = random_hermitian(rng, 2)  # linear observable loss tr(A rho)
    info = ef_bkm_info_matrix(model).entries
    grad_mu = np.array(
        [float(np.einsum("ab,ba->", T, A).real) for T in ef_tangents(model)]
    )
    mu_ngd = mu - (1.0 / lam) * np.linalg.solve(info, grad_mu)

    ops = model.dense_basis()
    grad_eta = np.einsum("jab,ba->j", ops, A).real  # (2/N) tr(A E_j) with N=2
    coords = ef_to_mixture(model)

    def divergence_grad(eta):
        cur = MixtureCoords(basis=basis, eta=eta)
        return mixture_negentropy_gradient(cur) - mixture_negentropy_gradient(coords)

    return model, coords, grad_eta, divergence_grad, mu_ngd


@pytest.mark.parametrize("trial", range(10))
def test_qpmd_step_equals_qpngd_in_exponential_coordinates(trial):
    rng = np.random.default_rng(5000 + trial)
    lam = 10.0
    model, coords, grad_eta, div, mu_ngd = _duality_instance(rng, lam)
    # exact inner solve: many small inner gradient steps on the composite
    eta_new = qpmd_step(coords.eta, grad_eta, div, lam, 30_000, 5e-3 / lam, exit_norm=1e-13)
    mu_md = ef_from_mixture(MixtureCoords(basis=model.basis, eta=eta_new)).mu
    assert np.max(np.abs(mu_md - mu_ngd)) < 1e-6


def test_qpmd_inner_solve_is_proximal_optimum():
    rng = np.random.default_rng(77)
    lam = 10.0
    model, coords, grad_eta, div, _ = _duality_instance(rng, lam)
    eta_new = qpmd_step(coords.eta, grad_eta, div, lam, 30_000, 5e-3 / lam, exit_norm=1e-13)
    resid = grad_eta + lam * div(eta_new)
    assert np.max(np.abs(resid)) < 1e-6


# ---------------------------------------------------------------------------
# run_optimization loop behavior
# ---------------------------------------------------------------------------


def _tiny_problem(kind="sgd", max_steps=10, seed=3):
    model = QhbmModel(2, 1)
    spec = TfimSpec(2)
    cfg = OptimizerConfig(kind=kind, lr=0.1, max_steps=max_steps, inner_steps=5, inner_lr=0.01)
    init = model.random_init(stream(seed, "init", 0), scale=0.3)
    problem = make_vqt_problem(
        model, tfim_hamiltonian(spec), 1.0, cfg, init, target=tfim_gibbs_target(spec, 1.0)
    )
    return cfg, problem


def test_zero_steps_records_initial_point():
    cfg, prob = _tiny_problem(max_steps=0)
    traj = run_optimization(cfg, prob)
    assert len(traj.records) == 1
    assert traj.records[0].step == 0


def test_same_seed_identical_trajectories():
    cfg, prob1 = _tiny_problem(max_steps=15)
    _, prob2 = _tiny_problem(max_steps=15)
    t1 = run_optimization(cfg, prob1)
    t2 = run_optimization(cfg, prob2)
    assert np.array_equal(t1.losses(), t2.losses())
    assert np.array_equal(t1.final.params, t2.final.params)


def test_nan_loss_aborts_with_trajectory():
    calls = {"n": 0}

    def loss(x):
        calls["n"] += 1
        if calls["n"] > 3:
            return np.nan, np.zeros(2)
        return float(x @ x), 2 * x

    prob = OptimizationProblem(dim=2, init=np.ones(2), loss=loss)
    cfg = OptimizerConfig(kind="sgd", lr=0.1, max_steps=10)
    traj = run_optimization(cfg, prob)
    assert traj.aborted
    assert len(traj.records) >= 1


def test_one_over_j_schedule():
    cfg = OptimizerConfig(kind="qpngd", lr=1.0, schedule="one_over_j")
    assert cfg.outer_lr(1) == 1.0
    assert cfg.outer_lr(4) == 0.25


def test_qpmd_converges_to_stationary_point():
    model = QhbmModel(1, 2)
    spec = TfimSpec(1, coupling=0.0)
    cfg = OptimizerConfig(kind="qpmd", lr=0.2, max_steps=800, inner_steps=20, inner_lr=0.01)
    init = model.random_init(stream(12, "init", 0), scale=0.6)
    problem = make_vqt_problem(
        model, tfim_hamiltonian(spec), 2.0, cfg, init, target=tfim_gibbs_target(spec, 2.0)
    )
    traj = run_optimization(cfg, problem)
    assert traj.final.grad_norm <= 1e-4

"""Factories wiring QHBM models and losses into optimizer problems."""

from __future__ import annotations

import numpy as np

from . import losses, metrics, qhbm
from .optimizers import OptimizationProblem, OptimizerConfig, ShotCounter
from .states import DensityOperator, fidelity


def _metric_closure(model, config: OptimizerConfig, counter: ShotCounter, rng):
    q = model.phi_dim

    def metric(params: np.ndarray) -> np.ndarray:
        if config.shots > 0:
            # one EBM batch, (2q)^2 shifted traces, q cross expectations
            counter.add(config.shots * (1 + 4 * q * q + q))
            return metrics.qhbm_info_matrix(
                model, params, config.metric_kind, config.shots, rng
            ).entries
        return metrics.qhbm_info_matrix(model, params, config.metric_kind).entries

    return metric


def _divergence_closures(model, config: OptimizerConfig, counter: ShotCounter, rng):
    # anchors repeat across a whole inner loop; cache their derived operators
    anchor_cache: dict = {"key": None, "K": None, "data": None}

    def _anchor_operator(anchor: np.ndarray) -> np.ndarray:
        key = anchor.tobytes()
        if anchor_cache["key"] != key:
            anchor_cache["key"] = key
            anchor_cache["K"] = qhbm.qhbm_modular_hamiltonian(model, anchor)
            anchor_cache["data"] = None
        return anchor_cache["K"]

    # Anchored divergences compare the model against its own earlier state;
    # they involve no data samples and are evaluated exactly.
    def divergence_grad(params: np.ndarray, anchor: np.ndarray) -> np.ndarray:
        K_anchor = _anchor_operator(anchor)
        return losses.vqt_loss(model, params, K_anchor, 1.0).grad

    def reverse_divergence_grad(params: np.ndarray, anchor: np.ndarray) -> np.ndarray:
        _anchor_operator(anchor)
        if anchor_cache["data"] is None:
            anchor_cache["data"] = qhbm.qhbm_density(model, anchor)
        return losses.qmhl_loss(model, params, anchor_cache["data"]).grad

    return divergence_grad, reverse_divergence_grad


def make_vqt_problem(
    model: qhbm.QhbmModel,
    H: np.ndarray,
    beta: float,
    config: OptimizerConfig,
    init: np.ndarray,
    target: DensityOperator | None = None,
    rng: np.random.Generator | None = None,
) -> OptimizationProblem:
    """Free-energy minimization against the Gibbs state of (H, beta)."""
    counter = ShotCounter()

    def loss(params: np.ndarray) -> tuple[float, np.ndarray]:
        ev = losses.vqt_loss(model, params, H, beta, config.shots, rng)
        counter.add(ev.shots_used)
        return ev.value, ev.grad

    div, rev = _divergence_closures(model, config, counter, rng)
    fid = None
    if target is not None:
        fid = lambda params: fidelity(qhbm.qhbm_density(model, params), target)
    return OptimizationProblem(
        dim=model.dim,
        init=np.asarray(init, dtype=float),
        loss=loss,
        metric=_metric_closure(model, config, counter, rng),
        divergence_grad=div,
        reverse_divergence_grad=rev,
        fidelity=fid,
        n_quantum=model.phi_dim,
        counter=counter,
    )


def make_qmhl_problem(
    model: qhbm.QhbmModel,
    data: DensityOperator,
    config: OptimizerConfig,
    init: np.ndarray,
    target: DensityOperator | None = None,
    rng: np.random.Generator | None = None,
) -> OptimizationProblem:
    """Cross-entropy minimization against a data state.

    ``target`` is the fidelity reference, which may differ from ``data``
    (recursive propagation tracks an exactly-propagated ground truth).
    """
    counter = ShotCounter()
    reference = target if target is not None else data

    def loss(params: np.ndarray) -> tuple[float, np.ndarray]:
        ev = losses.qmhl_loss(model, params, data, config.shots, rng)
        counter.add(ev.shots_used)
        return ev.value, ev.grad

    div, rev = _divergence_closures(model, config, counter, rng)
    return OptimizationProblem(
        dim=model.dim,
        init=np.asarray(init, dtype=float),
        loss=loss,
        metric=_metric_closure(model, config, counter, rng),
        divergence_grad=div,
        reverse_divergence_grad=rev,
        fidelity=lambda params: fidelity(qhbm.qhbm_density(model, params), reference),
        n_quantum=model.phi_dim,
        counter=counter,
    )

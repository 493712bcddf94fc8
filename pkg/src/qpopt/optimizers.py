"""Descent engines: SGD, Adam, metric-aware (QPNGD), mirror (QPMD), Lagrange.

The step functions are pure and operate on flat parameter vectors through
callables, so the same machinery drives QHBM training, exponential-family
instances, and synthetic test problems.  ``run_optimization`` wraps a step
loop with trajectory logging, shot accounting, and NaN abort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import pseudo_inverse, tikhonov_solve

OPTIMIZER_KINDS = ("sgd", "adam", "qpngd", "qpmd", "lagrange")
SCHEDULES = ("constant", "one_over_j")

# Inner updates smaller than this stop the inner loop early.
INNER_EXIT_NORM = 1e-9


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "qpmd"
    lr: float = 0.1                 # outer learning rate, 1/lambda
    schedule: str = "constant"
    inner_steps: int = 20
    inner_lr: float = 0.05
    pinv_rel_tol: float = 1e-8
    tikhonov_eps: float = 0.0
    metric_kind: str = "BKM"
    shots: int = 0
    max_steps: int = 500
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-7

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "one_over_j" and self.kind != "qpngd":
            raise ValueError("one_over_j schedule is only meaningful with qpngd")
        if self.lr <= 0 or self.inner_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.kind in ("qpmd", "lagrange") and self.inner_steps < 1:
            raise ValueError("inner_steps must be at least 1")
        if self.shots < 0 or self.max_steps < 0:
            raise ValueError("shots and max_steps must be nonnegative")

    def outer_lr(self, step: int) -> float:
        if self.schedule == "one_over_j":
            return self.lr / max(step, 1)
        return self.lr


@dataclass
class StepRecord:
    step: int
    params: np.ndarray
    loss: float
    grad_norm: float
    fidelity: float | None = None
    info_condition: float | None = None
    shots_cumulative: int = 0


@dataclass
class Trajectory:
    records: list[StepRecord] = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""
    shift_tally_per_step: int = 0

    @property
    def final(self) -> StepRecord:
        return self.records[-1]

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def fidelities(self) -> np.ndarray:
        return np.array(
            [r.fidelity if r.fidelity is not None else np.nan for r in self.records]
        )


def parameter_shift_tally(kind: str, n_quantum: int, inner_steps: int) -> int:
    """Per-step count of shifted-circuit expectations a hardware run needs."""
    q = n_quantum
    if kind == "qpngd":
        return 2 * q * (q + 1) + 2 * q
    if kind in ("qpmd", "lagrange"):
        return 2 * inner_steps * q
    return 2 * q  # sgd / adam gradient only


# ---------------------------------------------------------------------------
# Pure step functions
# ---------------------------------------------------------------------------


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    return params - lr * grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def adam_init(dim: int) -> AdamState:
    return AdamState(m=np.zeros(dim), v=np.zeros(dim))


def adam_step(
    params: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-7,
) -> tuple[np.ndarray, AdamState]:
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m=m, v=v, t=t)


def qpngd_step(
    params: np.ndarray,
    grad: np.ndarray,
    metric: np.ndarray,
    lr: float,
    pinv_rel_tol: float = 1e-8,
    tikhonov_eps: float = 0.0,
) -> np.ndarray:
    """Metric-aware update: params - lr * pinv(I) @ grad (or Tikhonov solve)."""
    if tikhonov_eps > 0.0:
        natural = tikhonov_solve(metric, grad, tikhonov_eps)
    else:
        natural = pseudo_inverse(metric, pinv_rel_tol) @ grad
    return params - lr * natural


def qpmd_step(
    anchor_params: np.ndarray,
    loss_grad_at_anchor: np.ndarray,
    divergence_grad: Callable[[np.ndarray], np.ndarray],
    lam: float,
    inner_steps: int,
    inner_lr: float,
    exit_norm: float = INNER_EXIT_NORM,
) -> np.ndarray:
    """Mirror-descent outer step via an inner loop on the composite objective.

    The loss gradient stays frozen at the anchor; ``divergence_grad(x)``
    returns the gradient of D(rho_x || rho_anchor) with respect to x.
    """
    x = anchor_params.astype(float).copy()
    for _ in range(inner_steps):
        update = inner_lr * (loss_grad_at_anchor + lam * divergence_grad(x))
        x = x - update
        if float(np.max(np.abs(update))) < exit_norm:
            break
    return x


def lagrange_step(
    anchor_params: np.ndarray,
    loss_grad: Callable[[np.ndarray], np.ndarray],
    reverse_divergence_grad: Callable[[np.ndarray], np.ndarray],
    lam: float,
    inner_steps: int,
    inner_lr: float,
    exit_norm: float = INNER_EXIT_NORM,
) -> np.ndarray:
    """Inner loop on delta with the reverse anchored divergence.

    The loss gradient is re-evaluated at anchor + delta every inner step and
    ``reverse_divergence_grad(x)`` returns the gradient of
    D(rho_anchor || rho_x) with respect to x.
    """
    x = anchor_params.astype(float).copy()
    for _ in range(inner_steps):
        update = inner_lr * (loss_grad(x) + lam * reverse_divergence_grad(x))
        x = x - update
        if float(np.max(np.abs(update))) < exit_norm:
            break
    return x


# ---------------------------------------------------------------------------
# Optimization loop over a problem
# ---------------------------------------------------------------------------


@dataclass
class ShotCounter:
    """Mutable tally of measurement samples consumed by problem closures."""

    total: int = 0

    def add(self, n: int) -> None:
        self.total += int(n)


@dataclass
class OptimizationProblem:
    """Closures tying an optimizer run to a concrete model and loss.

    ``loss(params)`` returns (value, gradient).  The divergence callables
    take (params, anchor_params) and return gradients of the anchored
    relative entropies; ``metric(params)`` returns the information matrix
    for metric-aware steps.  Closures that sample add to ``counter``.
    """

    dim: int
    init: np.ndarray
    loss: Callable[[np.ndarray], tuple[float, np.ndarray]]
    metric: Callable[[np.ndarray], np.ndarray] | None = None
    divergence_grad: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    reverse_divergence_grad: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    fidelity: Callable[[np.ndarray], float] | None = None
    n_quantum: int = 0
    counter: ShotCounter = field(default_factory=ShotCounter)


def run_optimization(config: OptimizerConfig, problem: OptimizationProblem) -> Trajectory:
    """Run the configured optimizer, logging one record per step.

    The initial point is logged as step 0; a NaN or overflowing loss aborts
    the run with the trajectory preserved.
    """
    params = np.asarray(problem.init, dtype=float).copy()
    lam_tally = parameter_shift_tally(config.kind, problem.n_quantum, config.inner_steps)
    traj = Trajectory(shift_tally_per_step=lam_tally)
    adam_state = adam_init(problem.dim)

    def record(step: int, value: float, grad: np.ndarray, cond: float | None) -> None:
        fid = problem.fidelity(params) if problem.fidelity is not None else None
        traj.records.append(
            StepRecord(
                step=step,
                params=params.copy(),
                loss=value,
                grad_norm=float(np.max(np.abs(grad))) if grad.size else 0.0,
                fidelity=fid,
                info_condition=cond,
                shots_cumulative=problem.counter.total,
            )
        )

    value, grad = problem.loss(params)
    record(0, value, grad, None)

    for step in range(1, config.max_steps + 1):
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            traj.aborted = True
            traj.abort_reason = f"non-finite loss or gradient at step {step - 1}"
            return traj
        lr = config.outer_lr(step)
        cond = None
        if config.kind == "sgd":
            params = sgd_step(params, grad, lr)
        elif config.kind == "adam":
            params, adam_state = adam_step(
                params, grad, adam_state, lr,
                config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
        elif config.kind == "qpngd":
            metric = problem.metric(params)
            cond = _condition(metric)
            params = qpngd_step(
                params, grad, metric, lr, config.pinv_rel_tol, config.tikhonov_eps
            )
        elif config.kind == "qpmd":
            anchor = params
            params = qpmd_step(
                anchor,
                grad,
                lambda x: problem.divergence_grad(x, anchor),
                1.0 / lr,
                config.inner_steps,
                config.inner_lr,
            )
        else:  # lagrange
            anchor = params
            params = lagrange_step(
                anchor,
                lambda x: problem.loss(x)[1],
                lambda x: problem.reverse_divergence_grad(x, anchor),
                1.0 / lr,
                config.inner_steps,
                config.inner_lr,
            )
        value, grad = problem.loss(params)
        record(step, value, grad, cond)
        if not math.isfinite(value):
            traj.aborted = True
            traj.abort_reason = f"non-finite loss at step {step}"
            return traj
    return traj


def _condition(metric: np.ndarray) -> float:
    w = np.abs(np.linalg.eigvalsh(metric))
    lo, hi = float(np.min(w)), float(np.max(w))
    return np.inf if lo == 0.0 else hi / lo

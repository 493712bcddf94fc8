"""Sequence experiments: chained vs independent initialization over task paths.

Covers inverse-temperature sweeps (warm-started free-energy minimization),
recursive channel propagation (apply a channel to the latest model state and
relearn it), the metric-variation diagnostic between consecutive optima, and
history-weighted chaining.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import numpy as np

from . import losses, qhbm
from .metrics import bkm_info_qhbm
from .optimizers import OptimizerConfig, Trajectory, run_optimization
from .problems import make_qmhl_problem, make_vqt_problem
from .rng import stream
from .states import DensityOperator
from .targets import ChannelSpec, TfimSpec, apply_channel, tfim_gibbs_target, tfim_hamiltonian

INIT_POLICIES = ("independent", "chained")


@dataclass(frozen=True)
class SequenceSpec:
    """Discretized task path driving chained or independent optimization."""

    kind: str  # "beta_sweep" | "channel_sequence"
    points: tuple
    steps_first: int = 500
    steps_rest: int = 100
    init_policy: str = "chained"
    decay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("beta_sweep", "channel_sequence"):
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if not self.points:
            raise ValueError("sequence needs at least one point")
        if self.steps_first < 1 or self.steps_rest < 1:
            raise ValueError("step counts must be positive")
        if self.init_policy not in INIT_POLICIES:
            raise ValueError(f"unknown init policy {self.init_policy!r}")
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("decay must lie in [0, 1)")


@dataclass
class SequenceResult:
    trajectories: list[Trajectory]
    final_params: list[np.ndarray]
    final_fidelities: list[float]
    metric_variations: list[float]

    @property
    def mean_final_fidelity(self) -> float:
        return float(np.mean(self.final_fidelities))

    def last10_fidelities(self) -> list[float]:
        """Per-point fidelity averaged over the last 10 recorded steps."""
        out = []
        for t in self.trajectories:
            f = t.fidelities()
            out.append(float(np.mean(f[-10:])))
        return out


def metric_variation(model: qhbm.QhbmModel, params_a: np.ndarray, params_b: np.ndarray) -> float:
    """Frobenius norm of the difference of exact BKM matrices."""
    a = bkm_info_qhbm(model, params_a).entries
    b = bkm_info_qhbm(model, params_b).entries
    return float(np.linalg.norm(a - b, ord="fro"))


def _point_config(config: OptimizerConfig, seq: SequenceSpec, index: int) -> OptimizerConfig:
    steps = seq.steps_first if index == 0 else seq.steps_rest
    return replace(config, max_steps=steps)


def _point_init(
    model: qhbm.QhbmModel,
    seq: SequenceSpec,
    index: int,
    previous: np.ndarray | None,
    seed: int,
    trial: int,
) -> np.ndarray:
    if index > 0 and seq.init_policy == "chained" and previous is not None:
        return previous
    return model.random_init(stream(seed, "init", trial, index))


def _collect(model: qhbm.QhbmModel, trajectories: list[Trajectory]) -> SequenceResult:
    final_params = [t.final.params for t in trajectories]
    fidelities = [t.final.fidelity for t in trajectories]
    variations = [
        metric_variation(model, a, b) for a, b in zip(final_params, final_params[1:])
    ]
    return SequenceResult(trajectories, final_params, fidelities, variations)


def chained_optimize(
    seq: SequenceSpec,
    model: qhbm.QhbmModel,
    config: OptimizerConfig,
    tfim: TfimSpec,
    seed: int = 0,
    trial: int = 0,
) -> SequenceResult:
    """Free-energy sweep over the beta points of ``seq`` against one TFIM."""
    if seq.kind != "beta_sweep":
        raise ValueError("chained_optimize expects a beta_sweep sequence")
    H = tfim_hamiltonian(tfim)
    trajectories: list[Trajectory] = []
    previous = None
    for k, beta in enumerate(seq.points):
        target = tfim_gibbs_target(tfim, float(beta))
        init = _point_init(model, seq, k, previous, seed, trial)
        rng = stream(seed, "measurement", trial, k)
        problem = make_vqt_problem(
            model, H, float(beta), config, init, target=target, rng=rng
        )
        traj = run_optimization(_point_config(config, seq, k), problem)
        trajectories.append(traj)
        previous = traj.final.params
    return _collect(model, trajectories)


def qvartz_propagate(
    seq: SequenceSpec,
    model: qhbm.QhbmModel,
    config: OptimizerConfig,
    sigma0: DensityOperator,
    initial_params: np.ndarray,
    seed: int = 0,
    trial: int = 0,
) -> SequenceResult:
    """Recursive channel propagation with relearning after every link.

    At link k the data state is the k-th channel applied to the previous
    optimum's model state, while the fidelity reference is the exact dense
    product of all channels applied to ``sigma0``.
    """
    if seq.kind != "channel_sequence":
        raise ValueError("qvartz_propagate expects a channel_sequence")
    trajectories: list[Trajectory] = []
    previous = np.asarray(initial_params, dtype=float)
    reference = sigma0
    for k, channel in enumerate(seq.points):
        if not isinstance(channel, ChannelSpec):
            raise ValueError("channel_sequence points must be ChannelSpec")
        data = apply_channel(channel, qhbm.qhbm_density(model, previous))
        reference = apply_channel(channel, reference)
        if seq.init_policy == "chained":
            init = previous
        else:
            init = model.random_init(stream(seed, "init", trial, k))
        rng = stream(seed, "measurement", trial, k)
        problem = make_qmhl_problem(
            model, data, config, init, target=reference, rng=rng
        )
        cfg = replace(config, max_steps=seq.steps_rest if k > 0 else seq.steps_first)
        traj = run_optimization(cfg, problem)
        trajectories.append(traj)
        previous = traj.final.params
    return _collect(model, trajectories)


def chained_with_history(
    seq: SequenceSpec,
    model: qhbm.QhbmModel,
    config: OptimizerConfig,
    tfim: TfimSpec,
    seed: int = 0,
    trial: int = 0,
) -> SequenceResult:
    """Beta sweep whose mirror inner objective also pulls toward past optima.

    Past optima enter with weights decay^(distance to the current point), so
    decay = 0 reproduces plain chaining exactly.  History gradients use the
    swapped-argument divergences D(past || current), evaluated exactly.
    """
    if seq.kind != "beta_sweep":
        raise ValueError("chained_with_history expects a beta_sweep sequence")
    if config.kind != "qpmd":
        raise ValueError("history-weighted chaining runs on the qpmd optimizer")
    if config.shots != 0:
        raise ValueError("history terms are exact-only")
    H = tfim_hamiltonian(tfim)
    trajectories: list[Trajectory] = []
    optima: list[np.ndarray] = []
    past_states: list[DensityOperator] = []
    previous = None
    for k, beta in enumerate(seq.points):
        target = tfim_gibbs_target(tfim, float(beta))
        init = _point_init(model, seq, k, previous, seed, trial)
        problem = make_vqt_problem(model, H, float(beta), config, init, target=target)
        weights = [seq.decay ** (k - kp) for kp in range(k)]  # distance >= 1
        lam = 1.0 / config.lr
        history = [
            (w, state) for w, state in zip(weights, past_states) if w > 0.0
        ]
        if history:
            base_div = problem.divergence_grad

            def div(params, anchor, _base=base_div, _hist=history):
                g = _base(params, anchor)
                extra = np.zeros_like(g)
                for w, state in _hist:
                    extra += w * losses.qmhl_loss(model, params, state).grad
                return g + extra / lam

            problem.divergence_grad = div
        cfg = _point_config(config, seq, k)
        traj = run_optimization(cfg, problem)
        trajectories.append(traj)
        previous = traj.final.params
        optima.append(previous)
        past_states.append(qhbm.qhbm_density(model, previous))
    return _collect(model, trajectories)

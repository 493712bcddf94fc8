"""Experiment harness: run configs, drivers, persistence, and plot emission.

A run is specified by a JSON config with a versioned schema; unknown keys
are errors so results stay attributable.  Each trial writes a per-step CSV
(deterministic columns only, so reruns reproduce it bitwise) and a JSON
summary; the report path also renders matplotlib figures next to the
delimited output.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import qhbm
from .exp_family import ExpFamilyModel, ef_bkm_info_matrix, ef_learning_gradient_online
from .linalg import PauliString
from .optimizers import OptimizerConfig, Trajectory, run_optimization
from .problems import make_qmhl_problem, make_vqt_problem
from .rng import stream
from .sequences import (
    SequenceResult,
    SequenceSpec,
    chained_optimize,
    chained_with_history,
    qvartz_propagate,
)
from .targets import ChannelSpec, GpDriveSpec, TfimSpec, gp_sample, tfim_gibbs_target, tfim_hamiltonian

SCHEMA_VERSION = 1
EXPERIMENTS = ("vqt", "qmhl", "meta_vqt", "qvartz", "fisher_efficiency", "verify")

CSV_COLUMNS = ("step", "loss", "fidelity", "grad_norm", "shots_cumulative")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class NumericalAbort(RuntimeError):
    """A run diverged (non-finite loss)."""


# ---------------------------------------------------------------------------
# Config schema
# ---------------------------------------------------------------------------

_OPTIMIZER_KEYS = {
    "kind", "lr", "schedule", "inner_steps", "inner_lr", "pinv_rel_tol",
    "tikhonov_eps", "metric_kind", "max_steps",
    "adam_beta1", "adam_beta2", "adam_eps",
}
_MODEL_KEYS = {"n_qubits", "n_layers", "ebm"}
_TARGET_KEYS = {"n_qubits", "coupling", "field", "beta"}
_SEQUENCE_KEYS = {
    "betas", "steps_first", "steps_rest", "init_policy", "decay",
    "n_channels", "total_time", "beta0", "trotter_order", "substeps",
    "gp_amplitude", "gp_length_scale",
}
_FISHER_KEYS = {"mu_star", "steps", "trials", "warm_start"}
_TOP_KEYS = {
    "schema", "experiment", "model", "target", "optimizer", "sequence",
    "fisher", "shots", "seed", "trials", "output_dir",
}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    model: qhbm.QhbmModel | None
    target: TfimSpec | None
    target_beta: float
    optimizer: OptimizerConfig
    sequence: dict = field(default_factory=dict)
    fisher: dict = field(default_factory=dict)
    shots: int = 0
    seed: int = 0
    trials: int = 1
    output_dir: str = "runs/out"
    raw: dict = field(default_factory=dict)


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema' must be {SCHEMA_VERSION}")
    experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"field 'experiment' must be one of {EXPERIMENTS}")

    shots = int(doc.get("shots", 0))
    seed = int(doc.get("seed", 0))
    trials = int(doc.get("trials", 1))
    if shots < 0:
        raise ConfigError("field 'shots' must be nonnegative")
    if trials < 1:
        raise ConfigError("field 'trials' must be positive")
    output_dir = str(doc.get("output_dir", "runs/out"))

    model = None
    if "model" in doc:
        sec = doc["model"]
        _check_keys(sec, _MODEL_KEYS, "model")
        if sec.get("ebm", "fully_connected") != "fully_connected":
            raise ConfigError("field 'model.ebm' must be 'fully_connected'")
        try:
            model = qhbm.QhbmModel(int(sec["n_qubits"]), int(sec["n_layers"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid 'model' section: {exc}") from exc

    target = None
    target_beta = 0.0
    if "target" in doc:
        sec = doc["target"]
        _check_keys(sec, _TARGET_KEYS, "target")
        try:
            target = TfimSpec(
                n_qubits=int(sec["n_qubits"]),
                coupling=float(sec.get("coupling", 1.0)),
                field=float(sec.get("field", 1.0)),
            )
            target_beta = float(sec.get("beta", 1.0))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"invalid 'target' section: {exc}") from exc
        if model is not None and model.n_qubits != target.n_qubits:
            raise ConfigError("model and target qubit counts differ")

    opt_sec = dict(doc.get("optimizer", {}))
    _check_keys(opt_sec, _OPTIMIZER_KEYS, "optimizer")
    try:
        optimizer = OptimizerConfig(shots=shots, seed=seed, **opt_sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'optimizer' section: {exc}") from exc

    sequence = dict(doc.get("sequence", {}))
    _check_keys(sequence, _SEQUENCE_KEYS, "sequence")
    fisher = dict(doc.get("fisher", {}))
    _check_keys(fisher, _FISHER_KEYS, "fisher")

    if experiment in ("vqt", "qmhl", "meta_vqt", "qvartz"):
        if model is None:
            raise ConfigError(f"experiment {experiment!r} requires a 'model' section")
        if target is None:
            raise ConfigError(f"experiment {experiment!r} requires a 'target' section")
    return RunConfig(
        experiment=experiment,
        model=model,
        target=target,
        target_beta=target_beta,
        optimizer=optimizer,
        sequence=sequence,
        fisher=fisher,
        shots=shots,
        seed=seed,
        trials=trials,
        output_dir=output_dir,
        raw=doc,
    )


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


def apply_overrides(
    cfg: RunConfig,
    seed: int | None = None,
    shots: int | None = None,
    optimizer: str | None = None,
    out: str | None = None,
    trials: int | None = None,
) -> RunConfig:
    doc = dict(cfg.raw)
    if seed is not None:
        doc["seed"] = int(seed)
    if shots is not None:
        doc["shots"] = int(shots)
    if trials is not None:
        doc["trials"] = int(trials)
    if out is not None:
        doc["output_dir"] = str(out)
    if optimizer is not None:
        opt = dict(doc.get("optimizer", {}))
        opt["kind"] = optimizer
        doc["optimizer"] = opt
    return parse_config(doc)


# ---------------------------------------------------------------------------
# Record writing
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def trajectory_rows(traj: Trajectory) -> list[tuple]:
    return [
        (r.step, r.loss, r.fidelity, r.grad_norm, r.shots_cumulative)
        for r in traj.records
    ]


def write_csv(path: Path, columns: tuple, rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _plot_curve(path: Path, rows: list[tuple]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [r[0] for r in rows]
    losses = [r[1] for r in rows]
    fids = [r[2] for r in rows]
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax0.plot(steps, losses, lw=1.2)
    ax0.set_xlabel("step")
    ax0.set_ylabel("loss (nats)")
    if any(f is not None for f in fids):
        ax1.plot(steps, [f if f is not None else np.nan for f in fids], lw=1.2, color="tab:green")
        ax1.set_ylim(0, 1.02)
    ax1.set_xlabel("step")
    ax1.set_ylabel("fidelity")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _plot_heat(path: Path, cells: dict[tuple[str, str], list[float]], n_points: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = sorted(cells)
    grid = np.array([cells[k] for k in labels])
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * n_points, 0.8 + 0.6 * len(labels)))
    im = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
    ax.set_yticks(range(len(labels)), [f"{o}/{p}" for (o, p) in labels])
    ax.set_xticks(range(n_points))
    ax.set_xlabel("sequence point")
    fig.colorbar(im, ax=ax, label="mean fidelity")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def emit_plot_data(out_dir: Path, rows: list[tuple], render: bool = True) -> None:
    """Write curve.csv (step, loss, fidelity) and render curve.png."""
    write_csv(out_dir / "curve.csv", ("step", "loss", "fidelity"), [r[:3] for r in rows])
    if render:
        _plot_curve(out_dir / "curve.png", rows)


def emit_heat_data(
    out_dir: Path,
    cells: dict[tuple[str, str], np.ndarray],
    render: bool = True,
) -> None:
    """Write heat.csv over (point, policy, optimizer) cells and render heat.png.

    ``cells`` maps (optimizer, policy) to an array of per-trial final
    fidelities with shape (trials, points).
    """
    rows = []
    means: dict[tuple[str, str], list[float]] = {}
    n_points = 0
    for (optimizer, policy), fid in sorted(cells.items()):
        fid = np.asarray(fid, dtype=float)
        n_trials, n_points = fid.shape
        mean = fid.mean(axis=0)
        if n_trials > 1:
            ci = 1.96 * fid.std(axis=0, ddof=1) / np.sqrt(n_trials)
        else:
            ci = np.zeros(n_points)
        means[(optimizer, policy)] = list(mean)
        for point in range(n_points):
            rows.append((point, policy, optimizer, float(mean[point]), float(ci[point])))
    write_csv(
        out_dir / "heat.csv",
        ("point_index", "init_policy", "optimizer", "mean_fidelity", "ci_half_width"),
        rows,
    )
    if render and means:
        _plot_heat(out_dir / "heat.png", means, n_points)


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------


def _trial_summary(cfg: RunConfig, traj: Trajectory, wall_ms: float, extra: dict | None = None) -> dict:
    doc = {
        "config": cfg.raw,
        "final_loss": traj.final.loss,
        "final_fidelity": traj.final.fidelity,
        "final_params": traj.final.params.tolist(),
        "steps": len(traj.records) - 1,
        "shift_tally_per_step": traj.shift_tally_per_step,
        "shift_tally_total": traj.shift_tally_per_step * (len(traj.records) - 1),
        "shots_total": traj.final.shots_cumulative,
        "aborted": traj.aborted,
        "abort_reason": traj.abort_reason,
        "wall_ms": wall_ms,
    }
    if extra:
        doc.update(extra)
    return doc


def _single_state_trial(cfg: RunConfig, trial: int) -> tuple[Trajectory, dict]:
    model = cfg.model
    H = tfim_hamiltonian(cfg.target)
    target = tfim_gibbs_target(cfg.target, cfg.target_beta)
    init = model.random_init(stream(cfg.seed, "init", trial))
    rng = stream(cfg.seed, "measurement", trial)
    t0 = time.perf_counter()
    if cfg.experiment == "vqt":
        problem = make_vqt_problem(
            model, H, cfg.target_beta, cfg.optimizer, init, target=target, rng=rng
        )
    else:
        problem = make_qmhl_problem(
            model, target, cfg.optimizer, init, target=target, rng=rng
        )
    traj = run_optimization(cfg.optimizer, problem)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    return traj, _trial_summary(cfg, traj, wall_ms)


def _sequence_policies(cfg: RunConfig) -> list[str]:
    policy = str(cfg.sequence.get("init_policy", "both"))
    if policy == "both":
        return ["chained", "independent"]
    return [policy]


def _sequence_spec_from_cfg(cfg: RunConfig, policy: str) -> SequenceSpec:
    sec = cfg.sequence
    if cfg.experiment == "meta_vqt":
        betas = sec.get("betas")
        if not betas:
            raise ConfigError("meta_vqt requires 'sequence.betas'")
        return SequenceSpec(
            kind="beta_sweep",
            points=tuple(float(b) for b in betas),
            steps_first=int(sec.get("steps_first", 500)),
            steps_rest=int(sec.get("steps_rest", 100)),
            init_policy=policy,
            decay=float(sec.get("decay", 0.0)),
        )
    n_channels = int(sec.get("n_channels", 8))
    total_time = float(sec.get("total_time", 40.0))
    if n_channels < 1 or total_time <= 0:
        raise ConfigError("qvartz needs positive 'sequence.n_channels' and 'sequence.total_time'")
    return SequenceSpec(
        kind="channel_sequence",
        points=tuple(range(n_channels)),  # placeholders, filled per trial with drives
        steps_first=int(sec.get("steps_first", 500)),
        steps_rest=int(sec.get("steps_rest", 100)),
        init_policy=policy,
    )


def build_gp_channels(cfg: RunConfig, trial: int) -> list[ChannelSpec]:
    """GP-driven TFIM channels over uniform intervals, seeded independently
    of the optimizer streams so drives are comparable across configs."""
    sec = cfg.sequence
    n_channels = int(sec.get("n_channels", 8))
    total_time = float(sec.get("total_time", 40.0))
    dt = total_time / n_channels
    mids = tuple(dt * (k + 0.5) for k in range(n_channels))
    gp = GpDriveSpec(
        amplitude=float(sec.get("gp_amplitude", 1.0)),
        length_scale=float(sec.get("gp_length_scale", 1.0)),
        times=mids,
    )
    js = gp_sample(gp, stream(cfg.seed, "gp-drive", trial, 0))
    fields = gp_sample(gp, stream(cfg.seed, "gp-drive", trial, 1))
    order = int(sec.get("trotter_order", 2))
    substeps = int(sec.get("substeps", 0))
    return [
        ChannelSpec(
            tfim=TfimSpec(cfg.model.n_qubits, coupling=float(j), field=float(f)),
            duration=dt,
            trotter_order=order,
            substeps=substeps,
        )
        for j, f in zip(js, fields)
    ]


def _sequence_trial(cfg: RunConfig, trial: int, policy: str | None = None) -> tuple[SequenceResult, dict]:
    model = cfg.model
    if policy is None:
        policy = _sequence_policies(cfg)[0]
    seq = _sequence_spec_from_cfg(cfg, policy)
    t0 = time.perf_counter()
    if cfg.experiment == "meta_vqt":
        runner = chained_with_history if seq.decay > 0 else chained_optimize
        result = runner(seq, model, cfg.optimizer, cfg.target, seed=cfg.seed, trial=trial)
    else:
        channels = build_gp_channels(cfg, trial)
        seq = replace(seq, points=tuple(channels))
        sigma0 = tfim_gibbs_target(cfg.target, float(cfg.sequence.get("beta0", 2.0)))
        boot_cfg = replace(cfg.optimizer, max_steps=seq.steps_first)
        boot_init = model.random_init(stream(cfg.seed, "init", trial, 10_000))
        boot_problem = make_vqt_problem(
            model,
            tfim_hamiltonian(cfg.target),
            float(cfg.sequence.get("beta0", 2.0)),
            boot_cfg,
            boot_init,
            target=sigma0,
            rng=stream(cfg.seed, "measurement", trial, 10_000),
        )
        boot = run_optimization(boot_cfg, boot_problem)
        result = qvartz_propagate(
            seq, model, cfg.optimizer, sigma0, boot.final.params, seed=cfg.seed, trial=trial
        )
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    summary = {
        "config": cfg.raw,
        "init_policy": policy,
        "final_fidelities": [float(f) for f in result.final_fidelities],
        "last10_fidelities": result.last10_fidelities(),
        "metric_variations": [float(v) for v in result.metric_variations],
        "mean_final_fidelity": result.mean_final_fidelity,
        "final_params": [p.tolist() for p in result.final_params],
        "aborted": any(t.aborted for t in result.trajectories),
        "wall_ms": wall_ms,
        "shift_tally_per_step": result.trajectories[0].shift_tally_per_step,
    }
    return result, summary


def _run_single_trial(args: tuple) -> dict:
    """Worker entry: run one trial and write its files; returns the summary."""
    cfg, trial, out_dir = args
    trial_dir = Path(out_dir) / f"trial_{trial:03d}"
    if cfg.experiment in ("vqt", "qmhl"):
        traj, summary = _single_state_trial(cfg, trial)
        rows = trajectory_rows(traj)
        write_csv(trial_dir / "run.csv", CSV_COLUMNS, rows)
        emit_plot_data(trial_dir, rows)
        write_json(trial_dir / "summary.json", summary)
        return summary
    policies = _sequence_policies(cfg)
    summaries = {}
    for policy in policies:
        result, summary = _sequence_trial(cfg, trial, policy)
        rows: list[tuple] = []
        offset = 0
        for traj in result.trajectories:
            for r in traj.records:
                rows.append((offset + r.step, r.loss, r.fidelity, r.grad_norm, r.shots_cumulative))
            offset += len(traj.records)
        sub = trial_dir / policy if len(policies) > 1 else trial_dir
        write_csv(sub / "run.csv", CSV_COLUMNS, rows)
        emit_plot_data(sub, rows)
        write_json(sub / "summary.json", summary)
        summaries[policy] = summary
    merged = dict(next(iter(summaries.values())))
    merged["aborted"] = any(s["aborted"] for s in summaries.values())
    merged["policies"] = {p: s for p, s in summaries.items()}
    return merged


def run_experiment(cfg: RunConfig) -> dict:
    """Run all trials of the configured experiment and aggregate outputs."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "config.json", cfg.raw)

    if cfg.experiment == "fisher_efficiency":
        return run_fisher_efficiency(cfg)

    tasks = [(cfg, trial, str(out_dir)) for trial in range(cfg.trials)]
    workers = int(os.environ.get("QPOPT_WORKERS", "1"))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_run_single_trial, tasks))
    else:
        summaries = [_run_single_trial(t) for t in tasks]

    aborted = any(s.get("aborted") for s in summaries)
    top = {
        "config": cfg.raw,
        "trials": cfg.trials,
        "aborted": aborted,
    }
    if cfg.experiment in ("vqt", "qmhl"):
        fids = [s["final_fidelity"] for s in summaries if s["final_fidelity"] is not None]
        top["mean_final_fidelity"] = float(np.mean(fids)) if fids else None
        top["mean_final_loss"] = float(np.mean([s["final_loss"] for s in summaries]))
    else:
        cells = {}
        for policy in _sequence_policies(cfg):
            per_trial = np.array(
                [s["policies"][policy]["final_fidelities"] for s in summaries], dtype=float
            )
            cells[(cfg.optimizer.kind, policy)] = per_trial
        top["mean_final_fidelity"] = {
            policy: float(cells[(cfg.optimizer.kind, policy)][:, -1].mean())
            for policy in _sequence_policies(cfg)
        }
        emit_heat_data(out_dir, cells)
    write_json(out_dir / "summary.json", top)
    if aborted:
        raise NumericalAbort("at least one trial aborted on a non-finite loss")
    return top


# ---------------------------------------------------------------------------
# Fisher-efficiency experiment (single-parameter exponential family)
# ---------------------------------------------------------------------------


# The 1/j rate is damped over the first few steps; the raw 1/1 start lets a
# single unlucky draw throw the iterate into the near-singular tail where the
# inverse metric amplifies the next step catastrophically.
FISHER_RATE_OFFSET = 10


def fisher_trial_mus(
    mu_star: float, steps: int, rng: np.random.Generator, warm_start: bool = True
) -> np.ndarray:
    """Online metric-aware learning of one exponential coefficient.

    Draws one eigenstate of the target per step and applies the
    1/(j + offset) rate update mu <- mu - lr * I(mu)^{-1} * h, with h the
    single-sample unbiased gradient of the reverse relative entropy.
    """
    basis = (PauliString("Z"),)
    model = ExpFamilyModel(basis=basis, mu=np.array([mu_star if warm_start else 0.0]))
    target = ExpFamilyModel(basis=basis, mu=np.array([mu_star]))
    # Z eigenstates: e_0 with probability p0, e_1 otherwise.
    from .exp_family import ef_density

    p0 = float(np.real(ef_density(target).matrix[0, 0]))
    eye = np.eye(2, dtype=complex)
    mus = np.empty(steps + 1)
    mus[0] = model.mu[0]
    for j in range(1, steps + 1):
        x = 0 if rng.random() < p0 else 1
        h = ef_learning_gradient_online(model, eye[:, x])
        info = ef_bkm_info_matrix(model).entries
        mu = model.mu - np.linalg.solve(info, h) / (j + FISHER_RATE_OFFSET)
        model = model.with_mu(mu)
        mus[j] = mu[0]
    return mus


def run_fisher_efficiency(cfg: RunConfig) -> dict:
    out_dir = Path(cfg.output_dir)
    mu_star = float(cfg.fisher.get("mu_star", 0.6))
    steps = int(cfg.fisher.get("steps", 200))
    trials = int(cfg.fisher.get("trials", cfg.trials))
    warm = bool(cfg.fisher.get("warm_start", True))
    paths = np.empty((trials, steps + 1))
    for t in range(trials):
        rng = stream(cfg.seed, "trial-index", t)
        paths[t] = fisher_trial_mus(mu_star, steps, rng, warm_start=warm)
    target = ExpFamilyModel(basis=(PauliString("Z"),), mu=np.array([mu_star]))
    info_star = float(ef_bkm_info_matrix(target).entries[0, 0])
    checkpoints = sorted(set(list(range(10, steps + 1, 10)) + [steps]))
    rows = []
    for j in checkpoints:
        var = float(np.var(paths[:, j], ddof=1))
        crb = 1.0 / (info_star * j)
        rows.append((j, var, crb, var / crb))
    write_csv(out_dir / "fisher.csv", ("j", "empirical_var", "crb", "ratio"), rows)
    final = rows[-1]
    top = {
        "config": cfg.raw,
        "mu_star": mu_star,
        "info_at_optimum": info_star,
        "trials": trials,
        "final_step": final[0],
        "empirical_var": final[1],
        "crb": final[2],
        "ratio": final[3],
    }
    write_json(out_dir / "summary.json", top)
    return top

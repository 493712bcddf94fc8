import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qpopt.harness import (
    ConfigError,
    apply_overrides,
    build_gp_channels,
    emit_heat_data,
    emit_plot_data,
    parse_config,
    run_experiment,
)


def _base_doc(**over):
    doc = {
        "schema": 1,
        "experiment": "vqt",
        "model": {"n_qubits": 2, "n_layers": 1},
        "target": {"n_qubits": 2, "coupling": 1.0, "field": 1.0, "beta": 1.0},
        "optimizer": {"kind": "sgd", "lr": 0.1, "max_steps": 10},
        "shots": 0,
        "seed": 4,
        "trials": 1,
        "output_dir": "runs/test",
    }
    doc.update(over)
    return doc


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def test_parse_roundtrip():
    cfg = parse_config(_base_doc())
    assert cfg.experiment == "vqt"
    assert cfg.model.n_qubits == 2
    assert cfg.optimizer.kind == "sgd"


def test_unknown_top_level_key_named():
    with pytest.raises(ConfigError, match="'mystery'"):
        parse_config(_base_doc(mystery=1))


def test_unknown_nested_key_named():
    doc = _base_doc()
    doc["optimizer"]["warp"] = 9
    with pytest.raises(ConfigError, match="'warp' in optimizer"):
        parse_config(doc)


def test_schema_version_required():
    with pytest.raises(ConfigError, match="schema"):
        parse_config(_base_doc(schema=99))


def test_qubit_count_mismatch_rejected():
    doc = _base_doc()
    doc["target"]["n_qubits"] = 3
    with pytest.raises(ConfigError, match="qubit counts"):
        parse_config(doc)


def test_overrides():
    cfg = parse_config(_base_doc())
    cfg2 = apply_overrides(cfg, seed=99, optimizer="adam", trials=3, out="elsewhere")
    assert cfg2.seed == 99
    assert cfg2.optimizer.kind == "adam"
    assert cfg2.trials == 3
    assert cfg2.output_dir == "elsewhere"


# ---------------------------------------------------------------------------
# Run records and plot data
# ---------------------------------------------------------------------------


def test_vqt_run_outputs(tmp_path):
    doc = _base_doc(output_dir=str(tmp_path / "run"))
    summary = run_experiment(parse_config(doc))
    assert not summary["aborted"]
    trial = tmp_path / "run" / "trial_000"
    rows = (trial / "run.csv").read_text().strip().split("\n")
    assert rows[0] == "step,loss,fidelity,grad_norm,shots_cumulative"
    assert len(rows) == 12  # header + initial + 10 steps
    assert (trial / "curve.csv").exists()
    assert (trial / "curve.png").exists()
    saved = json.loads((trial / "summary.json").read_text())
    assert saved["shift_tally_per_step"] == 2 * 5  # sgd: 2q with q=(3*2-1)*1
    assert "wall_ms" in saved


def test_rerun_reproduces_csv_bitwise(tmp_path):
    doc = _base_doc(output_dir=str(tmp_path / "a"), trials=2)
    doc["optimizer"] = {"kind": "qpmd", "lr": 0.1, "inner_steps": 5, "inner_lr": 0.01, "max_steps": 8}
    run_experiment(parse_config(doc))
    doc2 = dict(doc, output_dir=str(tmp_path / "b"))
    run_experiment(parse_config(doc2))
    for trial in ("trial_000", "trial_001"):
        a = (tmp_path / "a" / trial / "run.csv").read_bytes()
        b = (tmp_path / "b" / trial / "run.csv").read_bytes()
        assert a == b
        a = (tmp_path / "a" / trial / "curve.csv").read_bytes()
        b = (tmp_path / "b" / trial / "curve.csv").read_bytes()
        assert a == b


def test_shot_mode_changes_with_seed(tmp_path):
    doc = _base_doc(output_dir=str(tmp_path / "a"), shots=32)
    run_experiment(parse_config(doc))
    doc2 = dict(doc, output_dir=str(tmp_path / "b"), seed=5)
    run_experiment(parse_config(doc2))
    a = (tmp_path / "a" / "trial_000" / "run.csv").read_text()
    b = (tmp_path / "b" / "trial_000" / "run.csv").read_text()
    assert a != b


def test_emit_plot_data_empty(tmp_path):
    emit_plot_data(tmp_path, [], render=False)
    assert (tmp_path / "curve.csv").read_text() == "step,loss,fidelity\n"


def test_emit_heat_shape_and_means(tmp_path):
    fids = {
        ("qpmd", "chained"): np.array([[0.9, 0.95], [0.8, 0.85]]),
        ("adam", "independent"): np.array([[0.5, 0.6], [0.7, 0.8]]),
    }
    emit_heat_data(tmp_path, fids, render=False)
    rows = (tmp_path / "heat.csv").read_text().strip().split("\n")
    assert len(rows) == 1 + 4  # header + points x cells
    first = rows[1].split(",")
    assert first[1] == "independent" and first[2] == "adam"
    assert float(first[3]) == pytest.approx(0.6)  # mean over trials, point 0
    # means recomputable from the raw arrays
    assert float(rows[3].split(",")[3]) == pytest.approx(np.mean([0.9, 0.8]), abs=1e-12)


def test_heat_ci_zero_for_single_trial(tmp_path):
    emit_heat_data(tmp_path, {("sgd", "chained"): np.array([[0.5, 0.6]])}, render=False)
    rows = (tmp_path / "heat.csv").read_text().strip().split("\n")
    assert float(rows[1].split(",")[4]) == 0.0


def test_gp_channels_reproducible_and_optimizer_independent():
    doc = _base_doc(experiment="qvartz")
    doc["model"] = {"n_qubits": 2, "n_layers": 1}
    doc["sequence"] = {"n_channels": 4, "total_time": 8.0, "steps_first": 5, "steps_rest": 5}
    cfg_a = parse_config(doc)
    doc_b = dict(doc)
    doc_b["optimizer"] = {"kind": "adam", "lr": 0.1, "max_steps": 10}
    cfg_b = parse_config(doc_b)
    ch_a = build_gp_channels(cfg_a, trial=2)
    ch_b = build_gp_channels(cfg_b, trial=2)
    assert [c.tfim.coupling for c in ch_a] == [c.tfim.coupling for c in ch_b]
    assert [c.tfim.field for c in ch_a] == [c.tfim.field for c in ch_b]


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def _cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "qpopt.cli", *args],
        capture_output=True,
        text=True,
        cwd=str(Path(__file__).resolve().parent.parent),
    )


def test_cli_requires_config():
    proc = _cli("vqt")
    assert proc.returncode == 1
    assert "config" in proc.stderr


def test_cli_unknown_flag():
    proc = _cli("vqt", "--bogus")
    assert proc.returncode == 2  # argparse usage error


def test_cli_config_error_names_field(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(_base_doc(nonsense=1)))
    proc = _cli("vqt", "--config", str(path))
    assert proc.returncode == 1
    assert "nonsense" in proc.stderr


def test_cli_vqt_runs_and_emits(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_base_doc(output_dir=str(tmp_path / "out"))))
    proc = _cli("vqt", "--config", str(path), "--seed", "7")
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "out" / "trial_000" / "run.csv").exists()
    saved = json.loads((tmp_path / "out" / "config.json").read_text())
    assert saved["seed"] == 7


def test_cli_experiment_mismatch(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_base_doc()))
    proc = _cli("qmhl", "--config", str(path))
    assert proc.returncode == 1


def test_fisher_cli_table(tmp_path):
    proc = _cli("fisher-efficiency", "--trials", "20", "--out", str(tmp_path), "--seed", "3")
    assert proc.returncode == 0, proc.stderr
    rows = (tmp_path / "fisher.csv").read_text().strip().split("\n")
    assert rows[0] == "j,empirical_var,crb,ratio"
    assert len(rows) > 10

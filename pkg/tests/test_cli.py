"""End-to-end tests of the command line interface."""

import json
import subprocess
import sys

import numpy as np

from sdfco.cli import main
from sdfco.losses import LabeledSample, save_dataset
from sdfco.nn import Network

FAST_TRAIN = {"hidden_widths": [8, 8], "epochs": 200, "reg_samples": 16}


def _disk_config(tmp_path, **overrides):
    data = {
        "dimensions": [1],
        "methods": ["jfit", "hinge"],
        "trials": 1,
        "seed": 0,
        "n_train": 20,
        "n_test": 50,
        "train": FAST_TRAIN,
    }
    data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_disk_run_writes_outputs(tmp_path):
    config = _disk_config(tmp_path)
    out = tmp_path / "run"
    assert main(["disk-benchmark", "--config", str(config), "--out", str(out)]) == 0
    rows = (out / "rows.csv").read_text().splitlines()
    assert rows[0] == "dimension,method,trial,seed,status,accuracy"
    assert len(rows) == 3
    assert (out / "summary.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "disk-benchmark"
    assert manifest["seed"] == 0
    assert manifest["config"]["trials"] == 1
    assert isinstance(manifest["version"], str)


def test_reruns_are_byte_identical(tmp_path):
    config = _disk_config(tmp_path, seed=11)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["disk-benchmark", "--config", str(config), "--out", str(out_a)]) == 0
    assert main(["disk-benchmark", "--config", str(config), "--out", str(out_b)]) == 0
    assert (out_a / "rows.csv").read_bytes() == (out_b / "rows.csv").read_bytes()
    assert (out_a / "summary.csv").read_bytes() == (out_b / "summary.csv").read_bytes()


def test_seed_and_trials_overrides(tmp_path):
    config = _disk_config(tmp_path, methods=["jfit"])
    out = tmp_path / "run"
    rc = main(
        [
            "disk-benchmark",
            "--config",
            str(config),
            "--seed",
            "7",
            "--trials",
            "2",
            "--out",
            str(out),
        ]
    )
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["config"]["trials"] == 2
    rows = (out / "rows.csv").read_text().splitlines()
    assert len(rows) == 3


def test_unknown_top_level_key_exits_config_error(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"bogus_key": 1}))
    rc = main(["disk-benchmark", "--config", str(config), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "bogus_key" in capsys.readouterr().err


def test_unknown_nested_key_exits_config_error(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"train": {"bogus": 1}}))
    rc = main(["disk-benchmark", "--config", str(config), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_invalid_json_exits_config_error(tmp_path):
    config = tmp_path / "config.json"
    config.write_text("{not json")
    rc = main(["disk-benchmark", "--config", str(config), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_non_object_config_exits_config_error(tmp_path):
    config = tmp_path / "config.json"
    config.write_text("[1, 2]")
    rc = main(["disk-benchmark", "--config", str(config), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_thread_env_caps_jobs(tmp_path, monkeypatch):
    monkeypatch.setenv("SDFCO_MAX_THREADS", "1")
    config = _disk_config(tmp_path, methods=["jfit"])
    out = tmp_path / "run"
    rc = main(
        ["disk-benchmark", "--config", str(config), "--jobs", "8", "--out", str(out)]
    )
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["jobs"] == 1


def test_bad_thread_env_exits_config_error(tmp_path, monkeypatch):
    monkeypatch.setenv("SDFCO_MAX_THREADS", "lots")
    config = _disk_config(tmp_path, methods=["jfit"])
    rc = main(["disk-benchmark", "--config", str(config), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_trial_errors_exit_3_but_write_rows(tmp_path, capsys):
    config = _disk_config(
        tmp_path, train={"lr_policy": "sampled", "lr_draws": 0}, methods=["jfit"]
    )
    out = tmp_path / "run"
    rc = main(["disk-benchmark", "--config", str(config), "--out", str(out)])
    assert rc == 3
    assert "errored" in capsys.readouterr().err
    rows = (out / "rows.csv").read_text().splitlines()
    assert len(rows) == 2
    assert "error:" in rows[1]


def test_export_plots_disk_roundtrip(tmp_path):
    config = _disk_config(tmp_path)
    run_dir = tmp_path / "run"
    assert main(["disk-benchmark", "--config", str(config), "--out", str(run_dir)]) == 0
    plot_dir = tmp_path / "plots"
    rc = main(
        [
            "export-plots",
            "--results",
            str(run_dir),
            "--kind",
            "disk",
            "--out",
            str(plot_dir),
        ]
    )
    assert rc == 0
    lines = (plot_dir / "plot_data.csv").read_text().splitlines()
    assert lines[0] == "x,method,mean,std"
    assert len(lines) == 3

    # .csv suffix means an explicit file target, no directory wrapping
    target = tmp_path / "direct.csv"
    rc = main(
        [
            "export-plots",
            "--results",
            str(run_dir / "summary.csv"),
            "--kind",
            "disk",
            "--out",
            str(target),
        ]
    )
    assert rc == 0
    assert target.read_text().splitlines()[0] == "x,method,mean,std"


def test_export_plots_aircraft_kind(tmp_path):
    header = (
        "method,trials,failures,median_iterations,mean_iterations,std_iterations,"
        "mean_aero_evaluations,std_aero_evaluations,"
        "mean_propulsion_evaluations,std_propulsion_evaluations"
    )
    summary = tmp_path / "summary.csv"
    summary.write_text(
        header + "\nsdf,20,0,6.0,6.5,2.0,1000.0,50.0,900.0,40.0\n"
        "gp,20,0,18.0,19.0,4.0,30000.0,100.0,29000.0,90.0\n"
    )
    out = tmp_path / "plot.csv"
    rc = main(
        ["export-plots", "--results", str(summary), "--kind", "aircraft", "--out", str(out)]
    )
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x,method,mean,std"
    assert len(lines) == 7
    assert lines[1] == "iterations,sdf,6.5,2.0"
    assert lines[3] == "aero_evaluations,sdf,1000.0,50.0"


def test_export_plots_missing_results_exits_io_error(tmp_path, capsys):
    rc = main(
        [
            "export-plots",
            "--results",
            str(tmp_path / "absent"),
            "--kind",
            "disk",
            "--out",
            str(tmp_path / "p.csv"),
        ]
    )
    assert rc == 4
    assert capsys.readouterr().err


def test_train_sdf_outputs(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {"dimension": 1, "n_train": 30, "n_test": 50, "train": FAST_TRAIN}
        )
    )
    out = tmp_path / "run"
    rc = main(["train-sdf", "--config", str(config), "--seed", "2", "--out", str(out)])
    assert rc == 0
    net = Network.load(out / "network.json")
    assert net.input_dim == 1
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) >= {"dimension", "n_train", "train_accuracy", "test_accuracy"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train-sdf"
    assert manifest["seed"] == 2


def test_train_sdf_accepts_dataset_file(tmp_path):
    rng = np.random.default_rng(0)
    samples = []
    for _ in range(24):
        z = rng.uniform(-2.0, 2.0, size=1)
        feasible = bool(z[0] <= 0.0)
        samples.append(
            LabeledSample(
                point=z,
                feasible=feasible,
                sq_distance=0.0 if feasible else float(z[0] ** 2),
                projection=None if feasible else np.zeros(1),
                distance_grad=None if feasible else np.ones(1),
            )
        )
    dataset = tmp_path / "data.json"
    save_dataset(samples, dataset)
    train = dict(FAST_TRAIN, lower=[-2.0], upper=[2.0])
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"dataset": str(dataset), "train": train}))
    out = tmp_path / "run"
    rc = main(["train-sdf", "--config", str(config), "--out", str(out)])
    assert rc == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["n_train"] == 24
    assert "test_accuracy" not in metrics


def test_module_entry_point_shows_help():
    proc = subprocess.run(
        [sys.executable, "-m", "sdfco", "--help"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert "disk-benchmark" in proc.stdout

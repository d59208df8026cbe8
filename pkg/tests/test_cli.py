"""Command line layering, exit codes, artifacts, and manifests."""

import json
import os

import numpy as np
import pytest

from deepwifi import cli, mac, net


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One populated output directory shared across the module."""
    out = tmp_path_factory.mktemp("cliout")
    cfg = out / "cfg.yaml"
    cfg.write_text(
        "data:\n  n_frames: 120\n"
        "mcs:\n  trials: 40\n"
        "auth:\n  n_train: 12\n  n_test: 6\n"
        "sim:\n  n_users: 5\n  n_channels: 8\n  n_flows: 3\n"
        "  n_slots: 30\n  p_j: 0.4\n"
        "sweep:\n  p_j_step: 0.5\n  seeds: [0, 1]\n")
    args = ["--config", str(cfg), "--out", str(out)]
    assert cli.main(args + ["mcs-table"]) == cli.EXIT_OK
    assert cli.main(args + ["gen-data"]) == cli.EXIT_OK
    return out, args


# -- config layering ---------------------------------------------------------

def test_defaults_and_paper_preset():
    desk = cli.load_config()
    assert desk["data"]["n_frames"] == 1200
    assert desk["sweep"]["p_j_step"] == 0.05
    paper = cli.load_config(paper_scale=True)
    assert paper["data"]["n_frames"] == 12000
    assert paper["sim"]["n_slots"] == 1000
    # untouched sections inherit the desk defaults
    assert paper["mcs"] == desk["mcs"]


def test_yaml_overrides_defaults(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("sim:\n  p_j: 0.25\n")
    cfg = cli.load_config(str(path))
    assert cfg["sim"]["p_j"] == 0.25
    assert cfg["sim"]["n_users"] == 9


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("sim:\n  warp_factor: 9\n")
    with pytest.raises(cli.ConfigError, match="sim.warp_factor"):
        cli.load_config(str(path))
    assert cli.main(["--config", str(path), "--out", str(tmp_path),
                     "simulate"]) == cli.EXIT_CONFIG


def test_config_hash_tracks_content():
    a = cli.load_config()
    h1 = cli.config_hash(a)
    assert h1 == cli.config_hash(cli.load_config())
    b = cli.load_config(paper_scale=True)
    assert cli.config_hash(b) != h1


def test_sweep_grids_match_defaults():
    sw = cli.load_config()["sweep"]
    points = cli._sweep_points(sw)
    assert len(points) == 21  # 0 to 1 in 0.05 steps
    assert points[0] == ("p_j", 0.0) and points[-1] == ("p_j", 1.0)
    sw["kind"] = "sinr"
    points = cli._sweep_points(sw)
    assert len(points) == 31  # 0 to 30 dB in 1 dB steps
    assert all(field == "post_jam_sinr_db" for field, _ in points)


# -- artifacts ---------------------------------------------------------------

def test_gen_data_rerun_identical(workdir):
    out, args = workdir
    first = (out / "dataset.bin").read_bytes()
    assert cli.main(args + ["gen-data"]) == cli.EXIT_OK
    assert (out / "dataset.bin").read_bytes() == first


def test_threshold_table_round_trips(workdir):
    out, _ = workdir
    table = mac.load_thresholds(str(out / "thresholds.csv"))
    assert set(table) == {256, 512, 1024}
    for payload in table:
        edges = [table[payload][m] for m in sorted(table[payload])]
        assert edges == sorted(edges)


def test_manifest_traces_outputs(workdir):
    out, _ = workdir
    manifest = json.loads((out / "mcs_table_manifest.json").read_text())
    assert manifest["command"] == "mcs_table"
    assert "thresholds.csv" in manifest["outputs"]
    assert manifest["artifact_version"].startswith("deepwifi-")
    assert len(manifest["config_hash"]) == 16


def test_simulate_and_sweep_outputs(workdir):
    out, args = workdir
    assert cli.main(args + ["simulate"]) == cli.EXIT_OK
    with open(out / "run_summary.csv") as fh:
        assert fh.readline().startswith(net.CSV_STAMP)
        assert fh.readline().strip() == net.SUMMARY_HEADER
        assert len(fh.readline().split(",")) == len(
            net.SUMMARY_HEADER.split(","))

    assert cli.main(args + ["sweep"]) == cli.EXIT_OK
    with open(out / "sweep.csv") as fh:
        fh.readline()
        fh.readline()
        rows = [line for line in fh if line.strip()]
    assert len(rows) == 3 * 2 * 2  # points x seeds x policies


def test_sweep_deterministic(workdir):
    out, args = workdir
    first = (out / "sweep.csv").read_bytes()
    assert cli.main(args + ["sweep"]) == cli.EXIT_OK
    assert (out / "sweep.csv").read_bytes() == first


def test_auth_eval_writes_confusion(workdir):
    out, args = workdir
    assert cli.main(args + ["auth-eval"]) == cli.EXIT_OK
    lines = (out / "auth_confusion.csv").read_text().splitlines()
    assert lines[0].startswith(net.CSV_STAMP)
    assert lines[1] == "true_class,accepted,rejected,identification_accuracy"
    assert lines[2].startswith("A,") and lines[3].startswith("O,")


def test_report_renders_figures(workdir):
    out, args = workdir
    assert cli.main(args + ["report"]) == cli.EXIT_OK
    for name in ("throughput_vs_pj.png", "per_user_throughput.png",
                 "power_histogram.png"):
        assert (out / name).stat().st_size > 0


# -- exit codes ---------------------------------------------------------------

def test_missing_artifacts_fail_cleanly(tmp_path):
    args = ["--out", str(tmp_path)]
    assert cli.main(args + ["simulate"]) == cli.EXIT_CONFIG
    assert cli.main(args + ["train"]) == cli.EXIT_CONFIG
    assert cli.main(args + ["report"]) == cli.EXIT_CONFIG


def test_check_mode_flags_weak_auth(tmp_path):
    # an absurdly tight per-user margin rejects nearly every genuine
    # probe, dragging overall accuracy below the acceptance bar
    cfg = tmp_path / "c.yaml"
    cfg.write_text("auth:\n  n_train: 12\n  n_test: 4\n"
                   "  user_margin: 0.0001\n  pooled_margin: 0.0001\n")
    rc = cli.main(["--config", str(cfg), "--out", str(tmp_path),
                   "auth-eval", "--check"])
    assert rc == cli.EXIT_CHECK


def test_confusion_mode_needs_training_artifacts(workdir, tmp_path):
    out, _ = workdir
    cfg = tmp_path / "c.yaml"
    cfg.write_text("sim:\n  mode: confusion\n")
    rc = cli.main(["--config", str(cfg), "--out", str(out), "simulate"])
    assert rc == cli.EXIT_CONFIG  # confusion.csv only appears after train

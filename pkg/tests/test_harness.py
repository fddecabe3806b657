"""Experiment runner, output emission, CLI round trips."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from rdars_isac.cli import main as cli_main
from rdars_isac.errors import ConfigError
from rdars_isac.harness import (
    ExperimentRecord,
    ExperimentSpec,
    emit_outputs,
    make_spec,
    run_experiment,
    trial_seed,
)
from rdars_isac.scenario import desk_config


def fast_config(max_iters=25):
    cfg = desk_config()
    return replace(cfg, stopping=replace(cfg.stopping, max_iters=max_iters))


def test_spec_validation():
    with pytest.raises(ConfigError):
        make_spec("nonsense")
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="power", schemes=("rdars-isac",), trials=0,
                       base_config=desk_config(), master_seed=1, grid=(10.0,)).validate()
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="power", schemes=(), trials=1,
                       base_config=desk_config(), master_seed=1, grid=(10.0,)).validate()


def test_trial_seed_stable():
    assert trial_seed(7, 0) == trial_seed(7, 0)
    assert trial_seed(7, 0) != trial_seed(7, 1)
    assert trial_seed(8, 0) != trial_seed(7, 0)


def test_record_count_matches_grid():
    spec = make_spec("power", config=fast_config(12), schemes=("rdars-isac", "das-isac"),
                     trials=3, seed=3, grid=(10.0, 15.0, 20.0, 25.0, 30.0))
    records = run_experiment(spec)
    assert len(records) == 5 * 3 * 2
    keys = {(r.scheme, r.sweep_value, r.trial) for r in records}
    assert len(keys) == len(records)


def test_convergence_experiment_has_trace(tmp_path):
    spec = make_spec("convergence", config=fast_config(10), schemes=("rdars-isac",),
                     trials=1, seed=5)
    records = run_experiment(spec)
    assert len(records) == 1
    assert len(records[0].trace) == records[0].iterations
    files = emit_outputs(records, tmp_path, kind="convergence")
    trace_files = [p for p in files if p.name.startswith("trace_")]
    assert len(trace_files) == 1
    header = trace_files[0].read_text().splitlines()[0]
    assert header == "iter,radar_snr_db,penalized_obj,comm_residual,selection_residual,min_sinr_db,rho1,rho2"


def test_emit_outputs_structure(tmp_path):
    records = [
        ExperimentRecord(scheme="rdars-isac", trial=0, seed=11, sweep_value=10.0,
                         radar_snr_db=1.0, min_sinr_db=10.0, comm_residual=0.0,
                         selection_residual=0.0, iterations=5, wall_ms=12.0),
        ExperimentRecord(scheme="rdars-isac", trial=1, seed=12, sweep_value=10.0,
                         radar_snr_db=2.0, min_sinr_db=10.0, comm_residual=0.0,
                         selection_residual=0.0, iterations=6, wall_ms=13.0),
        ExperimentRecord(scheme="rdars-isac", trial=2, seed=13, sweep_value=10.0,
                         radar_snr_db=3.0, min_sinr_db=10.0, comm_residual=0.0,
                         selection_residual=0.0, iterations=6, wall_ms=13.0),
    ]
    files = emit_outputs(records, tmp_path, kind="power")
    body = (tmp_path / "records.csv").read_text()
    lines = body.splitlines()
    assert lines[0] == ("scheme,trial,seed,sweep_value,radar_snr_db,min_sinr_db,"
                        "comm_residual,selection_residual,iterations")
    assert len(lines) == 4
    summary = json.loads((tmp_path / "summary.json").read_text())
    point = summary["points"][0]
    assert point["mean_radar_snr_db"] == pytest.approx(2.0)
    assert point["stderr_radar_snr_db"] == pytest.approx(0.5774, abs=1e-4)
    assert point["n_trials"] == 3
    # timings live in a side file, never in records.csv
    assert "wall_ms" not in lines[0]
    assert (tmp_path / "timing.csv").exists()


def test_emit_empty_records(tmp_path):
    files = emit_outputs([], tmp_path, kind="power")
    lines = (tmp_path / "records.csv").read_text().splitlines()
    assert len(lines) == 1


def test_paired_channels_across_schemes():
    spec = make_spec("power", config=fast_config(8), schemes=("rdars-isac", "passive-ris-isac"),
                     trials=1, seed=9, grid=(20.0,))
    records = run_experiment(spec)
    seeds = {r.scheme: r.seed for r in records}
    assert seeds["rdars-isac"] == seeds["passive-ris-isac"]


def test_csv_bitwise_deterministic(tmp_path):
    spec = make_spec("power", config=fast_config(10), schemes=("rdars-isac",),
                     trials=2, seed=17, grid=(15.0, 20.0))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    emit_outputs(run_experiment(spec), out_a, kind="power")
    emit_outputs(run_experiment(spec), out_b, kind="power")
    assert (out_a / "records.csv").read_bytes() == (out_b / "records.csv").read_bytes()
    assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()


def test_beampattern_experiment_outputs(tmp_path):
    spec = make_spec("beampattern", config=fast_config(8), schemes=("rdars-isac",),
                     trials=1, seed=19)
    records = run_experiment(spec)
    files = emit_outputs(records, tmp_path, kind="beampattern")
    names = {p.name for p in files}
    assert "beampattern_bs_rdars-isac_0.csv" in names
    assert "beampattern_rdars_rdars-isac_0.csv" in names
    bs_lines = (tmp_path / "beampattern_bs_rdars-isac_0.csv").read_text().splitlines()
    assert bs_lines[0] == "theta_rad,gain_db"
    assert len(bs_lines) == 1 + 361


def test_cli_run_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "run"
    code = cli_main(["run", "--experiment", "power", "--schemes", "rdars-isac",
                     "--trials", "1", "--seed", "4", "--out", str(out),
                     "--grid", "20", "--max-iters", "8"])
    assert code == 0
    assert (out / "records.csv").exists()
    # config error path
    bad = tmp_path / "bad.cfg"
    bad.write_text("a = 0\n")
    code = cli_main(["run", "--config", str(bad), "--experiment", "power",
                     "--out", str(out)])
    assert code == 2
    # unknown scheme is a config error
    code = cli_main(["run", "--experiment", "power", "--schemes", "nope",
                     "--out", str(out)])
    assert code == 2


def test_infeasible_rows_recorded_not_fatal(tmp_path):
    # gamma targets far beyond the power budget: rows carry NaN, sweep continues
    cfg = replace(fast_config(6), gamma_bar_db=(90.0, 90.0))
    spec = make_spec("power", config=cfg, schemes=("rdars-isac",), trials=1,
                     seed=23, grid=(-20.0,))
    records = run_experiment(spec)
    assert len(records) == 1
    assert math.isnan(records[0].radar_snr_db)
    files = emit_outputs(records, tmp_path, kind="power")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["points"][0]["n_failed"] == 1

"""
Tests for the seeded Monte Carlo runs, output files and the command line
"""
import json
import logging
import math
import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

import app
from config.presets import RMSE_COLUMNS, STEPS_COLUMNS, SUMMARY_COLUMNS, SWEEP_COLUMNS
from src.errors import ConfigurationError, StabilityError
from src.estimator import synthesize_gains
from src.lin_model import SystemModel
from src.scenario import ScenarioSpec, build_scenario
from src.simulation import (
    check_stability, draw_realization, oracle_check, run_case, run_seeds, simulate_run, summarize_run, sweep,
)


def _scenario(spec):
    return build_scenario(ScenarioSpec.model_validate(spec))


@pytest.fixture
def ring(ring_spec):
    return _scenario(ring_spec)


@pytest.fixture
def ring_gains(ring):
    return synthesize_gains(ring.model, ring.sensors, ring.gain_iters)


def test_run_seeds_are_reproducible_and_distinct():
    seeds = run_seeds(2024, 20)
    assert seeds == run_seeds(2024, 20)
    assert len(set(seeds)) == 20
    assert run_seeds(2024, 5) == seeds[:5]


def test_realization_shapes_and_reuse(ring):
    real = draw_realization(ring, 11)
    assert real.states.shape == (21, 2)
    np.testing.assert_allclose(real.states[0], ring.x0)
    assert len(real.measurements) == 20 and len(real.measurements[0]) == 4
    assert real.thresholds.shape == (20, 4)
    assert set(real.injections[0]) == {(1, 2)}
    again = draw_realization(ring, 11)
    assert np.array_equal(real.states, again.states)
    assert np.array_equal(real.thresholds, again.thresholds)


def test_stability_precondition_holds_on_the_ring(ring, ring_gains):
    rhos = check_stability(ring, ring_gains)
    assert set(rhos) == {"all-accept", "all-reject"}
    assert all(rho < 1 for rho in rhos.values())


def test_unstable_augmented_matrix_aborts(ring):
    unstable = replace(ring, model=SystemModel(1.2 * np.eye(2), 0.5 * np.eye(2)))
    gains = [np.zeros((2, 1))] * 4
    with pytest.raises(StabilityError, match="rho\\(F\\) = 1.2"):
        check_stability(unstable, gains)


def test_zero_attacks_clean_matches_virtual(make_spec):
    scenario = _scenario(make_spec(links=()))
    gains = synthesize_gains(scenario.model, scenario.sensors, scenario.gain_iters)
    trace = simulate_run(scenario, gains, 5)
    assert np.array_equal(trace.estimates["clean"], trace.estimates["virtual"])
    assert all(counts.attacked == 0 for counts in trace.flags.values())


def test_zero_attacks_without_budget_all_pipelines_agree(make_spec):
    scenario = _scenario(make_spec(links=(), q=0))
    gains = synthesize_gains(scenario.model, scenario.sensors, scenario.gain_iters)
    trace = simulate_run(scenario, gains, 5)
    for pipeline in ("virtual", "sampled", "sorted", "oracle"):
        assert np.array_equal(trace.estimates["clean"], trace.estimates[pipeline])


def test_attacks_pull_the_detector_free_estimate_away(ring, ring_gains):
    trace = simulate_run(ring, ring_gains, 5)
    assert not np.array_equal(trace.estimates["clean"], trace.estimates["virtual"])
    clean = np.mean(trace.squared_errors("clean"))
    virtual = np.mean(trace.squared_errors("virtual"))
    assert virtual > clean


def test_trace_is_aligned_with_the_realization(ring, ring_gains):
    trace = simulate_run(ring, ring_gains, 3)
    real = draw_realization(ring, 3)
    assert trace.horizon == ring.horizon
    assert np.array_equal(trace.states, real.states[1:])
    assert trace.estimates["sorted"].shape == (20, 4, 2)
    assert trace.mean_error("clean").shape == (20, 2)
    assert trace.delta_norms.shape == (20,)
    assert np.all(np.isfinite(trace.rhos))
    assert len(trace.selections["sorted"]) == 20
    assert all(len(sel[i]) <= 1 for sel in trace.selections["sorted"] for i in sel)


def test_pipelines_do_not_disturb_each_other(ring, ring_gains):
    full = simulate_run(ring, ring_gains, 8)
    sorted_only = simulate_run(ring, ring_gains, 8, pipelines=("sorted",))
    sampled_only = simulate_run(ring, ring_gains, 8, pipelines=("sampled", "clean"))
    assert np.array_equal(full.estimates["sorted"], sorted_only.estimates["sorted"])
    assert np.array_equal(full.estimates["sampled"], sampled_only.estimates["sampled"])
    assert sorted_only.delta_norms is None


def test_unstable_detector_mask_is_reported(ring, ring_gains, monkeypatch, caplog):
    monkeypatch.setattr("src.simulation.spectral_radius", lambda F: 1.05)
    with caplog.at_level(logging.WARNING, logger="src.simulation"):
        trace = simulate_run(ring, ring_gains, 8, pipelines=("virtual", "sorted"))
    assert np.all(trace.rhos == 1.05)
    assert "rho(F) = 1.050000 >= 1" in caplog.text
    assert summarize_run(trace, ring)["sorted"].delta_bound == math.inf


def test_unknown_pipeline(ring, ring_gains):
    with pytest.raises(ConfigurationError):
        simulate_run(ring, ring_gains, 1, pipelines=("sorted", "psychic"))


def test_run_summaries(ring, ring_gains):
    trace = simulate_run(ring, ring_gains, 4)
    summaries = summarize_run(trace, ring)
    assert set(summaries) == {"clean", "virtual", "sampled", "sorted", "oracle"}
    oracle = summaries["oracle"]
    assert oracle.avg_opt_rate == pytest.approx(1.0)
    assert oracle.regret_lhs <= 0 <= oracle.regret_rhs
    assert summaries["sorted"].max_delta_norm >= 0
    assert summaries["sorted"].max_rho > 0
    assert summaries["sorted"].delta_bound > 0
    assert set(summaries["sorted"].round_report) == {1, 2, 3, 4}
    assert summaries["clean"].avg_opt_rate is None
    assert summaries["sorted"].flags.attacked == 20


def test_run_case_writes_every_file(ring, tmp_path):
    out = tmp_path / "ring"
    case = run_case(ring, seeds=2, out_dir=str(out))
    assert set(case.files) == {"summary", "rmse", "steps", "manifest"}

    summary = pd.read_csv(out / "summary.csv")
    assert list(summary.columns) == SUMMARY_COLUMNS
    assert len(summary) == 2 * 5
    # not-applicable cells are left empty
    assert summary.loc[summary["pipeline"] == "clean", "fn"].isna().all()

    steps = pd.read_csv(out / "steps.csv")
    assert list(steps.columns) == STEPS_COLUMNS
    assert len(steps) == 2 * 5 * 20 * 4
    assert steps["k"].min() == 1 and steps["k"].max() == 20

    curves = pd.read_csv(out / "rmse.csv")
    assert list(curves.columns) == RMSE_COLUMNS
    assert len(curves) == 5 * 20

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["run_seeds"] == case.seeds == sorted(run_seeds(7, 2))
    assert manifest["scenario"]["name"] == "ring"


def test_results_do_not_depend_on_worker_count(ring, tmp_path):
    run_case(ring, seeds=3, out_dir=str(tmp_path / "serial"), jobs=1)
    run_case(ring, seeds=3, out_dir=str(tmp_path / "parallel"), jobs=3)
    for name in ("summary.csv", "rmse.csv", "steps.csv", "manifest.json"):
        assert (tmp_path / "serial" / name).read_bytes() == (tmp_path / "parallel" / name).read_bytes()


def test_explicit_seed_list(ring):
    case = run_case(ring, seeds=[42, 7], pipelines=("sorted",))
    assert case.seeds == [7, 42]
    assert len(case.summaries_for("sorted")) == 2
    assert 0 < case.mean_opt_rate("sorted") <= 1


def test_sweep_table(ring, tmp_path):
    table = sweep(ring, [0.5], [0.2, 1.0], seeds=2, out_dir=str(tmp_path))
    assert list(table.columns) == SWEEP_COLUMNS
    assert len(table) == 2
    assert table["fn"].between(0, 1).all()
    assert os.path.exists(tmp_path / "sweep.csv")
    with pytest.raises(ConfigurationError):
        sweep(ring, [], [0.5], seeds=1)


def test_oracle_check_passes():
    report = oracle_check(sizes=range(4, 9), trials=200, seed=3)
    assert report == {"success": True, "trials": 200, "failures": []}


def test_oracle_check_guard():
    with pytest.raises(ConfigurationError):
        oracle_check(sizes=[30], trials=1)


# command line

def test_cli_oracle_check(capsys):
    assert app.main(["oracle-check", "--trials", "50", "--sizes", "4", "6"]) == 0
    assert '"success": true' in capsys.readouterr().out


def test_cli_run_scenario_file(tmp_path, ring_spec, capsys):
    path = tmp_path / "ring.json"
    path.write_text(json.dumps(ring_spec), encoding="utf-8")
    out = tmp_path / "out"
    code = app.main(["run", str(path), "--seeds", "2", "--out", str(out), "--pipelines", "clean", "sorted"])
    assert code == 0
    assert (out / "summary.csv").exists()
    assert "sorted" in capsys.readouterr().out


def test_cli_rejects_bad_scenario(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{}", encoding="utf-8")
    assert app.main(["run", str(path)]) == 2


def test_cli_reports_instability(monkeypatch):
    def unstable(*args, **kwargs):
        raise StabilityError("rho(F) = 1.000100 >= 1 under the all-accept mask; aborting before simulation")

    monkeypatch.setattr(app, "run_case", unstable)
    assert app.main(["case1", "--seeds", "1"]) == 3

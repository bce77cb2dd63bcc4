import logging
import math

import numpy as np
import pytest

from pinnlabpy import ConfigurationError, UndefinedErrorMetric
from pinnlabpy.evaluation import (
    SWEEP_COLUMNS,
    Outcome,
    Prediction,
    SweepGrid,
    SweepResult,
    classify_energy,
    classify_pendulum_outcome,
    classify_toy_outcome,
    economical_minima_report,
    evaluate_run,
    field_l2_error,
    l2_relative_error,
    sweep,
)
from pinnlabpy.network import FeedForward, NetworkSpec, ParameterVector
from pinnlabpy.oracles import allen_cahn_reference, pendulum_reference, toy_reference
from pinnlabpy.training import RunTrace, TrainConfig

SMALL_TOY = {'system': {'name': 'toy', 'T': 1.0, 'y0': 0.5}, 'network': {'arch': "1x4"}, 'epochs': 3, 'n_f': 8}


def test_l2_relative_error():
    assert l2_relative_error([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert l2_relative_error([2.0, 0.0], [1.0, 0.0]) == 1.0
    with pytest.raises(UndefinedErrorMetric):
        l2_relative_error([1.0], [0.0])
    with pytest.raises(ConfigurationError):
        l2_relative_error([1.0, 2.0], [1.0])


def test_energy_classification():
    orbit = -9.81 * math.cos(1.0)
    assert classify_energy((0.0, 0.0), orbit) == ("stable-fp", False)
    assert classify_energy((math.pi, 0.0), orbit) == ("unstable-fp", False)
    assert classify_energy((0.2, 5.0), orbit) == ("unstable-fp", False)


def test_energy_on_the_orbit_is_borderline(caplog):
    orbit = -9.81 * math.cos(1.0)
    with caplog.at_level(logging.WARNING, logger="pinnlabpy.evaluation"):
        label, borderline = classify_energy((1.0, 0.0), orbit)
    assert (label, borderline) == ("stable-fp", True)
    assert any("borderline" in r.getMessage() for r in caplog.records)


def test_pendulum_outcomes():
    y0 = math.radians(100)
    ref = pendulum_reference(y0, 5.0, 1e-3)
    times = np.linspace(0, 5.0, 1000)
    exact = Prediction(times, ref.at(times, "y"), ref.at(times, "y_t"))
    outcome = classify_pendulum_outcome(exact, ref)
    assert outcome.success and outcome.l2 < 1e-6
    resting = Prediction(times, np.zeros(1000), np.zeros(1000))
    outcome = classify_pendulum_outcome(resting, ref)
    assert outcome.label == "stable-fp" and outcome.l2 == 1.0
    inverted = Prediction(times, np.full(1000, math.pi), np.zeros(1000))
    assert classify_pendulum_outcome(inverted, ref).label == "unstable-fp"


def test_toy_failures_are_attributed_to_the_origin():
    ref = toy_reference(0.5, 1.0)
    times = np.linspace(0, 1.0, 50)
    outcome = classify_toy_outcome(Prediction(times, np.zeros(50), np.zeros(50)), ref)
    assert outcome.label == "unstable-fp" and outcome.l2 == 1.0
    with pytest.raises(ConfigurationError):
        Prediction(times, np.zeros(50), np.zeros(49))


def test_success_grows_with_the_threshold():
    outcomes = [Outcome(l2, "stable-fp", "stable-fp").at_threshold(0.15) for l2 in (0.01, 0.1, 0.2, 0.3, 0.9)]
    counts = [sum(o.label_at(t) == "success" for o in outcomes) for t in (0.05, 0.15, 0.25, 0.5)]
    assert counts == [1, 2, 3, 4]
    assert outcomes[1].label == "success" and outcomes[2].label == "stable-fp"


def test_outcome_validation_and_round_trip():
    with pytest.raises(ConfigurationError):
        Outcome(0.1, "lucky", "stable-fp")
    with pytest.raises(ConfigurationError):
        Outcome(0.1, "success", "success")
    outcome = Outcome(0.3, "unstable-fp", "unstable-fp", 0.15, 1e-3, (1.0, 2.0), True, True)
    assert outcome.flag == "borderline|diverged"
    assert Outcome.from_dict(outcome.to_dict()).to_dict() == outcome.to_dict()


def test_evaluate_run_uses_the_last_parameters():
    config = TrainConfig.from_dict(SMALL_TOY)
    trace = RunTrace(0)
    trace.final_params = ParameterVector.constant(config.network, 0.0)
    trace.record(0.0, 0.25, 0.25)
    outcome = evaluate_run(config, trace)
    assert outcome.label == "unstable-fp"
    assert outcome.l2 == pytest.approx(1.0)
    assert outcome.min_l_f == 0.0
    with pytest.raises(ConfigurationError):
        evaluate_run(TrainConfig.from_dict({'system': {'name': 'allen-cahn'}, 'epochs': 1}), trace)


def test_field_error_of_a_zero_network():
    ref = allen_cahn_reference(nx=128, dt=1e-3, T=0.01)
    spec = NetworkSpec(2, [4], 1)
    model = FeedForward(spec, ("t", "x"), ("u",))
    params = ParameterVector.constant(spec, 0.0)
    assert field_l2_error(model, params, ref) == pytest.approx(1.0)
    assert field_l2_error(model, params, ref, (0.005, 0.01)) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        field_l2_error(model, params, toy_reference(0.5, 1.0))


def test_sweep_grid_cells_and_jobs():
    grid = SweepGrid({'system': {'name': 'pendulum', 'y0': 0.1}}, {'T': [2.5, 5.0], 'y0_deg': [25, 100]}, seeds=3,
                     base_seed=10)
    assert len(grid.cells()) == 4
    assert grid.cells()[1] == {'T': 2.5, 'y0_deg': 100}
    jobs = grid.jobs()
    assert len(jobs) == 12
    assert [j['seed'] for j in jobs[:3]] == [10, 11, 12]
    assert jobs[0]['network']['seed'] == 10
    assert jobs[0]['system'] == {'name': 'pendulum', 'T': 2.5, 'y0_deg': 25}
    assert grid.base['system'] == {'name': 'pendulum', 'y0': 0.1}
    assert SweepGrid.from_dict(grid.to_dict()).jobs() == jobs


def test_sweep_grid_validation():
    with pytest.raises(ConfigurationError):
        SweepGrid({}, {'depth': [1]})
    with pytest.raises(ConfigurationError):
        SweepGrid({}, {'T': []})
    with pytest.raises(ConfigurationError):
        SweepGrid({}, {'T': [1.0]}, seeds=0)
    with pytest.raises(TypeError):
        SweepGrid([], {})


def test_small_sweep():
    result = sweep(SweepGrid(SMALL_TOY, {'T': [1.0]}, seeds=2))
    assert len(result) == 2
    frame = result.to_frame()
    assert list(frame.columns) == SWEEP_COLUMNS
    assert frame['seed'].tolist() == [0, 1]
    table = result.table()
    assert table['runs'].tolist() == [2]
    assert table[['success', 'stable-fp', 'unstable-fp']].sum(axis=1).tolist() == [100.0]
    rates = result.success_rates()
    assert [c for c in rates.columns if c.startswith("success@")] == ["success@0.05", "success@0.15", "success@0.25"]
    assert result.markdown().splitlines()[0] == "| T | y0 | result | runs |"


def test_sweep_results_do_not_depend_on_the_worker_count():
    grid = SweepGrid(SMALL_TOY, {'y0': [0.1, 0.5]}, seeds=2)
    serial = sweep(grid, workers=1)
    parallel = sweep(grid, workers=2)
    assert serial.to_frame().equals(parallel.to_frame())


def test_max_epochs_caps_sweep_runs():
    grid = SweepGrid(dict(SMALL_TOY, epochs=1000), {'T': [1.0]})
    assert sweep(grid, max_epochs=2).rows[0]['minLf'] == sweep(SweepGrid(dict(SMALL_TOY, epochs=2), {'T': [1.0]})).rows[0]['minLf']


def _pendulum_row(seed, l2, label):
    row = {'T': 7.5, 'y0': 100.0, 'arch': "4x50", 'activation': "tanh", 'alpha': 1e-3, 'Nc': 64,
           'lambda': 1.0, 'init': "glorot-uniform", 'seed': seed, 'L2': l2, 'class': label, 'minLf': 1e-4, 'flag': ""}
    return row


def test_pendulum_markdown_reports_all_three_classes():
    outcomes = [Outcome(0.05, "success", "stable-fp"), Outcome(0.8, "unstable-fp", "unstable-fp")]
    rows = [_pendulum_row(0, 0.05, "success"), _pendulum_row(1, 0.8, "unstable-fp")]
    result = SweepResult(rows, outcomes, "pendulum")
    assert result.markdown().splitlines()[2] == "| 7.5 | 100 | 50 / 0 / 50 | 2 |"
    assert result.table(0.01)['stable-fp'].tolist() == [50.0]


def test_economical_minima_report():
    overrides = {'system': {'T': 1.0}, 'network': {'arch': "1x4"}, 'n_f': 8}
    report = economical_minima_report("toy", [0.1, 0.5], seeds=1, overrides=overrides, max_epochs=2)
    assert len(report.frame) == 4
    assert report.frame['approach'].tolist() == ["data-guided", "physics-driven"] * 2
    medians = report.medians()
    assert medians.shape == (2, 2)
    assert np.all(medians.to_numpy() >= 0)
    with pytest.raises(ConfigurationError):
        economical_minima_report("allen-cahn", [0.1])
    with pytest.raises(ConfigurationError):
        economical_minima_report("toy", [0.1], approaches=["greedy"])

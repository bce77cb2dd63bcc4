"""
Reduced-scale reproduction runs. These take hours on a CPU and are
deselected by default; run them with `pytest -m slow`. PINNLAB_THREADS sets
the worker count.
"""

import json
import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pinnlabpy.cli import load_manifest, main
from pinnlabpy.evaluation import economical_minima_report, field_l2_error, sweep
from pinnlabpy.landscape import local_min_test, trajectory_landscapes
from pinnlabpy.training import TrainConfig, build_model, train

pytestmark = pytest.mark.slow

RECIPES = Path(__file__).resolve().parent.parent / "recipes"
WORKERS = int(os.environ.get("PINNLAB_THREADS", "1"))


def recipe(name):
    return load_manifest(str(RECIPES / name))


def success(table, **cell):
    mask = np.ones(len(table), dtype=bool)
    for key, value in cell.items():
        mask &= np.isclose(table[key].astype(float), value)
    (row,) = table[mask].to_dict("records")
    return row


def test_quick_recipe_end_to_end(tmp_path: Path):
    path = str(RECIPES / "toy_quick.json")
    assert main(["train", path, "--output-dir", str(tmp_path)]) == 0
    (run_dir,) = (tmp_path / "toy_quick").iterdir()
    assert len(pd.read_csv(run_dir / "losses.csv")) == 1000
    assert sorted(p.name for p in run_dir.glob("*.f64")) == [
        "theta_0000000.f64", "theta_0000500.f64", "theta_0001000.f64"]
    before = (run_dir / "losses.csv").read_bytes()
    assert main(["train", path, "--output-dir", str(tmp_path)]) == 0
    assert (run_dir / "losses.csv").read_bytes() == before


def test_toy_success_collapses_with_the_horizon():
    result = sweep(recipe("toy_table4_reduced.json").sweep, WORKERS)
    table = result.table()
    for y0 in (0.001, 0.01, 0.1):
        assert success(table, T=2.5, y0=y0)['success'] >= 80.0
    assert success(table, T=7.5, y0=0.001)['success'] <= 20.0


def test_pendulum_long_horizons_fall_to_the_stable_fixed_point():
    result = sweep(recipe("pendulum_table1_reduced.json").sweep, WORKERS)
    table = result.table()
    assert success(table, T=2.5, y0=100.0)['success'] >= 80.0
    late = success(table, T=7.5, y0=25.0)
    assert late['success'] <= 10.0
    assert late['stable-fp'] > 50.0


def test_physics_driven_minima_are_economical():
    eco = recipe("toy_fig1.json").economical
    report = economical_minima_report(eco['system'], eco['y0'], eco['approaches'], eco['seeds'], workers=WORKERS)
    medians = report.medians()
    physics = medians['physics-driven']
    assert physics.loc[0.001] <= physics.loc[0.01] <= physics.loc[0.1]
    assert physics.loc[0.001] < medians['data-guided'].loc[0.001]


def _escape_landscapes(config, settings):
    trace = train(config)
    mid, final = config.checkpoints[1], config.checkpoints[-1]
    return trajectory_landscapes(config.system, build_model(config), trace.checkpoints[0], trace.checkpoints[mid],
                                 trace.checkpoints[final], settings.horizons, settings.resolution,
                                 n_col=settings.n_col, seed=settings.seed, workers=WORKERS)


def test_trapped_midpoint_is_a_local_minimum_only_on_the_long_horizon():
    manifest = recipe("toy_fig3_landscape.json")
    settings = manifest.landscape
    data = manifest.train[0]
    for seed in range(20):
        run = json.loads(json.dumps(data))
        run['seed'] = seed
        run.setdefault('network', {})['seed'] = seed
        grids = {g.T: g for g in _escape_landscapes(TrainConfig.from_dict(run), settings)}
        long, short = grids[8.0], grids[2.5]
        mid = long.cell_of(long.points['theta_mid'])
        if not 0 < mid[0] < long.resolution[0] - 1 or not 0 < mid[1] < long.resolution[1] - 1:
            continue
        if local_min_test(long, mid) != "strict-local-min" or local_min_test(short, mid) == "strict-local-min":
            continue
        for grid in grids.values():
            final = grid.cell_of(grid.points['theta_final'])
            assert grid.values[final] == grid.values.min()
        return
    pytest.fail("no seed out of 20 showed a trapped midpoint")


def test_allen_cahn_escapes_with_longer_training():
    manifest = recipe("allen_cahn_long.json")
    short, long = manifest.train_configs()
    reference = short.system.reference()
    model = build_model(short)
    trapped = train(short).final_params
    assert field_l2_error(model, trapped, reference, (0.5, 1.0)) > 0.5
    assert field_l2_error(model, trapped, reference, (0.0, 0.0)) < 0.05
    escaped = train(long).final_params
    assert field_l2_error(model, escaped, reference) < 0.15

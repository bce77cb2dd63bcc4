import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pinnlabpy import ConfigurationError, DegenerateDirectionError, DomainError
from pinnlabpy.landscape import (
    LandscapeGrid,
    build_directions,
    default_extents,
    evaluate_grid,
    local_min_test,
    project,
    trajectory_landscapes,
    truncate,
)
from pinnlabpy.network import FeedForward, NetworkSpec, ParameterVector, init_params
from pinnlabpy.systems import ToySystem
from pinnlabpy.training import physics_loss, sample_collocation

SPEC = NetworkSpec(1, [6], 1, "tanh", seed=2)


def checkpoints(seed=0):
    rng = np.random.default_rng(seed)
    theta0 = init_params(SPEC).values
    return theta0, theta0 + rng.normal(scale=0.1, size=SPEC.n_params), theta0 + rng.normal(scale=0.1, size=SPEC.n_params)


def synthetic_grid(fn, n=5):
    s = np.linspace(-1.0, 1.0, n)
    ss1, ss2 = np.meshgrid(s, s, indexing="ij")
    e = np.eye(2)
    return LandscapeGrid(np.zeros(2), e[0], e[1], s, s, fn(ss1, ss2), 1.0, 0, 8)


def test_directions_are_orthonormal():
    for seed in range(5):
        d1, d2 = build_directions(*checkpoints(seed))
        assert abs(np.linalg.norm(d1) - 1.0) <= 1e-12
        assert abs(np.linalg.norm(d2) - 1.0) <= 1e-12
        assert abs(d1 @ d2) <= 1e-12


def test_checkpoints_lie_in_the_plane():
    theta0, mid, final = checkpoints(1)
    d1, d2 = build_directions(theta0, mid, final)
    assert project(theta0, theta0, d1, d2) == (0.0, 0.0)
    p1, p2 = project(mid, theta0, d1, d2)
    assert p1 == pytest.approx(np.linalg.norm(mid - theta0)) and abs(p2) <= 1e-12
    q1, q2 = project(final, theta0, d1, d2)
    assert np.allclose(theta0 + q1 * d1 + q2 * d2, final, atol=1e-12)


def test_degenerate_directions():
    theta0, mid, _ = checkpoints()
    with pytest.raises(DegenerateDirectionError):
        build_directions(theta0, theta0, mid)
    with pytest.raises(DegenerateDirectionError):
        build_directions(theta0, mid, theta0 + 2.0 * (mid - theta0))
    with pytest.raises(ConfigurationError):
        build_directions(theta0, mid, mid[:-1])


def test_default_extents_pad_the_checkpoints():
    assert default_extents([(0.0, 0.0), (1.0, 0.0), (2.0, 3.0)]) == ((-0.5, 2.5), (-0.75, 3.75))
    assert default_extents([(0.0, 0.0), (2.0, 0.0)], margin=0.5) == ((-1.0, 3.0), (-0.5, 0.5))


def test_grid_anchor_cell_is_the_physics_loss_at_theta0():
    system = ToySystem(T=2.0, y0=0.5)
    theta0, mid, final = checkpoints()
    d1, d2 = build_directions(theta0, mid, final)
    grid = evaluate_grid(system, SPEC, theta0, d1, d2, ((-1.0, 1.0), (-1.0, 1.0)), (5, 5), T=0.5, n_col=32, seed=4)
    assert grid.resolution == (5, 5)
    assert grid.T == 0.5
    short = system.with_horizon(0.5)
    points = sample_collocation(short.domain, 32, np.random.default_rng(4))
    model = FeedForward(SPEC, system.axes, system.outputs)
    assert grid.values[2, 2] == physics_loss(model, theta0, short, points)
    assert grid.cell_of((0.0, 0.0)) == (2, 2)
    assert np.all(np.isfinite(grid.values)) and np.all(grid.values >= 0)


def test_grid_does_not_depend_on_the_worker_count():
    system = ToySystem(T=1.0)
    theta0, mid, final = checkpoints()
    d1, d2 = build_directions(theta0, mid, final)
    extents = ((-0.5, 0.5), (-0.5, 0.5))
    serial = evaluate_grid(system, SPEC, theta0, d1, d2, extents, (4, 3), n_col=16)
    parallel = evaluate_grid(system, SPEC, theta0, d1, d2, extents, (4, 3), n_col=16, workers=2)
    assert np.array_equal(serial.values, parallel.values)


def test_non_finite_cells_hold_infinity():
    system = ToySystem(T=1.0)
    theta0 = ParameterVector.constant(SPEC, 1e200)
    e = np.eye(SPEC.n_params)
    grid = evaluate_grid(system, SPEC, theta0, e[0], e[1], ((0.0, 0.0), (0.0, 0.0)), (1, 1), n_col=8)
    assert grid.values[0, 0] == np.inf


def test_grid_argument_checks():
    system = ToySystem()
    theta0, mid, final = checkpoints()
    d1, d2 = build_directions(theta0, mid, final)
    with pytest.raises(ConfigurationError):
        evaluate_grid(system, SPEC, theta0, d1, d2, ((1.0, -1.0), (0.0, 1.0)), (3, 3))
    with pytest.raises(ConfigurationError):
        evaluate_grid(system, SPEC, theta0, d1, d2, ((-1.0, 1.0), (0.0, 1.0)), (0, 3))


def test_truncation_keeps_the_raw_values():
    grid = synthetic_grid(lambda a, b: a * a + b * b)
    clipped = truncate(grid, 0.5)
    assert clipped.values.max() == 0.5
    assert np.array_equal(clipped.raw, grid.values)
    assert clipped.threshold == 0.5
    assert np.array_equal(truncate(clipped, 0.1).raw, grid.values)
    frame = clipped.to_frame()
    assert list(frame.columns) == ["s1", "s2", "Lf", "Lf_raw"]
    assert list(grid.to_frame().columns) == ["s1", "s2", "Lf"]
    with pytest.raises(ConfigurationError):
        truncate(grid, 0.0)


def test_local_minimum_detection():
    bowl = synthetic_grid(lambda a, b: a * a + b * b)
    assert local_min_test(bowl, (2, 2)) == "strict-local-min"
    assert local_min_test(truncate(bowl, 1e-9), (2, 2)) == "strict-local-min"
    saddle = synthetic_grid(lambda a, b: a * a - b * b)
    assert local_min_test(saddle, (2, 2)) == "saddle-or-slope"
    plateau = synthetic_grid(lambda a, b: np.zeros_like(a))
    assert local_min_test(plateau, (2, 2)) == "saddle-or-slope"
    with pytest.raises(DomainError):
        local_min_test(bowl, (0, 2))
    with pytest.raises(DomainError):
        local_min_test(bowl, (2, 4))


def test_trajectory_landscapes_share_the_plane(tmp_path: Path):
    system = ToySystem(T=1.0)
    model = FeedForward(SPEC, system.axes, system.outputs)
    theta0, mid, final = checkpoints(3)
    grids = trajectory_landscapes(system, model, theta0, mid, final, [1.0, 0.5], resolution=(3, 3), n_col=16,
                                  threshold=1.0, log_scale=True)
    assert [g.T for g in grids] == [1.0, 0.5]
    first, second = grids
    assert first.extents == second.extents
    assert np.array_equal(first.d1, second.d1)
    assert first.points['theta0'] == (0.0, 0.0)
    (low1, high1), (low2, high2) = first.extents
    for s1, s2 in first.points.values():
        assert low1 <= s1 <= high1 and low2 <= s2 <= high2
    assert first.norms['theta_mid'] == pytest.approx(np.linalg.norm(mid - theta0))
    assert first.values.max() <= 1.0 and first.log_scale

    csv_path, json_path = first.export(str(tmp_path), "landscape_T1")
    frame = pd.read_csv(csv_path)
    assert len(frame) == 9
    meta = json.loads(Path(json_path).read_text())
    assert meta['threshold'] == 1.0 and meta['resolution'] == [3, 3] and meta['log_scale'] is True
    assert sorted(meta['points']) == ["theta0", "theta_final", "theta_mid"]
    first.export(str(tmp_path), "landscape_T1")


def test_grid_shape_is_checked():
    s = np.linspace(0, 1, 3)
    with pytest.raises(ConfigurationError):
        LandscapeGrid(np.zeros(2), np.eye(2)[0], np.eye(2)[1], s, s, np.zeros((3, 2)), 1.0, 0, 8)

import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pinnlabpy import ConfigurationError, DivergenceError, DomainError, ParseError
from pinnlabpy.oracles import (
    LabeledPoints,
    ReferenceSolution,
    _time_grid,
    allen_cahn_initial,
    allen_cahn_reference,
    load_field_snapshots,
    oscillation_period,
    pendulum_energy,
    pendulum_reference,
    rk4_integrate,
    self_convergence,
    toy_analytic,
    toy_reference,
    write_field_snapshots,
)


def test_time_grid_ends_exactly_at_the_horizon():
    assert _time_grid(1.0, 0.25).tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    grid = _time_grid(1.0, 0.3)
    assert np.allclose(grid, [0.0, 0.3, 0.6, 0.9, 1.0])
    assert grid[-1] == 1.0
    long = _time_grid(5.0, 1e-3)
    assert long.size == 5001 and long[-1] == 5.0


def test_rk4_on_exponential_decay():
    ref = rk4_integrate(lambda t, y: -y, 1.0, 1.0, 0.01)
    assert abs(ref.final_state[0] - math.exp(-1.0)) <= 1e-9
    assert ref.names == ("y0",)
    with pytest.raises(ConfigurationError):
        rk4_integrate(lambda t, y: -y, 1.0, 1.0, 0.0)


def test_rk4_reports_the_step_where_the_state_blew_up():
    with pytest.raises(DivergenceError) as e:
        rk4_integrate(lambda t, y: y * (np.inf if t >= 0.42 else 1.0), 1.0, 1.0, 0.1)
    assert e.value.step == 5


def test_pendulum_reference_grid_and_initial_state():
    ref = pendulum_reference(math.radians(100), 5.0, 1e-3)
    assert ref.values.shape == (5001, 2)
    assert ref.times[-1] == 5.0
    assert ref.values[0].tolist() == [math.radians(100), 0.0]
    assert ref.metadata['g'] == 9.81 and ref.metadata['l'] == 1.0


@pytest.mark.parametrize("degrees", [25, 100])
def test_pendulum_energy_is_conserved(degrees):
    ref = pendulum_reference(math.radians(degrees), 7.5, 1e-3)
    energy = pendulum_energy(ref.column("y"), ref.column("y_t"))
    assert np.max(np.abs(energy - energy[0])) / abs(energy[0]) <= 1e-8


def test_small_angle_period():
    ref = pendulum_reference(0.01, 5.0, 1e-3)
    assert oscillation_period(ref) == pytest.approx(2 * math.pi / math.sqrt(9.81), abs=1e-3)
    assert oscillation_period(ref) == pytest.approx(2.0061, abs=1e-3)
    with pytest.raises(DomainError):
        oscillation_period(pendulum_reference(0.01, 1.0, 1e-3))


def test_pendulum_energy_values():
    assert pendulum_energy(0.0, 0.0) == -9.81
    assert pendulum_energy(math.pi, 0.0) == pytest.approx(9.81)


def test_toy_closed_form_satisfies_the_equation():
    ref = toy_reference(0.5, 10.0, 10001)
    y = ref.column("y")
    h = ref.times[1] - ref.times[0]
    # fourth-order central difference on the interior
    dy = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / (12 * h)
    mid = y[2:-2]
    assert np.max(np.abs(dy - mid * (1 - mid ** 2))) <= 1e-8


def test_toy_closed_form_special_cases():
    assert toy_analytic(0.0, 3.0) == 0.0
    assert toy_analytic(-0.3, 2.0) == -toy_analytic(0.3, 2.0)
    assert toy_analytic(1.0, 5.0) == 1.0
    assert toy_analytic(0.5, 0.0) == pytest.approx(0.5)
    with pytest.raises(DomainError):
        toy_analytic(1.5, 1.0)


def test_reference_solution_access():
    ref = toy_reference(0.1, 2.0, 5)
    frame = ref.to_frame()
    assert list(frame.columns) == ["t", "y"]
    assert ref.at(1.0) == pytest.approx(toy_analytic(0.1, 1.0))
    with pytest.raises(ConfigurationError):
        ReferenceSolution([0.0, 0.0], [[1.0], [2.0]], ("y",))
    with pytest.raises(ConfigurationError):
        ReferenceSolution([0.0, 1.0], [[1.0, 2.0]], ("y",))


def test_reference_solution_export(tmp_path: Path):
    ref = pendulum_reference(0.2, 0.01, 1e-3)
    path = tmp_path / "reference.csv"
    ref.export_csv(str(path))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "y", "y_t"]
    assert len(frame) == 11
    assert frame['y'].iloc[0] == 0.2


def test_allen_cahn_reference_shape_and_periodic_column():
    ref = allen_cahn_reference(nx=128, dt=1e-3, T=0.01)
    assert ref.values.shape == (11, 129)
    assert ref.space[0] == -1.0 and ref.space[-1] == 1.0
    assert np.array_equal(ref.values[:, 0], ref.values[:, -1])
    assert np.array_equal(ref.values[0], allen_cahn_initial(ref.space))
    frame = ref.to_frame()
    assert list(frame.columns) == ["t", "x", "u"] and len(frame) == 11 * 129
    with pytest.raises(ConfigurationError):
        ref.column("u")


def test_allen_cahn_reference_rejects_coarse_or_unstable_grids():
    with pytest.raises(ConfigurationError):
        allen_cahn_reference(nx=64)
    with pytest.raises(ConfigurationError) as e:
        allen_cahn_reference(nx=512, dt=0.1, T=0.1)
    assert "stability" in str(e.value)


def test_allen_cahn_reference_stays_bounded():
    ref = allen_cahn_reference(nx=256, dt=1e-3, T=1.0)
    assert np.max(np.abs(ref.values)) <= 1.05
    assert ref.times[-1] == 1.0


def test_allen_cahn_self_convergence():
    coarse = allen_cahn_reference(nx=256, dt=1e-3, T=0.25)
    fine = allen_cahn_reference(nx=512, dt=1e-3, T=0.25)
    assert self_convergence(coarse, fine) <= 1e-4
    assert self_convergence(coarse, fine, t=0.1) <= 1e-4
    with pytest.raises(ConfigurationError):
        self_convergence(coarse, allen_cahn_reference(nx=200, dt=1e-3, T=0.25))
    with pytest.raises(ConfigurationError):
        self_convergence(toy_reference(0.5, 1.0), fine)


def test_self_convergence_at_an_interior_time_matches_a_shorter_run():
    short = [allen_cahn_reference(nx=nx, dt=1e-3, T=0.05) for nx in (128, 256)]
    long = [allen_cahn_reference(nx=nx, dt=1e-3, T=0.1) for nx in (128, 256)]
    i = int(np.argmin(np.abs(long[0].times - 0.05)))
    assert long[0].times[i] == pytest.approx(0.05, abs=1e-15)
    assert np.allclose(long[0].values[i], short[0].values[-1], rtol=1e-12, atol=1e-14)
    assert self_convergence(*long, t=0.05) == pytest.approx(self_convergence(*short), rel=1e-9, abs=1e-15)
    assert self_convergence(*long, t=0.05) != self_convergence(*long)


def _snapshot_file(tmp_path: Path, text: str) -> str:
    path = tmp_path / "snapshots.csv"
    path.write_text(text)
    return str(path)


def test_snapshots_round_trip(tmp_path: Path):
    rng = np.random.default_rng(0)
    data = LabeledPoints(rng.uniform(size=(5, 3)), rng.normal(size=(5, 3)), ["u", "v", "p"])
    path = str(tmp_path / "s.csv")
    write_field_snapshots(data, path)
    loaded = load_field_snapshots(path)
    assert np.array_equal(loaded.points, data.points)
    assert np.array_equal(loaded.values, data.values)
    with pytest.raises(ConfigurationError):
        write_field_snapshots(LabeledPoints([[0.0]], [[1.0]], ["y"]), path)


def test_snapshot_minimal_files(tmp_path: Path):
    assert len(load_field_snapshots(_snapshot_file(tmp_path, "t,x,y,u,v,p\n"))) == 0
    single = load_field_snapshots(_snapshot_file(tmp_path, "t,x,y,u,v,p\n0,0,0,1,0,0\n"))
    assert single.points.tolist() == [[0.0, 0.0, 0.0]]
    assert single.column("u").tolist() == [1.0]


def test_snapshot_header_errors(tmp_path: Path):
    with pytest.raises(ParseError) as e:
        load_field_snapshots(_snapshot_file(tmp_path, "t,x,u,v,p\n0,0,1,2,3\n"))
    assert e.value.line == 1
    with pytest.raises(ParseError) as e:
        load_field_snapshots(_snapshot_file(tmp_path, ""))
    assert e.value.line == 1
    with pytest.raises(FileNotFoundError):
        load_field_snapshots(str(tmp_path / "missing.csv"))


def test_snapshot_record_errors_name_the_line(tmp_path: Path):
    with pytest.raises(ParseError) as e:
        load_field_snapshots(_snapshot_file(tmp_path, "t,x,y,u,v,p\n0,0,0,1,2,3\n0,0,abc,1,2,3\n"))
    assert e.value.line == 3
    assert str(e.value).startswith("line 3:")
    with pytest.raises(ParseError) as e:
        load_field_snapshots(_snapshot_file(tmp_path, "t,x,y,u,v,p\n0,0,0,1,2,3\n0,0,0,1,2,3,4\n"))
    assert e.value.line == 3


def test_snapshot_line_numbers_count_blank_lines(tmp_path: Path):
    text = "t,x,y,u,v,p\n0,0,0,1,2,3\n\n0,0,0,1,2,3\n\n0,0,abc,1,2,3\n"
    with pytest.raises(ParseError) as e:
        load_field_snapshots(_snapshot_file(tmp_path, text))
    assert e.value.line == 6
    loaded = load_field_snapshots(_snapshot_file(tmp_path, "t,x,y,u,v,p\n0,0,0,1,2,3\n\n0,1,0,4,5,6\n"))
    assert loaded.points.tolist() == [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
    assert loaded.column("p").tolist() == [3.0, 6.0]

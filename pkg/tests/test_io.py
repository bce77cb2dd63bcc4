import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pinnlabpy import ArtifactConflictError, ConfigurationError, ParseError, NetworkSpec, init_params
from pinnlabpy.io import (
    _coerce_float,
    _coerce_int,
    config_hash,
    frame_to_csv_bytes,
    load_checkpoint,
    load_json,
    run_directory,
    save_checkpoint,
    write_artifact,
    write_frame_csv,
    write_json,
)


def test_coerce_int_accepts_whole_number_floats():
    assert _coerce_int(5.0, "epochs") == 5
    assert _coerce_int("12", "epochs") == 12
    assert _coerce_int(" 3.0 ", "epochs") == 3


def test_coerce_int_rejects_true_decimals_and_booleans():
    with pytest.raises(ConfigurationError) as e:
        _coerce_int(5.5, "epochs")
    assert "epochs" in str(e.value)
    with pytest.raises(ConfigurationError):
        _coerce_int(True, "seed")
    with pytest.raises(ConfigurationError):
        _coerce_int("abc", "seed")


def test_coerce_int_errors_are_value_errors():
    try:
        _coerce_int(2.25, "n_f")
        assert False, "expected ValueError"
    except ValueError as e:
        assert "Expected an integer" in str(e)


def test_coerce_float():
    assert _coerce_float(1, "alpha") == 1.0
    assert _coerce_float("1e-3", "alpha") == 1e-3
    with pytest.raises(ConfigurationError):
        _coerce_float(False, "alpha")
    with pytest.raises(ConfigurationError):
        _coerce_float("fast", "alpha")


def test_write_artifact_is_noop_for_identical_bytes(tmp_path: Path):
    path = tmp_path / "out" / "a.csv"
    write_artifact(str(path), b"t,y\n0,1\n")
    mtime = path.stat().st_mtime_ns
    write_artifact(str(path), b"t,y\n0,1\n")
    assert path.read_bytes() == b"t,y\n0,1\n"
    assert path.stat().st_mtime_ns == mtime


def test_write_artifact_refuses_to_overwrite_different_bytes(tmp_path: Path):
    path = tmp_path / "a.csv"
    write_artifact(str(path), b"first\n")
    with pytest.raises(ArtifactConflictError):
        write_artifact(str(path), b"second\n")
    assert path.read_bytes() == b"first\n"
    assert [p.name for p in tmp_path.iterdir()] == ["a.csv"]


def test_frame_csv_is_byte_stable(tmp_path: Path):
    frame = pd.DataFrame({'epoch': [1, 2], 'L_f': [0.1, 1.0 / 3.0]})
    data = frame_to_csv_bytes(frame)
    assert data.splitlines()[0] == b"epoch,L_f"
    assert b"\r" not in data
    assert float(data.splitlines()[2].split(b",")[1]) == 1.0 / 3.0
    write_frame_csv(frame, str(tmp_path / "losses.csv"))
    write_frame_csv(frame.copy(), str(tmp_path / "losses.csv"))


def test_write_json_overwrites_with_warning(tmp_path: Path, caplog):
    path = tmp_path / "run.json"
    write_json({'wall_time': 1.0}, str(path))
    with caplog.at_level(logging.WARNING, logger="pinnlabpy.io"):
        write_json({'wall_time': 2.0}, str(path))
    assert json.loads(path.read_text())['wall_time'] == 2.0
    assert any("overwriting" in r.getMessage() for r in caplog.records)


def test_load_json_reports_line_of_syntax_error(tmp_path: Path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "experiment": "x",\n  "seed": ,\n}\n')
    with pytest.raises(ParseError) as e:
        load_json(str(path))
    assert e.value.line == 3


def test_config_hash_ignores_key_order():
    assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
    assert config_hash({'a': 1}) != config_hash({'a': 2})
    assert len(config_hash({})) == 64


def test_run_directory_is_content_addressed(tmp_path: Path):
    digest = config_hash({'seed': 0})
    path = run_directory(str(tmp_path), "toy_quick", digest)
    assert Path(path) == tmp_path / "toy_quick" / digest[:12]
    assert Path(path).is_dir()


def test_checkpoint_keeps_every_bit(tmp_path: Path):
    spec = NetworkSpec(1, [8, 8], 1, "swish", seed=3)
    params = init_params(spec)
    stem = str(tmp_path / "theta_0000010")
    save_checkpoint(params, spec, stem, 10, {'config_hash': "abc"})
    loaded, loaded_spec, meta = load_checkpoint(stem)
    assert loaded == params
    assert loaded_spec == spec
    assert meta['epoch'] == 10 and meta['seed'] == 3 and meta['config_hash'] == "abc"
    assert Path(stem + ".f64").stat().st_size == 8 * spec.n_params
    assert np.array_equal(np.frombuffer(Path(stem + ".f64").read_bytes(), dtype="<f8"), params.values)


def test_checkpoint_size_mismatch_is_a_parse_error(tmp_path: Path):
    spec = NetworkSpec(1, [4], 1)
    stem = str(tmp_path / "theta")
    save_checkpoint(init_params(spec), spec, stem)
    meta = json.loads(Path(stem + ".json").read_text())
    meta['spec']['hidden_layers'] = [5]
    Path(stem + ".json").write_text(json.dumps(meta))
    with pytest.raises(ParseError):
        load_checkpoint(stem)

import hashlib
import json
import logging
import os
import tempfile
from typing import Any, Dict, Optional, Tuple

import pandas as pd

from .errors import ArtifactConflictError, ConfigurationError, ParseError
from .network import LayerSlot, NetworkSpec, ParameterVector

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


# ---- internal helpers for numeric configuration fields ----
def _coerce_int(value: Any, field: str) -> int:
    """
    Accept ints, or floats that are whole-numbered (e.g., 5.0 -> 5).
    Raise ConfigurationError for values like 5.5, 'abc' or True.
    """
    if isinstance(value, bool):
        # prevent True/False being treated as ints
        raise ConfigurationError(f"Invalid value for {field}: {value}. Expected an integer.")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise ConfigurationError(f"Invalid value for {field}: {value}. Expected an integer.")
    try:
        f = float(str(value).strip())
    except ValueError:
        raise ConfigurationError(f"Invalid value for {field}: {value}. Expected an integer.") from None
    if f.is_integer():
        return int(f)
    raise ConfigurationError(f"Invalid value for {field}: {value}. Expected an integer.")


def _coerce_float(value: Any, field: str) -> float:
    if isinstance(value, bool):
        raise ConfigurationError(f"Invalid value for {field}: {value}. Expected a number.")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value).strip())
    except ValueError:
        raise ConfigurationError(f"Invalid value for {field}: {value}. Expected a number.") from None


# ------------------- Atomic writes -------------------
def _atomic_write(path: str, data: bytes) -> None:
    # temp file in the target directory so os.replace stays on one filesystem
    dir_name = os.path.dirname(path) or "."
    os.makedirs(dir_name, exist_ok=True)
    with tempfile.NamedTemporaryFile("wb", delete=False, dir=dir_name) as tmp:
        tmp.write(data)
        tmp_path = tmp.name
    os.replace(tmp_path, path)


def write_artifact(path: str, data: bytes) -> None:
    """
    Write `data` to `path` unless an identical file is already there. A file
    with different content raises ArtifactConflictError and is left untouched.
    """
    if os.path.exists(path):
        with open(path, "rb") as f:
            existing = f.read()
        if existing == data:
            logger.debug("artifact %s already up to date", path)
            return
        raise ArtifactConflictError(f"{path} exists with different content")
    _atomic_write(path, data)


def frame_to_csv_bytes(frame: pd.DataFrame) -> bytes:
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n").encode("utf-8")


def write_frame_csv(frame: pd.DataFrame, path: str) -> None:
    write_artifact(path, frame_to_csv_bytes(frame))


def write_json(data: Dict[str, Any], path: str) -> None:
    ''' Metadata JSON: rewritten in place, with a warning when the content changes. '''
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    if os.path.exists(path):
        with open(path, encoding="utf-8") as f:
            if f.read() != text:
                logger.warning("overwriting %s with new metadata", path)
    _atomic_write(path, text.encode("utf-8"))


def load_json(path: str) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: {e.msg}", e.lineno) from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: top-level JSON value must be an object", 1)
    return data


# ------------------- Identity of runs -------------------
def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def run_directory(output_dir: str, experiment_id: str, digest: str) -> str:
    path = os.path.join(output_dir, experiment_id, digest[:12])
    os.makedirs(path, exist_ok=True)
    return path


# ------------------- Checkpoints -------------------
def save_checkpoint(params: ParameterVector, spec: NetworkSpec, stem: str,
                    epoch: Optional[int] = None, extra: Optional[Dict[str, Any]] = None) -> None:
    """
    `<stem>.f64` holds the flat little-endian float64 array, `<stem>.json`
    the layout, the network spec and its seed.
    """
    sidecar = {
        'spec': spec.to_dict(),
        'layout': params.layout_dict(),
        'n_params': len(params),
        'seed': spec.seed,
        'epoch': epoch,
    }
    sidecar.update(extra or {})
    write_artifact(stem + ".f64", params.to_bytes())
    write_artifact(stem + ".json", (json.dumps(sidecar, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def load_checkpoint(stem: str) -> Tuple[ParameterVector, NetworkSpec, Dict[str, Any]]:
    meta = load_json(stem + ".json")
    with open(stem + ".f64", "rb") as f:
        data = f.read()
    try:
        spec = NetworkSpec.from_dict(meta['spec'])
        layout = [LayerSlot.from_dict(s) for s in meta['layout']]
    except KeyError as e:
        raise ParseError(f"{stem}.json: missing field {e}") from None
    params = ParameterVector.from_bytes(data, layout)
    if len(params) != spec.n_params:
        raise ParseError(f"{stem}.f64 holds {len(params)} values, spec needs {spec.n_params}")
    return params, spec, meta

"""
Physics-loss landscapes on the plane through the initial parameters spanned
by two training-trajectory directions.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DegenerateDirectionError, DomainError, NumericalError
from .io import write_frame_csv, write_json
from .network import FeedForward, Model, NetworkSpec
from .systems import DynamicalSystem
from .training import physics_loss, sample_collocation

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = (41, 41)
DEFAULT_MARGIN = 0.25
COLLINEAR_TOLERANCE = 1e-10

Extents = Tuple[Tuple[float, float], Tuple[float, float]]


def _flat(theta: Any) -> np.ndarray:
    return np.asarray(getattr(theta, "values", theta), dtype=np.float64).ravel()


def build_directions(theta0: Any, theta_mid: Any, theta_final: Any) -> Tuple[np.ndarray, np.ndarray]:
    """
    d1 points from theta0 to theta_mid; d2 is the part of theta_final - theta0
    orthogonal to d1. Both have unit length.
    """
    t0, tm, tf = _flat(theta0), _flat(theta_mid), _flat(theta_final)
    if not (t0.size == tm.size == tf.size):
        raise ConfigurationError("checkpoints must have equal length")
    a = tm - t0
    norm_a = np.linalg.norm(a)
    if norm_a == 0:
        raise DegenerateDirectionError("theta_mid coincides with theta0")
    d1 = a / norm_a
    b = tf - t0
    r = b - (b @ d1) * d1
    if np.linalg.norm(r) <= COLLINEAR_TOLERANCE * max(np.linalg.norm(b), 1e-300):
        raise DegenerateDirectionError("theta_final - theta0 is collinear with theta_mid - theta0")
    # second pass keeps the pair orthogonal to rounding
    r = r - (r @ d1) * d1
    d2 = r / np.linalg.norm(r)
    return d1, d2


def project(theta: Any, anchor: Any, d1: np.ndarray, d2: np.ndarray) -> Tuple[float, float]:
    diff = _flat(theta) - _flat(anchor)
    return float(diff @ d1), float(diff @ d2)


def default_extents(coordinates: Sequence[Tuple[float, float]], margin: float = DEFAULT_MARGIN) -> Extents:
    ''' Bounding box of the projected checkpoints, widened by `margin` of its span on every side. '''
    pts = np.asarray(list(coordinates), dtype=np.float64)
    out = []
    for k in range(2):
        low, high = float(pts[:, k].min()), float(pts[:, k].max())
        span = high - low if high > low else 1.0
        out.append((low - margin * span, high + margin * span))
    return out[0], out[1]


class LandscapeGrid:
    '''
    Physics-loss values L_f(theta0 + s1 d1 + s2 d2) on a rectangular grid of
    (s1, s2) for one horizon T. `raw` keeps the untruncated values.
    '''
    def __init__(
        self,
        anchor: np.ndarray,
        d1: np.ndarray,
        d2: np.ndarray,
        s1: np.ndarray,
        s2: np.ndarray,
        values: np.ndarray,
        T: float,
        seed: int,
        n_col: int,
        threshold: Optional[float] = None,
        raw: Optional[np.ndarray] = None,
        log_scale: bool = False,
        points: Optional[Dict[str, Tuple[float, float]]] = None,
        norms: Optional[Dict[str, float]] = None
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(s1), len(s2)):
            raise ConfigurationError(f"values of shape {values.shape} do not match resolution {(len(s1), len(s2))}")
        self.anchor: np.ndarray = anchor
        self.d1: np.ndarray = d1
        self.d2: np.ndarray = d2
        self.s1: np.ndarray = np.asarray(s1, dtype=np.float64)
        self.s2: np.ndarray = np.asarray(s2, dtype=np.float64)
        self.values: np.ndarray = values
        self.T: float = T
        self.seed: int = seed
        self.n_col: int = n_col
        self.threshold: Optional[float] = threshold
        self.raw: Optional[np.ndarray] = raw
        self.log_scale: bool = log_scale
        self.points: Dict[str, Tuple[float, float]] = dict(points or {})
        self.norms: Dict[str, float] = dict(norms or {})

    def __repr__(self) -> str:
        return f"LandscapeGrid(T={self.T:g}, resolution={self.resolution}, threshold={self.threshold})"

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def extents(self) -> Extents:
        return (float(self.s1[0]), float(self.s1[-1])), (float(self.s2[0]), float(self.s2[-1]))

    @property
    def untruncated(self) -> np.ndarray:
        return self.raw if self.raw is not None else self.values

    def cell_of(self, coords: Tuple[float, float]) -> Tuple[int, int]:
        ''' Index of the grid node nearest to (s1, s2). '''
        return int(np.argmin(np.abs(self.s1 - coords[0]))), int(np.argmin(np.abs(self.s2 - coords[1])))

    def to_frame(self) -> pd.DataFrame:
        ss1, ss2 = np.meshgrid(self.s1, self.s2, indexing="ij")
        frame = pd.DataFrame({'s1': ss1.ravel(), 's2': ss2.ravel(), 'Lf': self.values.ravel()})
        if self.raw is not None:
            frame['Lf_raw'] = self.raw.ravel()
        return frame

    def metadata(self) -> Dict[str, Any]:
        return {
            'T': self.T,
            'seed': self.seed,
            'n_col': self.n_col,
            'resolution': list(self.resolution),
            'extents': [list(e) for e in self.extents],
            'threshold': self.threshold,
            'log_scale': self.log_scale,
            'points': {k: list(v) for k, v in self.points.items()},
            'direction_norms': self.norms,
        }

    def export(self, directory: str, stem: str) -> Tuple[str, str]:
        csv_path = os.path.join(directory, stem + ".csv")
        json_path = os.path.join(directory, stem + ".json")
        write_frame_csv(self.to_frame(), csv_path)
        write_json(self.metadata(), json_path)
        return csv_path, json_path


def _row_losses(args: Tuple[Model, DynamicalSystem, np.ndarray, np.ndarray, np.ndarray, float, np.ndarray, np.ndarray]) -> np.ndarray:
    model, system, points, anchor, d1, s1, s2, d2 = args
    row = np.empty(len(s2))
    base = anchor + s1 * d1
    for j, b in enumerate(s2):
        try:
            value = physics_loss(model, base + b * d2, system, points)
        except (NumericalError, FloatingPointError):
            value = np.inf
        row[j] = value if np.isfinite(value) else np.inf
    return row


def evaluate_grid(
    system: DynamicalSystem,
    net: Any,
    theta0: Any,
    d1: np.ndarray,
    d2: np.ndarray,
    extents: Extents,
    resolution: Tuple[int, int] = DEFAULT_RESOLUTION,
    T: Optional[float] = None,
    n_col: int = 1024,
    seed: int = 0,
    workers: int = 1
) -> LandscapeGrid:
    """
    L_f on the grid, with one collocation sample drawn from [0, T] x Omega
    and shared by all cells. Non-finite cells hold +inf.
    """
    model = net if isinstance(net, Model) else FeedForward(net, system.axes, system.outputs)
    if not isinstance(model.spec, NetworkSpec):
        raise TypeError("net must be a Model or NetworkSpec instance")
    n1, n2 = resolution
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("resolution must be at least (1, 1)")
    (a1, b1), (a2, b2) = extents
    if a1 > b1 or a2 > b2:
        raise ConfigurationError("grid extents must be ordered (low, high)")
    horizon = system.with_horizon(T) if T is not None else system
    rng = np.random.default_rng(seed)
    points = sample_collocation(horizon.domain, n_col, rng)
    anchor = _flat(theta0)
    s1 = np.linspace(a1, b1, n1)
    s2 = np.linspace(a2, b2, n2)
    logger.info("landscape of %s at T=%g: %dx%d cells, %d collocation points", system.name, horizon.T, n1, n2, n_col)
    jobs = [(model, horizon, points, anchor, d1, a, s2, d2) for a in s1]
    if workers <= 1:
        rows = [_row_losses(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_row_losses, jobs))
    return LandscapeGrid(anchor, d1, d2, s1, s2, np.vstack(rows), horizon.T, seed, n_col)


def truncate(grid: LandscapeGrid, threshold: float) -> LandscapeGrid:
    ''' Clamp values above `threshold`; the untruncated values stay available as `raw`. '''
    if not threshold > 0:
        raise ConfigurationError("truncation threshold must be positive")
    raw = grid.untruncated
    return LandscapeGrid(grid.anchor, grid.d1, grid.d2, grid.s1, grid.s2, np.minimum(raw, threshold), grid.T,
                         grid.seed, grid.n_col, threshold, raw.copy(), grid.log_scale, grid.points, grid.norms)


def local_min_test(grid: LandscapeGrid, cell: Tuple[int, int]) -> str:
    ''' "strict-local-min" when the cell is below all 8 neighbours, else "saddle-or-slope". '''
    i, j = cell
    n1, n2 = grid.resolution
    if not (0 < i < n1 - 1 and 0 < j < n2 - 1):
        raise DomainError(f"cell {cell} is on the boundary of a {n1}x{n2} grid")
    values = grid.untruncated
    centre = values[i, j]
    block = values[i - 1:i + 2, j - 1:j + 2].copy()
    block[1, 1] = np.inf
    return "strict-local-min" if centre < block.min() else "saddle-or-slope"


def trajectory_landscapes(
    system: DynamicalSystem,
    model: Model,
    theta0: Any,
    theta_mid: Any,
    theta_final: Any,
    horizons: Sequence[float],
    resolution: Tuple[int, int] = DEFAULT_RESOLUTION,
    extents: Optional[Extents] = None,
    n_col: int = 1024,
    seed: int = 0,
    threshold: Optional[float] = None,
    log_scale: bool = False,
    workers: int = 1
) -> List[LandscapeGrid]:
    """
    One grid per horizon on the plane through theta0, theta_mid and
    theta_final, with the projected checkpoints recorded on each grid.
    """
    d1, d2 = build_directions(theta0, theta_mid, theta_final)
    coords = {
        'theta0': (0.0, 0.0),
        'theta_mid': project(theta_mid, theta0, d1, d2),
        'theta_final': project(theta_final, theta0, d1, d2),
    }
    norms = {
        'theta_mid': float(np.linalg.norm(_flat(theta_mid) - _flat(theta0))),
        'theta_final': float(np.linalg.norm(_flat(theta_final) - _flat(theta0))),
    }
    extents = extents or default_extents(coords.values())
    grids = []
    for T in horizons:
        grid = evaluate_grid(system, model, theta0, d1, d2, extents, resolution, T, n_col, seed, workers)
        grid.points = coords
        grid.norms = norms
        grid.log_scale = log_scale
        grids.append(truncate(grid, threshold) if threshold is not None else grid)
    return grids

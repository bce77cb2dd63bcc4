"""
Scoring of trained networks: relative L2 error against a reference, the
phase-space classification of failed runs, and the seeded sweep harness.
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError, UndefinedErrorMetric
from .io import _coerce_float, _coerce_int
from .network import Model
from .oracles import ReferenceSolution, pendulum_energy
from .training import RunTrace, TrainConfig, build_model, train

logger = logging.getLogger(__name__)

CLASSES = ("success", "stable-fp", "unstable-fp")
DEFAULT_THRESHOLD = 0.15
THRESHOLDS = (0.05, 0.15, 0.25)
N_EVAL = 1000
ENERGY_TOLERANCE = 1e-3
SWEEP_COLUMNS = ["T", "y0", "arch", "activation", "alpha", "Nc", "lambda", "init", "seed", "L2", "class", "minLf", "flag"]


def l2_relative_error(prediction: Any, reference: Any) -> float:
    ''' ||prediction - reference||_2 / ||reference||_2 over a shared grid. '''
    p = np.asarray(prediction, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if p.shape != r.shape:
        raise ConfigurationError(f"prediction shape {p.shape} does not match reference shape {r.shape}")
    norm = np.linalg.norm(r)
    if norm == 0:
        raise UndefinedErrorMetric("relative error is undefined for a zero reference")
    return float(np.linalg.norm(p - r) / norm)


class Prediction:
    ''' A network's ODE trajectory y(t) and y_t(t) on an evaluation grid. '''
    def __init__(self, times: Any, y: Any, ydot: Any) -> None:
        self.times: np.ndarray = np.asarray(times, dtype=np.float64)
        self.y: np.ndarray = np.asarray(y, dtype=np.float64)
        self.ydot: np.ndarray = np.asarray(ydot, dtype=np.float64)
        if not (self.times.shape == self.y.shape == self.ydot.shape):
            raise ConfigurationError("times, y and ydot must have the same shape")

    @property
    def final_state(self) -> Tuple[float, float]:
        return float(self.y[-1]), float(self.ydot[-1])

    @staticmethod
    def from_model(model: Model, params: Any, T: float, n: int = N_EVAL) -> 'Prediction':
        times = np.linspace(0.0, T, n)
        (bundle,) = model(params, times.reshape(-1, 1), ("t",))
        return Prediction(times, bundle.value, bundle["t"])


class Outcome:
    '''
    Score of one run. `label` is "success" when the L2 error is below the
    threshold; otherwise it is the fixed point the run was attracted by.
    '''
    def __init__(
        self,
        l2: float,
        label: str,
        failure_label: str,
        threshold: float = DEFAULT_THRESHOLD,
        min_l_f: float = float("nan"),
        final_state: Optional[Tuple[float, float]] = None,
        borderline: bool = False,
        diverged: bool = False
    ) -> None:
        if label not in CLASSES:
            raise ConfigurationError(f"class must be one of {CLASSES}, got {label}")
        if failure_label not in CLASSES[1:]:
            raise ConfigurationError(f"failure class must be one of {CLASSES[1:]}, got {failure_label}")
        self.l2: float = float(l2)
        self.label: str = label
        self.failure_label: str = failure_label
        self.threshold: float = float(threshold)
        self.min_l_f: float = float(min_l_f)
        self.final_state: Optional[Tuple[float, float]] = final_state
        self.borderline: bool = borderline
        self.diverged: bool = diverged

    def __repr__(self) -> str:
        return f"Outcome({self.label}, L2={self.l2:.4f}, min L_f={self.min_l_f:.3e})"

    @property
    def success(self) -> bool:
        return self.label == "success"

    @property
    def flag(self) -> str:
        flags = [name for name, on in (("borderline", self.borderline), ("diverged", self.diverged)) if on]
        return "|".join(flags)

    def label_at(self, threshold: float) -> str:
        return "success" if self.l2 < threshold else self.failure_label

    def at_threshold(self, threshold: float) -> 'Outcome':
        return Outcome(self.l2, self.label_at(threshold), self.failure_label, threshold, self.min_l_f,
                       self.final_state, self.borderline, self.diverged)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'l2': self.l2,
            'label': self.label,
            'failure_label': self.failure_label,
            'threshold': self.threshold,
            'min_l_f': self.min_l_f,
            'final_state': list(self.final_state) if self.final_state is not None else None,
            'borderline': self.borderline,
            'diverged': self.diverged
        }

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'Outcome':
        state = data.get('final_state')
        return Outcome(data['l2'], data['label'], data['failure_label'], data.get('threshold', DEFAULT_THRESHOLD),
                       data.get('min_l_f', float("nan")), tuple(state) if state is not None else None,
                       data.get('borderline', False), data.get('diverged', False))


def classify_energy(final_state: Tuple[float, float], orbit_energy: float, g: float = 9.81,
                    length: float = 1.0) -> Tuple[str, bool]:
    """
    Inside the true orbit (lower energy) means the run fell towards the
    stable fixed point; outside means the unstable one. Within the tolerance
    the sign decides and the result is flagged borderline.
    """
    energy = pendulum_energy(final_state[0], final_state[1], g, length)
    tol = ENERGY_TOLERANCE * abs(orbit_energy)
    if energy < orbit_energy - tol:
        return "stable-fp", False
    if energy > orbit_energy + tol:
        return "unstable-fp", False
    label = "stable-fp" if energy <= orbit_energy else "unstable-fp"
    logger.warning("final energy %.6g within tolerance of orbit energy %.6g; classified %s (borderline)",
                   energy, orbit_energy, label)
    return label, True


def classify_pendulum_outcome(
    prediction: Prediction,
    reference: ReferenceSolution,
    threshold: float = DEFAULT_THRESHOLD,
    min_l_f: float = float("nan"),
    diverged: bool = False
) -> Outcome:
    g = reference.metadata.get('g', 9.81)
    length = reference.metadata.get('l', 1.0)
    l2 = l2_relative_error(prediction.y, reference.at(prediction.times, "y"))
    y0, ydot0 = reference.values[0]
    failure_label, borderline = classify_energy(prediction.final_state, pendulum_energy(y0, ydot0, g, length), g, length)
    label = "success" if l2 < threshold else failure_label
    return Outcome(l2, label, failure_label, threshold, min_l_f, prediction.final_state,
                   borderline and label != "success", diverged)


def classify_toy_outcome(
    prediction: Prediction,
    reference: ReferenceSolution,
    threshold: float = DEFAULT_THRESHOLD,
    min_l_f: float = float("nan"),
    diverged: bool = False
) -> Outcome:
    ''' Toy failures are attributed to the unstable fixed point at 0. '''
    l2 = l2_relative_error(prediction.y, reference.at(prediction.times, "y"))
    label = "success" if l2 < threshold else "unstable-fp"
    return Outcome(l2, label, "unstable-fp", threshold, min_l_f, prediction.final_state, False, diverged)


def evaluate_run(config: TrainConfig, trace: RunTrace, model: Optional[Model] = None,
                 threshold: float = DEFAULT_THRESHOLD) -> Outcome:
    ''' Score the last finite parameters of a run against the system's reference solution. '''
    system = config.system
    if system.name not in ("pendulum", "toy"):
        raise ConfigurationError(f"run outcomes are defined for the pendulum and toy systems, not {system.name}")
    model = model or build_model(config)
    prediction = Prediction.from_model(model, trace.final_params, system.T)
    if system.name == "pendulum":
        return classify_pendulum_outcome(prediction, system.reference(), threshold, trace.min_l_f, trace.diverged)
    return classify_toy_outcome(prediction, system.reference(), threshold, trace.min_l_f, trace.diverged)


def field_l2_error(model: Model, params: Any, reference: ReferenceSolution,
                   t_range: Optional[Tuple[float, float]] = None) -> float:
    ''' L2 error of a space-time prediction on the reference grid, optionally restricted in time. '''
    if reference.space is None:
        raise ConfigurationError("field error needs a spatial reference solution")
    mask = np.ones(reference.times.size, dtype=bool)
    if t_range is not None:
        mask = (reference.times >= t_range[0]) & (reference.times <= t_range[1])
    tt, xx = np.meshgrid(reference.times[mask], reference.space, indexing="ij")
    pred = model.predict(params, np.column_stack([tt.ravel(), xx.ravel()]))[:, 0]
    return l2_relative_error(pred, reference.values[mask].ravel())


# ------------------- Sweeps -------------------
AXIS_FIELDS = {
    "T": ("system", "T"),
    "y0": ("system", "y0"),
    "y0_deg": ("system", "y0_deg"),
    "arch": ("network", "arch"),
    "activation": ("network", "activation"),
    "init": ("network", "initializer"),
    "alpha": (None, "alpha"),
    "Nc": (None, "n_f"),
    "lambda": (None, "lambda"),
}


def _apply_axis(config: Dict[str, Any], axis: str, value: Any) -> None:
    section, key = AXIS_FIELDS[axis]
    if section is None:
        config[key] = value
        return
    target = config.setdefault(section, {})
    if axis == "arch":
        target.pop('hidden_layers', None)
    if axis.startswith("y0"):
        target.pop('y0', None)
        target.pop('y0_deg', None)
    target[key] = value


class SweepGrid:
    '''
    Cartesian grid of configuration axes around a base training
    configuration, with `seeds` independent runs per cell.
    '''
    def __init__(self, base: Dict[str, Any], axes: Dict[str, List[Any]], seeds: int = 1,
                 base_seed: int = 0, threshold: float = DEFAULT_THRESHOLD) -> None:
        if not isinstance(base, dict):
            raise TypeError("base must be a dict")
        if not isinstance(axes, dict):
            raise TypeError("axes must be a dict")
        for axis, values in axes.items():
            if axis not in AXIS_FIELDS:
                raise ConfigurationError(f"unknown sweep axis '{axis}' (expected one of {sorted(AXIS_FIELDS)})")
            if not isinstance(values, list) or not values:
                raise ConfigurationError(f"sweep axis '{axis}' needs a non-empty list of values")
        if seeds < 1:
            raise ConfigurationError("seeds must be >= 1")
        self.base: Dict[str, Any] = base
        self.axes: Dict[str, List[Any]] = axes
        self.seeds: int = seeds
        self.base_seed: int = base_seed
        self.threshold: float = threshold

    def __repr__(self) -> str:
        return f"SweepGrid({len(self.cells())} cells x {self.seeds} seeds)"

    def cells(self) -> List[Dict[str, Any]]:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*(self.axes[n] for n in names))]

    def config_for(self, cell: Dict[str, Any], seed: int) -> Dict[str, Any]:
        config = {k: (dict(v) if isinstance(v, dict) else v) for k, v in self.base.items()}
        for axis, value in cell.items():
            _apply_axis(config, axis, value)
        config['seed'] = seed
        config.setdefault('network', {})['seed'] = seed
        return config

    def jobs(self) -> List[Dict[str, Any]]:
        return [self.config_for(cell, self.base_seed + s) for cell in self.cells() for s in range(self.seeds)]

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'SweepGrid':
        if 'base' not in data:
            raise ConfigurationError("sweep needs a 'base' training config")
        return SweepGrid(
            base=data['base'],
            axes=data.get('axes', {}),
            seeds=_coerce_int(data.get('seeds', 1), 'seeds'),
            base_seed=_coerce_int(data.get('base_seed', 0), 'base_seed'),
            threshold=_coerce_float(data.get('threshold', DEFAULT_THRESHOLD), 'threshold')
        )

    def to_dict(self) -> Dict[str, Any]:
        return {'base': self.base, 'axes': self.axes, 'seeds': self.seeds,
                'base_seed': self.base_seed, 'threshold': self.threshold}


def _row(config: TrainConfig, outcome: Outcome) -> Dict[str, Any]:
    system = config.system
    # pendulum angles are reported in degrees
    y0 = round(system.y0_deg, 10) if system.name == "pendulum" else getattr(system, "y0", float("nan"))
    return {
        'T': system.T,
        'y0': y0,
        'arch': config.network.arch,
        'activation': config.network.activation,
        'alpha': config.alpha,
        'Nc': config.n_f,
        'lambda': config.lam,
        'init': config.network.initializer,
        'seed': config.seed,
        'L2': outcome.l2,
        'class': outcome.label,
        'minLf': outcome.min_l_f,
        'flag': outcome.flag,
    }


def run_job(job: Tuple[Dict[str, Any], float, Optional[int]]) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    ''' Train and score one configuration; returns (CSV row, outcome dict). Module-level so it pickles. '''
    data, threshold, max_epochs = job
    config = TrainConfig.from_dict(data)
    if max_epochs is not None and config.epochs > max_epochs:
        config = config.with_epochs(max_epochs)
    trace = train(config)
    outcome = evaluate_run(config, trace, threshold=threshold)
    logger.info("%s seed=%d T=%g: %s", config.system.name, config.seed, config.system.T, outcome)
    return _row(config, outcome), outcome.to_dict()


def run_jobs(jobs: Sequence[Dict[str, Any]], threshold: float = DEFAULT_THRESHOLD, workers: int = 1,
             max_epochs: Optional[int] = None) -> List[Tuple[Dict[str, Any], Dict[str, Any]]]:
    ''' Results come back in submission order whatever the worker count. '''
    payload = [(job, threshold, max_epochs) for job in jobs]
    if workers <= 1:
        return [run_job(p) for p in payload]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(run_job, payload))


class SweepResult:
    ''' Rows and outcomes of a sweep, in grid order. '''
    def __init__(self, rows: List[Dict[str, Any]], outcomes: List[Outcome], system: str,
                 threshold: float = DEFAULT_THRESHOLD) -> None:
        self.rows: List[Dict[str, Any]] = rows
        self.outcomes: List[Outcome] = outcomes
        self.system: str = system
        self.threshold: float = threshold

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=SWEEP_COLUMNS)

    def _cell_keys(self) -> List[str]:
        return list(SWEEP_COLUMNS[:8])

    def table(self, threshold: Optional[float] = None) -> pd.DataFrame:
        ''' Per-cell class percentages plus min L_f statistics. '''
        threshold = self.threshold if threshold is None else threshold
        frame = self.to_frame()
        frame['class'] = [o.label_at(threshold) for o in self.outcomes]
        frame['flagged'] = [bool(o.flag) for o in self.outcomes]
        keys = self._cell_keys()
        out = []
        for cell, group in frame.groupby(keys, sort=False, dropna=False):
            n = len(group)
            counts = group['class'].value_counts()
            row = dict(zip(keys, cell))
            row.update({
                'runs': n,
                'success': 100.0 * counts.get('success', 0) / n,
                'stable-fp': 100.0 * counts.get('stable-fp', 0) / n,
                'unstable-fp': 100.0 * counts.get('unstable-fp', 0) / n,
                'flagged': int(group['flagged'].sum()),
                'minLf_median': float(group['minLf'].median()),
                'minLf_min': float(group['minLf'].min()),
            })
            out.append(row)
        return pd.DataFrame(out)

    def success_rates(self, thresholds: Sequence[float] = THRESHOLDS) -> pd.DataFrame:
        ''' Success percentage per cell at several thresholds from the same runs. '''
        tables = [self.table(t).set_index(self._cell_keys())['success'].rename(f"success@{t:g}") for t in thresholds]
        return pd.concat(tables, axis=1).reset_index()

    def markdown(self, threshold: Optional[float] = None) -> str:
        """
        Pendulum cells as "success / stable-fp / unstable-fp" percentages,
        toy cells as the success percentage.
        """
        table = self.table(threshold)
        varying = [k for k in self._cell_keys() if table[k].nunique() > 1] or ["T", "y0"]
        header = varying + ["result", "runs"]
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        for _, row in table.iterrows():
            if self.system == "pendulum":
                result = f"{row['success']:.0f} / {row['stable-fp']:.0f} / {row['unstable-fp']:.0f}"
            else:
                result = f"{row['success']:.0f}"
            cells = [f"{row[k]:g}" if isinstance(row[k], float) else str(row[k]) for k in varying]
            lines.append("| " + " | ".join(cells + [result, str(row['runs'])]) + " |")
        return "\n".join(lines) + "\n"

    def display_table(self, threshold: Optional[float] = None) -> None:
        print(f"\nSuccess rates ({self.system}, threshold {threshold or self.threshold:g}):")
        print(self.markdown(threshold))


def sweep(grid: SweepGrid, workers: int = 1, max_epochs: Optional[int] = None) -> SweepResult:
    jobs = grid.jobs()
    system = TrainConfig.from_dict(jobs[0]).system.name
    logger.info("sweep over %d cells x %d seeds on %s with %d worker(s)",
                len(grid.cells()), grid.seeds, system, workers)
    results = run_jobs(jobs, grid.threshold, workers, max_epochs)
    rows = [r for r, _ in results]
    outcomes = [Outcome.from_dict(o) for _, o in results]
    return SweepResult(rows, outcomes, system, grid.threshold)


# ------------------- Economical minima -------------------
APPROACHES = ("data-guided", "physics-driven")
ECONOMICAL_DEFAULTS = {
    "toy": {'system': {'name': 'toy', 'T': 10.0}, 'network': {'arch': '4x50', 'activation': 'tanh'},
            'hard_ic': True, 'n_data': 10, 'epochs': 50000, 'n_f': 64},
    "pendulum": {'system': {'name': 'pendulum', 'T': 10.0}, 'network': {'arch': '8x100', 'activation': 'tanh'},
                 'hard_ic': False, 'n_data': 100, 'epochs': 50000, 'n_f': 64},
}


class EconomicalMinimaReport:
    ''' Minimal physics loss of data-guided and physics-driven runs per initial value. '''
    def __init__(self, frame: pd.DataFrame, system: str) -> None:
        self.frame: pd.DataFrame = frame
        self.system: str = system

    def __repr__(self) -> str:
        return f"EconomicalMinimaReport({self.system}, {len(self.frame)} runs)"

    def medians(self) -> pd.DataFrame:
        ''' Median min L_f, one row per y0 and one column per approach. '''
        return self.frame.pivot_table(index='y0', columns='approach', values='minLf', aggfunc='median')

    def display_summary(self) -> None:
        print(f"\nMedian minimal physics loss ({self.system}):")
        print(self.medians().to_string(float_format=lambda v: f"{v:.3e}"))


def economical_minima_report(
    system: str,
    y0s: Sequence[float],
    approaches: Sequence[str] = APPROACHES,
    seeds: Optional[int] = None,
    overrides: Optional[Dict[str, Any]] = None,
    workers: int = 1,
    max_epochs: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD
) -> EconomicalMinimaReport:
    """
    For every y0 and approach, train `seeds` runs and record min L_f over all
    epochs together with the L2 error and class. Pendulum y0 values are in
    degrees.
    """
    if system not in ECONOMICAL_DEFAULTS:
        raise ConfigurationError(f"economical minima are defined for {sorted(ECONOMICAL_DEFAULTS)}")
    for approach in approaches:
        if approach not in APPROACHES:
            raise ConfigurationError(f"unknown approach '{approach}' (expected one of {APPROACHES})")
    seeds = seeds if seeds is not None else (5 if system == "toy" else 10)
    base = {k: (dict(v) if isinstance(v, dict) else v) for k, v in ECONOMICAL_DEFAULTS[system].items()}
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key].update(value)
        else:
            base[key] = value
    jobs, keys = [], []
    axis = "y0_deg" if system == "pendulum" else "y0"
    for y0 in y0s:
        for approach in approaches:
            for s in range(seeds):
                config = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
                _apply_axis(config, axis, y0)
                config['schedule'] = approach
                config['seed'] = s
                config['network']['seed'] = s
                jobs.append(config)
                keys.append((y0, approach, s))
    results = run_jobs(jobs, threshold, workers, max_epochs)
    rows = []
    for (y0, approach, s), (row, _) in zip(keys, results):
        rows.append({'y0': y0, 'approach': approach, 'seed': s, 'minLf': row['minLf'],
                     'L2': row['L2'], 'class': row['class'], 'flag': row['flag']})
    return EconomicalMinimaReport(pd.DataFrame(rows), system)

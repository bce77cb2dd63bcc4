"""
Reference solutions that do not go through a network: fixed-step RK4 for the
ODEs, the closed-form toy solution, a method-of-lines Allen-Cahn solver, and
loaders for labeled field snapshots.
"""

import logging
import os
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigurationError, DivergenceError, DomainError, ParseError
from .io import write_frame_csv

logger = logging.getLogger(__name__)

GRAVITY = 9.81
LENGTH = 1.0
AC_GAMMA1 = 1e-4
AC_GAMMA2 = 5.0
SNAPSHOT_COLUMNS = ["t", "x", "y", "u", "v", "p"]


class ReferenceSolution:
    '''
    Solution values on a time grid, optionally over a spatial grid. ODE
    solutions hold `values` of shape (n_t, n_state); PDE solutions hold
    (n_t, n_x) for a single field.
    '''
    def __init__(
        self,
        times: Any,
        values: Any,
        names: Sequence[str],
        space: Optional[Any] = None,
        metadata: Optional[Dict[str, Any]] = None
    ) -> None:
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ConfigurationError("time grid must be one-dimensional and strictly increasing")
        if space is not None:
            space = np.asarray(space, dtype=np.float64)
            if space.ndim != 1 or np.any(np.diff(space) <= 0):
                raise ConfigurationError("space grid must be one-dimensional and strictly increasing")
            expected = (times.size, space.size)
        else:
            expected = (times.size, len(names))
        if values.shape != expected:
            raise ConfigurationError(f"values of shape {values.shape} do not match grid shape {expected}")
        self.times: np.ndarray = times
        self.values: np.ndarray = values
        self.names: Tuple[str, ...] = tuple(names)
        self.space: Optional[np.ndarray] = space
        self.metadata: Dict[str, Any] = dict(metadata or {})

    def __repr__(self) -> str:
        grid = f"{self.times.size} times" if self.space is None else f"{self.times.size}x{self.space.size} nodes"
        return f"ReferenceSolution({self.metadata.get('method', '?')}, {grid})"

    @property
    def final_state(self) -> np.ndarray:
        return self.values[-1]

    def column(self, name: str) -> np.ndarray:
        if self.space is not None:
            raise ConfigurationError("column access is only defined for ODE solutions")
        return self.values[:, self.names.index(name)]

    def at(self, t: Any, name: Optional[str] = None) -> np.ndarray:
        ''' Piecewise-linear interpolation in time of one ODE state component. '''
        if self.space is not None:
            raise ConfigurationError("time interpolation is only defined for ODE solutions")
        return np.interp(np.asarray(t, dtype=np.float64), self.times, self.column(name or self.names[0]))

    def to_frame(self) -> pd.DataFrame:
        if self.space is None:
            frame = pd.DataFrame(self.values, columns=list(self.names))
            frame.insert(0, "t", self.times)
            return frame
        tt, xx = np.meshgrid(self.times, self.space, indexing="ij")
        return pd.DataFrame({"t": tt.ravel(), "x": xx.ravel(), self.names[0]: self.values.ravel()})

    def export_csv(self, path: str) -> None:
        write_frame_csv(self.to_frame(), path)


# ------------------- ODE integration -------------------
def _time_grid(T: float, dt: float) -> np.ndarray:
    steps = T / dt
    n_full = int(round(steps))
    if abs(steps - n_full) > 1e-9 * max(1.0, steps):
        n_full = int(np.floor(steps))
    times = np.arange(n_full + 1) * dt
    if T - times[-1] > 1e-12 * max(1.0, T):
        times = np.append(times, T)
    else:
        times[-1] = T
    return times


def rk4_integrate(
    rhs: Callable[[float, np.ndarray], Any],
    y0: Any,
    T: float,
    dt: float,
    names: Optional[Sequence[str]] = None
) -> ReferenceSolution:
    """
    Classical fourth-order Runge-Kutta with fixed step `dt`; the last step is
    shortened so the grid ends exactly at T. `rhs(t, y)` returns dy/dt.
    """
    if dt <= 0 or T <= 0:
        raise ConfigurationError("T and dt must be positive")
    times = _time_grid(T, dt)
    state = np.atleast_1d(np.asarray(y0, dtype=np.float64)).copy()
    out = np.empty((times.size, state.size))
    out[0] = state
    for i in range(times.size - 1):
        t = times[i]
        h = times[i + 1] - t
        k1 = np.asarray(rhs(t, state))
        k2 = np.asarray(rhs(t + h / 2, state + h / 2 * k1))
        k3 = np.asarray(rhs(t + h / 2, state + h / 2 * k2))
        k4 = np.asarray(rhs(t + h, state + h * k3))
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(state)):
            raise DivergenceError("non-finite state during RK4 integration", i + 1)
        out[i + 1] = state
    names = tuple(names) if names is not None else tuple(f"y{k}" for k in range(state.size))
    return ReferenceSolution(times, out, names, metadata={'method': 'rk4', 'dt': dt, 'T': T})


def pendulum_rhs(g: float = GRAVITY, length: float = LENGTH) -> Callable[[float, np.ndarray], np.ndarray]:
    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        return np.array([state[1], -(g / length) * np.sin(state[0])])
    return rhs


def pendulum_reference(y0: float, T: float, dt: float = 1e-3, g: float = GRAVITY,
                       length: float = LENGTH) -> ReferenceSolution:
    ''' Undamped pendulum released at rest from angle `y0` (radians). '''
    ref = rk4_integrate(pendulum_rhs(g, length), [y0, 0.0], T, dt, names=("y", "y_t"))
    ref.metadata.update({'system': 'pendulum', 'y0': y0, 'g': g, 'l': length})
    return ref


def pendulum_energy(y: Any, ydot: Any, g: float = GRAVITY, length: float = LENGTH) -> Any:
    energy = 0.5 * np.square(ydot) - (g / length) * np.cos(y)
    return float(energy) if np.ndim(energy) == 0 else energy


def oscillation_period(reference: ReferenceSolution) -> float:
    """
    Time of the first return to y_t = 0 with y > 0 after leaving the start,
    located by linear interpolation between grid nodes.
    """
    t = reference.times
    y = reference.column("y")
    ydot = reference.column("y_t")
    for i in range(1, t.size - 1):
        if ydot[i] > 0 >= ydot[i + 1] and y[i] > 0:
            frac = ydot[i] / (ydot[i] - ydot[i + 1])
            return float(t[i] + frac * (t[i + 1] - t[i]))
    raise DomainError("trajectory does not complete an oscillation within the integration window")


def toy_analytic(y0: float, t: Any) -> Any:
    """
    Closed-form solution of y_t = y (1 - y^2) for |y0| <= 1:
    sign(y0) (1 + (1/y0^2 - 1) e^{-2t})^{-1/2}, and 0 for y0 = 0.
    """
    if abs(y0) > 1:
        raise DomainError(f"closed form is defined for |y0| <= 1, got {y0}")
    t = np.asarray(t, dtype=np.float64)
    if y0 == 0:
        out = np.zeros_like(t)
    else:
        out = np.sign(y0) / np.sqrt(1.0 + (1.0 / y0 ** 2 - 1.0) * np.exp(-2.0 * t))
    return float(out) if out.ndim == 0 else out


def toy_reference(y0: float, T: float, n: int = 1000) -> ReferenceSolution:
    times = np.linspace(0.0, T, n)
    ref = ReferenceSolution(times, toy_analytic(y0, times).reshape(-1, 1), ("y",),
                            metadata={'method': 'analytic', 'system': 'toy', 'y0': y0, 'T': T})
    return ref


# ------------------- Allen-Cahn -------------------
def allen_cahn_initial(x: Any) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * x * np.cos(np.pi * x)


def allen_cahn_reference(
    nx: int = 256,
    dt: float = 1e-3,
    T: float = 1.0,
    gamma1: float = AC_GAMMA1,
    gamma2: float = AC_GAMMA2
) -> ReferenceSolution:
    """
    Method of lines on the periodic grid x_j = -1 + 2j/nx: second-order
    central differences in space, RK4 in time. The node x = 1 is appended as
    a copy of x = -1.
    """
    if nx < 128:
        raise ConfigurationError(f"nx must be at least 128, got {nx}")
    dx = 2.0 / nx
    bound = 0.5 * dx * dx / gamma1
    if dt > bound:
        raise ConfigurationError(f"dt={dt} violates the explicit stability bound {bound:.3g} for nx={nx}")
    x = -1.0 + dx * np.arange(nx)

    def rhs(t: float, u: np.ndarray) -> np.ndarray:
        lap = (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / (dx * dx)
        return gamma1 * lap + gamma2 * (u - u ** 3)

    logger.info("Allen-Cahn reference: nx=%d dt=%g T=%g", nx, dt, T)
    sol = rk4_integrate(rhs, allen_cahn_initial(x), T, dt)
    values = np.concatenate([sol.values, sol.values[:, :1]], axis=1)
    space = np.append(x, 1.0)
    return ReferenceSolution(sol.times, values, ("u",), space=space,
                             metadata={'method': 'mol-fd2-rk4', 'system': 'allen-cahn', 'nx': nx,
                                       'dt': dt, 'T': T, 'gamma1': gamma1, 'gamma2': gamma2})


def self_convergence(coarse: ReferenceSolution, fine: ReferenceSolution, t: Optional[float] = None) -> float:
    """
    Max-norm difference of two Allen-Cahn solutions on the coarse grid nodes,
    at time `t` (default: the final time). The fine grid must refine the
    coarse one by an integer factor.
    """
    if coarse.space is None or fine.space is None:
        raise ConfigurationError("self-convergence compares spatial solutions")
    factor = (fine.space.size - 1) // (coarse.space.size - 1)
    if factor < 1 or (coarse.space.size - 1) * factor != fine.space.size - 1:
        raise ConfigurationError("fine grid does not refine the coarse grid by an integer factor")
    t = coarse.times[-1] if t is None else t
    i = int(np.argmin(np.abs(coarse.times - t)))
    j = int(np.argmin(np.abs(fine.times - t)))
    if abs(coarse.times[i] - fine.times[j]) > 1e-12:
        raise ConfigurationError("solutions do not share the requested time node")
    return float(np.max(np.abs(coarse.values[i] - fine.values[j, ::factor])))


# ------------------- Labeled data -------------------
class LabeledPoints:
    '''
    Input points with target values. Each column names an output and
    optionally a derivative of it, e.g. "y", "y_t" or "u".
    '''
    def __init__(self, points: Any, values: Any, columns: Sequence[str]) -> None:
        points = np.asarray(points, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        columns = list(columns)
        if values.shape != (points.shape[0], len(columns)):
            raise ConfigurationError(f"labels of shape {values.shape} do not match {points.shape[0]} points "
                                     f"and {len(columns)} columns")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("labels must be finite")
        self.points: np.ndarray = points
        self.values: np.ndarray = values
        self.columns: List[str] = columns

    def __len__(self) -> int:
        return self.points.shape[0]

    def __repr__(self) -> str:
        return f"LabeledPoints({len(self)} points, columns={self.columns})"

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]


def load_field_snapshots(path: str) -> LabeledPoints:
    """
    Read a `t,x,y,u,v,p` CSV into labeled points (inputs t, x, y; labels
    u, v, p). Errors name the offending line of the file.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path}: missing header", 1) from None
    except pd.errors.ParserError as e:
        line = None
        words = str(e).replace(",", " ").split()
        if "line" in words:
            try:
                line = int(words[words.index("line") + 1])
            except (IndexError, ValueError):
                pass
        raise ParseError(f"{path}: {e}", line) from None
    header = [c.strip() for c in frame.columns]
    if header != SNAPSHOT_COLUMNS:
        raise ParseError(f"{path}: expected header {','.join(SNAPSHOT_COLUMNS)}, got {','.join(header)}", 1)
    # blank lines are read as empty rows so that row i stays line i + 2
    frame = frame.fillna("")
    lines = np.arange(len(frame)) + 2
    cells = np.char.strip(frame.to_numpy(dtype=str).reshape(len(frame), len(frame.columns)))
    blank = (cells == "").all(axis=1)
    frame, lines = frame[~blank], lines[~blank]
    data = np.column_stack([
        pd.to_numeric(frame[c].astype(str).str.strip(), errors="coerce").to_numpy(dtype=np.float64)
        for c in frame.columns
    ]).reshape(-1, len(SNAPSHOT_COLUMNS))
    bad = ~np.isfinite(data).all(axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(f"{path}: malformed record {','.join(frame.iloc[row].tolist())!r}", int(lines[row]))
    return LabeledPoints(data[:, :3].reshape(-1, 3), data[:, 3:].reshape(-1, 3), ["u", "v", "p"])


def write_field_snapshots(dataset: LabeledPoints, path: str) -> None:
    if dataset.points.shape[1] != 3 or dataset.columns != ["u", "v", "p"]:
        raise ConfigurationError("field snapshots need (t, x, y) points with u, v, p labels")
    frame = pd.DataFrame(np.hstack([dataset.points, dataset.values]), columns=SNAPSHOT_COLUMNS)
    write_frame_csv(frame, path)

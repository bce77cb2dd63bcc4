import logging
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..autodiff import DerivativeBundle
from ..errors import ConfigurationError
from ..oracles import LabeledPoints, ReferenceSolution

logger = logging.getLogger(__name__)

STABILITIES = ("stable", "asymptotically-stable", "unstable")
BOUNDARY_KINDS = ("none", "periodic", "dirichlet", "neumann")


class FixedPoint:
    '''
    A state where the governing operator vanishes. `value` is one constant per
    output, or a callable of the input points for piecewise-constant fields.
    '''
    def __init__(self, name: str, value: Union[float, Sequence[float], Callable[[np.ndarray], Any]],
                 stability: str) -> None:
        if not isinstance(name, str):
            raise TypeError("name must be a string")
        if stability not in STABILITIES:
            raise ConfigurationError(f"stability must be one of {STABILITIES}")
        self.name: str = name
        self.stability: str = stability
        if callable(value):
            self.field: Optional[Callable[[np.ndarray], Any]] = value
            self.values: Optional[Tuple[float, ...]] = None
        else:
            self.field = None
            self.values = tuple(float(v) for v in np.atleast_1d(value))

    def __repr__(self) -> str:
        shown = self.values if self.values is not None else "piecewise"
        return f"FixedPoint({self.name}, {shown}, {self.stability})"

    @property
    def is_constant(self) -> bool:
        return self.values is not None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        ''' Field values at `points`, shape (n, outputs). '''
        points = np.asarray(points, dtype=np.float64)
        if self.values is not None:
            return np.tile(np.asarray(self.values), (points.shape[0], 1))
        return np.asarray(self.field(points), dtype=np.float64).reshape(points.shape[0], -1)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'value': list(self.values) if self.values is not None else 'piecewise',
                'stability': self.stability}


class Domain:
    ''' Axis-aligned box [0, T] x Omega. '''
    def __init__(self, axes: Sequence[str], bounds: Sequence[Tuple[float, float]]) -> None:
        if len(axes) != len(bounds):
            raise ConfigurationError("one (low, high) pair per axis is required")
        for name, (low, high) in zip(axes, bounds):
            if not high > low:
                raise ConfigurationError(f"bounds of axis '{name}' must be well ordered, got ({low}, {high})")
        self.axes: Tuple[str, ...] = tuple(axes)
        self.low: np.ndarray = np.array([b[0] for b in bounds], dtype=np.float64)
        self.high: np.ndarray = np.array([b[1] for b in bounds], dtype=np.float64)

    def __repr__(self) -> str:
        return "Domain(" + ", ".join(f"{a}:[{lo:g}, {hi:g}]" for a, lo, hi in zip(self.axes, self.low, self.high)) + ")"

    @property
    def width(self) -> int:
        return len(self.axes)

    def contains(self, points: np.ndarray) -> bool:
        points = np.asarray(points, dtype=np.float64)
        return bool(np.all((points >= self.low) & (points <= self.high)))


class PeriodicPairs:
    ''' Points on opposite boundaries at matching times whose listed columns must agree. '''
    def __init__(self, left: Any, right: Any, columns: Sequence[str]) -> None:
        left = np.asarray(left, dtype=np.float64)
        right = np.asarray(right, dtype=np.float64)
        if left.shape != right.shape:
            raise ConfigurationError("paired boundary samples must have the same shape")
        self.left: np.ndarray = left
        self.right: np.ndarray = right
        self.columns: List[str] = list(columns)

    def __len__(self) -> int:
        return self.left.shape[0]


class ConstraintSample:
    ''' Initial and boundary data entering L_u: labeled points plus periodic pairs. '''
    def __init__(self, labeled: Optional[List[LabeledPoints]] = None,
                 periodic: Optional[List[PeriodicPairs]] = None) -> None:
        self.labeled: List[LabeledPoints] = list(labeled or [])
        self.periodic: List[PeriodicPairs] = list(periodic or [])

    def __repr__(self) -> str:
        return f"ConstraintSample({len(self.labeled)} labeled sets, {len(self.periodic)} periodic pairs)"

    @property
    def empty(self) -> bool:
        return not self.labeled and not self.periodic


class DynamicalSystem:
    """
    Base class for the governing equations of one dynamical system: residual
    operator(s), domain, initial and boundary data, and the hand-registered
    fixed points. Subclasses are immutable once constructed.
    """
    name: str = ""
    axes: Tuple[str, ...] = ("t",)
    outputs: Tuple[str, ...] = ("y",)
    residual_request: Tuple[str, ...] = ()
    boundaries: Dict[str, str] = {}

    def __init__(self, T: float) -> None:
        if not isinstance(T, (int, float)) or isinstance(T, bool):
            raise TypeError("T must be a number")
        if not T > 0:
            raise ConfigurationError(f"time horizon T must be positive, got {T}")
        self.T: float = float(T)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"

    @property
    def input_width(self) -> int:
        return len(self.axes)

    @property
    def spatial_bounds(self) -> List[Tuple[float, float]]:
        return []

    @property
    def domain(self) -> Domain:
        return Domain(self.axes, [(0.0, self.T)] + list(self.spatial_bounds))

    @property
    def arity(self) -> int:
        ''' Number of coupled residual equations. '''
        return 1

    def residuals(self, bundles: List[DerivativeBundle]) -> List[Any]:
        """
        Placeholder. Must be implemented by subclass systems: one residual
        array per equation from one bundle per output.
        """
        raise NotImplementedError("Subclasses must implement this method!")

    def fixed_points(self) -> List[FixedPoint]:
        return []

    def sample_constraints(self, rng: np.random.Generator, n_ic: int = 1, n_bc: int = 1) -> ConstraintSample:
        ''' Initial/boundary data for the soft constraint loss L_u. '''
        return ConstraintSample()

    def reference(self, **options: Any) -> ReferenceSolution:
        raise NotImplementedError(f"no reference solution for {self.name}")

    def labeled_reference(self, n: int) -> LabeledPoints:
        ''' `n` equidistant labeled samples of the reference solution over [0, T]. '''
        raise NotImplementedError(f"no labeled reference for {self.name}")

    def with_horizon(self, T: float) -> 'DynamicalSystem':
        data = self.to_dict()
        data['T'] = T
        return type(self).from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'T': self.T}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DynamicalSystem':
        raise NotImplementedError("Subclasses must implement this method!")

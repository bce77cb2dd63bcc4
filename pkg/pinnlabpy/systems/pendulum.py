import math
from typing import Any, Dict, List

import numpy as np

from .base import ConstraintSample, DynamicalSystem, FixedPoint
from ..autodiff import DerivativeBundle, sin
from ..errors import ConfigurationError
from ..io import _coerce_float
from ..oracles import GRAVITY, LENGTH, LabeledPoints, ReferenceSolution, pendulum_energy, pendulum_reference


def pendulum_residual(bundle: DerivativeBundle, g: float = GRAVITY, length: float = LENGTH) -> Any:
    ''' f = y_tt + (g/l) sin(y) '''
    return bundle["tt"] + (g / length) * sin(bundle.value)


class PendulumSystem(DynamicalSystem):
    '''
    Undamped pendulum released at rest from angle y0 (radians). The angle is
    not wrapped, so rotations show up as |y| > pi.
    '''
    name = "pendulum"
    axes = ("t",)
    outputs = ("y",)
    residual_request = ("tt",)
    boundaries = {"t=0": "dirichlet"}

    def __init__(self, T: float = 7.5, y0: float = math.radians(25.0), g: float = GRAVITY,
                 length: float = LENGTH) -> None:
        super().__init__(T)
        if not isinstance(y0, (int, float)) or isinstance(y0, bool):
            raise TypeError("y0 must be a number")
        if not (g > 0 and length > 0):
            raise ConfigurationError("g and length must be positive")
        self.y0: float = float(y0)
        self.g: float = float(g)
        self.length: float = float(length)

    @property
    def y0_deg(self) -> float:
        return math.degrees(self.y0)

    @property
    def orbit_energy(self) -> float:
        return pendulum_energy(self.y0, 0.0, self.g, self.length)

    def residuals(self, bundles: List[DerivativeBundle]) -> List[Any]:
        return [pendulum_residual(bundles[0], self.g, self.length)]

    def fixed_points(self) -> List[FixedPoint]:
        return [FixedPoint("hanging", 0.0, "stable"), FixedPoint("inverted", math.pi, "unstable")]

    def sample_constraints(self, rng: np.random.Generator, n_ic: int = 1, n_bc: int = 1) -> ConstraintSample:
        # released at rest: y(0) = y0 and y_t(0) = 0 at the single point t = 0
        ic = LabeledPoints([[0.0]], [[self.y0, 0.0]], ["y", "y_t"])
        return ConstraintSample(labeled=[ic])

    def reference(self, dt: float = 1e-3, **options: Any) -> ReferenceSolution:
        return pendulum_reference(self.y0, self.T, dt, self.g, self.length)

    def labeled_reference(self, n: int) -> LabeledPoints:
        times = np.linspace(0.0, self.T, n)
        return LabeledPoints(times.reshape(-1, 1), self.reference().at(times, "y"), ["y"])

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'T': self.T, 'y0': self.y0, 'g': self.g, 'l': self.length}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PendulumSystem':
        if 'y0_deg' in data:
            y0 = math.radians(_coerce_float(data['y0_deg'], 'y0_deg'))
        else:
            y0 = _coerce_float(data.get('y0', math.radians(25.0)), 'y0')
        return cls(
            T=_coerce_float(data.get('T', 7.5), 'T'),
            y0=y0,
            g=_coerce_float(data.get('g', GRAVITY), 'g'),
            length=_coerce_float(data.get('l', LENGTH), 'l')
        )

from typing import Any, Dict, List

import numpy as np

from .base import ConstraintSample, DynamicalSystem, FixedPoint
from ..autodiff import DerivativeBundle
from ..io import _coerce_float
from ..oracles import LabeledPoints, ReferenceSolution, toy_analytic, toy_reference


def toy_residual(bundle: DerivativeBundle) -> Any:
    ''' f = y_t - y (1 - y^2) '''
    y = bundle.value
    return bundle["t"] - y * (1.0 - y * y)


class ToySystem(DynamicalSystem):
    ''' y_t = y (1 - y^2): fixed points at -1, 0 and 1. '''
    name = "toy"
    axes = ("t",)
    outputs = ("y",)
    residual_request = ("t",)
    boundaries = {"t=0": "dirichlet"}

    def __init__(self, T: float = 2.5, y0: float = 0.5) -> None:
        super().__init__(T)
        if not isinstance(y0, (int, float)) or isinstance(y0, bool):
            raise TypeError("y0 must be a number")
        self.y0: float = float(y0)

    def residuals(self, bundles: List[DerivativeBundle]) -> List[Any]:
        return [toy_residual(bundles[0])]

    def fixed_points(self) -> List[FixedPoint]:
        return [
            FixedPoint("lower", -1.0, "asymptotically-stable"),
            FixedPoint("origin", 0.0, "unstable"),
            FixedPoint("upper", 1.0, "asymptotically-stable"),
        ]

    def sample_constraints(self, rng: np.random.Generator, n_ic: int = 1, n_bc: int = 1) -> ConstraintSample:
        return ConstraintSample(labeled=[LabeledPoints([[0.0]], [[self.y0]], ["y"])])

    def reference(self, n: int = 1000, **options: Any) -> ReferenceSolution:
        return toy_reference(self.y0, self.T, n)

    def labeled_reference(self, n: int) -> LabeledPoints:
        times = np.linspace(0.0, self.T, n)
        return LabeledPoints(times.reshape(-1, 1), toy_analytic(self.y0, times), ["y"])

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'T': self.T, 'y0': self.y0}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ToySystem':
        return cls(T=_coerce_float(data.get('T', 2.5), 'T'), y0=_coerce_float(data.get('y0', 0.5), 'y0'))

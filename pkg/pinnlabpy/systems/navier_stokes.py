import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .base import ConstraintSample, DynamicalSystem, FixedPoint
from ..autodiff import DerivativeBundle
from ..errors import ConfigurationError
from ..io import _coerce_float
from ..oracles import LabeledPoints

logger = logging.getLogger(__name__)

BOUNDARY_NAMES = ("inlet", "outlet", "bottom", "top")
DEFAULT_DIRICHLET = {
    "inlet": {"u": 1.0, "v": 0.0},
    "outlet": {"p": 0.0},
    "bottom": {"v": 0.0},
    "top": {"v": 0.0},
}


def navier_stokes_residuals(u: DerivativeBundle, v: DerivativeBundle, p: DerivativeBundle,
                            re: float = 100.0) -> Tuple[Any, Any]:
    ''' Momentum residuals of the incompressible 2-D Navier-Stokes equations. '''
    if not re > 0:
        raise ConfigurationError("Reynolds number must be positive")
    f_x = u["t"] + (u.value * u["x"] + v.value * u["y"]) + p["x"] - (u["xx"] + u["yy"]) / re
    f_y = v["t"] + (u.value * v["x"] + v.value * v["y"]) + p["y"] - (v["xx"] + v["yy"]) / re
    return f_x, f_y


def continuity_residual(u: DerivativeBundle, v: DerivativeBundle) -> Any:
    return u["x"] + v["y"]


class NavierStokesSystem(DynamicalSystem):
    '''
    2-D incompressible flow in a rectangular channel with Dirichlet data on
    named boundaries (inlet x=x_min, outlet x=x_max, bottom y=y_min, top y=y_max).
    '''
    name = "navier-stokes"
    axes = ("t", "x", "y")
    outputs = ("u", "v", "p")
    residual_request = ("t", "x", "y", "xx", "yy")

    def __init__(
        self,
        T: float = 1.0,
        re: float = 100.0,
        x_bounds: Tuple[float, float] = (0.0, 2.0),
        y_bounds: Tuple[float, float] = (-1.0, 1.0),
        dirichlet: Optional[Dict[str, Dict[str, float]]] = None,
        continuity: bool = True
    ) -> None:
        super().__init__(T)
        if not re > 0:
            raise ConfigurationError("Reynolds number must be positive")
        dirichlet = DEFAULT_DIRICHLET if dirichlet is None else dirichlet
        for boundary, fields in dirichlet.items():
            if boundary not in BOUNDARY_NAMES:
                raise ConfigurationError(f"unknown boundary '{boundary}' (expected one of {BOUNDARY_NAMES})")
            for field in fields:
                if field not in self.outputs:
                    raise ConfigurationError(f"unknown field '{field}' on boundary '{boundary}'")
        self.re: float = float(re)
        self.x_bounds: Tuple[float, float] = (float(x_bounds[0]), float(x_bounds[1]))
        self.y_bounds: Tuple[float, float] = (float(y_bounds[0]), float(y_bounds[1]))
        self.dirichlet: Dict[str, Dict[str, float]] = {
            b: {f: float(val) for f, val in fields.items()} for b, fields in dirichlet.items()
        }
        self.continuity: bool = bool(continuity)
        if not (self.x_bounds[1] > self.x_bounds[0] and self.y_bounds[1] > self.y_bounds[0]):
            raise ConfigurationError("spatial bounds must be well ordered")

    @property
    def boundaries(self) -> Dict[str, str]:
        return {b: ("dirichlet" if b in self.dirichlet else "none") for b in BOUNDARY_NAMES}

    @property
    def spatial_bounds(self) -> List[Tuple[float, float]]:
        return [self.x_bounds, self.y_bounds]

    @property
    def arity(self) -> int:
        return 3 if self.continuity else 2

    def residuals(self, bundles: List[DerivativeBundle]) -> List[Any]:
        u, v, p = bundles
        f_x, f_y = navier_stokes_residuals(u, v, p, self.re)
        if self.continuity:
            return [f_x, f_y, continuity_residual(u, v)]
        return [f_x, f_y]

    def fixed_points(self) -> List[FixedPoint]:
        return [
            FixedPoint("quiescent", (0.0, 0.0, 0.0), "asymptotically-stable"),
            FixedPoint("uniform", (1.0, 0.0, 0.0), "stable"),
        ]

    def _boundary_points(self, boundary: str, rng: np.random.Generator, n: int) -> np.ndarray:
        t = rng.uniform(0.0, self.T, size=n)
        (x0, x1), (y0, y1) = self.x_bounds, self.y_bounds
        if boundary in ("inlet", "outlet"):
            x = np.full(n, x0 if boundary == "inlet" else x1)
            y = rng.uniform(y0, y1, size=n)
        else:
            x = rng.uniform(x0, x1, size=n)
            y = np.full(n, y0 if boundary == "bottom" else y1)
        return np.column_stack([t, x, y])

    def sample_constraints(self, rng: np.random.Generator, n_ic: int = 1, n_bc: int = 128) -> ConstraintSample:
        labeled = []
        for boundary in BOUNDARY_NAMES:
            fields = self.dirichlet.get(boundary)
            if not fields:
                continue
            points = self._boundary_points(boundary, rng, n_bc)
            values = np.tile([fields[f] for f in fields], (n_bc, 1))
            labeled.append(LabeledPoints(points, values, list(fields)))
        return ConstraintSample(labeled=labeled)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'T': self.T,
            're': self.re,
            'x_bounds': list(self.x_bounds),
            'y_bounds': list(self.y_bounds),
            'dirichlet': self.dirichlet,
            'continuity': self.continuity
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NavierStokesSystem':
        return cls(
            T=_coerce_float(data.get('T', 1.0), 'T'),
            re=_coerce_float(data.get('re', 100.0), 're'),
            x_bounds=tuple(data.get('x_bounds', (0.0, 2.0))),
            y_bounds=tuple(data.get('y_bounds', (-1.0, 1.0))),
            dirichlet=data.get('dirichlet'),
            continuity=data.get('continuity', True)
        )

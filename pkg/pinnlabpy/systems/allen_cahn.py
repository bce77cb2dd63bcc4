import logging
from typing import Any, Dict, List, Tuple

import numpy as np

from .base import ConstraintSample, DynamicalSystem, FixedPoint, PeriodicPairs
from ..autodiff import DerivativeBundle
from ..errors import DomainError
from ..io import _coerce_float
from ..oracles import (
    AC_GAMMA1,
    AC_GAMMA2,
    LabeledPoints,
    ReferenceSolution,
    allen_cahn_initial,
    allen_cahn_reference,
)

logger = logging.getLogger(__name__)

INTERFACES = (-0.5, 0.5)


def allen_cahn_residual(bundle: DerivativeBundle, gamma1: float = AC_GAMMA1, gamma2: float = AC_GAMMA2) -> Any:
    ''' f = u_t - gamma1 u_xx - gamma2 (u - u^3) '''
    u = bundle.value
    return bundle["t"] - gamma1 * bundle["xx"] - gamma2 * (u - u * u * u)


def ac_piecewise_fixed_function(x: Any) -> Any:
    """
    Piecewise-constant steady state: 0 on [-0.5, 0.5] and -1 elsewhere in
    [-1, 1]. Its residual vanishes everywhere except at x = +-0.5.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0) or not np.all(np.isfinite(arr)):
        raise DomainError("x must lie in [-1, 1]")
    out = np.where(np.abs(arr) <= 0.5, 0.0, -1.0)
    return float(out) if out.ndim == 0 else out


def sample_off_interfaces(low: np.ndarray, high: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Uniform (t, x) points with every draw landing exactly on an interface
    x = +-0.5 replaced by a fresh draw.
    """
    points = rng.uniform(low, high, size=(n, len(low)))
    while True:
        hit = np.isin(points[:, 1], INTERFACES)
        if not hit.any():
            return points
        logger.warning("redrawing %d collocation point(s) on the interfaces x = +-0.5", int(hit.sum()))
        points[hit] = rng.uniform(low, high, size=(int(hit.sum()), len(low)))


def piecewise_residual(points: np.ndarray, gamma1: float = AC_GAMMA1, gamma2: float = AC_GAMMA2) -> np.ndarray:
    ''' Residual of the piecewise steady state off its interfaces, where all its derivatives vanish. '''
    u = ac_piecewise_fixed_function(np.asarray(points, dtype=np.float64)[:, 1])
    zero = np.zeros_like(u)
    return allen_cahn_residual(DerivativeBundle.from_values(u, t=zero, xx=zero), gamma1, gamma2)


class AllenCahnSystem(DynamicalSystem):
    ''' Allen-Cahn equation on x in [-1, 1] with periodic boundaries and u(0, x) = x^2 cos(pi x). '''
    name = "allen-cahn"
    axes = ("t", "x")
    outputs = ("u",)
    residual_request = ("t", "xx")
    boundaries = {"x=-1": "periodic", "x=1": "periodic"}

    def __init__(self, T: float = 1.0, gamma1: float = AC_GAMMA1, gamma2: float = AC_GAMMA2) -> None:
        super().__init__(T)
        self.gamma1: float = float(gamma1)
        self.gamma2: float = float(gamma2)

    @property
    def spatial_bounds(self) -> List[Tuple[float, float]]:
        return [(-1.0, 1.0)]

    def residuals(self, bundles: List[DerivativeBundle]) -> List[Any]:
        return [allen_cahn_residual(bundles[0], self.gamma1, self.gamma2)]

    def fixed_points(self) -> List[FixedPoint]:
        return [
            FixedPoint("minus-one", -1.0, "asymptotically-stable"),
            FixedPoint("zero", 0.0, "unstable"),
            FixedPoint("plus-one", 1.0, "asymptotically-stable"),
            FixedPoint("piecewise", lambda points: ac_piecewise_fixed_function(points[:, 1]), "unstable"),
        ]

    def sample_constraints(self, rng: np.random.Generator, n_ic: int = 128, n_bc: int = 128) -> ConstraintSample:
        """
        Initial condition at `n_ic` random x, and `n_bc` random times at which
        u and u_x must agree between x = -1 and x = 1.
        """
        x = rng.uniform(-1.0, 1.0, size=n_ic)
        ic = LabeledPoints(np.column_stack([np.zeros(n_ic), x]), allen_cahn_initial(x), ["u"])
        t = rng.uniform(0.0, self.T, size=n_bc)
        pairs = PeriodicPairs(np.column_stack([t, -np.ones(n_bc)]), np.column_stack([t, np.ones(n_bc)]), ["u", "u_x"])
        return ConstraintSample(labeled=[ic], periodic=[pairs])

    def reference(self, nx: int = 256, dt: float = 1e-3, **options: Any) -> ReferenceSolution:
        return allen_cahn_reference(nx, dt, self.T, self.gamma1, self.gamma2)

    def labeled_reference(self, n: int) -> LabeledPoints:
        ref = self.reference()
        tt, xx = np.meshgrid(ref.times, ref.space, indexing="ij")
        idx = np.linspace(0, tt.size - 1, n).round().astype(int)
        points = np.column_stack([tt.ravel()[idx], xx.ravel()[idx]])
        return LabeledPoints(points, ref.values.ravel()[idx], ["u"])

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'T': self.T, 'gamma1': self.gamma1, 'gamma2': self.gamma2}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'AllenCahnSystem':
        return cls(
            T=_coerce_float(data.get('T', 1.0), 'T'),
            gamma1=_coerce_float(data.get('gamma1', AC_GAMMA1), 'gamma1'),
            gamma2=_coerce_float(data.get('gamma2', AC_GAMMA2), 'gamma2')
        )

from typing import Any, Dict, List, Type, Union

from .base import ConstraintSample, Domain, DynamicalSystem, FixedPoint, PeriodicPairs
from .pendulum import PendulumSystem, pendulum_residual
from .toy import ToySystem, toy_residual
from .allen_cahn import (
    AllenCahnSystem,
    ac_piecewise_fixed_function,
    allen_cahn_residual,
    piecewise_residual,
    sample_off_interfaces,
)
from .navier_stokes import NavierStokesSystem, continuity_residual, navier_stokes_residuals
from ..errors import ConfigurationError

SYSTEMS: Dict[str, Type[DynamicalSystem]] = {
    "pendulum": PendulumSystem,
    "toy": ToySystem,
    "allen-cahn": AllenCahnSystem,
    "navier-stokes": NavierStokesSystem,
}


def make_system(config: Union[str, Dict[str, Any]], **overrides: Any) -> DynamicalSystem:
    ''' Build a system from its name or from a dict with a "name" key. '''
    data = {'name': config} if isinstance(config, str) else dict(config)
    data.update(overrides)
    name = data.get('name')
    if name not in SYSTEMS:
        raise ConfigurationError(f"unknown system '{name}' (expected one of {sorted(SYSTEMS)})")
    return SYSTEMS[name].from_dict(data)


def fixed_point_registry() -> Dict[str, List[FixedPoint]]:
    return {name: cls().fixed_points() for name, cls in SYSTEMS.items()}


__all__ = [
    "DynamicalSystem",
    "FixedPoint",
    "Domain",
    "ConstraintSample",
    "PeriodicPairs",
    "PendulumSystem",
    "ToySystem",
    "AllenCahnSystem",
    "NavierStokesSystem",
    "pendulum_residual",
    "toy_residual",
    "allen_cahn_residual",
    "navier_stokes_residuals",
    "continuity_residual",
    "ac_piecewise_fixed_function",
    "piecewise_residual",
    "sample_off_interfaces",
    "SYSTEMS",
    "make_system",
    "fixed_point_registry",
]

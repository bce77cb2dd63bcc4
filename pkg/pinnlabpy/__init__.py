"""Public API for pinnlabpy.
Expose the main classes and functions at the package root for convenient imports.
"""

__version__ = "0.1.0"

from .errors import (
    PinnLabError,
    ConfigurationError,
    CapabilityError,
    NumericalError,
    DivergenceError,
    DomainError,
    ParseError,
    DegenerateDirectionError,
    UndefinedErrorMetric,
    ArtifactConflictError,
)
from .autodiff import DerivativeBundle, DerivativeRequest, Jet, Tape, Var, value_and_gradient
from .network import (
    NetworkSpec,
    ParameterVector,
    init_params,
    evaluate_with_input_derivatives,
    FeedForward,
    HardICModel,
    StreamFunctionModel,
    wrap_hard_ic,
    stream_function_velocities,
)
from .systems import (
    DynamicalSystem,
    FixedPoint,
    PendulumSystem,
    ToySystem,
    AllenCahnSystem,
    NavierStokesSystem,
    make_system,
    fixed_point_registry,
)
from .oracles import (
    ReferenceSolution,
    LabeledPoints,
    rk4_integrate,
    pendulum_reference,
    toy_analytic,
    toy_reference,
    allen_cahn_reference,
    self_convergence,
    load_field_snapshots,
)
from .training import (
    TrainConfig,
    RunTrace,
    AdamState,
    adam_step,
    physics_loss,
    data_loss,
    composite_loss,
    build_model,
    train,
)
from .evaluation import (
    Outcome,
    Prediction,
    SweepGrid,
    SweepResult,
    l2_relative_error,
    classify_energy,
    classify_pendulum_outcome,
    classify_toy_outcome,
    evaluate_run,
    sweep,
    economical_minima_report,
)
from .landscape import (
    LandscapeGrid,
    build_directions,
    evaluate_grid,
    truncate,
    local_min_test,
    trajectory_landscapes,
)
from .io import config_hash, save_checkpoint, load_checkpoint

__all__ = [
    # Errors
    "PinnLabError",
    "ConfigurationError",
    "CapabilityError",
    "NumericalError",
    "DivergenceError",
    "DomainError",
    "ParseError",
    "DegenerateDirectionError",
    "UndefinedErrorMetric",
    "ArtifactConflictError",
    # Differentiation
    "Tape",
    "Var",
    "Jet",
    "DerivativeRequest",
    "DerivativeBundle",
    "value_and_gradient",
    # Networks
    "NetworkSpec",
    "ParameterVector",
    "init_params",
    "evaluate_with_input_derivatives",
    "FeedForward",
    "HardICModel",
    "StreamFunctionModel",
    "wrap_hard_ic",
    "stream_function_velocities",
    # Systems
    "DynamicalSystem",
    "FixedPoint",
    "PendulumSystem",
    "ToySystem",
    "AllenCahnSystem",
    "NavierStokesSystem",
    "make_system",
    "fixed_point_registry",
    # Reference solutions
    "ReferenceSolution",
    "LabeledPoints",
    "rk4_integrate",
    "pendulum_reference",
    "toy_analytic",
    "toy_reference",
    "allen_cahn_reference",
    "self_convergence",
    "load_field_snapshots",
    # Training
    "TrainConfig",
    "RunTrace",
    "AdamState",
    "adam_step",
    "physics_loss",
    "data_loss",
    "composite_loss",
    "build_model",
    "train",
    # Evaluation
    "Outcome",
    "Prediction",
    "SweepGrid",
    "SweepResult",
    "l2_relative_error",
    "classify_energy",
    "classify_pendulum_outcome",
    "classify_toy_outcome",
    "evaluate_run",
    "sweep",
    "economical_minima_report",
    # Landscapes
    "LandscapeGrid",
    "build_directions",
    "evaluate_grid",
    "truncate",
    "local_min_test",
    "trajectory_landscapes",
    # Artifacts
    "config_hash",
    "save_checkpoint",
    "load_checkpoint",
]

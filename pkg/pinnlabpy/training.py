"""
Loss assembly, collocation sampling, Adam, and the training schedules.

An epoch evaluates the loss at the current parameters over the full sample,
records it, and takes one Adam step. Checkpoint k holds the parameters after
k steps, so checkpoint 0 is the initialization.
"""

import copy
import logging
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .autodiff import Var, mean_square, value_and_gradient, value_of
from .errors import ConfigurationError, NumericalError
from .io import _coerce_float, _coerce_int, config_hash, load_json
from .network import FeedForward, Model, NetworkSpec, ParameterVector, StreamFunctionModel, wrap_hard_ic
from .oracles import LabeledPoints, load_field_snapshots
from .systems import ConstraintSample, DynamicalSystem, PeriodicPairs, make_system
from .systems.base import Domain

logger = logging.getLogger(__name__)

SCHEDULES = ("physics-driven", "vanilla", "data-guided")
SAMPLING = ("fixed", "resample")
HEADS = ("plain", "stream")
DIVERGENCE_LIMIT = 1e12


# ------------------- Sampling -------------------
def sample_collocation(domain: Domain, n: int, rng: np.random.Generator) -> np.ndarray:
    ''' `n` i.i.d. uniform points in the domain box, shape (n, number of axes). '''
    if n < 1:
        raise ConfigurationError(f"number of collocation points must be >= 1, got {n}")
    return rng.uniform(domain.low, domain.high, size=(n, domain.width))


# ------------------- Losses -------------------
def _split_column(column: str) -> Tuple[str, str]:
    name, _, derivative = column.partition("_")
    return name, derivative


def _check_finite(value: Any, what: str, epoch: Optional[int]) -> None:
    arr = value_of(value)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(np.atleast_1d(arr)))
        raise NumericalError(f"non-finite {what}", epoch=epoch, point=int(bad[0]))


def predict_columns(model: Model, params: Any, points: np.ndarray, columns: Sequence[str]) -> List[Any]:
    ''' Model outputs (or their derivatives) named like "y", "y_t" or "u_x", one array per column. '''
    parsed = [_split_column(c) for c in columns]
    for name, _ in parsed:
        if name not in model.output_names:
            raise ConfigurationError(f"column refers to unknown output '{name}' (outputs: {model.output_names})")
    bundles = model(params, points, [d for _, d in parsed if d])
    return [bundles[model.output_names.index(name)][model.request([d]).keys[0] if d else ""]
            for name, d in parsed]


def physics_loss(model: Model, params: Any, system: DynamicalSystem, points: np.ndarray,
                 epoch: Optional[int] = None) -> Any:
    """
    L_f: mean squared residual over the collocation points, summed over the
    equations of a coupled system.
    """
    bundles = model(params, points, system.residual_request)
    total = None
    for k, residual in enumerate(system.residuals(bundles)):
        _check_finite(residual, f"residual of equation {k}", epoch)
        term = mean_square(residual)
        total = term if total is None else total + term
    return total


def data_loss(model: Model, params: Any, labeled: LabeledPoints) -> Any:
    ''' Sum over label columns of the mean squared prediction error. '''
    if len(labeled) == 0:
        return 0.0
    total = None
    for column, pred in zip(labeled.columns, predict_columns(model, params, labeled.points, labeled.columns)):
        term = mean_square(pred - labeled.column(column))
        total = term if total is None else total + term
    return total


def periodic_loss(model: Model, params: Any, pairs: PeriodicPairs) -> Any:
    left = predict_columns(model, params, pairs.left, pairs.columns)
    right = predict_columns(model, params, pairs.right, pairs.columns)
    total = None
    for a, b in zip(left, right):
        term = mean_square(a - b)
        total = term if total is None else total + term
    return total


def constraint_loss(model: Model, params: Any, sample: ConstraintSample) -> Any:
    ''' Soft initial/boundary loss: labeled constraint data plus periodic pair penalties. '''
    total = 0.0
    for labeled in sample.labeled:
        total = data_loss(model, params, labeled) + total
    for pairs in sample.periodic:
        total = periodic_loss(model, params, pairs) + total
    return total


def composite_loss(l_f: Any, l_u: Any, lam: float, hard_constrained: bool = False) -> Any:
    ''' L = lambda * L_u + L_f; hard-constrained runs drop L_u. '''
    if lam < 0:
        raise ConfigurationError("loss weight lambda must be non-negative")
    if hard_constrained:
        return l_f
    return lam * l_u + l_f


# ------------------- Adam -------------------
class AdamState:
    ''' First and second moment estimates plus the number of steps taken. '''
    def __init__(self, m: np.ndarray, v: np.ndarray, step: int = 0) -> None:
        self.m: np.ndarray = m
        self.v: np.ndarray = v
        self.step: int = step

    def __repr__(self) -> str:
        return f"AdamState(step={self.step}, size={self.m.size})"

    @staticmethod
    def zeros(n: int) -> 'AdamState':
        return AdamState(np.zeros(n), np.zeros(n), 0)


def adam_step(
    params: Any,
    grad: Any,
    state: AdamState,
    alpha: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8
) -> Tuple[Any, AdamState]:
    ''' One bias-corrected Adam update. Returns new parameters and state; inputs are not modified. '''
    theta = np.asarray(getattr(params, "values", params), dtype=np.float64)
    g = np.asarray(getattr(grad, "values", grad), dtype=np.float64)
    if g.shape != theta.shape:
        raise ConfigurationError(f"gradient of shape {g.shape} does not match parameters {theta.shape}")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    new = theta - alpha * m_hat / (np.sqrt(v_hat) + eps)
    if isinstance(params, ParameterVector):
        new = params.with_values(new)
    return new, AdamState(m, v, step)


class ExponentialDecay:
    ''' alpha_k = alpha * rate^(k / step) '''
    def __init__(self, rate: float, step: int) -> None:
        if not 0 < rate <= 1:
            raise ConfigurationError("decay rate must be in (0, 1]")
        if step < 1:
            raise ConfigurationError("decay step must be >= 1")
        self.rate: float = float(rate)
        self.step: int = int(step)

    def __call__(self, alpha: float, k: int) -> float:
        return alpha * self.rate ** (k / self.step)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'exponential', 'rate': self.rate, 'step': self.step}

    @staticmethod
    def from_dict(data: Optional[Dict[str, Any]]) -> Optional['ExponentialDecay']:
        if not data or data.get('kind', 'exponential') == 'none':
            return None
        if data.get('kind', 'exponential') != 'exponential':
            raise ConfigurationError(f"unknown learning-rate decay '{data.get('kind')}'")
        return ExponentialDecay(_coerce_float(data['rate'], 'lr_decay.rate'), _coerce_int(data['step'], 'lr_decay.step'))


# ------------------- Configuration -------------------
class TrainConfig:
    '''
    Everything one training run needs. `seed` drives collocation sampling;
    the network's own seed drives initialization (it defaults to `seed`).
    '''
    def __init__(
        self,
        system: DynamicalSystem,
        network: NetworkSpec,
        epochs: int,
        lam: float = 1.0,
        alpha: float = 1e-3,
        lr_decay: Optional[ExponentialDecay] = None,
        n_f: int = 64,
        n_ic: int = 1,
        n_bc: int = 1,
        n_data: int = 10,
        sampling: str = "fixed",
        schedule: str = "physics-driven",
        switch_epoch: Optional[int] = None,
        hard_ic: bool = False,
        head: str = "plain",
        seed: int = 0,
        checkpoints: Optional[List[int]] = None,
        snapshots: Optional[str] = None,
        log_every: int = 1000
    ) -> None:
        if not isinstance(system, DynamicalSystem):
            raise TypeError("system must be a DynamicalSystem instance")
        if not isinstance(network, NetworkSpec):
            raise TypeError("network must be a NetworkSpec instance")
        if lr_decay is not None and not isinstance(lr_decay, ExponentialDecay):
            raise TypeError("lr_decay must be an ExponentialDecay instance or None")
        if epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
        if min(n_f, n_ic, n_bc, n_data) < 1:
            raise ConfigurationError("point counts must be >= 1")
        if lam < 0:
            raise ConfigurationError("loss weight lambda must be non-negative")
        if not alpha > 0:
            raise ConfigurationError("learning rate must be positive")
        if sampling not in SAMPLING:
            raise ConfigurationError(f"sampling must be one of {SAMPLING}")
        if schedule not in SCHEDULES:
            raise ConfigurationError(f"schedule must be one of {SCHEDULES}")
        if head not in HEADS:
            raise ConfigurationError(f"head must be one of {HEADS}")
        if schedule == "vanilla" and hard_ic:
            raise ConfigurationError("the vanilla schedule keeps the initial condition as a soft loss term; "
                                     "set hard_ic to false")
        if schedule == "data-guided":
            if switch_epoch is None:
                switch_epoch = epochs // 2
            if not 0 < switch_epoch < epochs:
                raise ConfigurationError(f"switch_epoch must lie in (0, {epochs}), got {switch_epoch}")
        if checkpoints is None:
            checkpoints = [0, epochs // 2, epochs]
        if any(c < 0 or c > epochs for c in checkpoints):
            raise ConfigurationError(f"checkpoint epochs must lie in [0, {epochs}]")
        self.system: DynamicalSystem = system
        self.network: NetworkSpec = network
        self.epochs: int = epochs
        self.lam: float = float(lam)
        self.alpha: float = float(alpha)
        self.lr_decay: Optional[ExponentialDecay] = lr_decay
        self.n_f: int = n_f
        self.n_ic: int = n_ic
        self.n_bc: int = n_bc
        self.n_data: int = n_data
        self.sampling: str = sampling
        self.schedule: str = schedule
        self.switch_epoch: Optional[int] = switch_epoch
        self.hard_ic: bool = bool(hard_ic)
        self.head: str = head
        self.seed: int = seed
        self.checkpoints: List[int] = sorted(set(checkpoints))
        self.snapshots: Optional[str] = snapshots
        self.log_every: int = max(1, log_every)

    def __repr__(self) -> str:
        return (f"TrainConfig({self.system.name}, {self.network.arch} {self.network.activation}, "
                f"epochs={self.epochs}, schedule={self.schedule}, seed={self.seed})")

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    def learning_rate(self, k: int) -> float:
        ''' Learning rate of the (k+1)-th step. '''
        return self.lr_decay(self.alpha, k) if self.lr_decay else self.alpha

    def replace(self, **changes: Any) -> 'TrainConfig':
        new = copy.copy(self)
        for key, value in changes.items():
            if not hasattr(new, key):
                raise ConfigurationError(f"unknown configuration field '{key}'")
            setattr(new, key, value)
        return TrainConfig.from_dict(new.to_dict())

    def with_epochs(self, epochs: int) -> 'TrainConfig':
        ''' Same run with a different epoch count; switch epoch and checkpoints scale along. '''
        data = self.to_dict()
        data['epochs'] = epochs
        if self.switch_epoch is not None:
            if epochs < 2:
                raise ConfigurationError("a data-guided run needs at least 2 epochs")
            data['switch_epoch'] = min(epochs - 1, max(1, round(self.switch_epoch * epochs / self.epochs)))
        if self.checkpoints == [0, self.epochs // 2, self.epochs]:
            data['checkpoints'] = None
        else:
            data['checkpoints'] = sorted({c for c in self.checkpoints if c <= epochs} | {epochs})
        return TrainConfig.from_dict(data)

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'TrainConfig':
        if 'system' not in data or 'epochs' not in data:
            raise ConfigurationError("training configuration needs 'system' and 'epochs'")
        system = make_system(data['system'])
        seed = _coerce_int(data.get('seed', 0), 'seed')
        head = data.get('head', 'plain')
        net = dict(data.get('network', {}))
        net.setdefault('input_width', system.input_width)
        net.setdefault('output_width', 2 if head == "stream" else len(system.outputs))
        net.setdefault('seed', seed)
        if 'hidden_layers' not in net and 'arch' not in net:
            net['arch'] = "4x50"
        checkpoints = data.get('checkpoints')
        return TrainConfig(
            system=system,
            network=NetworkSpec.from_dict(net),
            epochs=_coerce_int(data['epochs'], 'epochs'),
            lam=_coerce_float(data.get('lambda', 1.0), 'lambda'),
            alpha=_coerce_float(data.get('alpha', 1e-3), 'alpha'),
            lr_decay=ExponentialDecay.from_dict(data.get('lr_decay')),
            n_f=_coerce_int(data.get('n_f', 64), 'n_f'),
            n_ic=_coerce_int(data.get('n_ic', 1), 'n_ic'),
            n_bc=_coerce_int(data.get('n_bc', 1), 'n_bc'),
            n_data=_coerce_int(data.get('n_data', 10), 'n_data'),
            sampling=data.get('sampling', 'fixed'),
            schedule=data.get('schedule', 'physics-driven'),
            switch_epoch=_coerce_int(data['switch_epoch'], 'switch_epoch') if data.get('switch_epoch') is not None else None,
            hard_ic=data.get('hard_ic', False),
            head=head,
            seed=seed,
            checkpoints=[_coerce_int(c, 'checkpoints') for c in checkpoints] if checkpoints is not None else None,
            snapshots=data.get('snapshots'),
            log_every=_coerce_int(data.get('log_every', 1000), 'log_every')
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'system': self.system.to_dict(),
            'network': self.network.to_dict(),
            'epochs': self.epochs,
            'lambda': self.lam,
            'alpha': self.alpha,
            'lr_decay': self.lr_decay.to_dict() if self.lr_decay else None,
            'n_f': self.n_f,
            'n_ic': self.n_ic,
            'n_bc': self.n_bc,
            'n_data': self.n_data,
            'sampling': self.sampling,
            'schedule': self.schedule,
            'switch_epoch': self.switch_epoch,
            'hard_ic': self.hard_ic,
            'head': self.head,
            'seed': self.seed,
            'checkpoints': list(self.checkpoints),
            'snapshots': self.snapshots,
            'log_every': self.log_every
        }


def load_train_config(path: str) -> TrainConfig:
    return TrainConfig.from_dict(load_json(path))


def build_model(config: TrainConfig) -> Model:
    system = config.system
    spec = config.network
    if spec.input_width != system.input_width:
        raise ConfigurationError(f"{system.name} needs input width {system.input_width}, network has {spec.input_width}")
    if config.head == "stream":
        if system.outputs != ("u", "v", "p"):
            raise ConfigurationError("the stream-function head only applies to (u, v, p) flow systems")
        return StreamFunctionModel(spec)
    if spec.output_width != len(system.outputs):
        raise ConfigurationError(f"{system.name} needs output width {len(system.outputs)}, network has {spec.output_width}")
    model = FeedForward(spec, system.axes, system.outputs)
    if config.hard_ic:
        if not hasattr(system, "y0") or system.input_width != 1:
            raise ConfigurationError(f"hard initial conditions are only available for ODE systems, not {system.name}")
        return wrap_hard_ic(model, system.y0)
    return model


# ------------------- Traces -------------------
class RunTrace:
    ''' Loss history and parameter checkpoints of one training run. '''
    def __init__(self, seed: int, config_hash: str = "") -> None:
        self.seed: int = seed
        self.config_hash: str = config_hash
        self.l_f: List[float] = []
        self.l_u: List[float] = []
        self.total: List[float] = []
        self.checkpoints: Dict[int, ParameterVector] = {}
        self.final_params: Optional[ParameterVector] = None
        self.final_epoch: int = 0
        self.wall_time: float = 0.0
        self.diverged: bool = False
        self.failure: Optional[str] = None

    def __len__(self) -> int:
        return len(self.total)

    def __repr__(self) -> str:
        status = "diverged" if self.diverged else "ok"
        return f"RunTrace({len(self)} epochs, min L_f={self.min_l_f:.3e}, {status})"

    @property
    def min_l_f(self) -> float:
        return min(self.l_f) if self.l_f else float("nan")

    def record(self, l_f: float, l_u: float, total: float) -> None:
        self.l_f.append(l_f)
        self.l_u.append(l_u)
        self.total.append(total)

    def keep_last_finite(self) -> None:
        ''' Checkpoint the parameters the failing epoch started from. '''
        self.checkpoints[self.final_epoch] = self.final_params

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'epoch': np.arange(1, len(self) + 1),
            'L_f': self.l_f,
            'L_u': self.l_u,
            'L': self.total,
        })

    def metadata(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'config_hash': self.config_hash,
            'epochs_completed': len(self),
            'min_L_f': self.min_l_f if self.l_f else None,
            'wall_time': self.wall_time,
            'diverged': self.diverged,
            'failure': self.failure,
            'final_epoch': self.final_epoch,
            'checkpoints': sorted(self.checkpoints),
        }


def train(config: TrainConfig, model: Optional[Model] = None) -> RunTrace:
    """
    Run the configured schedule with one full-batch Adam step per epoch.
    A non-finite loss or one above the divergence limit stops the run; the
    trace keeps everything recorded before and is flagged as diverged.
    """
    system = config.system
    model = model or build_model(config)
    hard = config.hard_ic
    rng = np.random.default_rng(config.seed)
    params = model.init_params()
    trace = RunTrace(config.seed, config.hash)

    points = sample_collocation(system.domain, config.n_f, rng)
    constraints = system.sample_constraints(rng, config.n_ic, config.n_bc)
    guide = system.labeled_reference(config.n_data) if config.schedule == "data-guided" else None
    snapshots = load_field_snapshots(config.snapshots) if config.snapshots else None

    logger.info("training %s on %s: %s %s, %d params, %d epochs, schedule=%s, lambda=%g, alpha=%g, seed=%d",
                type(model).__name__, system.name, config.network.arch, config.network.activation,
                config.network.n_params, config.epochs, config.schedule, config.lam, config.alpha, config.seed)

    state = AdamState.zeros(len(params))
    if 0 in config.checkpoints:
        trace.checkpoints[0] = params
    trace.final_params = params
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        if config.sampling == "resample" and epoch > 1:
            points = sample_collocation(system.domain, config.n_f, rng)
            constraints = system.sample_constraints(rng, config.n_ic, config.n_bc)
        phase_one = guide is not None and epoch <= config.switch_epoch
        parts: Dict[str, Any] = {}

        def objective(theta: Var) -> Any:
            l_f = physics_loss(model, theta, system, points, epoch)
            l_u = 0.0 if hard else constraint_loss(model, theta, constraints)
            if phase_one:
                l_u = data_loss(model, theta, guide) + l_u
            if snapshots is not None:
                l_u = data_loss(model, theta, snapshots) + l_u
            parts['l_f'], parts['l_u'] = l_f, l_u
            return composite_loss(l_f, l_u, config.lam)

        try:
            value, grad = value_and_gradient(objective, params)
        except NumericalError as e:
            trace.diverged = True
            trace.failure = f"epoch {epoch}: {e}"
            logger.warning("run diverged at epoch %d: %s", epoch, e)
            trace.keep_last_finite()
            break
        trace.record(float(value_of(parts['l_f'])), float(value_of(parts['l_u'])), value)
        if value > DIVERGENCE_LIMIT:
            trace.diverged = True
            trace.failure = f"epoch {epoch}: loss {value:.3e} above {DIVERGENCE_LIMIT:.0e}"
            logger.warning("run diverged at epoch %d: loss %.3e", epoch, value)
            trace.keep_last_finite()
            break
        params, state = adam_step(params, grad, state, config.learning_rate(epoch - 1))
        trace.final_params = params
        trace.final_epoch = epoch
        if epoch in config.checkpoints:
            trace.checkpoints[epoch] = params
        if epoch % config.log_every == 0:
            logger.debug("epoch %d: L_f=%.4e L_u=%.4e L=%.4e", epoch, trace.l_f[-1], trace.l_u[-1], value)
    trace.wall_time = time.perf_counter() - start
    logger.info("finished %d epochs in %.1fs, min L_f=%.4e%s", len(trace), trace.wall_time, trace.min_l_f,
                " (diverged)" if trace.diverged else "")
    return trace

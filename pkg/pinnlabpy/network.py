"""
Fully-connected networks: specification, parameter vectors, initialization,
activations, and the output heads that enforce constraints by construction.
"""

import logging
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import DerivativeBundle, DerivativeRequest, Jet, Var, value_of
from .errors import CapabilityError, ConfigurationError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("tanh", "swish", "sin", "linear")
INITIALIZERS = ("glorot-uniform", "he-uniform")
AXIS_NAMES = ("t", "x", "y", "z")


def default_axes(input_width: int) -> Tuple[str, ...]:
    if not 1 <= input_width <= len(AXIS_NAMES):
        raise ConfigurationError(f"no default axis names for input width {input_width}")
    return AXIS_NAMES[:input_width]


class NetworkSpec:
    ''' Architecture of a fully-connected network plus the seed of its initial parameters. '''
    def __init__(
        self,
        input_width: int,
        hidden_layers: List[int],
        output_width: int,
        activation: str = "tanh",
        initializer: str = "glorot-uniform",
        seed: int = 0
    ) -> None:
        if not isinstance(input_width, int) or isinstance(input_width, bool):
            raise TypeError("input_width must be an int")
        if not isinstance(output_width, int) or isinstance(output_width, bool):
            raise TypeError("output_width must be an int")
        if not isinstance(hidden_layers, (list, tuple)) or not all(isinstance(w, int) and not isinstance(w, bool) for w in hidden_layers):
            raise TypeError("hidden_layers must be a list of ints")
        if not isinstance(activation, str):
            raise TypeError("activation must be a string")
        if not isinstance(initializer, str):
            raise TypeError("initializer must be a string")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise TypeError("seed must be an int")
        if not hidden_layers:
            raise ConfigurationError("hidden_layers must not be empty")
        if min([input_width, output_width, *hidden_layers]) < 1:
            raise ConfigurationError("all layer widths must be >= 1")
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation '{activation}' (expected one of {ACTIVATIONS})")
        if initializer not in INITIALIZERS:
            raise ConfigurationError(f"unknown initializer '{initializer}' (expected one of {INITIALIZERS})")
        if seed < 0:
            raise ConfigurationError("seed must be non-negative")
        self.input_width: int = input_width
        self.hidden_layers: Tuple[int, ...] = tuple(hidden_layers)
        self.output_width: int = output_width
        self.activation: str = activation
        self.initializer: str = initializer
        self.seed: int = seed

    def __repr__(self) -> str:
        return (f"NetworkSpec({self.input_width}, {list(self.hidden_layers)}, {self.output_width}, "
                f"{self.activation}, {self.initializer}, seed={self.seed})")

    def __eq__(self, other: object) -> bool:
        return isinstance(other, NetworkSpec) and self.to_dict() == other.to_dict()

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        widths = [self.input_width, *self.hidden_layers, self.output_width]
        return list(zip(widths[:-1], widths[1:]))

    @property
    def n_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_in, fan_out in self.layer_shapes)

    @property
    def arch(self) -> str:
        ''' Short label such as "4x50" (depth x width), or widths joined by "-" when uneven. '''
        if len(set(self.hidden_layers)) == 1:
            return f"{len(self.hidden_layers)}x{self.hidden_layers[0]}"
        return "-".join(str(w) for w in self.hidden_layers)

    @staticmethod
    def parse_arch(arch: str) -> List[int]:
        try:
            if "x" in arch:
                depth, width = arch.lower().split("x")
                return [int(width)] * int(depth)
            return [int(w) for w in arch.split("-")]
        except ValueError:
            raise ConfigurationError(f"cannot parse architecture '{arch}'") from None

    def replace(self, **changes: Any) -> 'NetworkSpec':
        data = self.to_dict()
        data.update(changes)
        return NetworkSpec.from_dict(data)

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'NetworkSpec':
        hidden = data.get('hidden_layers')
        if hidden is None and 'arch' in data:
            hidden = NetworkSpec.parse_arch(data['arch'])
        return NetworkSpec(
            input_width=data['input_width'],
            hidden_layers=list(hidden) if hidden is not None else [],
            output_width=data['output_width'],
            activation=data.get('activation', 'tanh'),
            initializer=data.get('initializer', 'glorot-uniform'),
            seed=data.get('seed', 0)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'input_width': self.input_width,
            'hidden_layers': list(self.hidden_layers),
            'output_width': self.output_width,
            'activation': self.activation,
            'initializer': self.initializer,
            'seed': self.seed
        }


class LayerSlot:
    ''' Index range of one weight matrix or bias vector inside the flat parameter array. '''
    def __init__(self, layer: int, kind: str, start: int, stop: int, shape: Tuple[int, ...]) -> None:
        self.layer: int = layer
        self.kind: str = kind
        self.start: int = start
        self.stop: int = stop
        self.shape: Tuple[int, ...] = tuple(shape)

    def __repr__(self) -> str:
        return f"LayerSlot({self.layer}, {self.kind}, {self.start}:{self.stop}, {self.shape})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, LayerSlot) and self.to_dict() == other.to_dict()

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> 'LayerSlot':
        return LayerSlot(data['layer'], data['kind'], data['start'], data['stop'], tuple(data['shape']))

    def to_dict(self) -> Dict[str, Any]:
        return {'layer': self.layer, 'kind': self.kind, 'start': self.start,
                'stop': self.stop, 'shape': list(self.shape)}


def parameter_layout(spec: NetworkSpec) -> List[LayerSlot]:
    slots: List[LayerSlot] = []
    offset = 0
    for layer, (fan_in, fan_out) in enumerate(spec.layer_shapes):
        slots.append(LayerSlot(layer, "weight", offset, offset + fan_in * fan_out, (fan_in, fan_out)))
        offset += fan_in * fan_out
        slots.append(LayerSlot(layer, "bias", offset, offset + fan_out, (fan_out,)))
        offset += fan_out
    return slots


class ParameterVector:
    ''' Flat float64 array of all weights and biases, with its layout. Immutable. '''
    def __init__(self, values: Any, layout: List[LayerSlot]) -> None:
        if not isinstance(layout, list) or not all(isinstance(s, LayerSlot) for s in layout):
            raise TypeError("layout must be a list of LayerSlot instances")
        arr = np.array(values, dtype=np.float64).ravel()
        expected = layout[-1].stop if layout else 0
        if arr.size != expected:
            raise ConfigurationError(f"parameter vector has {arr.size} entries, layout needs {expected}")
        arr.flags.writeable = False
        self.values: np.ndarray = arr
        self.layout: List[LayerSlot] = layout

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"ParameterVector({self.values.size} entries, {len(self.layout) // 2} layers)"

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, ParameterVector) and self.layout == other.layout
                and self.to_bytes() == other.to_bytes())

    def slot(self, layer: int, kind: str) -> LayerSlot:
        for s in self.layout:
            if s.layer == layer and s.kind == kind:
                return s
        raise KeyError(f"no {kind} for layer {layer}")

    def weights(self, layer: int) -> np.ndarray:
        s = self.slot(layer, "weight")
        return self.values[s.start:s.stop].reshape(s.shape)

    def bias(self, layer: int) -> np.ndarray:
        s = self.slot(layer, "bias")
        return self.values[s.start:s.stop]

    def with_values(self, values: Any) -> 'ParameterVector':
        return ParameterVector(values, self.layout)

    def to_bytes(self) -> bytes:
        return self.values.astype('<f8').tobytes()

    @staticmethod
    def from_bytes(data: bytes, layout: List[LayerSlot]) -> 'ParameterVector':
        return ParameterVector(np.frombuffer(data, dtype='<f8').astype(np.float64), layout)

    def layout_dict(self) -> List[Dict[str, Any]]:
        return [s.to_dict() for s in self.layout]

    @staticmethod
    def zeros(spec: NetworkSpec) -> 'ParameterVector':
        layout = parameter_layout(spec)
        return ParameterVector(np.zeros(spec.n_params), layout)

    @staticmethod
    def constant(spec: NetworkSpec, outputs: Any) -> 'ParameterVector':
        ''' All weights zero and the last bias set to `outputs`: a network constant in its inputs. '''
        layout = parameter_layout(spec)
        values = np.zeros(spec.n_params)
        last = layout[-1]
        values[last.start:last.stop] = np.broadcast_to(np.asarray(outputs, dtype=np.float64), last.shape)
        return ParameterVector(values, layout)

    @staticmethod
    def from_layers(spec: NetworkSpec, weights: Sequence[Any], biases: Sequence[Any]) -> 'ParameterVector':
        ''' Assemble a vector from per-layer weight matrices (fan_in x fan_out) and bias vectors. '''
        layout = parameter_layout(spec)
        chunks = []
        for layer, (fan_in, fan_out) in enumerate(spec.layer_shapes):
            w = np.asarray(weights[layer], dtype=np.float64)
            b = np.asarray(biases[layer], dtype=np.float64)
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ConfigurationError(f"layer {layer} expects weights {(fan_in, fan_out)} and bias {(fan_out,)}")
            chunks.extend([w.ravel(), b])
        return ParameterVector(np.concatenate(chunks), layout)


def init_params(spec: NetworkSpec) -> ParameterVector:
    """
    Weights uniform in (-limit, limit) with limit sqrt(6 / (fan_in + fan_out))
    for Glorot and sqrt(6 / fan_in) for He; biases zero. Reproducible from
    `spec.seed`.
    """
    if spec.initializer not in INITIALIZERS:
        raise ConfigurationError(f"unknown initializer '{spec.initializer}'")
    rng = np.random.default_rng(spec.seed)
    chunks = []
    for fan_in, fan_out in spec.layer_shapes:
        if spec.initializer == "glorot-uniform":
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        else:
            limit = np.sqrt(6.0 / fan_in)
        chunks.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParameterVector(np.concatenate(chunks), parameter_layout(spec))


# ------------------- Forward propagation -------------------
def _activate(name: str, jet: Jet) -> Jet:
    if name == "tanh":
        return jet.tanh()
    if name == "swish":
        return jet.swish()
    if name == "sin":
        return jet.sin()
    return jet


def activation_derivatives(name: str, x: Any) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ''' Activation value, first and second derivative at `x`. '''
    if name not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation '{name}'")
    x = np.asarray(x, dtype=np.float64)
    out = _activate(name, Jet(x, {0: np.ones_like(x)}, None, [(0, 0)]))
    shape = x.shape
    return (np.broadcast_to(value_of(out.value), shape),
            np.broadcast_to(value_of(out.first(0)), shape),
            np.broadcast_to(value_of(out.second(0, 0)), shape))


def _theta(params: Any) -> Any:
    if isinstance(params, Var):
        return params
    if isinstance(params, ParameterVector):
        return params.values
    return np.asarray(params, dtype=np.float64)


def _slot(theta: Any, slot: LayerSlot) -> Any:
    if isinstance(theta, Var):
        return theta.view(slot.start, slot.stop, slot.shape)
    return theta[slot.start:slot.stop].reshape(slot.shape)


def _as_points(point: Any, width: int) -> np.ndarray:
    points = np.asarray(point, dtype=np.float64)
    if points.ndim == 0:
        points = points.reshape(1, 1)
    elif points.ndim == 1:
        points = points.reshape(-1, 1) if width == 1 else points.reshape(1, -1)
    if points.ndim != 2 or points.shape[1] != width:
        raise ConfigurationError(f"points of shape {np.shape(point)} do not match input width {width}")
    return points


def forward_jet(spec: NetworkSpec, params: Any, jet: Jet) -> Jet:
    ''' Propagate an input jet through the network; the output jet has shape (n, output_width). '''
    theta = _theta(params)
    if theta.size != spec.n_params:
        raise ConfigurationError(f"network needs {spec.n_params} parameters, got {theta.size}")
    layout = parameter_layout(spec)
    n_layers = len(spec.layer_shapes)
    for layer in range(n_layers):
        jet = jet.linear(_slot(theta, layout[2 * layer])) + _slot(theta, layout[2 * layer + 1])
        if layer < n_layers - 1:
            jet = _activate(spec.activation, jet)
    return jet


def evaluate_with_input_derivatives(
    net: NetworkSpec,
    params: Any,
    point: Any,
    request: Any,
    axes: Optional[Sequence[str]] = None
) -> DerivativeBundle:
    """
    Network output at `point` (one point or an (n, input_width) batch) plus
    the requested input derivatives, e.g. request=("t", "tt"). Passing a
    `Var` as `params` keeps the whole bundle differentiable in the parameters;
    plain arrays give a numeric bundle. Arrays have shape (n, output_width).
    """
    points = _as_points(point, net.input_width)
    axes = tuple(axes) if axes is not None else default_axes(net.input_width)
    if len(axes) != net.input_width:
        raise ConfigurationError(f"{len(axes)} axis names given for input width {net.input_width}")
    req = request if isinstance(request, DerivativeRequest) else DerivativeRequest(request, axes)
    jet = forward_jet(net, params, req.seed(points))
    return DerivativeBundle.from_jet(jet, req)


# ------------------- Output heads -------------------
class Model:
    '''
    Maps parameters and input points to one `DerivativeBundle` per physical
    output. Subclasses decide how raw network outputs become physical fields.
    '''
    output_names: Tuple[str, ...] = ("u",)

    def __init__(self, spec: NetworkSpec, axes: Optional[Sequence[str]] = None) -> None:
        if not isinstance(spec, NetworkSpec):
            raise TypeError("spec must be a NetworkSpec instance")
        self.spec: NetworkSpec = spec
        self.axes: Tuple[str, ...] = tuple(axes) if axes is not None else default_axes(spec.input_width)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec!r})"

    def request(self, keys: Iterable[str]) -> DerivativeRequest:
        return DerivativeRequest(keys, self.axes)

    def __call__(self, params: Any, points: Any, request: Iterable[str] = ()) -> List[DerivativeBundle]:
        raise NotImplementedError("Subclasses must implement this method!")

    def init_params(self) -> ParameterVector:
        return init_params(self.spec)

    def predict(self, params: Any, points: Any) -> np.ndarray:
        ''' Output values only, shape (n, number of outputs). '''
        if isinstance(params, Var):
            params = params.value
        bundles = self(params, points, ())
        return np.stack([value_of(b.value) for b in bundles], axis=1)


class FeedForward(Model):
    ''' The plain network: one physical output per network output. '''
    def __init__(self, spec: NetworkSpec, axes: Optional[Sequence[str]] = None,
                 output_names: Optional[Sequence[str]] = None) -> None:
        super().__init__(spec, axes)
        if output_names is None:
            output_names = ("u",) if spec.output_width == 1 else tuple(f"u{k}" for k in range(spec.output_width))
        if len(output_names) != spec.output_width:
            raise ConfigurationError("one output name per network output is required")
        self.output_names = tuple(output_names)

    def __call__(self, params: Any, points: Any, request: Iterable[str] = ()) -> List[DerivativeBundle]:
        bundle = evaluate_with_input_derivatives(self.spec, params, points, self.request(request), self.axes)
        return [bundle.column(k) for k in range(self.spec.output_width)]


class HardICModel(Model):
    ''' y_hat(t) = y0 + t * y_theta(t): satisfies y_hat(0) = y0 for every parameter vector. '''
    def __init__(self, net: Any, y0: float) -> None:
        spec = net.spec if isinstance(net, Model) else net
        if not isinstance(spec, NetworkSpec):
            raise TypeError("net must be a NetworkSpec or Model instance")
        if spec.input_width != 1 or spec.output_width != 1:
            raise ConfigurationError("hard initial-condition head needs a network with one input and one output")
        super().__init__(spec)
        if not isinstance(y0, (int, float)):
            raise TypeError("y0 must be a number")
        self.y0: float = float(y0)
        self.output_names = ("y",)

    def __repr__(self) -> str:
        return f"HardICModel({self.spec!r}, y0={self.y0})"

    def __call__(self, params: Any, points: Any, request: Iterable[str] = ()) -> List[DerivativeBundle]:
        req = self.request(request)
        points = _as_points(points, 1)
        inner = forward_jet(self.spec, params, req.seed(points)).column(0)
        t = Jet.seed(points, req.first_axes).column(0)
        return [DerivativeBundle.from_jet(t * inner + self.y0, req)]


def wrap_hard_ic(net: Any, y0: float) -> HardICModel:
    return HardICModel(net, y0)


class StreamFunctionModel(Model):
    '''
    Network with outputs (psi, p) over (t, x, y). Velocities u = psi_y and
    v = -psi_x are divergence-free by construction. Only first derivatives of
    u and v are available, since they are second derivatives of psi.
    '''
    output_names = ("u", "v", "p")

    def __init__(self, spec: NetworkSpec) -> None:
        super().__init__(spec, ("t", "x", "y"))
        if spec.input_width != 3 or spec.output_width != 2:
            raise ConfigurationError("stream-function head needs input width 3 and output width 2")

    def __call__(self, params: Any, points: Any, request: Iterable[str] = ()) -> List[DerivativeBundle]:
        req = self.request(request)
        for key in req.keys:
            if len(key) > 1:
                raise CapabilityError(f"'{key}' of the velocities needs third derivatives of the stream function")
        inner_keys = ["x", "y"] + [a + k for k in req.keys for a in ("x", "y")]
        inner = self.request(inner_keys)
        jet = forward_jet(self.spec, params, inner.seed(_as_points(points, 3)))
        psi = DerivativeBundle.from_jet(jet.column(0), inner)
        u = DerivativeBundle(psi["y"], {k: psi[inner.canonical("y" + k)] for k in req.keys})
        v = DerivativeBundle(-psi["x"], {k: -psi[inner.canonical("x" + k)] for k in req.keys})
        p = DerivativeBundle.from_jet(jet.column(1), req)
        return [u, v, p]


def stream_function_velocities(net: NetworkSpec, params: Any, points: Any,
                               request: Iterable[str] = ("x", "y")) -> Tuple[DerivativeBundle, DerivativeBundle, DerivativeBundle]:
    u, v, p = StreamFunctionModel(net)(params, points, request)
    return u, v, p

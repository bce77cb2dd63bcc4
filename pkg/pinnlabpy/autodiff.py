"""
Exact nested differentiation for small fully-connected networks.

Reverse mode: a `Tape` records array-valued elementary operations performed on
`Var` objects and accumulates adjoints in reverse order of recording.

Forward mode: a `Jet` carries a value together with its first and second
derivatives along selected input axes (a truncated Taylor expansion). Jet
coefficients can themselves be `Var`s, so a residual assembled from input
derivatives remains differentiable with respect to the network parameters.
"""

import logging
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CapabilityError, ConfigurationError, NumericalError

logger = logging.getLogger(__name__)

MAX_INPUT_ORDER = 2


# ------------------- Primitives -------------------
class Primitive:
    ''' An elementary operation: forward evaluation plus its vector-Jacobian product. '''
    def __init__(self, name: str, forward: Callable[..., np.ndarray], vjp: Callable[..., Tuple[Any, ...]]) -> None:
        self.name: str = name
        self.forward = forward
        self.vjp = vjp

    def __repr__(self) -> str:
        return f"Primitive({self.name})"


PRIMITIVES: Dict[str, Primitive] = {}


def defprimitive(name: str, forward: Callable[..., np.ndarray], vjp: Callable[..., Tuple[Any, ...]]) -> Primitive:
    prim = Primitive(name, forward, vjp)
    PRIMITIVES[name] = prim
    return prim


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to the operand's shape."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # tanh form never overflows and gives sigmoid(0) == 0.5 exactly
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _scatter(shape: Tuple[int, ...], index: Any, g: np.ndarray) -> np.ndarray:
    out = np.zeros(shape)
    out[index] = g
    return out


def _view_vjp(g, out, args, needs, start, stop, shape):
    full = np.zeros(args[0].shape)
    full[start:stop] = g.ravel()
    return (full,)


defprimitive("add", lambda a, b: a + b,
             lambda g, out, args, needs: (_unbroadcast(g, args[0].shape) if needs[0] else None,
                                          _unbroadcast(g, args[1].shape) if needs[1] else None))
defprimitive("sub", lambda a, b: a - b,
             lambda g, out, args, needs: (_unbroadcast(g, args[0].shape) if needs[0] else None,
                                          _unbroadcast(-g, args[1].shape) if needs[1] else None))
defprimitive("mul", lambda a, b: a * b,
             lambda g, out, args, needs: (_unbroadcast(g * args[1], args[0].shape) if needs[0] else None,
                                          _unbroadcast(g * args[0], args[1].shape) if needs[1] else None))
defprimitive("div", lambda a, b: a / b,
             lambda g, out, args, needs: (_unbroadcast(g / args[1], args[0].shape) if needs[0] else None,
                                          _unbroadcast(-g * out / args[1], args[1].shape) if needs[1] else None))
defprimitive("neg", lambda a: -a, lambda g, out, args, needs: (-g,))
defprimitive("pow", lambda a, p: a ** p,
             lambda g, out, args, needs, p: (g * p * args[0] ** (p - 1.0),))
defprimitive("matmul", lambda a, b: a @ b,
             lambda g, out, args, needs: (g @ args[1].T if needs[0] else None,
                                          args[0].T @ g if needs[1] else None))
defprimitive("tanh", np.tanh, lambda g, out, args, needs: (g * (1.0 - out * out),))
defprimitive("sigmoid", _sigmoid, lambda g, out, args, needs: (g * out * (1.0 - out),))
defprimitive("sin", np.sin, lambda g, out, args, needs: (g * np.cos(args[0]),))
defprimitive("cos", np.cos, lambda g, out, args, needs: (-g * np.sin(args[0]),))
defprimitive("exp", np.exp, lambda g, out, args, needs: (g * out,))
defprimitive("sum", np.sum, lambda g, out, args, needs: (np.broadcast_to(g, args[0].shape),))
defprimitive("mean", np.mean, lambda g, out, args, needs: (np.broadcast_to(g / args[0].size, args[0].shape),))
defprimitive("take", lambda a, index: a[index],
             lambda g, out, args, needs, index: (_scatter(args[0].shape, index, g),))
defprimitive("reshape", lambda a, shape: a.reshape(shape),
             lambda g, out, args, needs, shape: (g.reshape(args[0].shape),))
defprimitive("view", lambda a, start, stop, shape: a[start:stop].reshape(shape), _view_vjp)


# ------------------- Tape -------------------
class Tape:
    '''
    Ordered record of elementary operations with enough information to replay
    the forward pass and to run reverse accumulation.
    '''
    def __init__(self) -> None:
        self._ops: List[Optional[Primitive]] = []
        self._parents: List[Tuple[Any, ...]] = []
        self._attrs: List[Dict[str, Any]] = []
        self._values: List[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._values)

    def __repr__(self) -> str:
        return f"Tape({len(self)} nodes)"

    def _push(self, op: Optional[Primitive], parents: Tuple[Any, ...], attrs: Dict[str, Any], value: np.ndarray) -> 'Var':
        self._ops.append(op)
        self._parents.append(parents)
        self._attrs.append(attrs)
        self._values.append(value)
        return Var(self, len(self._values) - 1, value)

    def variable(self, value: Any) -> 'Var':
        ''' Register an independent input (a leaf) on the tape. '''
        return self._push(None, (), {}, np.array(value, dtype=np.float64))

    def apply(self, name: str, *args: Any, **attrs: Any) -> 'Var':
        prim = PRIMITIVES[name]
        parents: List[Any] = []
        values: List[np.ndarray] = []
        for arg in args:
            if isinstance(arg, Var):
                if arg.tape is not self:
                    raise ConfigurationError("operands belong to different tapes")
                parents.append(arg.index)
                values.append(arg.value)
            else:
                const = np.asarray(arg, dtype=np.float64)
                parents.append(const)
                values.append(const)
        out = np.asarray(prim.forward(*values, **attrs), dtype=np.float64)
        return self._push(prim, tuple(parents), attrs, out)

    def _parent_values(self, parents: Tuple[Any, ...], values: Sequence[np.ndarray]) -> Tuple[np.ndarray, ...]:
        return tuple(values[p] if isinstance(p, int) else p for p in parents)

    def replay(self, leaves: Optional[Dict[int, np.ndarray]] = None) -> List[np.ndarray]:
        """
        Re-run every recorded operation in order. Leaves take their recorded
        value unless overridden through `leaves` (node index -> value).
        """
        leaves = leaves or {}
        values: List[np.ndarray] = []
        for i, op in enumerate(self._ops):
            if op is None:
                values.append(np.asarray(leaves.get(i, self._values[i]), dtype=np.float64))
                continue
            args = self._parent_values(self._parents[i], values)
            values.append(np.asarray(op.forward(*args, **self._attrs[i]), dtype=np.float64))
        return values

    def backward(self, output: 'Var', wrt: Sequence['Var']) -> List[np.ndarray]:
        """
        Reverse accumulation from `output`. Returns one adjoint per entry of
        `wrt`, shaped like that variable; unreached variables get zeros.
        """
        if output.tape is not self:
            raise ConfigurationError("output does not belong to this tape")
        adjoints: List[Optional[np.ndarray]] = [None] * len(self._values)
        adjoints[output.index] = np.ones_like(output.value)
        keep = {w.index for w in wrt}
        for i in range(output.index, -1, -1):
            g = adjoints[i]
            op = self._ops[i]
            if g is None or op is None:
                continue
            parents = self._parents[i]
            args = self._parent_values(parents, self._values)
            needs = tuple(isinstance(p, int) for p in parents)
            grads = op.vjp(g, self._values[i], args, needs, **self._attrs[i])
            for p, gp in zip(parents, grads):
                if not isinstance(p, int) or gp is None:
                    continue
                adjoints[p] = gp if adjoints[p] is None else adjoints[p] + gp
            # interior adjoints are no longer needed once propagated
            if i not in keep:
                adjoints[i] = None
        return [np.array(adjoints[w.index]) if adjoints[w.index] is not None else np.zeros_like(w.value)
                for w in wrt]


class Var:
    ''' An array value recorded on a `Tape`. Arithmetic on it records further nodes. '''
    __slots__ = ("tape", "index", "value")
    # defer ndarray-op-Var expressions to the reflected Var operators
    __array_ufunc__ = None

    def __init__(self, tape: Tape, index: int, value: np.ndarray) -> None:
        self.tape: Tape = tape
        self.index: int = index
        self.value: np.ndarray = value

    def __repr__(self) -> str:
        return f"Var(#{self.index}, shape={self.value.shape})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def __float__(self) -> float:
        return float(self.value)

    def __add__(self, other: Any) -> 'Var':
        return self.tape.apply("add", self, other)

    def __radd__(self, other: Any) -> 'Var':
        return self.tape.apply("add", other, self)

    def __sub__(self, other: Any) -> 'Var':
        return self.tape.apply("sub", self, other)

    def __rsub__(self, other: Any) -> 'Var':
        return self.tape.apply("sub", other, self)

    def __mul__(self, other: Any) -> 'Var':
        return self.tape.apply("mul", self, other)

    def __rmul__(self, other: Any) -> 'Var':
        return self.tape.apply("mul", other, self)

    def __truediv__(self, other: Any) -> 'Var':
        return self.tape.apply("div", self, other)

    def __rtruediv__(self, other: Any) -> 'Var':
        return self.tape.apply("div", other, self)

    def __neg__(self) -> 'Var':
        return self.tape.apply("neg", self)

    def __pos__(self) -> 'Var':
        return self

    def __pow__(self, p: Any) -> 'Var':
        if isinstance(p, Var):
            raise CapabilityError("only constant exponents are supported")
        return self.tape.apply("pow", self, p=float(p))

    def __matmul__(self, other: Any) -> 'Var':
        return self.tape.apply("matmul", self, other)

    def __rmatmul__(self, other: Any) -> 'Var':
        return self.tape.apply("matmul", other, self)

    def __getitem__(self, index: Any) -> 'Var':
        return self.tape.apply("take", self, index=index)

    def sum(self) -> 'Var':
        return self.tape.apply("sum", self)

    def mean(self) -> 'Var':
        return self.tape.apply("mean", self)

    def reshape(self, *shape: Any) -> 'Var':
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.apply("reshape", self, shape=tuple(shape))

    def view(self, start: int, stop: int, shape: Tuple[int, ...]) -> 'Var':
        ''' Contiguous slice `[start:stop]` of a flat variable, reshaped. '''
        return self.tape.apply("view", self, start=start, stop=stop, shape=tuple(shape))


# ------------------- Elementwise functions (Var or plain arrays) -------------------
def _elementwise(name: str, numeric: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def fn(x: Any) -> Any:
        if isinstance(x, Var):
            return x.tape.apply(name, x)
        return numeric(np.asarray(x, dtype=np.float64))
    fn.__name__ = name
    return fn


tanh = _elementwise("tanh", np.tanh)
sigmoid = _elementwise("sigmoid", _sigmoid)
sin = _elementwise("sin", np.sin)
cos = _elementwise("cos", np.cos)
exp = _elementwise("exp", np.exp)


def value_of(x: Any) -> np.ndarray:
    ''' Numeric content of a `Var` or array-like. '''
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def mean_square(x: Any) -> Any:
    if isinstance(x, Var):
        return (x * x).mean()
    arr = np.asarray(x, dtype=np.float64)
    return float(np.mean(arr * arr))


# ------------------- Jets -------------------
Coefficient = Any  # Var, ndarray or float; None stands for an exact zero


def _plus(*terms: Coefficient) -> Coefficient:
    total = None
    for term in terms:
        if term is None:
            continue
        total = term if total is None else total + term
    return total


def _times(*factors: Coefficient) -> Coefficient:
    out = None
    for factor in factors:
        if factor is None:
            return None
        out = factor if out is None else out * factor
    return out


def _pair(i: int, j: int) -> Tuple[int, int]:
    return (i, j) if i <= j else (j, i)


class Jet:
    '''
    Second-order truncated Taylor expansion of a quantity with respect to the
    input axes. `d1[k]` is the derivative along axis k, `d2[(i, j)]` (i <= j)
    the mixed second derivative; absent entries are exactly zero. `pairs`
    lists the second-order entries that are propagated.
    '''
    __slots__ = ("value", "d1", "d2", "pairs")

    def __init__(
        self,
        value: Coefficient,
        d1: Optional[Dict[int, Coefficient]] = None,
        d2: Optional[Dict[Tuple[int, int], Coefficient]] = None,
        pairs: Optional[Iterable[Tuple[int, int]]] = None
    ) -> None:
        self.value = value
        self.d1: Dict[int, Coefficient] = {k: c for k, c in (d1 or {}).items() if c is not None}
        self.d2: Dict[Tuple[int, int], Coefficient] = {}
        for (i, j), c in (d2 or {}).items():
            if c is not None:
                self.d2[_pair(i, j)] = c
        tracked = set(_pair(i, j) for i, j in (pairs or ()))
        tracked.update(self.d2)
        self.pairs: Tuple[Tuple[int, int], ...] = tuple(sorted(tracked))

    def __repr__(self) -> str:
        return f"Jet(d1={sorted(self.d1)}, d2={list(self.pairs)})"

    @staticmethod
    def seed(points: np.ndarray, axes: Iterable[int], pairs: Iterable[Tuple[int, int]] = ()) -> 'Jet':
        """
        Jet of the raw network input: value = points (n, d), derivative along
        each seeded axis k is the unit vector e_k, all second derivatives zero.
        """
        points = np.asarray(points, dtype=np.float64)
        d1 = {}
        for k in axes:
            unit = np.zeros_like(points)
            unit[..., k] = 1.0
            d1[k] = unit
        return Jet(points, d1, None, pairs)

    def first(self, axis: int) -> Coefficient:
        return self.d1.get(axis, 0.0)

    def second(self, i: int, j: int) -> Coefficient:
        return self.d2.get(_pair(i, j), 0.0)

    def linear(self, weights: Any) -> 'Jet':
        ''' Right-multiply every coefficient by a matrix (inputs-independent). '''
        return Jet(
            self.value @ weights,
            {k: c @ weights for k, c in self.d1.items()},
            {p: c @ weights for p, c in self.d2.items()},
            self.pairs,
        )

    def column(self, k: int) -> 'Jet':
        return Jet(
            self.value[:, k],
            {a: c[:, k] for a, c in self.d1.items()},
            {p: c[:, k] for p, c in self.d2.items()},
            self.pairs,
        )

    def compose(self, f: Coefficient, df: Coefficient, d2f: Coefficient) -> 'Jet':
        """
        Chain rule for an elementwise function given f, f' and f'' evaluated
        at this jet's value.
        """
        d1 = {k: _times(df, c) for k, c in self.d1.items()}
        d2 = {}
        for (i, j) in self.pairs:
            d2[(i, j)] = _plus(_times(d2f, self.d1.get(i), self.d1.get(j)), _times(df, self.d2.get((i, j))))
        return Jet(f, d1, d2, self.pairs)

    # elementwise functions
    def tanh(self) -> 'Jet':
        s = tanh(self.value)
        ds = 1.0 - s * s
        return self.compose(s, ds, -2.0 * s * ds)

    def sigmoid(self) -> 'Jet':
        s = sigmoid(self.value)
        ds = s * (1.0 - s)
        return self.compose(s, ds, ds * (1.0 - 2.0 * s))

    def swish(self) -> 'Jet':
        x = self.value
        s = sigmoid(x)
        ds = s * (1.0 - s)
        return self.compose(x * s, s + x * ds, ds * (2.0 + x * (1.0 - 2.0 * s)))

    def sin(self) -> 'Jet':
        s = sin(self.value)
        c = cos(self.value)
        return self.compose(s, c, -s)

    def cos(self) -> 'Jet':
        s = sin(self.value)
        c = cos(self.value)
        return self.compose(c, -s, -c)

    def exp(self) -> 'Jet':
        e = exp(self.value)
        return self.compose(e, e, e)

    # arithmetic
    def __add__(self, other: Any) -> 'Jet':
        if isinstance(other, Jet):
            keys = set(self.d1) | set(other.d1)
            pairs = set(self.pairs) | set(other.pairs)
            return Jet(
                self.value + other.value,
                {k: _plus(self.d1.get(k), other.d1.get(k)) for k in keys},
                {p: _plus(self.d2.get(p), other.d2.get(p)) for p in pairs},
                pairs,
            )
        return Jet(self.value + other, self.d1, self.d2, self.pairs)

    __radd__ = __add__

    def __neg__(self) -> 'Jet':
        return Jet(-self.value, {k: -c for k, c in self.d1.items()},
                   {p: -c for p, c in self.d2.items()}, self.pairs)

    def __sub__(self, other: Any) -> 'Jet':
        return self + (-other)

    def __rsub__(self, other: Any) -> 'Jet':
        return (-self) + other

    def __mul__(self, other: Any) -> 'Jet':
        if isinstance(other, Jet):
            a, b = self, other
            keys = set(a.d1) | set(b.d1)
            pairs = set(a.pairs) | set(b.pairs)
            d1 = {k: _plus(_times(a.d1.get(k), b.value), _times(a.value, b.d1.get(k))) for k in keys}
            d2 = {}
            for (i, j) in pairs:
                d2[(i, j)] = _plus(
                    _times(a.d2.get((i, j)), b.value),
                    _times(a.d1.get(i), b.d1.get(j)),
                    _times(a.d1.get(j), b.d1.get(i)),
                    _times(a.value, b.d2.get((i, j))),
                )
            return Jet(a.value * b.value, d1, d2, pairs)
        return Jet(self.value * other, {k: c * other for k, c in self.d1.items()},
                   {p: c * other for p, c in self.d2.items()}, self.pairs)

    __rmul__ = __mul__


# ------------------- Derivative requests and bundles -------------------
class DerivativeRequest:
    '''
    Which input derivatives to produce. Keys are strings of axis names, e.g.
    "t", "tt", "xx" or "xy" (mixed); the empty string is the value itself.
    '''
    def __init__(self, keys: Iterable[str], axes: Sequence[str]) -> None:
        if isinstance(keys, str):
            keys = [keys]
        self.axes: Tuple[str, ...] = tuple(axes)
        canonical = []
        for key in keys:
            if not isinstance(key, str):
                raise TypeError("derivative keys must be strings")
            if len(key) > MAX_INPUT_ORDER:
                raise CapabilityError(f"derivative '{key}' has order {len(key)}; at most {MAX_INPUT_ORDER} is supported")
            for name in key:
                if name not in self.axes:
                    raise ConfigurationError(f"derivative '{key}' refers to unknown axis '{name}' (axes: {self.axes})")
            canonical.append(self.canonical(key))
        self.keys: Tuple[str, ...] = tuple(dict.fromkeys(k for k in canonical if k))

    def __repr__(self) -> str:
        return f"DerivativeRequest({list(self.keys)}, axes={self.axes})"

    def canonical(self, key: str) -> str:
        return "".join(sorted(key, key=self.axes.index))

    @property
    def first_axes(self) -> Tuple[int, ...]:
        return tuple(sorted({self.axes.index(name) for key in self.keys for name in key}))

    @property
    def pairs(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(_pair(self.axes.index(k[0]), self.axes.index(k[1])) for k in self.keys if len(k) == 2)

    def seed(self, points: np.ndarray) -> Jet:
        return Jet.seed(points, self.first_axes, self.pairs)


class DerivativeBundle:
    ''' A network output value together with requested input derivatives, keyed like `DerivativeRequest`. '''
    def __init__(self, value: Any, derivatives: Optional[Dict[str, Any]] = None) -> None:
        self.value = value
        self.derivatives: Dict[str, Any] = dict(derivatives or {})

    def __repr__(self) -> str:
        return f"DerivativeBundle(keys={sorted(self.derivatives)})"

    def __contains__(self, key: str) -> bool:
        return key == "" or key in self.derivatives

    def __getitem__(self, key: str) -> Any:
        if key == "":
            return self.value
        try:
            return self.derivatives[key]
        except KeyError:
            raise ConfigurationError(f"derivative '{key}' missing from bundle (has: {sorted(self.derivatives)})") from None

    derivative = __getitem__

    def keys(self) -> List[str]:
        return list(self.derivatives)

    def column(self, k: int) -> 'DerivativeBundle':
        return DerivativeBundle(self.value[:, k], {key: c[:, k] for key, c in self.derivatives.items()})

    def numpy(self) -> 'DerivativeBundle':
        return DerivativeBundle(value_of(self.value), {key: value_of(c) for key, c in self.derivatives.items()})

    @staticmethod
    def from_values(value: Any, **derivatives: Any) -> 'DerivativeBundle':
        ''' Numeric bundle from plain numbers, e.g. `from_values(0.0, tt=0.0)`. '''
        return DerivativeBundle(np.asarray(value, dtype=np.float64),
                                {k: np.asarray(v, dtype=np.float64) for k, v in derivatives.items()})

    @staticmethod
    def from_jet(jet: Jet, request: DerivativeRequest) -> 'DerivativeBundle':
        derivatives = {}
        for key in request.keys:
            idx = [request.axes.index(name) for name in key]
            coeff = jet.first(idx[0]) if len(idx) == 1 else jet.second(idx[0], idx[1])
            if not isinstance(coeff, Var):
                coeff = np.broadcast_to(np.asarray(coeff, dtype=np.float64), value_of(jet.value).shape)
            derivatives[key] = coeff
        return DerivativeBundle(jet.value, derivatives)


# ------------------- Gradients with respect to parameters -------------------
def value_and_gradient(loss: Callable[[Var], Any], params: Any) -> Tuple[float, np.ndarray]:
    """
    Evaluate `loss(theta)` on a fresh tape and return its value and
    d loss / d theta. `params` is a ParameterVector or a flat array.
    """
    values = np.array(getattr(params, "values", params), dtype=np.float64)
    tape = Tape()
    theta = tape.variable(values)
    out = loss(theta)
    if not isinstance(out, Var):
        # the loss never touched theta
        return float(np.asarray(out)), np.zeros_like(values)
    if out.size != 1:
        raise ConfigurationError(f"loss must be scalar, got shape {out.shape}")
    if not np.isfinite(out.value):
        raise NumericalError("non-finite loss value")
    (grad,) = tape.backward(out, [theta])
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericalError(f"non-finite gradient entry {bad}")
    return float(out.value), grad


def loss_gradient(loss: Callable[[Var], Any], params: Any) -> Any:
    ''' d loss / d theta with the same length and layout as `params`. '''
    _, grad = value_and_gradient(loss, params)
    if hasattr(params, "with_values"):
        return params.with_values(grad)
    return grad

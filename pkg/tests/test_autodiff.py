import numpy as np
import pytest

from pinnlabpy import CapabilityError, ConfigurationError, NumericalError
from pinnlabpy.autodiff import (
    DerivativeBundle,
    DerivativeRequest,
    Jet,
    Tape,
    loss_gradient,
    mean_square,
    tanh,
    value_and_gradient,
)


def close(a, b, rtol=1e-5, atol=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.all(np.abs(a - b) <= rtol * np.abs(b) + atol)


def numeric_gradient(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        grad.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def test_square_sum_gradient():
    tape = Tape()
    x = tape.variable([1.0, -2.0, 3.0])
    out = (x * x).sum()
    (g,) = tape.backward(out, [x])
    assert np.array_equal(g, [2.0, -4.0, 6.0])


def test_matmul_and_tanh_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 3))
    w0 = rng.normal(size=(3, 2))

    def f(w):
        return float(np.sum(np.tanh(a @ w) ** 2))

    tape = Tape()
    w = tape.variable(w0)
    h = tanh(a @ w)
    (g,) = tape.backward((h * h).sum(), [w])
    assert close(g, numeric_gradient(f, w0))


def test_division_and_power_gradients():
    def loss(theta):
        return (theta[0] / theta[1] + theta[2] ** 3.0).sum()

    x = np.array([1.5, 0.7, -0.4])
    _, grad = value_and_gradient(loss, x)
    assert close(grad, [1 / 0.7, -1.5 / 0.7 ** 2, 3 * 0.4 ** 2])


def test_unreached_variable_gets_zero_adjoint():
    tape = Tape()
    x = tape.variable(2.0)
    y = tape.variable([1.0, 1.0])
    gx, gy = tape.backward(x * 3.0, [x, y])
    assert gx == 3.0
    assert np.array_equal(gy, [0.0, 0.0])


def test_operands_from_different_tapes_are_rejected():
    a = Tape().variable(1.0)
    b = Tape().variable(1.0)
    with pytest.raises(ConfigurationError):
        a + b


def test_replay_with_new_leaf_values():
    tape = Tape()
    x = tape.variable(2.0)
    y = x * x + 1.0
    values = tape.replay({x.index: np.array(3.0)})
    assert values[y.index] == 10.0
    assert len(tape) == 3


def test_variable_exponent_is_not_supported():
    tape = Tape()
    x = tape.variable(2.0)
    with pytest.raises(CapabilityError):
        x ** x


def test_ndarray_on_the_left_records_on_the_tape():
    tape = Tape()
    x = tape.variable([1.0, 2.0])
    out = np.array([3.0, 4.0]) * x
    (g,) = tape.backward(out.sum(), [x])
    assert np.array_equal(g, [3.0, 4.0])


def test_jet_of_tanh_carries_first_and_second_derivative():
    x = np.linspace(-2.0, 2.0, 7).reshape(-1, 1)
    jet = Jet.seed(x, [0], [(0, 0)]).tanh()
    s = np.tanh(x)
    assert close(jet.first(0), 1 - s * s, atol=1e-15)
    assert close(jet.second(0, 0), -2 * s * (1 - s * s), atol=1e-15)


def test_jet_product_rule_for_mixed_derivative():
    # f(t, x) = t * x  ->  f_tx = 1, f_tt = f_xx = 0
    points = np.array([[0.3, -1.2], [2.0, 0.5]])
    seed = Jet.seed(points, [0, 1], [(0, 1), (0, 0), (1, 1)])
    f = seed.column(0) * seed.column(1)
    assert np.array_equal(f.value, points[:, 0] * points[:, 1])
    assert np.array_equal(f.first(0), points[:, 1])
    assert np.array_equal(f.first(1), points[:, 0])
    assert np.array_equal(f.second(1, 0), [1.0, 1.0])
    assert np.all(f.second(0, 0) == 0.0)


def test_derivative_request_canonical_keys():
    req = DerivativeRequest(["xt", "t", "tt", "t"], ("t", "x"))
    assert req.keys == ("tx", "t", "tt")
    assert req.first_axes == (0, 1)
    assert set(req.pairs) == {(0, 1), (0, 0)}


def test_third_order_request_is_a_capability_error():
    with pytest.raises(CapabilityError):
        DerivativeRequest(["ttt"], ("t",))


def test_unknown_axis_is_a_configuration_error():
    with pytest.raises(ConfigurationError):
        DerivativeRequest(["z"], ("t", "x"))


def test_bundle_missing_key_names_available_keys():
    bundle = DerivativeBundle.from_values([1.0, 2.0], t=[0.0, 0.0])
    assert np.array_equal(bundle[""], [1.0, 2.0])
    assert "t" in bundle and "tt" not in bundle
    with pytest.raises(ConfigurationError) as e:
        bundle["tt"]
    assert "'t'" in str(e.value)


def test_gradient_of_loss_that_ignores_parameters_is_zero():
    value, grad = value_and_gradient(lambda theta: 4.0, np.ones(3))
    assert value == 4.0
    assert np.array_equal(grad, np.zeros(3))


def test_non_finite_loss_raises_numerical_error():
    with pytest.raises(NumericalError):
        value_and_gradient(lambda theta: (theta * np.inf).sum(), np.ones(2))


def test_loss_gradient_keeps_flat_shape():
    grad = loss_gradient(lambda theta: mean_square(theta - 1.0), np.array([0.0, 2.0, 1.0, 3.0]))
    assert np.allclose(grad, [-0.5, 0.5, 0.0, 1.0])


def test_gradient_of_a_square():
    assert loss_gradient(lambda theta: (theta * theta).sum(), np.array([3.0]))[0] == 6.0


def test_mean_square_on_plain_arrays():
    assert mean_square(np.array([3.0, 4.0])) == 12.5

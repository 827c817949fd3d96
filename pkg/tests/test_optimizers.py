import numpy as np
import pytest

from riskseq.errors import InvalidArgumentError
from riskseq.tensor_autonet import init_optimizer, optimizer_step
from riskseq.tensor_autonet.network import ModelParams


def make_params(rng) -> ModelParams:
    return ModelParams(w=rng.normal(size=(3, 2)), b=rng.normal(size=2))


@pytest.mark.parametrize("variant", ["adadelta", "adam"])
def test_zero_gradient_leaves_params_unchanged(variant, rng):
    params = make_params(rng)
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    state = init_optimizer(variant, params)
    for _ in range(3):
        new_params, state = optimizer_step(state, params, grads)
        for name in params:
            np.testing.assert_array_equal(new_params[name], params[name])
    assert state.step == 3


def test_adam_first_step_is_signed_learning_rate(rng):
    params = make_params(rng)
    grads = {name: rng.normal(size=value.shape) for name, value in params.items()}
    state = init_optimizer("adam", params, learning_rate=0.01)
    new_params, _ = optimizer_step(state, params, grads)
    for name, grad in grads.items():
        expected = params[name] - 0.01 * grad / (np.abs(grad) + 1e-8)
        np.testing.assert_allclose(new_params[name], expected, rtol=1e-10, atol=1e-14)


def test_adadelta_first_step(rng):
    params = make_params(rng)
    grads = {name: rng.normal(size=value.shape) for name, value in params.items()}
    state = init_optimizer("adadelta", params)
    new_params, new_state = optimizer_step(state, params, grads)
    rho, eps = 0.95, 1e-6
    for name, grad in grads.items():
        sq_grad = (1 - rho) * grad**2
        delta = -np.sqrt(eps) / np.sqrt(sq_grad + eps) * grad
        np.testing.assert_allclose(new_params[name], params[name] + delta, rtol=1e-12)
        np.testing.assert_allclose(new_state.slots["sq_update"][name], (1 - rho) * delta**2, rtol=1e-12)


@pytest.mark.parametrize("variant", ["adadelta", "adam"])
def test_step_is_pure_and_deterministic(variant, rng):
    params = make_params(rng)
    grads = {name: rng.normal(size=value.shape) for name, value in params.items()}
    state = init_optimizer(variant, params)
    before = {name: value.copy() for name, value in params.items()}
    slots_before = {key: {n: v.copy() for n, v in slot.items()} for key, slot in state.slots.items()}

    a, state_a = optimizer_step(state, params, grads)
    b, state_b = optimizer_step(state, params, grads)

    for name in params:
        assert a[name].tobytes() == b[name].tobytes()
        np.testing.assert_array_equal(params[name], before[name])
    for key, slot in state.slots.items():
        for name in slot:
            np.testing.assert_array_equal(slot[name], slots_before[key][name])
    assert state.step == 0 and state_a.step == state_b.step == 1


def test_adam_descends_a_quadratic():
    params = ModelParams(x=np.array([3.0, -2.0]))
    state = init_optimizer("adam", params, learning_rate=0.1)
    for _ in range(300):
        params, state = optimizer_step(state, params, {"x": 2 * params["x"]})
    np.testing.assert_allclose(params["x"], 0.0, atol=0.05)


def test_unknown_variant_and_bad_learning_rate(rng):
    with pytest.raises(InvalidArgumentError):
        init_optimizer("sgd", make_params(rng))
    with pytest.raises(InvalidArgumentError):
        init_optimizer("adam", make_params(rng), learning_rate=0.0)


def test_misshaped_gradient(rng):
    params = make_params(rng)
    state = init_optimizer("adam", params)
    with pytest.raises(InvalidArgumentError, match="w"):
        optimizer_step(state, params, {"w": np.zeros((2, 3)), "b": np.zeros(2)})
    with pytest.raises(InvalidArgumentError):
        optimizer_step(state, params, {"w": np.zeros((3, 2))})

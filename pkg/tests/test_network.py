import math

import numpy as np
import pytest

from riskseq.errors import CacheConsumedError, InvalidArgumentError, NumericalError
from riskseq.tensor_autonet import (
    ConvNetConfig,
    backward,
    flatten,
    forward,
    guided_backprop,
    init_params,
    loss_bce,
    loss_bce_grad_logit,
    predict,
    unflatten,
)
from riskseq.tensor_autonet.network import _block_forward, check_params, zeros_like

MINI = ConvNetConfig(8, 8, block1_filters=3, block2_filters=4)


def test_param_shapes_and_projection():
    shapes = ConvNetConfig(12, 12).param_shapes()
    assert shapes["block1.conv1.weight"] == (3, 3, 1, 32)
    assert shapes["block1.proj.weight"] == (1, 32)
    assert shapes["block2.proj.weight"] == (32, 64)
    assert shapes["head.fc.weight"] == (64, 1)
    same = ConvNetConfig(8, 8, block1_filters=1, block2_filters=1).param_shapes()
    assert "block1.proj.weight" not in same and "block2.proj.weight" not in same


def test_config_rejects_small_inputs():
    with pytest.raises(InvalidArgumentError):
        ConvNetConfig(3, 8)


def test_zero_params_give_one_half(rng):
    params = zeros_like(init_params(MINI, rng))
    prob, _ = forward(params, MINI, rng.normal(size=(7, 8, 8)))
    assert prob.shape == (7,)
    np.testing.assert_array_equal(prob, np.full(7, 0.5))


def test_no_cross_sample_leakage(rng):
    params = init_params(MINI, rng)
    batch = rng.random((5, 8, 8, 1))
    single, _ = forward(params, MINI, batch)
    doubled, _ = forward(params, MINI, np.concatenate([batch, batch]))
    np.testing.assert_allclose(doubled[:5], single, rtol=0, atol=1e-15)
    np.testing.assert_allclose(doubled[5:], single, rtol=0, atol=1e-15)


def test_forward_is_deterministic_and_in_open_interval(rng):
    params = init_params(MINI, rng)
    batch = rng.normal(size=(6, 8, 8)) * 3
    a, _ = forward(params, MINI, batch)
    b, _ = forward(params, MINI, batch)
    assert a.tobytes() == b.tobytes()
    assert np.all((a > 0) & (a < 1))


def test_forward_shape_mismatch(rng):
    params = init_params(MINI, rng)
    with pytest.raises(InvalidArgumentError):
        forward(params, MINI, np.zeros((2, 9, 8)))


def test_forward_rejects_nan(rng):
    params = init_params(MINI, rng)
    batch = np.zeros((1, 8, 8))
    batch[0, 3, 3] = np.nan
    with pytest.raises(NumericalError):
        forward(params, MINI, batch)


def test_loss_values():
    assert loss_bce(np.array([0.5, 0.5]), np.array([1, 0])) == pytest.approx(math.log(2))
    assert loss_bce(np.array([0.8]), np.array([1]), pos_weight=2.0) == pytest.approx(-2 * math.log(0.8))
    assert loss_bce(np.array([1.0, 0.0]), np.array([1, 0])) == pytest.approx(0.0, abs=1e-10)


def test_loss_grad_logit_matches_finite_differences(rng):
    logits = rng.normal(size=6)
    labels = np.array([1, 0, 1, 1, 0, 0])
    prob = 1 / (1 + np.exp(-logits))
    grad = loss_bce_grad_logit(prob, labels, pos_weight=3.0)
    h = 1e-6
    for k in range(6):
        plus, minus = logits.copy(), logits.copy()
        plus[k] += h
        minus[k] -= h
        numeric = (
            loss_bce(1 / (1 + np.exp(-plus)), labels, 3.0) - loss_bce(1 / (1 + np.exp(-minus)), labels, 3.0)
        ) / (2 * h)
        assert grad[k] == pytest.approx(numeric, rel=1e-6, abs=1e-10)


def test_head_gradient_closed_form(rng):
    params = init_params(MINI, rng)
    batch = rng.random((4, 8, 8))
    labels = np.array([1, 0, 0, 1])
    prob, cache = forward(params, MINI, batch)
    grads = backward(cache, loss_bce_grad_logit(prob, labels))
    expected = cache.features.T @ ((prob - labels) / 4)[:, None]
    np.testing.assert_allclose(grads["head.fc.weight"], expected, rtol=1e-12, atol=1e-15)
    assert grads["head.fc.bias"][0] == pytest.approx(np.sum(prob - labels) / 4, rel=1e-12)


def test_zero_upstream_gives_zero_gradients(rng):
    params = init_params(MINI, rng)
    _, cache = forward(params, MINI, rng.random((3, 8, 8)))
    grads = backward(cache, np.zeros(3))
    assert list(grads) == list(params)
    for name, grad in grads.items():
        assert grad.shape == params[name].shape
        assert not grad.any()


def test_cache_cannot_be_reused(rng):
    params = init_params(MINI, rng)
    _, cache = forward(params, MINI, rng.random((2, 8, 8)))
    backward(cache, np.ones(2))
    with pytest.raises(CacheConsumedError):
        backward(cache, np.ones(2))


def activation_pattern(cache) -> list[np.ndarray]:
    pattern = [cache.pool_argmax]
    for saved in cache.blocks.values():
        pattern += [saved["z1"] > 0, saved["z_out"] > 0]
    return pattern


def same_pattern(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    # absolute floor keeps round-off on near-zero coordinates from dominating
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_central_differences(seed):
    rng = np.random.default_rng(seed)
    params = init_params(MINI, rng)
    for name in params:
        if name.endswith(".bias"):
            params[name] = rng.normal(scale=0.1, size=params[name].shape)
    batch = rng.normal(size=(3, 8, 8))
    labels = np.array([1, 0, 1])

    prob, cache = forward(params, MINI, batch)
    analytic = flatten(backward(cache, loss_bce_grad_logit(prob, labels)))

    vector = flatten(params)
    base = activation_pattern(forward(params, MINI, batch)[1])
    numeric = np.zeros_like(vector)
    smooth = np.ones(vector.size, dtype=bool)
    h = 1e-5
    for k in range(vector.size):
        plus, minus = vector.copy(), vector.copy()
        plus[k] += h
        minus[k] -= h
        prob_plus, cache_plus = forward(unflatten(plus, MINI), MINI, batch)
        prob_minus, cache_minus = forward(unflatten(minus, MINI), MINI, batch)
        # a step across a ReLU kink or a max-pool switch has no finite-difference oracle
        smooth[k] = same_pattern(base, activation_pattern(cache_plus)) and same_pattern(
            base, activation_pattern(cache_minus)
        )
        numeric[k] = (loss_bce(prob_plus, labels) - loss_bce(prob_minus, labels)) / (2 * h)

    assert smooth.mean() >= 0.95
    errors = relative_errors(analytic[smooth], numeric[smooth])
    assert errors.max() < 1e-5
    assert np.mean(errors < 1e-6) >= 0.99


def test_flatten_round_trip(rng):
    params = init_params(MINI, rng)
    restored = unflatten(flatten(params), MINI)
    assert list(restored) == list(params)
    for name in params:
        assert restored[name].tobytes() == params[name].tobytes()
    with pytest.raises(InvalidArgumentError):
        unflatten(np.zeros(3), MINI)


def test_check_params_detects_mismatch(rng):
    params = init_params(MINI, rng)
    check_params(params, MINI)
    with pytest.raises(InvalidArgumentError):
        check_params(params, ConvNetConfig(8, 8, block1_filters=2, block2_filters=4))


def test_zeroed_residual_branch_leaves_projected_skip(rng):
    params = init_params(MINI, rng)
    for suffix in ("conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"):
        params[f"block1.{suffix}"] = np.zeros_like(params[f"block1.{suffix}"])
    x = rng.normal(size=(2, 8, 8, 1))
    out, _ = _block_forward(params, "block1", x)
    np.testing.assert_allclose(out, np.maximum(x @ params["block1.proj.weight"], 0.0), rtol=0, atol=1e-15)


def test_predict_batches_and_empty_input(rng):
    params = init_params(MINI, rng)
    images = rng.random((10, 8, 8))
    whole, _ = forward(params, MINI, images)
    np.testing.assert_allclose(predict(params, MINI, images, batch_size=3), whole, rtol=0, atol=1e-15)
    assert predict(params, MINI, np.zeros((0, 8, 8))).shape == (0,)


def test_saliency_of_zero_input_is_zero(rng):
    params = init_params(MINI, rng)
    saliency = guided_backprop(params, MINI, np.zeros((8, 8)))
    assert saliency.shape == (8, 8)
    assert not saliency.any()


def test_guided_equals_plain_gradient_with_nonnegative_weights(rng):
    params = init_params(MINI, rng)
    for name in params:
        params[name] = np.abs(params[name])
    image = rng.random((8, 8))
    guided = guided_backprop(params, MINI, image)
    plain = guided_backprop(params, MINI, image, guided=False)
    np.testing.assert_array_equal(guided, plain)
    assert plain.any()


def test_plain_saliency_is_input_gradient_of_logit(rng):
    params = init_params(MINI, rng)
    image = rng.random((8, 8))
    plain = guided_backprop(params, MINI, image, guided=False)

    def logit(x):
        _, cache = forward(params, MINI, x[None])
        return cache.logits[0]

    h = 1e-6
    base = activation_pattern(forward(params, MINI, image[None])[1])
    for i, j in ((0, 0), (3, 4), (7, 7), (5, 1)):
        plus, minus = image.copy(), image.copy()
        plus[i, j] += h
        minus[i, j] -= h
        if not (same_pattern(base, activation_pattern(forward(params, MINI, plus[None])[1]))
                and same_pattern(base, activation_pattern(forward(params, MINI, minus[None])[1]))):
            continue
        assert plain[i, j] == pytest.approx((logit(plus) - logit(minus)) / (2 * h), rel=1e-5, abs=1e-8)


def test_saliency_is_deterministic(rng):
    params = init_params(MINI, rng)
    image = rng.random((8, 8))
    assert guided_backprop(params, MINI, image).tobytes() == guided_backprop(params, MINI, image).tobytes()

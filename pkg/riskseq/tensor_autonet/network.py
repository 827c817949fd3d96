"""
The small ResNet-style binary classifier and its reverse-mode differentiation.

Architecture, for an H x W single-channel input:

    block1: conv3x3(1 -> F1) -> ReLU -> conv3x3(F1 -> F1), plus skip, -> ReLU
    maxpool 2x2
    block2: conv3x3(F1 -> F2) -> ReLU -> conv3x3(F2 -> F2), plus skip, -> ReLU
    global average pool -> fully connected (F2 -> 1, with bias) -> sigmoid

The skip joins the input and the output of the two convolutions of a block. It is the
identity when channel counts agree and a learned 1 x 1 projection (no bias) otherwise.
ReLU follows the addition.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from riskseq.errors import CacheConsumedError, InvalidArgumentError
from riskseq.tensor_autonet import layers
from riskseq.tensor_autonet.layers import check_finite

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12

ModelParams = OrderedDict  # name -> np.ndarray, in a stable order
Gradients = OrderedDict


@dataclass(frozen=True)
class ConvNetConfig:
    """
    Shape of the network.

    Attributes:
        input_h, input_w (int): Input size, each >= 4.
        block1_filters (int): Filters of the first two convolutions.
        block2_filters (int): Filters of the last two convolutions.
    """

    input_h: int
    input_w: int
    block1_filters: int = 32
    block2_filters: int = 64

    def __post_init__(self):
        if self.input_h < 4 or self.input_w < 4:
            raise InvalidArgumentError(f"input must be at least 4 x 4, got {self.input_h} x {self.input_w}")
        if self.block1_filters < 1 or self.block2_filters < 1:
            raise InvalidArgumentError("filter counts must be positive")

    def block_channels(self) -> list[tuple[str, int, int]]:
        return [("block1", 1, self.block1_filters), ("block2", self.block1_filters, self.block2_filters)]

    def param_shapes(self) -> "OrderedDict[str, tuple[int, ...]]":
        shapes = OrderedDict()
        for name, c_in, c_out in self.block_channels():
            shapes[f"{name}.conv1.weight"] = (3, 3, c_in, c_out)
            shapes[f"{name}.conv1.bias"] = (c_out,)
            shapes[f"{name}.conv2.weight"] = (3, 3, c_out, c_out)
            shapes[f"{name}.conv2.bias"] = (c_out,)
            if c_in != c_out:
                shapes[f"{name}.proj.weight"] = (c_in, c_out)
        shapes["head.fc.weight"] = (self.block2_filters, 1)
        shapes["head.fc.bias"] = (1,)
        return shapes


def init_params(config: ConvNetConfig, rng: np.random.Generator) -> ModelParams:
    """Fan-in scaled uniform (He) weights, zero biases."""
    params = ModelParams()
    for name, shape in config.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def zeros_like(params: ModelParams) -> ModelParams:
    return ModelParams((name, np.zeros_like(value)) for name, value in params.items())


def copy_params(params: ModelParams) -> ModelParams:
    return ModelParams((name, value.copy()) for name, value in params.items())


def flatten(params: ModelParams) -> np.ndarray:
    return np.concatenate([value.reshape(-1) for value in params.values()])


def unflatten(vector: np.ndarray, config: ConvNetConfig) -> ModelParams:
    shapes = config.param_shapes()
    total = sum(int(np.prod(shape)) for shape in shapes.values())
    if vector.size != total:
        raise InvalidArgumentError(f"parameter vector has {vector.size} values, config needs {total}")
    params = ModelParams()
    offset = 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        params[name] = vector[offset:offset + size].reshape(shape).copy()
        offset += size
    return params


def check_params(params: ModelParams, config: ConvNetConfig):
    expected = config.param_shapes()
    if list(params) != list(expected):
        raise InvalidArgumentError(f"parameter names {list(params)} do not match config {list(expected)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise InvalidArgumentError(f"layer {name} has shape {params[name].shape}, config needs {shape}")


@dataclass
class ForwardCache:
    """Activations retained by forward() for a single backward pass."""

    input_shape: tuple[int, ...]
    blocks: dict[str, dict] = field(default_factory=dict)
    pool_argmax: np.ndarray | None = None
    pool_input_shape: tuple[int, ...] = ()
    gap_input_shape: tuple[int, ...] = ()
    features: np.ndarray | None = None
    logits: np.ndarray | None = None
    params: ModelParams | None = None
    consumed: bool = False


def _block_forward(params: ModelParams, name: str, x: np.ndarray) -> tuple[np.ndarray, dict]:
    z1, windows1 = layers.conv3x3_forward(x, params[f"{name}.conv1.weight"], params[f"{name}.conv1.bias"])
    h1 = layers.relu_forward(z1)
    z2, windows2 = layers.conv3x3_forward(h1, params[f"{name}.conv2.weight"], params[f"{name}.conv2.bias"])
    proj_name = f"{name}.proj.weight"
    skip = layers.project_forward(x, params[proj_name]) if proj_name in params else x
    z_out = z2 + skip
    out = layers.relu_forward(z_out)
    check_finite(name, out)
    return out, {"x": x, "z1": z1, "windows1": windows1, "windows2": windows2, "z_out": z_out}


def _block_backward(
    params: ModelParams, name: str, grad_out: np.ndarray, saved: dict, grads: Gradients, guided: bool
) -> np.ndarray:
    grad_z = layers.relu_backward(grad_out, saved["z_out"], guided)
    grad_h1, grads[f"{name}.conv2.weight"], grads[f"{name}.conv2.bias"] = layers.conv3x3_backward(
        grad_z, saved["windows2"], params[f"{name}.conv2.weight"]
    )
    grad_z1 = layers.relu_backward(grad_h1, saved["z1"], guided)
    grad_x, grads[f"{name}.conv1.weight"], grads[f"{name}.conv1.bias"] = layers.conv3x3_backward(
        grad_z1, saved["windows1"], params[f"{name}.conv1.weight"]
    )
    proj_name = f"{name}.proj.weight"
    if proj_name in params:
        grad_skip, grads[proj_name] = layers.project_backward(grad_z, saved["x"], params[proj_name])
    else:
        grad_skip = grad_z
    return grad_x + grad_skip


def forward(params: ModelParams, config: ConvNetConfig, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """
    Runs the network on a batch.

    Args:
        params (ModelParams): Network parameters.
        config (ConvNetConfig): Network shape.
        batch (np.ndarray): Inputs [B, H, W, 1] (or [B, H, W], a channel axis is added).

    Returns:
        tuple: Probabilities [B] in (0, 1) and the cache for backward().
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 3:
        batch = batch[..., None]
    if batch.ndim != 4 or batch.shape[1:] != (config.input_h, config.input_w, 1):
        raise InvalidArgumentError(
            f"batch shape {batch.shape} does not match [B, {config.input_h}, {config.input_w}, 1]"
        )
    check_finite("input", batch)

    cache = ForwardCache(input_shape=batch.shape, params=params)
    x, cache.blocks["block1"] = _block_forward(params, "block1", batch)
    cache.pool_input_shape = x.shape
    x, cache.pool_argmax = layers.maxpool2x2_forward(x)
    x, cache.blocks["block2"] = _block_forward(params, "block2", x)
    cache.gap_input_shape = x.shape
    cache.features = layers.global_avg_pool_forward(x)
    logits = (cache.features @ params["head.fc.weight"])[:, 0] + params["head.fc.bias"][0]
    cache.logits = check_finite("logits", logits)
    return layers.sigmoid(logits), cache


def _backprop(cache: ForwardCache, grad_logit: np.ndarray, guided: bool) -> tuple[Gradients, np.ndarray]:
    if cache.consumed:
        raise CacheConsumedError("this forward cache was already used by a backward pass")
    cache.consumed = True
    params = cache.params

    grad_logit = np.asarray(grad_logit, dtype=np.float64).reshape(-1)
    if grad_logit.shape != cache.logits.shape:
        raise InvalidArgumentError(f"gradient shape {grad_logit.shape} does not match logits {cache.logits.shape}")

    grads = Gradients()
    grads["head.fc.weight"] = cache.features.T @ grad_logit[:, None]
    grads["head.fc.bias"] = np.array([grad_logit.sum()])
    grad_features = grad_logit[:, None] * params["head.fc.weight"][:, 0][None, :]

    grad = layers.global_avg_pool_backward(grad_features, cache.gap_input_shape)
    grad = _block_backward(params, "block2", grad, cache.blocks["block2"], grads, guided)
    grad = layers.maxpool2x2_backward(grad, cache.pool_argmax, cache.pool_input_shape)
    grad_input = _block_backward(params, "block1", grad, cache.blocks["block1"], grads, guided)

    ordered = Gradients((name, check_finite(f"gradient of {name}", grads[name])) for name in params)
    return ordered, grad_input


def backward(cache: ForwardCache, grad_logit: np.ndarray) -> Gradients:
    """
    Gradients of a scalar loss with respect to every parameter.

    Args:
        cache (ForwardCache): Cache of a matching forward(); consumed by this call.
        grad_logit (np.ndarray): dLoss/dlogit per sample, shape [B].

    Returns:
        Gradients: Same names and shapes as the parameters.
    """
    grads, _ = _backprop(cache, grad_logit, guided=False)
    return grads


def loss_bce(prob: np.ndarray, labels: np.ndarray, pos_weight: float = 1.0) -> float:
    """
    Mean weighted binary cross-entropy, -[w y log p + (1 - y) log(1 - p)].

    Probabilities are clamped to [1e-12, 1 - 1e-12].
    """
    if pos_weight < 0:
        raise InvalidArgumentError(f"pos_weight must be >= 0, got {pos_weight}")
    prob = np.clip(np.asarray(prob, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    labels = np.asarray(labels, dtype=np.float64)
    losses = -(pos_weight * labels * np.log(prob) + (1.0 - labels) * np.log(1.0 - prob))
    return float(check_finite("loss", losses).mean())


def loss_bce_grad_logit(prob: np.ndarray, labels: np.ndarray, pos_weight: float = 1.0) -> np.ndarray:
    """Gradient of loss_bce() with respect to the logits (unclamped)."""
    prob = np.asarray(prob, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    return (-pos_weight * labels * (1.0 - prob) + (1.0 - labels) * prob) / prob.size


def predict(params: ModelParams, config: ConvNetConfig, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Probabilities for many inputs, evaluated in batches."""
    images = np.asarray(images, dtype=np.float64)
    outputs = []
    for start in range(0, len(images), batch_size):
        prob, _ = forward(params, config, images[start:start + batch_size])
        outputs.append(prob)
    return np.concatenate(outputs) if outputs else np.zeros(0)


def guided_backprop(params: ModelParams, config: ConvNetConfig, image: np.ndarray, guided: bool = True) -> np.ndarray:
    """
    Saliency of the pre-sigmoid logit with respect to a single input.

    Args:
        params (ModelParams): Network parameters.
        config (ConvNetConfig): Network shape.
        image (np.ndarray): One input, [H, W] or [H, W, 1].
        guided (bool): Apply the guided rule at every ReLU; False gives the plain gradient.

    Returns:
        np.ndarray: Saliency shaped [H, W].
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[..., 0]
    if image.shape != (config.input_h, config.input_w):
        raise InvalidArgumentError(f"input shape {image.shape} does not match {(config.input_h, config.input_w)}")
    _, cache = forward(params, config, image[None])
    _, grad_input = _backprop(cache, np.ones(1), guided=guided)
    return grad_input[0, :, :, 0]

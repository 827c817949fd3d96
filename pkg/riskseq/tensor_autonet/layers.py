"""
Forward and backward passes of the layers used by the network, on NHWC float64 arrays.

Every forward function returns its output and whatever the backward pass needs; every
backward function takes the upstream gradient and returns gradients with respect to its
inputs and parameters.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from riskseq.errors import NumericalError


def check_finite(name: str, array: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"non-finite values in {name}")
    return array


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Zero-padded 3 x 3 convolution with stride 1.

    Args:
        x (np.ndarray): Input [B, H, W, C].
        weight (np.ndarray): Kernels [3, 3, C, O].
        bias (np.ndarray): Bias [O].

    Returns:
        tuple: Output [B, H, W, O] and the im2col windows [B, H, W, C, 3, 3].
    """
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))
    out = np.tensordot(windows, weight, axes=([3, 4, 5], [2, 0, 1])) + bias
    return out, windows


def conv3x3_backward(
    grad_out: np.ndarray, windows: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns:
        tuple: (grad_x [B, H, W, C], grad_weight [3, 3, C, O], grad_bias [O]).
    """
    grad_weight = np.tensordot(windows, grad_out, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
    grad_bias = grad_out.sum(axis=(0, 1, 2))

    batch, height, width, _ = grad_out.shape
    channels = weight.shape[2]
    grad_padded = np.zeros((batch, height + 2, width + 2, channels))
    for i in range(3):
        for j in range(3):
            grad_padded[:, i:i + height, j:j + width, :] += grad_out @ weight[i, j].T
    return grad_padded[:, 1:-1, 1:-1, :], grad_weight, grad_bias


def project_forward(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """1 x 1 convolution without bias; weight is [C, O]."""
    return x @ weight


def project_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    grad_weight = np.tensordot(x, grad_out, axes=([0, 1, 2], [0, 1, 2]))
    return grad_out @ weight.T, grad_weight


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, pre_activation: np.ndarray, guided: bool = False) -> np.ndarray:
    """
    Passes the gradient where the pre-activation is positive.

    With guided=True the gradient is also zeroed where it is negative itself, the guided
    backpropagation rule.
    """
    mask = pre_activation > 0
    if guided:
        mask &= grad_out > 0
    return np.where(mask, grad_out, 0.0)


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    2 x 2 max pooling with stride 2; odd trailing rows/columns are dropped.

    Ties go to the first window element in row-major order.

    Returns:
        tuple: Output [B, H//2, W//2, C] and the argmax within each window.
    """
    batch, height, width, channels = x.shape
    h2, w2 = height // 2, width // 2
    cropped = x[:, :2 * h2, :2 * w2, :]
    windows = cropped.reshape(batch, h2, 2, w2, 2, channels).transpose(0, 1, 3, 5, 2, 4)
    windows = windows.reshape(batch, h2, w2, channels, 4)
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, argmax


def maxpool2x2_backward(grad_out: np.ndarray, argmax: np.ndarray, input_shape: tuple[int, ...]) -> np.ndarray:
    batch, height, width, channels = input_shape
    h2, w2 = height // 2, width // 2
    routed = np.zeros((batch, h2, w2, channels, 4))
    np.put_along_axis(routed, argmax[..., None], grad_out[..., None], axis=-1)
    routed = routed.reshape(batch, h2, w2, channels, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    grad_x = np.zeros(input_shape)
    grad_x[:, :2 * h2, :2 * w2, :] = routed.reshape(batch, 2 * h2, 2 * w2, channels)
    return grad_x


def global_avg_pool_forward(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(1, 2))


def global_avg_pool_backward(grad_out: np.ndarray, input_shape: tuple[int, ...]) -> np.ndarray:
    _, height, width, _ = input_shape
    return np.broadcast_to(grad_out[:, None, None, :] / (height * width), input_shape).copy()


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)

"""Adadelta and Adam, as pure functions of (state, params, grads)."""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from riskseq.errors import InvalidArgumentError
from riskseq.tensor_autonet.network import Gradients, ModelParams, copy_params, zeros_like

OptimizerName = Literal["adadelta", "adam"]


@dataclass
class OptimizerState:
    """
    Optimizer hyperparameters plus per-parameter shadow tensors.

    Attributes:
        variant (str): "adadelta" or "adam".
        hyper (dict[str, float]): rho/eps/lr for Adadelta; lr/beta1/beta2/eps for Adam.
        slots (dict[str, ModelParams]): Accumulators ("sq_grad", "sq_update") or moments
            ("m", "v"), each shaped like the parameters.
        step (int): Number of updates applied.
    """

    variant: OptimizerName
    hyper: dict[str, float]
    slots: dict[str, ModelParams] = field(default_factory=dict)
    step: int = 0


ADADELTA_DEFAULTS = {"lr": 1.0, "rho": 0.95, "eps": 1e-6}
ADAM_DEFAULTS = {"lr": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}


def init_optimizer(variant: OptimizerName, params: ModelParams, learning_rate: float | None = None) -> OptimizerState:
    """Fresh optimizer state for `params`; learning_rate overrides the variant's default."""
    if variant == "adadelta":
        hyper = dict(ADADELTA_DEFAULTS)
        slots = {"sq_grad": zeros_like(params), "sq_update": zeros_like(params)}
    elif variant == "adam":
        hyper = dict(ADAM_DEFAULTS)
        slots = {"m": zeros_like(params), "v": zeros_like(params)}
    else:
        raise InvalidArgumentError(f"unknown optimizer {variant!r}")
    if learning_rate is not None:
        if learning_rate <= 0:
            raise InvalidArgumentError(f"learning rate must be positive, got {learning_rate}")
        hyper["lr"] = float(learning_rate)
    return OptimizerState(variant, hyper, slots)


def _check_shapes(state: OptimizerState, params: ModelParams, grads: Gradients):
    for name, value in params.items():
        if name not in grads or grads[name].shape != value.shape:
            raise InvalidArgumentError(f"gradient for {name} is missing or misshaped")
        for slot in state.slots.values():
            if slot[name].shape != value.shape:
                raise InvalidArgumentError(f"optimizer slot for {name} does not match its parameter")


def optimizer_step(
    state: OptimizerState, params: ModelParams, grads: Gradients
) -> tuple[ModelParams, OptimizerState]:
    """
    Applies one update. Inputs are left untouched; new params and state are returned.

    Adadelta:
        E[g^2] <- rho E[g^2] + (1 - rho) g^2
        dx     <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
        x      <- x + lr * dx

    Adam:
        m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
        x <- x - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """
    _check_shapes(state, params, grads)
    hyper = state.hyper
    new_params = copy_params(params)
    new_slots = {key: copy_params(slot) for key, slot in state.slots.items()}
    step = state.step + 1

    for name in params:
        grad = grads[name]
        if state.variant == "adadelta":
            rho, eps = hyper["rho"], hyper["eps"]
            sq_grad = rho * new_slots["sq_grad"][name] + (1.0 - rho) * grad**2
            delta = -np.sqrt(new_slots["sq_update"][name] + eps) / np.sqrt(sq_grad + eps) * grad
            new_slots["sq_grad"][name] = sq_grad
            new_slots["sq_update"][name] = rho * new_slots["sq_update"][name] + (1.0 - rho) * delta**2
            new_params[name] = params[name] + hyper["lr"] * delta
        else:
            beta1, beta2 = hyper["beta1"], hyper["beta2"]
            m = beta1 * new_slots["m"][name] + (1.0 - beta1) * grad
            v = beta2 * new_slots["v"][name] + (1.0 - beta2) * grad**2
            new_slots["m"][name] = m
            new_slots["v"][name] = v
            m_hat = m / (1.0 - beta1**step)
            v_hat = v / (1.0 - beta2**step)
            new_params[name] = params[name] - hyper["lr"] * m_hat / (np.sqrt(v_hat) + hyper["eps"])

    return new_params, OptimizerState(state.variant, dict(hyper), new_slots, step)

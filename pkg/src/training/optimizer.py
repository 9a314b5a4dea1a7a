"""
Adam with bias correction.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from ..autodiff import Parameter
from ..layers import ParameterFormatError, load_parameters, save_parameters
from .config import AdamConfig

logger = logging.getLogger(__name__)

STEP_KEY = "__step__"


class NonFiniteGradientError(FloatingPointError):
    """A gradient contains NaN or Inf."""

    def __init__(self, name: str, count: int):
        super().__init__(f"Non-finite gradient for parameter '{name}' ({count} entries)")
        self.name = name
        self.count = count


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def check_finite(grads: Mapping[str, Optional[np.ndarray]]) -> None:
    """
    Raises:
        NonFiniteGradientError: Naming the first parameter with NaN/Inf entries
    """
    for name, grad in grads.items():
        if grad is None:
            continue
        bad = int(np.count_nonzero(~np.isfinite(grad)))
        if bad:
            raise NonFiniteGradientError(name, bad)


def global_norm(grads: Mapping[str, Optional[np.ndarray]]) -> float:
    total = sum(float(np.square(g, dtype=np.float64).sum()) for g in grads.values() if g is not None)
    return float(np.sqrt(total))


def clip_by_global_norm(grads: Dict[str, Optional[np.ndarray]], max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most max_norm. Returns the norm before clipping."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for name, grad in grads.items():
            if grad is not None:
                grads[name] = grad * grad.dtype.type(scale)
    return norm


def adam_step(
    params: Mapping[str, Parameter],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    config: AdamConfig,
) -> AdamState:
    """
    One Adam update, in place on the parameters.

    Parameters without a gradient (or not trainable) are left untouched and
    their moments are not advanced. Every gradient is checked before any
    parameter changes.

    Raises:
        NonFiniteGradientError: If any gradient has NaN/Inf entries
        ValueError: If a gradient's shape differs from its parameter's
    """
    check_finite(grads)
    state.step += 1
    t = state.step
    correction1 = 1.0 - config.beta1 ** t
    correction2 = 1.0 - config.beta2 ** t

    for name, param in params.items():
        grad = grads.get(name)
        if grad is None or not param.trainable:
            continue
        if grad.shape != param.shape:
            raise ValueError(f"Gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        m = config.beta1 * m + (1.0 - config.beta1) * grad
        v = config.beta2 * v + (1.0 - config.beta2) * np.square(grad)
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (config.lr * m_hat / (np.sqrt(v_hat) + config.eps)).astype(param.data.dtype)
        state.m[name] = m.astype(param.data.dtype, copy=False)
        state.v[name] = v.astype(param.data.dtype, copy=False)
    return state


def save_adam_state(state: AdamState, path: Union[str, Path]) -> Path:
    """Store moments and step count in the parameter container format."""
    tensors: Dict[str, np.ndarray] = {STEP_KEY: np.array([state.step], dtype=np.float64)}
    for name, m in state.m.items():
        tensors[f"m/{name}"] = m
        tensors[f"v/{name}"] = state.v[name]
    return save_parameters(tensors, path)


def load_adam_state(path: Union[str, Path]) -> AdamState:
    """
    Raises:
        FileNotFoundError: If the file does not exist
        ParameterFormatError: If the step counter is missing
    """
    tensors = load_parameters(path)
    if STEP_KEY not in tensors:
        raise ParameterFormatError(f"{path}: not an optimizer state (no step counter)")
    state = AdamState(step=int(tensors.pop(STEP_KEY)[0]))
    for key, value in tensors.items():
        kind, _, name = key.partition("/")
        (state.m if kind == "m" else state.v)[name] = value
    logger.info(f"Loaded optimizer state from {path} at step {state.step}")
    return state

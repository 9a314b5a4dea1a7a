"""
Finite-difference gradient checks.

Each check compares the analytic directional derivative <grad, d> against
the central difference (f(x + h d) - f(x - h d)) / 2h along a random unit
direction d. Intended for float64 inputs.
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .context import Context
from .tape import Op, as_tuple

DEFAULT_STEP = 1e-5
DEFAULT_RTOL = 1e-6


@dataclass
class GradCheckResult:
    name: str
    analytic: float
    numerical: float
    rel_error: float
    passed: bool


def relative_error(a: float, b: float, floor: float = 1e-10) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """max|a - b| / max(max|a|, max|b|), the gradient equivalence metric."""
    if a.shape != b.shape:
        raise ValueError(f"Cannot compare shapes {a.shape} and {b.shape}")
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def _unit_direction(shape, rng: np.random.Generator) -> np.ndarray:
    d = rng.standard_normal(shape)
    return d / np.linalg.norm(d)


def check_directional(
    name: str,
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    grad: np.ndarray,
    rng: np.random.Generator,
    h: float = DEFAULT_STEP,
    rtol: float = DEFAULT_RTOL,
) -> GradCheckResult:
    """Check grad = df/dx along one random direction. x is not modified."""
    d = _unit_direction(x.shape, rng).astype(x.dtype)
    analytic = float(np.sum(grad * d))
    numerical = (f(x + h * d) - f(x - h * d)) / (2 * h)
    err = relative_error(analytic, numerical)
    return GradCheckResult(name, analytic, numerical, err, err <= rtol)


def check_op(
    op: Op,
    inputs: Sequence[np.ndarray],
    seed: int = 0,
    h: float = DEFAULT_STEP,
    rtol: float = DEFAULT_RTOL,
    wrt: Optional[Sequence[int]] = None,
) -> List[GradCheckResult]:
    """
    Check an op's input and parameter gradients.

    The scalar objective is sum_k <w_k, y_k> with fixed random weights w_k
    over the op outputs y_k.

    Args:
        op: Op under test
        inputs: Float64 inputs
        seed: Seed for the weights and directions
        wrt: Input indices to check (all floating inputs by default)

    Returns:
        One result per checked input and parameter
    """
    rng = np.random.default_rng(seed)
    inputs = [np.array(x, copy=True) for x in inputs]
    outputs = as_tuple(op(*inputs))
    weights = [rng.standard_normal(y.shape) for y in outputs]

    def objective(args: Sequence[np.ndarray]) -> float:
        ys = as_tuple(op(*args))
        return float(sum(np.sum(w * y) for w, y in zip(weights, ys)))

    for param in op.parameters():
        param.zero_grad()
    ctx = Context(recording=True, training=False)
    op.forward(ctx, *inputs)
    grad_inputs = as_tuple(op.backward(ctx, *weights))

    if wrt is None:
        wrt = [k for k, x in enumerate(inputs) if np.issubdtype(x.dtype, np.floating)]

    results: List[GradCheckResult] = []
    for k in wrt:
        def f(value: np.ndarray, k: int = k) -> float:
            args = list(inputs)
            args[k] = value
            return objective(args)

        results.append(check_directional(f"input[{k}]", f, inputs[k], grad_inputs[k], rng, h, rtol))

    for param in op.parameters():
        original = param.data.copy()
        grad = param.grad.copy()

        def f(value: np.ndarray, param=param) -> float:
            param.data[...] = value
            return objective(inputs)

        results.append(check_directional(param.name, f, original, grad, rng, h, rtol))
        param.data[...] = original
    return results

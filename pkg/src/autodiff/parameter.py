"""Trainable leaf tensors."""
import numpy as np

from ..tensor import ShapeError


class Parameter:
    """A named trainable tensor with its gradient accumulator."""

    def __init__(self, name: str, data: np.ndarray, trainable: bool = True):
        self.name = name
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self) -> None:
        if self.grad.shape != self.data.shape or self.grad.dtype != self.data.dtype:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0)

    def accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"Gradient for '{self.name}' has shape {tuple(grad.shape)}, expected {tuple(self.data.shape)}"
            )
        self.grad += grad

    def assign(self, value: np.ndarray) -> None:
        """Replace the value in place (shape and dtype preserved)."""
        if value.shape != self.data.shape:
            raise ShapeError(
                f"Cannot assign shape {tuple(value.shape)} to parameter '{self.name}' of shape {tuple(self.data.shape)}"
            )
        self.data[...] = value

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={tuple(self.data.shape)}, dtype={self.data.dtype})"

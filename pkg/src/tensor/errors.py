"""Validation errors raised by tensor kernels."""


class ShapeError(ValueError):
    """Shape, rank or channel mismatch, or a non-integral output extent."""


class PrecisionError(ValueError):
    """Tensors of different precisions were mixed in one computation."""

"""Errors raised by the differentiation engine."""


class AutodiffError(RuntimeError):
    """The tape was used out of protocol (e.g. backward before forward)."""


class InverseMismatchError(AutodiffError):
    """A reconstructed activation diverged from the checksum recorded in forward."""

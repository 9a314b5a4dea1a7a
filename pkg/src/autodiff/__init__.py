"""
Reverse-mode differentiation over a static graph.

This package provides:
- Tape / Op: graph construction and policy-driven forward / backward
- StoragePolicy: store, checkpoint or invertible activation storage
- ActivationMeter: exact stored-activation accounting
- profile_memory: one-step peak memory report
- check_op: finite-difference gradient checks
"""
from .context import ActivationMeter, Context
from .errors import AutodiffError, InverseMismatchError
from .parameter import Parameter
from .policy import NodePolicy, Section, StoragePolicy
from .tape import Gradients, Node, Op, Tape, Value, as_tuple
from .profiler import LayerMemory, MemoryReport, format_memory_table, memory_report, profile_memory
from .gradcheck import GradCheckResult, check_directional, check_op, max_relative_error

__all__ = [
    "ActivationMeter",
    "Context",
    "AutodiffError",
    "InverseMismatchError",
    "Parameter",
    "NodePolicy",
    "Section",
    "StoragePolicy",
    "Gradients",
    "Node",
    "Op",
    "Tape",
    "Value",
    "as_tuple",
    "LayerMemory",
    "MemoryReport",
    "format_memory_table",
    "memory_report",
    "profile_memory",
    "GradCheckResult",
    "check_directional",
    "check_op",
    "max_relative_error",
]

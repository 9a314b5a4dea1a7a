"""
Activation memory profiling.

Runs one forward/backward step of a tape under a storage regime and reports
the exact peak number of stored activation scalars.
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..tensor import Precision
from .policy import StoragePolicy
from .tape import Tape

logger = logging.getLogger(__name__)


class LayerMemory(BaseModel):
    """Stored scalars attributed to one node at the moment of the peak."""
    layer: str
    stored_scalars: int


class MemoryReport(BaseModel):
    """Peak activation memory of one training step."""
    model: str
    policy: StoragePolicy
    precision: Precision
    peak_stored_scalars: int = Field(..., ge=0)
    peak_bytes: int = Field(..., ge=0)
    recompute_count: int = Field(0, ge=0)
    per_layer: List[LayerMemory] = Field(default_factory=list)

    @property
    def peak_megabytes(self) -> float:
        return self.peak_bytes / 2 ** 20

    def to_text(self, top: int = 10) -> str:
        lines = [
            f"Model: {self.model}",
            f"Policy: {self.policy.value} ({self.precision.value})",
            f"Peak stored scalars: {self.peak_stored_scalars:,}",
            f"Peak bytes: {self.peak_bytes:,} ({self.peak_megabytes:.2f} MiB)",
            f"Recomputed evaluations: {self.recompute_count}",
        ]
        if self.per_layer:
            lines.append("Largest holders at peak:")
            ranked = sorted(self.per_layer, key=lambda item: item.stored_scalars, reverse=True)
            for item in ranked[:top]:
                lines.append(f"  {item.layer:<40} {item.stored_scalars:>14,}")
        return "\n".join(lines)


def memory_report(tape: Tape) -> MemoryReport:
    """Snapshot the tape's meter after a forward/backward step."""
    meter = tape.meter
    return MemoryReport(
        model=tape.name,
        policy=tape.regime or StoragePolicy.INVERTIBLE,
        precision=tape.precision,
        peak_stored_scalars=meter.peak,
        peak_bytes=meter.peak_bytes,
        recompute_count=meter.recompute_count,
        per_layer=[LayerMemory(layer=k, stored_scalars=v) for k, v in meter.peak_breakdown.items()],
    )


def profile_memory(
    tape: Tape,
    regime: StoragePolicy,
    *inputs: np.ndarray,
    output_grads: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> MemoryReport:
    """
    Measure one training step of the tape under the given regime.

    Args:
        tape: Built tape
        regime: Storage regime to plan with
        *inputs: Graph inputs
        output_grads: Gradients for the outputs (ones when omitted)

    Returns:
        MemoryReport for the step
    """
    outputs = tape.forward(*inputs, regime=regime, training=True)
    if output_grads is None:
        output_grads = [np.ones_like(out) for out in outputs]
    tape.backward(*output_grads)

    report = memory_report(tape)
    logger.info(
        f"{tape.name} [{report.policy.value}]: peak {report.peak_stored_scalars:,} scalars, "
        f"{report.recompute_count} recomputations"
    )
    return report


def format_memory_table(reports: Dict[str, Dict[StoragePolicy, MemoryReport]]) -> str:
    """Render row label x policy peak stored scalars as a plain text table."""
    policies = [StoragePolicy.STORE, StoragePolicy.CHECKPOINT, StoragePolicy.INVERTIBLE]
    width = max([24] + [len(label) + 2 for label in reports])
    header = f"{'model':<{width}}" + "".join(f"{p.value:>16}" for p in policies)
    lines = [header, "-" * len(header)]
    for label, by_policy in reports.items():
        cells = []
        for policy in policies:
            report = by_policy.get(policy)
            cells.append(f"{report.peak_stored_scalars:>16,}" if report else f"{'-':>16}")
        lines.append(f"{label:<{width}}" + "".join(cells))
    return "\n".join(lines)

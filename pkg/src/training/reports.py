"""
Structured run reports (JSON documents plus a text rendering).
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

from ..autodiff import MemoryReport, StoragePolicy
from ..losses import LossWeights
from ..tensor import Precision
from .evaluation import EvaluationReport

logger = logging.getLogger(__name__)


class StepRecord(BaseModel):
    """Loss components of one optimizer step; total = weights . (ce, dice, l2, kl)."""
    step: int = Field(..., ge=1)
    total: float
    ce: float
    dice: float
    l2: float = 0.0
    kl: float = 0.0


class TrainReport(BaseModel):
    model: str
    policy: StoragePolicy
    precision: Precision
    weights: LossWeights
    vae_only: bool = False
    steps: List[StepRecord] = Field(default_factory=list)
    memory: Optional[MemoryReport] = None
    final_metrics: Optional[EvaluationReport] = None
    checkpoints: List[str] = Field(default_factory=list)
    wall_time_seconds: float = 0.0

    @property
    def final_loss(self) -> Optional[float]:
        return self.steps[-1].total if self.steps else None

    def to_text(self) -> str:
        lines = [
            f"Model: {self.model} ({self.policy.value}, {self.precision.value})",
            f"Steps: {len(self.steps)}, wall time {self.wall_time_seconds:.1f}s",
        ]
        if self.steps:
            first, last = self.steps[0], self.steps[-1]
            lines.append(f"Loss: {first.total:.5f} -> {last.total:.5f}")
            lines.append(
                f"Last step: ce {last.ce:.5f}, dice {last.dice:.5f}, l2 {last.l2:.5f}, kl {last.kl:.5f}"
            )
        if self.memory is not None:
            lines.append(f"Peak stored scalars: {self.memory.peak_stored_scalars:,}")
        if self.final_metrics is not None:
            lines.append(self.final_metrics.to_text())
        for path in self.checkpoints:
            lines.append(f"Checkpoint: {path}")
        return "\n".join(lines)


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


class SuiteReport(BaseModel):
    """Outcome of the verification suites."""
    precision: Precision
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"[{mark}] {c.name:<48} {c.seconds:7.2f}s  {c.detail}")
        lines.append(f"{len(self.checks) - len(self.failures)}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def write_report(report: BaseModel, path: Union[str, Path]) -> Path:
    """Write any report model as indented JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Wrote {type(report).__name__} to {path}")
    return path


class MemoryTable(BaseModel):
    """Reports of a profile-memory run, keyed by row label then policy."""
    rows: Dict[str, Dict[StoragePolicy, MemoryReport]] = Field(default_factory=dict)

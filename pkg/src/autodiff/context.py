"""
Saved-activation bookkeeping.

An ActivationMeter counts the scalars of every distinct array currently held
for backward. A Context is what an op sees: it saves tensors into the meter
when recording and silently drops them otherwise.
"""
import logging
from collections import defaultdict
from typing import Any, Dict, List, Optional

import numpy as np

logger = logging.getLogger(__name__)


class ActivationMeter:
    """
    Exact count of stored activation scalars.

    Arrays are keyed by identity, so the same array saved by two owners is
    counted once and attributed to whichever owner saved it first.
    """

    def __init__(self, bytes_per_element: int = 4):
        self.bytes_per_element = bytes_per_element
        self.reset()

    def reset(self) -> None:
        self._held: Dict[int, List[Any]] = {}
        self._by_owner: Dict[str, int] = defaultdict(int)
        self.current = 0
        self.peak = 0
        self.peak_breakdown: Dict[str, int] = {}
        self.recompute_count = 0

    def hold(self, array: np.ndarray, owner: str) -> None:
        entry = self._held.get(id(array))
        if entry is not None:
            entry[1] += 1
            return
        self._held[id(array)] = [array, 1, owner]
        self.current += array.size
        self._by_owner[owner] += array.size
        if self.current > self.peak:
            self.peak = self.current
            self.peak_breakdown = {k: v for k, v in self._by_owner.items() if v}

    def release(self, array: np.ndarray) -> None:
        entry = self._held.get(id(array))
        if entry is None:
            return
        entry[1] -= 1
        if entry[1] == 0:
            del self._held[id(array)]
            self.current -= array.size
            self._by_owner[entry[2]] -= array.size

    def recomputed(self, evaluations: int = 1) -> None:
        self.recompute_count += evaluations

    @property
    def peak_bytes(self) -> int:
        return self.peak * self.bytes_per_element


class Context:
    """
    Per-op store for tensors needed by backward.

    Composite ops create one child context per sub-op so that nested
    activations are released together with their parent.
    """

    def __init__(
        self,
        meter: Optional[ActivationMeter] = None,
        owner: str = "",
        recording: bool = True,
        training: bool = True,
    ):
        self.meter = meter
        self.owner = owner
        self.recording = recording
        self.training = training
        self.saved: Dict[str, Any] = {}
        self.children: List["Context"] = []

    def save(self, **tensors: Any) -> None:
        if not self.recording:
            return
        for name, value in tensors.items():
            if name in self.saved:
                self._release_value(self.saved[name])
            if isinstance(value, np.ndarray) and self.meter is not None:
                self.meter.hold(value, self.owner)
            self.saved[name] = value

    def __getitem__(self, name: str) -> Any:
        try:
            return self.saved[name]
        except KeyError:
            raise KeyError(f"Nothing saved under '{name}' for {self.owner or 'op'}") from None

    def child(self) -> "Context":
        ctx = Context(self.meter, self.owner, self.recording, self.training)
        self.children.append(ctx)
        return ctx

    def recomputed(self, evaluations: int = 1) -> None:
        if self.meter is not None:
            self.meter.recomputed(evaluations)

    def _release_value(self, value: Any) -> None:
        if isinstance(value, np.ndarray) and self.meter is not None:
            self.meter.release(value)

    def release(self) -> None:
        for value in self.saved.values():
            self._release_value(value)
        self.saved.clear()
        for child in self.children:
            child.release()
        self.children.clear()

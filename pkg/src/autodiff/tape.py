"""
Static computation graph with policy-driven reverse-mode differentiation.

A Tape is built once (inputs, ops, outputs) and then run many times. Before
each forward pass the tape assigns every node a NodePolicy from the
requested StoragePolicy:

- STORE_OUTPUT: the op records what its backward needs in forward.
- RECOMPUTE_FROM_INVERSE: the op records nothing; backward rebuilds its
  inputs from its outputs with the op's inverse.
- CHECKPOINT_BOUNDARY: the op belongs to a checkpoint segment; forward keeps
  only the segment inputs and backward re-runs the segment.

All stored tensors are counted by the tape's ActivationMeter.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ..tensor import Precision, ShapeError, as_tensor
from .context import ActivationMeter, Context
from .errors import AutodiffError, InverseMismatchError
from .parameter import Parameter
from .policy import NodePolicy, Section, StoragePolicy

logger = logging.getLogger(__name__)

CHECKSUM_TOLERANCE = 1e-8

Grads = Tuple[Optional[np.ndarray], ...]


def as_tuple(value: Any) -> Tuple:
    if isinstance(value, tuple):
        return value
    if isinstance(value, list):
        return tuple(value)
    return (value,)


class Op(ABC):
    """
    A differentiable operation.

    Subclasses implement forward(ctx, *inputs) and backward(ctx, *grad_outputs).
    backward returns one gradient per input and accumulates parameter
    gradients into Parameter.grad. Invertible ops also implement inverse and
    may override restore / reverse_backward to fuse the reconstruction with
    the gradient computation.
    """

    kind: str = "op"
    invertible: bool = False

    def parameters(self) -> List[Parameter]:
        return []

    @abstractmethod
    def forward(self, ctx: Context, *inputs: np.ndarray) -> Union[np.ndarray, Tuple[np.ndarray, ...]]:
        ...

    @abstractmethod
    def backward(self, ctx: Context, *grad_outputs: np.ndarray) -> Union[np.ndarray, Grads]:
        ...

    def inverse(self, *outputs: np.ndarray) -> Union[np.ndarray, Tuple[np.ndarray, ...]]:
        raise AutodiffError(f"{type(self).__name__} is not invertible")

    def restore(self, ctx: Context, inputs: Tuple[np.ndarray, ...], outputs: Tuple[np.ndarray, ...]) -> None:
        """Populate ctx as forward would have, given reconstructed inputs."""
        self.forward(ctx, *inputs)

    def reverse_backward(
        self,
        ctx: Context,
        outputs: Tuple[np.ndarray, ...],
        grad_outputs: Tuple[np.ndarray, ...],
    ) -> Tuple[Tuple[np.ndarray, ...], Grads]:
        """Rebuild the inputs from the outputs, then backpropagate."""
        # one recompute per node, counted here; restore never counts
        inputs = as_tuple(self.inverse(*outputs))
        ctx.recomputed()
        self.restore(ctx, inputs, outputs)
        grads = as_tuple(self.backward(ctx, *grad_outputs))
        return inputs, grads

    def __call__(self, *inputs: np.ndarray, training: bool = False):
        """Plain evaluation without recording."""
        return self.forward(Context(recording=False, training=training), *inputs)


@dataclass(frozen=True)
class Value:
    """Handle to a tensor flowing through a tape."""
    id: int
    name: str


@dataclass
class Node:
    index: int
    name: str
    op: Op
    inputs: Tuple[int, ...]
    outputs: Tuple[int, ...]
    section: Section
    checkpointable: bool
    invertible: bool
    policy: NodePolicy = NodePolicy.STORE_OUTPUT
    segment: Optional[int] = None
    ctx: Optional[Context] = None
    output_shapes: Tuple[Tuple[int, ...], ...] = ()
    checksums: Optional[List[Tuple[float, float, int]]] = None


@dataclass
class Segment:
    index: int
    nodes: List[int]
    boundary: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"segment_{self.index}"


@dataclass
class Gradients:
    """Result of a backward sweep."""
    inputs: List[np.ndarray]
    params: Dict[str, np.ndarray]


def _checksum(x: np.ndarray) -> Tuple[float, float, int]:
    x64 = x.astype(np.float64, copy=False)
    return float(x64.sum()), float(np.square(x64).sum()), int(x.size)


class Tape:
    """
    A reusable static graph.

    Example:
        tape = Tape("chain", Precision.F64)
        x = tape.input("x", channels=8)
        y = tape.add(CouplingBlock(...), x, name="block_0")
        tape.output(y)
        (out,) = tape.forward(batch, regime=StoragePolicy.INVERTIBLE)
        grads = tape.backward(np.ones_like(out))
    """

    def __init__(
        self,
        name: str = "tape",
        precision: Precision = Precision.F32,
        verify_inverse: Optional[bool] = None,
    ):
        self.name = name
        self.precision = Precision(precision)
        self.verify_inverse = self.precision is Precision.F64 if verify_inverse is None else verify_inverse
        self.nodes: List[Node] = []
        self.inputs: List[int] = []
        self.outputs: List[int] = []
        self.meter = ActivationMeter(self.precision.bytes_per_element)
        self.regime: Optional[StoragePolicy] = None

        self._value_names: List[str] = []
        self._producers: List[Optional[int]] = []
        self._consumers: List[List[int]] = []
        self._input_channels: List[Optional[int]] = []
        self._node_names: Set[str] = set()
        self._segments: List[Segment] = []
        self._retained: Set[int] = set()
        self._data: Dict[int, np.ndarray] = {}
        self._input_shapes: List[Tuple[int, ...]] = []
        self._ran = False
        self._training = True

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    def _new_value(self, name: str, producer: Optional[int]) -> Value:
        vid = len(self._value_names)
        self._value_names.append(name)
        self._producers.append(producer)
        self._consumers.append([])
        return Value(vid, name)

    def input(self, name: str, channels: Optional[int] = None) -> Value:
        value = self._new_value(name, None)
        self.inputs.append(value.id)
        self._input_channels.append(channels)
        return value

    def add(
        self,
        op: Op,
        *inputs: Value,
        name: Optional[str] = None,
        section: Section = Section.TRUNK,
        checkpointable: Optional[bool] = None,
        num_outputs: int = 1,
        invertible: Optional[bool] = None,
    ) -> Union[Value, Tuple[Value, ...]]:
        """
        Append a node. Returns one Value, or a tuple when num_outputs > 1.

        Nodes must be added in topological order; every input must already
        exist on this tape.
        """
        index = len(self.nodes)
        name = name or f"{op.kind}_{index}"
        if name in self._node_names:
            raise ValueError(f"Duplicate node name '{name}' on tape '{self.name}'")
        for value in inputs:
            if not isinstance(value, Value) or value.id >= len(self._value_names):
                raise ValueError(f"Node '{name}' received an input that is not a value of tape '{self.name}'")
        if checkpointable is None:
            checkpointable = section is Section.TRUNK

        outputs = tuple(
            self._new_value(name if num_outputs == 1 else f"{name}:{k}", index)
            for k in range(num_outputs)
        )
        node = Node(
            index=index,
            name=name,
            op=op,
            inputs=tuple(v.id for v in inputs),
            outputs=tuple(v.id for v in outputs),
            section=Section(section),
            checkpointable=checkpointable,
            invertible=op.invertible if invertible is None else (op.invertible and invertible),
        )
        for value in inputs:
            self._consumers[value.id].append(index)
        self.nodes.append(node)
        self._node_names.add(name)
        return outputs[0] if num_outputs == 1 else outputs

    def output(self, *values: Value) -> None:
        for value in values:
            if value.id in self.outputs:
                raise ValueError(f"Value '{value.name}' is already an output")
            self.outputs.append(value.id)

    @property
    def parameters(self) -> List[Parameter]:
        seen: Set[int] = set()
        params: List[Parameter] = []
        for node in self.nodes:
            for param in node.op.parameters():
                if id(param) not in seen:
                    seen.add(id(param))
                    params.append(param)
        return params

    def named_parameters(self) -> Dict[str, Parameter]:
        named: Dict[str, Parameter] = {}
        for param in self.parameters:
            if param.name in named:
                raise ValueError(f"Parameter name '{param.name}' is used twice on tape '{self.name}'")
            named[param.name] = param
        return named

    def zero_grad(self) -> None:
        for param in self.parameters:
            param.zero_grad()

    def count_nodes(self, section: Optional[Section] = None, invertible: Optional[bool] = None) -> int:
        count = 0
        for node in self.nodes:
            if section is not None and node.section is not section:
                continue
            if invertible is not None and node.invertible != invertible:
                continue
            count += 1
        return count

    # ------------------------------------------------------------------
    # Planning
    # ------------------------------------------------------------------

    def plan(self, regime: StoragePolicy) -> None:
        """Assign a NodePolicy to every node for the given regime."""
        regime = StoragePolicy(regime)
        self.regime = regime
        self._segments = []
        for node in self.nodes:
            node.policy = NodePolicy.STORE_OUTPUT
            node.segment = None

        if regime is StoragePolicy.INVERTIBLE:
            for node in self.nodes:
                if node.invertible and node.checkpointable:
                    node.policy = NodePolicy.RECOMPUTE_FROM_INVERSE
        elif regime is StoragePolicy.CHECKPOINT:
            self._plan_segments()

        self._retained = set()
        outputs = set(self.outputs)
        for node in self.nodes:
            if node.policy is not NodePolicy.RECOMPUTE_FROM_INVERSE:
                continue
            for vid in node.outputs:
                if vid in outputs:
                    continue
                consumers = self._consumers[vid]
                if not any(self.nodes[c].policy is NodePolicy.RECOMPUTE_FROM_INVERSE for c in consumers):
                    self._retained.add(vid)

        logger.debug(
            f"Planned tape '{self.name}' for {regime.value}: "
            f"{sum(n.policy is NodePolicy.RECOMPUTE_FROM_INVERSE for n in self.nodes)} invertible, "
            f"{len(self._segments)} segments, {len(self._retained)} retained values"
        )

    def _plan_segments(self) -> None:
        total = sum(1 for node in self.nodes if node.checkpointable)
        if total == 0:
            return
        size = math.isqrt(total - 1) + 1

        run: List[Node] = []

        def flush() -> None:
            for start in range(0, len(run), size):
                segment = Segment(len(self._segments), [n.index for n in run[start:start + size]])
                for idx in segment.nodes:
                    self.nodes[idx].policy = NodePolicy.CHECKPOINT_BOUNDARY
                    self.nodes[idx].segment = segment.index
                self._segments.append(segment)
            run.clear()

        for node in self.nodes:
            if node.checkpointable:
                run.append(node)
            else:
                flush()
        flush()

    def describe(self) -> List[Dict[str, Any]]:
        """One row per node: name, kind, section, invertible, policy, segment."""
        return [
            {
                "name": node.name,
                "kind": node.op.kind,
                "section": node.section.value,
                "invertible": node.invertible,
                "policy": node.policy.value,
                "segment": node.segment,
            }
            for node in self.nodes
        ]

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def _bind(self, inputs: Sequence[np.ndarray]) -> Dict[int, np.ndarray]:
        if len(inputs) != len(self.inputs):
            raise AutodiffError(
                f"Tape '{self.name}' expects {len(self.inputs)} inputs, got {len(inputs)}"
            )
        data: Dict[int, np.ndarray] = {}
        for vid, channels, array in zip(self.inputs, self._input_channels, inputs):
            array = as_tensor(array, self.precision)
            if channels is not None:
                if array.ndim != 5 or array.shape[1] != channels:
                    raise ShapeError(
                        f"Input '{self._value_names[vid]}' must be [N, {channels}, D, H, W], "
                        f"got {tuple(array.shape)}"
                    )
            data[vid] = array
        return data

    def _run(self, node: Node, ctx: Context, args: Sequence[np.ndarray]) -> Tuple[np.ndarray, ...]:
        try:
            outs = as_tuple(node.op.forward(ctx, *args))
        except ShapeError as exc:
            raise ShapeError(f"Node '{node.name}' ({node.op.kind}): {exc}") from exc
        if len(outs) != len(node.outputs):
            raise AutodiffError(
                f"Node '{node.name}' produced {len(outs)} outputs, declared {len(node.outputs)}"
            )
        return outs

    def release(self) -> None:
        """Drop every stored activation from a previous run."""
        for node in self.nodes:
            if node.ctx is not None:
                node.ctx.release()
                node.ctx = None
            node.checksums = None
        for segment in self._segments:
            segment.boundary.clear()
        self._data = {}
        self._ran = False
        self.meter.reset()

    def forward(
        self,
        *inputs: np.ndarray,
        regime: Optional[StoragePolicy] = None,
        training: bool = True,
    ) -> List[np.ndarray]:
        """
        Run the graph, storing what backward needs under the given regime.

        Returns:
            One array per declared output
        """
        if not self.outputs:
            raise AutodiffError(f"Tape '{self.name}' has no outputs")
        self.release()
        self.plan(regime or self.regime or StoragePolicy.INVERTIBLE)
        data = self._bind(inputs)
        self._input_shapes = [data[v].shape for v in self.inputs]

        remaining = {vid: len(consumers) for vid, consumers in enumerate(self._consumers)}
        keep = set(self.outputs) | self._retained

        for node in self.nodes:
            args = [data[v] for v in node.inputs]
            recording = node.policy is NodePolicy.STORE_OUTPUT
            ctx = Context(self.meter, node.name, recording=recording, training=training)

            if node.policy is NodePolicy.CHECKPOINT_BOUNDARY:
                segment = self._segments[node.segment]
                for vid, array in zip(node.inputs, args):
                    producer = self._producers[vid]
                    external = producer is None or self.nodes[producer].segment != node.segment
                    if external and vid not in segment.boundary:
                        segment.boundary[vid] = array
                        self.meter.hold(array, segment.name)
            elif node.policy is NodePolicy.RECOMPUTE_FROM_INVERSE and self.verify_inverse:
                node.checksums = [_checksum(a) for a in args]

            outs = self._run(node, ctx, args)
            node.ctx = ctx if recording else None
            node.output_shapes = tuple(o.shape for o in outs)
            for vid, array in zip(node.outputs, outs):
                data[vid] = array
                if vid in self._retained:
                    self.meter.hold(array, node.name)

            for vid in node.inputs:
                remaining[vid] -= 1
                if remaining[vid] == 0 and vid not in keep:
                    data.pop(vid, None)

        self._data = data
        self._ran = True
        self._training = training
        logger.debug(
            f"Forward '{self.name}' ({self.regime.value}): peak {self.meter.peak} stored scalars"
        )
        return [data[v] for v in self.outputs]

    def evaluate(self, *inputs: np.ndarray, training: bool = False) -> List[np.ndarray]:
        """Forward without recording anything. Leaves the tape state untouched."""
        data = self._bind(inputs)
        remaining = {vid: len(consumers) for vid, consumers in enumerate(self._consumers)}
        keep = set(self.outputs)
        for node in self.nodes:
            ctx = Context(None, node.name, recording=False, training=training)
            outs = self._run(node, ctx, [data[v] for v in node.inputs])
            for vid, array in zip(node.outputs, outs):
                data[vid] = array
            for vid in node.inputs:
                remaining[vid] -= 1
                if remaining[vid] == 0 and vid not in keep:
                    data.pop(vid, None)
        return [data[v] for v in self.outputs]

    def backward(self, *output_grads: Optional[np.ndarray]) -> Gradients:
        """
        Reverse sweep from the given output gradients.

        A None output gradient is treated as zeros. Parameter gradients are
        reset before the sweep and accumulated over every use.
        """
        if not self._ran:
            raise AutodiffError(f"backward called before forward on tape '{self.name}'")
        if len(output_grads) != len(self.outputs):
            raise AutodiffError(
                f"Tape '{self.name}' has {len(self.outputs)} outputs, got {len(output_grads)} gradients"
            )
        self.zero_grad()

        grads: Dict[int, np.ndarray] = {}
        for vid, grad in zip(self.outputs, output_grads):
            if grad is None:
                continue
            grad = as_tensor(grad, self.precision)
            expected = self._data[vid].shape
            if grad.shape != expected:
                raise ShapeError(
                    f"Gradient for output '{self._value_names[vid]}' has shape {tuple(grad.shape)}, "
                    f"expected {tuple(expected)}"
                )
            self._accumulate(grads, vid, grad)

        i = len(self.nodes) - 1
        while i >= 0:
            node = self.nodes[i]
            if node.policy is NodePolicy.CHECKPOINT_BOUNDARY:
                segment = self._segments[node.segment]
                self._backward_segment(segment, grads)
                i = segment.nodes[0] - 1
                continue
            grad_outputs = self._pop_output_grads(node, grads)
            if node.policy is NodePolicy.RECOMPUTE_FROM_INVERSE:
                grad_inputs = self._backward_invertible(node, grad_outputs)
            else:
                grad_inputs = as_tuple(node.op.backward(node.ctx, *grad_outputs))
                node.ctx.release()
                node.ctx = None
            self._accumulate_inputs(node, grad_inputs, grads)
            i -= 1

        input_grads = [
            grads.get(vid, np.zeros(shape, dtype=self.precision.dtype))
            for vid, shape in zip(self.inputs, self._input_shapes)
        ]
        self._data = {}
        self._ran = False
        return Gradients(
            inputs=input_grads,
            params={p.name: p.grad for p in self.parameters},
        )

    # ------------------------------------------------------------------
    # Backward helpers
    # ------------------------------------------------------------------

    @staticmethod
    def _accumulate(grads: Dict[int, np.ndarray], vid: int, grad: np.ndarray) -> None:
        existing = grads.get(vid)
        grads[vid] = grad if existing is None else existing + grad

    def _accumulate_inputs(self, node: Node, grad_inputs: Tuple, grads: Dict[int, np.ndarray]) -> None:
        if len(grad_inputs) != len(node.inputs):
            raise AutodiffError(
                f"Node '{node.name}' returned {len(grad_inputs)} input gradients, expected {len(node.inputs)}"
            )
        for vid, grad in zip(node.inputs, grad_inputs):
            if grad is not None:
                self._accumulate(grads, vid, grad)

    def _pop_output_grads(self, node: Node, grads: Dict[int, np.ndarray]) -> Tuple[np.ndarray, ...]:
        result = []
        for vid, shape in zip(node.outputs, node.output_shapes):
            grad = grads.pop(vid, None)
            if grad is None:
                grad = np.zeros(shape, dtype=self.precision.dtype)
            result.append(grad)
        return tuple(result)

    def _backward_invertible(self, node: Node, grad_outputs: Tuple[np.ndarray, ...]) -> Tuple:
        outputs = []
        for vid in node.outputs:
            array = self._data.get(vid)
            if array is None:
                raise AutodiffError(
                    f"Node '{node.name}' cannot rebuild its inputs: output '{self._value_names[vid]}' is not resident"
                )
            outputs.append(array)

        ctx = Context(self.meter, node.name, recording=True, training=self._training)
        inputs, grad_inputs = node.op.reverse_backward(ctx, tuple(outputs), grad_outputs)
        ctx.release()
        inputs = as_tuple(inputs)
        if node.checksums is not None:
            self._check_reconstruction(node, inputs)

        for vid, array in zip(node.inputs, inputs):
            self._data[vid] = array
        output_set = set(self.outputs)
        for vid in node.outputs:
            if vid in self._retained:
                self.meter.release(self._data[vid])
            if vid not in output_set:
                self._data.pop(vid, None)
        return as_tuple(grad_inputs)

    def _check_reconstruction(self, node: Node, inputs: Tuple[np.ndarray, ...]) -> None:
        for k, (reference, array) in enumerate(zip(node.checksums, inputs)):
            ref_sum, ref_sq, n = reference
            got_sum, got_sq, _ = _checksum(array)
            sum_tol = CHECKSUM_TOLERANCE * max(1.0, math.sqrt(n * ref_sq))
            sq_tol = CHECKSUM_TOLERANCE * max(1.0, ref_sq)
            if abs(got_sum - ref_sum) > sum_tol or abs(got_sq - ref_sq) > sq_tol:
                raise InverseMismatchError(
                    f"Reconstructed input {k} of node '{node.name}' does not match forward: "
                    f"sum {got_sum:.6e} vs {ref_sum:.6e}, sum of squares {got_sq:.6e} vs {ref_sq:.6e}"
                )
        node.checksums = None

    def _backward_segment(self, segment: Segment, grads: Dict[int, np.ndarray]) -> None:
        local = dict(segment.boundary)
        for array in segment.boundary.values():
            self.meter.release(array)
        segment.boundary.clear()

        contexts: List[Context] = []
        for idx in segment.nodes:
            node = self.nodes[idx]
            ctx = Context(self.meter, node.name, recording=True, training=self._training)
            outs = self._run(node, ctx, [local[v] for v in node.inputs])
            self.meter.recomputed()
            for vid, array in zip(node.outputs, outs):
                local[vid] = array
            contexts.append(ctx)

        for idx, ctx in zip(reversed(segment.nodes), reversed(contexts)):
            node = self.nodes[idx]
            grad_outputs = self._pop_output_grads(node, grads)
            grad_inputs = as_tuple(node.op.backward(ctx, *grad_outputs))
            ctx.release()
            self._accumulate_inputs(node, grad_inputs, grads)

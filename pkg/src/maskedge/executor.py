"""Graph execution: shape planning, arena buffer reuse, profiling.

``plan`` propagates shapes, computes liveness intervals for every
intermediate tensor, and assigns each layer output to a slot in a single
reusable arena using greedy first-fit. ``execute`` then runs the layers
in order, writing every intermediate into its assigned slot, so peak
memory is the arena size rather than the sum of all intermediates.

``execute_no_reuse`` is the independent reference route: every layer
output gets its own fresh buffer. The two must agree numerically.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ExecutionError, ShapeError
from .model.graph import ModelGraph, split_conv_blob, validate_graph
from .ops import activate, add, concat_channels, conv2d, max_pool, upsample_nearest
from .tensor import Shape, Tensor


@dataclass
class LayerProfile:
    layer_id: int
    kind: str
    micros: float
    output_shape: tuple[int, int, int, int]
    bytes_written: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "layer_id": self.layer_id,
                "kind": self.kind,
                "micros": self.micros,
                "output_shape": list(self.output_shape),
                "bytes_written": self.bytes_written,
            },
            separators=(",", ":"),
        )


def profiles_to_jsonl(profiles: list[LayerProfile]) -> str:
    return "\n".join(p.to_json() for p in profiles)


@dataclass
class ExecutionPlan:
    order: list[int]  # layer ids, topological (table order)
    shapes: dict[int, Shape]
    buffer_assignment: dict[int, int]  # layer id -> arena slot index
    slot_offsets: list[int]
    slot_sizes: list[int]
    arena_size: int = field(init=False)

    def __post_init__(self):
        self.arena_size = sum(self.slot_sizes)


def plan(graph: ModelGraph, input_shape: Shape) -> ExecutionPlan:
    """Deterministic execution plan with greedy first-fit slot assignment."""
    shapes = validate_graph(graph)
    input_layer = next(l for l in graph.layers if l.kind == "input")
    if shapes[input_layer.id] != input_shape:
        raise ShapeError(
            f"input shape {input_shape} does not match the graph's declared "
            f"input {shapes[input_layer.id]}"
        )

    pos = {layer.id: i for i, layer in enumerate(graph.layers)}
    last_use = {layer.id: pos[layer.id] for layer in graph.layers}
    for layer in graph.layers:
        for ref in layer.inputs:
            last_use[ref] = max(last_use[ref], pos[layer.id])
    for lid in graph.outputs:  # head inputs stay alive to the end
        last_use[lid] = len(graph.layers)

    slot_sizes: list[int] = []
    slot_free: list[bool] = []
    assignment: dict[int, int] = {}
    for i, layer in enumerate(graph.layers):
        if layer.kind != "input":
            need = shapes[layer.id].numel * 4
            slot = None
            for s, free in enumerate(slot_free):
                if free and slot_sizes[s] >= need:
                    slot = s
                    break
            if slot is None:
                for s, free in enumerate(slot_free):
                    if free:
                        slot = s
                        slot_sizes[s] = need
                        break
            if slot is None:
                slot = len(slot_sizes)
                slot_sizes.append(need)
                slot_free.append(False)
            slot_free[slot] = False
            assignment[layer.id] = slot
        # release buffers whose last consumer just ran
        for ref in set(layer.inputs):
            if ref in assignment and last_use[ref] == i:
                slot_free[assignment[ref]] = True

    offsets = list(np.cumsum([0] + slot_sizes[:-1]).astype(int)) if slot_sizes else []
    return ExecutionPlan(
        order=[layer.id for layer in graph.layers],
        shapes=shapes,
        buffer_assignment=assignment,
        slot_offsets=[int(o) for o in offsets],
        slot_sizes=slot_sizes,
    )


def _run_layer(graph: ModelGraph, layer, inputs: list[Tensor], kernel_path: str) -> Tensor:
    if layer.kind == "conv":
        in_c = inputs[0].data.shape[1]
        w, b = split_conv_blob(layer.params, in_c, graph.weights[layer.id])
        kh, kw = layer.params.kernel
        icg = in_c // layer.params.groups
        wt = Tensor(w.reshape(layer.params.out_channels, icg, kh, kw))
        return conv2d(inputs[0], wt, b, layer.params, kernel_path=kernel_path)
    if layer.kind == "activate":
        return activate(inputs[0], layer.params)
    if layer.kind == "max_pool":
        return max_pool(inputs[0], layer.params.kernel, layer.params.stride)
    if layer.kind == "upsample":
        return upsample_nearest(inputs[0], layer.params.factor)
    if layer.kind == "concat":
        return concat_channels(inputs[0], inputs[1])
    if layer.kind == "add":
        return add(inputs[0], inputs[1])
    raise ExecutionError(f"cannot execute layer kind {layer.kind!r}")


def execute(
    graph: ModelGraph,
    exec_plan: ExecutionPlan,
    x: Tensor,
    profile: bool = False,
    kernel_path: str = "optimized",
) -> tuple[list[Tensor], list[LayerProfile]]:
    """Run the graph over ``x`` using the plan's arena.

    Returns the head-input tensors in head order (copied out of the
    arena) plus per-layer profiles when ``profile`` is set. Fails fast
    if any layer emits a non-finite value.
    """
    input_layer = next(l for l in graph.layers if l.kind == "input")
    if x.shape != exec_plan.shapes[input_layer.id]:
        raise ShapeError(
            f"input tensor shape {x.shape} does not match plan input "
            f"{exec_plan.shapes[input_layer.id]}"
        )

    arena = np.zeros(exec_plan.arena_size, dtype=np.uint8)
    results: dict[int, Tensor] = {}
    profiles: list[LayerProfile] = []

    for layer in graph.layers:
        if layer.kind == "input":
            results[layer.id] = x
            continue
        ins = [results[i] for i in layer.inputs]
        t0 = time.perf_counter_ns()
        out = _run_layer(graph, layer, ins, kernel_path)
        if not np.isfinite(out.data).all():
            raise ExecutionError(
                f"layer {layer.id} ({layer.kind}) produced a non-finite value"
            )
        slot = exec_plan.buffer_assignment[layer.id]
        off = exec_plan.slot_offsets[slot]
        nbytes = out.data.size * 4
        view = arena[off : off + nbytes].view(np.float32).reshape(out.data.shape)
        np.copyto(view, out.data)
        results[layer.id] = Tensor(view)
        t1 = time.perf_counter_ns()
        if profile:
            profiles.append(
                LayerProfile(
                    layer_id=layer.id,
                    kind=layer.kind,
                    micros=(t1 - t0) / 1000.0,
                    output_shape=tuple(out.data.shape),
                    bytes_written=nbytes,
                )
            )

    outputs = [Tensor(np.array(results[lid].data)) for lid in graph.outputs]
    return outputs, profiles


def execute_no_reuse(
    graph: ModelGraph, x: Tensor, kernel_path: str = "optimized"
) -> tuple[list[Tensor], int]:
    """Reference route: every layer output in its own buffer.

    Returns (head outputs, peak intermediate bytes = sum of all layer
    output sizes, since nothing is ever freed).
    """
    results: dict[int, Tensor] = {}
    peak = 0
    for layer in graph.layers:
        if layer.kind == "input":
            results[layer.id] = x
            continue
        ins = [results[i] for i in layer.inputs]
        out = _run_layer(graph, layer, ins, kernel_path)
        if not np.isfinite(out.data).all():
            raise ExecutionError(
                f"layer {layer.id} ({layer.kind}) produced a non-finite value"
            )
        results[layer.id] = out
        peak += out.data.size * 4
    return [results[lid] for lid in graph.outputs], peak

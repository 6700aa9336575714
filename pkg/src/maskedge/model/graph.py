"""In-memory model description: layer table, weights, detection head.

A graph is an ordered list of layers forming a DAG (every referenced
layer id precedes its consumer), per-conv weight blobs, and a head
configuration describing how the flagged output layers map to boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError
from ..ops import Activation, ConvParams, conv_output_hw
from ..tensor import Shape

LAYER_KINDS = ("input", "conv", "activate", "max_pool", "upsample", "concat", "add")

# arity per kind (number of layer inputs)
_ARITY = {
    "input": 0,
    "conv": 1,
    "activate": 1,
    "max_pool": 1,
    "upsample": 1,
    "concat": 2,
    "add": 2,
}


@dataclass(frozen=True)
class InputParams:
    c: int
    h: int
    w: int


@dataclass(frozen=True)
class PoolParams:
    kernel: tuple[int, int]
    stride: tuple[int, int]


@dataclass(frozen=True)
class UpsampleParams:
    factor: int


@dataclass(frozen=True)
class LayerDesc:
    id: int
    kind: str
    params: object  # kind-specific record, None for concat/add
    inputs: tuple[int, ...] = ()


@dataclass(frozen=True)
class HeadConfig:
    anchors: tuple[tuple[tuple[float, float], ...], ...]  # per scale, (w, h) pairs
    strides: tuple[int, ...]
    num_classes: int
    class_names: tuple[str, ...]


@dataclass
class ModelGraph:
    version: int
    layers: list[LayerDesc]
    weights: dict[int, np.ndarray]  # layer id -> flat float32 blob
    head: HeadConfig
    outputs: list[int]  # layer ids feeding the detection head, in scale order
    metadata: dict[str, str] = field(default_factory=dict)

    def layer_by_id(self, lid: int) -> LayerDesc:
        for layer in self.layers:
            if layer.id == lid:
                return layer
        raise KeyError(lid)

    def weight_bytes(self) -> int:
        return sum(int(b.size) * 4 for b in self.weights.values())


def conv_blob_length(params: ConvParams, in_channels: int) -> int:
    kh, kw = params.kernel
    n = params.out_channels * (in_channels // params.groups) * kh * kw
    if params.has_bias:
        n += params.out_channels
    return n


def split_conv_blob(params: ConvParams, in_channels: int, blob: np.ndarray):
    """Blob -> (weights array (oc, ic/g, kh, kw), bias or None)."""
    kh, kw = params.kernel
    icg = in_channels // params.groups
    nw = params.out_channels * icg * kh * kw
    w = blob[:nw].reshape(params.out_channels, icg, kh, kw)
    b = blob[nw : nw + params.out_channels] if params.has_bias else None
    return w, b


def _check_structure(graph: ModelGraph) -> list[str]:
    v: list[str] = []
    seen: dict[int, int] = {}
    n_inputs = 0
    for pos, layer in enumerate(graph.layers):
        if layer.kind not in LAYER_KINDS:
            v.append(f"layer {layer.id}: unknown kind {layer.kind!r}")
            continue
        if layer.id in seen:
            v.append(f"layer id {layer.id} duplicated")
        seen[layer.id] = pos
        if layer.kind == "input":
            n_inputs += 1
        if len(layer.inputs) != _ARITY[layer.kind]:
            v.append(
                f"layer {layer.id} ({layer.kind}): expects {_ARITY[layer.kind]} inputs, "
                f"got {len(layer.inputs)}"
            )
        for ref in layer.inputs:
            if ref not in seen or seen[ref] >= pos:
                v.append(f"layer {layer.id}: input {ref} does not precede it")
    if n_inputs != 1:
        v.append(f"graph must have exactly one input layer, found {n_inputs}")
    for lid in graph.weights:
        if lid not in seen:
            v.append(f"weight blob for unknown layer {lid}")
        elif graph.layer_by_id(lid).kind != "conv":
            v.append(f"weight blob attached to non-conv layer {lid}")
    return v


def infer_shapes(graph: ModelGraph) -> dict[int, Shape]:
    """Propagate shapes through the layer table; raises ValidationError."""
    shapes: dict[int, Shape] = {}
    violations: list[str] = []
    for layer in graph.layers:
        try:
            shapes[layer.id] = _layer_shape(graph, layer, shapes)
        except Exception as exc:  # noqa: BLE001 - collect every failure
            violations.append(f"layer {layer.id} ({layer.kind}): {exc}")
    if violations:
        raise ValidationError(violations)
    return shapes


def _layer_shape(graph: ModelGraph, layer: LayerDesc, shapes: dict[int, Shape]) -> Shape:
    ins = [shapes[i] for i in layer.inputs]
    if layer.kind == "input":
        p: InputParams = layer.params
        return Shape(1, p.c, p.h, p.w)
    if layer.kind == "conv":
        p: ConvParams = layer.params
        s = ins[0]
        if s.c % p.groups != 0:
            raise ValueError(f"groups {p.groups} does not divide input channels {s.c}")
        oh, ow = conv_output_hw(s.h, s.w, p)
        blob = graph.weights.get(layer.id)
        if blob is None:
            raise ValueError("missing weight blob")
        expect = conv_blob_length(p, s.c)
        if blob.size != expect:
            raise ValueError(f"weight blob has {blob.size} floats, expected {expect}")
        return Shape(s.n, p.out_channels, oh, ow)
    if layer.kind == "activate":
        return ins[0]
    if layer.kind == "max_pool":
        p: PoolParams = layer.params
        s = ins[0]
        kh, kw = p.kernel
        if kh > s.h or kw > s.w:
            raise ValueError(f"pool kernel {kh}x{kw} larger than input {s.h}x{s.w}")
        return Shape(s.n, s.c, (s.h - kh) // p.stride[0] + 1, (s.w - kw) // p.stride[1] + 1)
    if layer.kind == "upsample":
        p: UpsampleParams = layer.params
        s = ins[0]
        return Shape(s.n, s.c, s.h * p.factor, s.w * p.factor)
    if layer.kind == "concat":
        a, b = ins
        if (a.n, a.h, a.w) != (b.n, b.h, b.w):
            raise ValueError(f"concat spatial mismatch: {a} vs {b}")
        return Shape(a.n, a.c + b.c, a.h, a.w)
    if layer.kind == "add":
        a, b = ins
        if a != b:
            raise ValueError(f"add shape mismatch: {a} vs {b}")
        return a
    raise ValueError(f"unknown kind {layer.kind!r}")


def validate_graph(graph: ModelGraph) -> dict[int, Shape]:
    """Full validation; returns propagated shapes or raises ValidationError
    listing every violation found."""
    violations = _check_structure(graph)
    if violations:
        raise ValidationError(violations)
    shapes = infer_shapes(graph)  # raises with its own violation list

    head = graph.head
    ids = {l.id for l in graph.layers}
    if not (1 <= len(graph.outputs) <= 3):
        violations.append(f"head count must be 1..3, got {len(graph.outputs)}")
    if not (len(head.anchors) == len(head.strides) == len(graph.outputs)):
        violations.append(
            f"anchors ({len(head.anchors)}), strides ({len(head.strides)}) and "
            f"output layers ({len(graph.outputs)}) must have equal length"
        )
    if head.num_classes < 1:
        violations.append(f"num_classes must be >= 1, got {head.num_classes}")
    if len(head.class_names) != head.num_classes:
        violations.append(
            f"{len(head.class_names)} class names for {head.num_classes} classes"
        )
    input_shape = shapes[next(l.id for l in graph.layers if l.kind == "input")]
    for i, lid in enumerate(graph.outputs):
        if lid not in ids:
            violations.append(f"output layer {lid} does not exist")
            continue
        if i >= len(head.anchors) or i >= len(head.strides):
            continue
        s = shapes[lid]
        want_c = len(head.anchors[i]) * (5 + head.num_classes)
        if s.c != want_c:
            violations.append(
                f"output layer {lid} has {s.c} channels, head scale {i} needs "
                f"{len(head.anchors[i])} anchors x (5 + {head.num_classes}) = {want_c}"
            )
        stride = head.strides[i]
        if stride < 1 or s.h * stride != input_shape.h or s.w * stride != input_shape.w:
            violations.append(
                f"output layer {lid} grid {s.h}x{s.w} x stride {stride} does not "
                f"cover input {input_shape.h}x{input_shape.w}"
            )
    for key in ("class_names", "input_size"):
        if key not in graph.metadata:
            violations.append(f"metadata missing required key {key!r}")
    if violations:
        raise ValidationError(violations)
    return shapes

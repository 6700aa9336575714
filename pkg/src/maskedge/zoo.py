"""Model builders: random valid graphs for testing and a
YOLO-Fastest-shaped random-weight network for benchmarking.

Nothing here is trained; weights are seeded random draws. The builders
exist so tests and benchmarks can exercise realistic graph topologies
without shipping a dataset.
"""

from __future__ import annotations

import numpy as np

from .model.graph import (
    HeadConfig,
    InputParams,
    LayerDesc,
    ModelGraph,
    PoolParams,
    UpsampleParams,
    validate_graph,
)
from .ops import Activation, ConvParams


class _Builder:
    def __init__(self, rng: np.random.Generator, in_c: int, in_h: int, in_w: int):
        self.rng = rng
        self.layers: list[LayerDesc] = [
            LayerDesc(id=0, kind="input", params=InputParams(in_c, in_h, in_w))
        ]
        self.weights: dict[int, np.ndarray] = {}
        self.shapes: dict[int, tuple[int, int, int]] = {0: (in_c, in_h, in_w)}
        self.next_id = 1

    def _emit(self, kind, params, inputs, shape) -> int:
        lid = self.next_id
        self.next_id += 1
        self.layers.append(LayerDesc(id=lid, kind=kind, params=params, inputs=tuple(inputs)))
        self.shapes[lid] = shape
        return lid

    def conv(self, src, out_c, kernel=1, stride=1, padding=None, groups=1, weight_std=0.1):
        c, h, w = self.shapes[src]
        if padding is None:
            padding = kernel // 2
        params = ConvParams(
            out_channels=out_c,
            kernel=(kernel, kernel),
            stride=(stride, stride),
            padding=(padding, padding),
            groups=groups,
            has_bias=True,
        )
        icg = c // groups
        n_w = out_c * icg * kernel * kernel
        blob = np.concatenate(
            [
                (self.rng.standard_normal(n_w) * weight_std).astype(np.float32),
                (self.rng.standard_normal(out_c) * 0.01).astype(np.float32),
            ]
        )
        oh = (h + 2 * padding - kernel) // stride + 1
        ow = (w + 2 * padding - kernel) // stride + 1
        lid = self._emit("conv", params, [src], (out_c, oh, ow))
        self.weights[lid] = blob
        return lid

    def conv_fixed(self, src, out_c, weights, bias, kernel=1, stride=1, padding=0, groups=1):
        c, h, w = self.shapes[src]
        params = ConvParams(
            out_channels=out_c,
            kernel=(kernel, kernel),
            stride=(stride, stride),
            padding=(padding, padding),
            groups=groups,
            has_bias=True,
        )
        blob = np.concatenate(
            [np.asarray(weights, np.float32).reshape(-1), np.asarray(bias, np.float32)]
        )
        oh = (h + 2 * padding - kernel) // stride + 1
        ow = (w + 2 * padding - kernel) // stride + 1
        lid = self._emit("conv", params, [src], (out_c, oh, ow))
        self.weights[lid] = blob
        return lid

    def activate(self, src, kind="relu6", slope=0.1):
        return self._emit("activate", Activation(kind=kind, slope=slope), [src], self.shapes[src])

    def max_pool(self, src, kernel=2, stride=2):
        c, h, w = self.shapes[src]
        oh = (h - kernel) // stride + 1
        ow = (w - kernel) // stride + 1
        return self._emit(
            "max_pool", PoolParams(kernel=(kernel, kernel), stride=(stride, stride)), [src], (c, oh, ow)
        )

    def upsample(self, src, factor=2):
        c, h, w = self.shapes[src]
        return self._emit("upsample", UpsampleParams(factor), [src], (c, h * factor, w * factor))

    def concat(self, a, b):
        ca, ha, wa = self.shapes[a]
        cb, hb, wb = self.shapes[b]
        return self._emit("concat", None, [a, b], (ca + cb, ha, wa))

    def add(self, a, b):
        return self._emit("add", None, [a, b], self.shapes[a])

    def finish(self, outputs, head: HeadConfig, metadata=None) -> ModelGraph:
        _, h, w = self.shapes[0]
        meta = {
            "class_names": ",".join(head.class_names),
            "input_size": f"{w}x{h}",
        }
        if metadata:
            meta.update(metadata)
        graph = ModelGraph(
            version=1,
            layers=self.layers,
            weights=self.weights,
            head=head,
            outputs=list(outputs),
            metadata=meta,
        )
        validate_graph(graph)
        return graph


def _head_for(builder: _Builder, taps: list[int], anchors_per_scale=1, num_classes=2):
    """1x1 convs mapping tap layers to head channel counts, plus config."""
    _, in_h, _ = builder.shapes[0]
    outs, strides = [], []
    for tap in taps:
        _, h, _ = builder.shapes[tap]
        outs.append(builder.conv(tap, anchors_per_scale * (5 + num_classes), kernel=1))
        strides.append(in_h // h)
    anchors = tuple(
        tuple((float(8 * s), float(8 * s)) for _ in range(anchors_per_scale)) for s in strides
    )
    head = HeadConfig(
        anchors=anchors,
        strides=tuple(strides),
        num_classes=num_classes,
        class_names=tuple(f"class{i}" for i in range(num_classes))
        if num_classes != 2
        else ("mask", "no_mask"),
    )
    return outs, head


def random_graph(rng: np.random.Generator, n_layers: int = 10, in_hw: int = 16) -> ModelGraph:
    """Random valid single-head graph over the full operator set.

    Spatial sizes are kept square powers of two so the head stride stays
    integral; upsampling never exceeds the input resolution.
    """
    b = _Builder(rng, in_c=int(rng.integers(1, 4)), in_h=in_hw, in_w=in_hw)
    frontier = 0
    for _ in range(n_layers):
        c, h, w = b.shapes[frontier]
        choices = ["conv", "conv", "activate"]
        if h >= 4 and h % 2 == 0:
            choices.append("max_pool")
        if h < in_hw:
            choices.append("upsample")
        same_shape = [
            lid for lid, s in b.shapes.items() if s == (c, h, w) and lid != frontier
        ]
        same_spatial = [
            lid for lid, s in b.shapes.items() if s[1:] == (h, w) and lid != frontier
        ]
        if same_shape:
            choices.append("add")
        if same_spatial and c + min(b.shapes[l][0] for l in same_spatial) <= 16:
            choices.append("concat")
        op = choices[rng.integers(len(choices))]
        if op == "conv":
            out_c = int(rng.integers(1, 9))
            kernel = int(rng.choice([1, 3]))
            if rng.random() < 0.3 and kernel == 3:
                frontier = b.conv(frontier, c, kernel=3, groups=c)  # depthwise
            else:
                frontier = b.conv(frontier, out_c, kernel=kernel)
        elif op == "activate":
            frontier = b.activate(
                frontier, kind=str(rng.choice(["relu", "relu6", "leaky_relu", "none"]))
            )
        elif op == "max_pool":
            frontier = b.max_pool(frontier)
        elif op == "upsample":
            frontier = b.upsample(frontier)
        elif op == "add":
            other = same_shape[rng.integers(len(same_shape))]
            frontier = b.add(frontier, other)
        else:
            other = same_spatial[rng.integers(len(same_spatial))]
            frontier = b.concat(frontier, other)
    outs, head = _head_for(b, [frontier])
    return b.finish(outs, head)


def _dw_block(b: _Builder, src, out_c, stride):
    c, _, _ = b.shapes[src]
    x = b.conv(src, c, kernel=3, stride=stride, groups=c)
    x = b.activate(x, "relu6")
    x = b.conv(x, out_c, kernel=1)
    return b.activate(x, "relu6")


def yolo_fastest_shaped(seed: int = 0, in_hw: int = 320) -> ModelGraph:
    """Random-weight network with the shape of a tiny two-head YOLO:
    depthwise-separable backbone, feature-pyramid merge, two detection
    scales, roughly 250k parameters at the default size."""
    rng = np.random.default_rng(seed)
    b = _Builder(rng, in_c=3, in_h=in_hw, in_w=in_hw)
    x = b.conv(0, 16, kernel=3, stride=2, weight_std=0.05)
    x = b.activate(x, "relu6")
    x = _dw_block(b, x, 32, 2)
    x = _dw_block(b, x, 64, 2)
    c16 = _dw_block(b, x, 96, 2)  # stride-16 feature map
    x = _dw_block(b, c16, 192, 2)
    for _ in range(5):
        x = _dw_block(b, x, 192, 1)
    neck32 = b.activate(b.conv(x, 96, kernel=1), "leaky_relu")
    up = b.upsample(neck32, 2)
    merged = b.concat(c16, up)
    neck16 = b.activate(b.conv(merged, 96, kernel=1), "leaky_relu")

    num_classes = 2
    head32 = b.conv(neck32, 3 * (5 + num_classes), kernel=1)
    head16 = b.conv(neck16, 3 * (5 + num_classes), kernel=1)
    head = HeadConfig(
        anchors=(
            ((26.0, 48.0), (67.0, 84.0), (72.0, 175.0)),
            ((12.0, 18.0), (37.0, 49.0), (52.0, 132.0)),
        ),
        strides=(32, 16),
        num_classes=num_classes,
        class_names=("mask", "no_mask"),
    )
    return b.finish([head32, head16], head)


def single_shot_model() -> ModelGraph:
    """Hand-weighted model whose head fires on exactly one grid cell.

    A 1x1 stride-16 conv samples one pixel per cell; objectness and the
    first class score are 40 * red - 20, so only a cell whose sampled
    pixel is saturated red (or white) crosses a 0.5 threshold. Box
    offsets are zero, so the predicted box is the anchor centered on the
    firing cell.
    """
    b = _Builder(np.random.default_rng(0), in_c=3, in_h=32, in_w=32)
    w = np.zeros((7, 3, 1, 1), dtype=np.float32)
    bias = np.full(7, -20.0, dtype=np.float32)
    bias[:4] = 0.0  # tx, ty, tw, th
    w[4, 0, 0, 0] = 40.0  # objectness from red channel
    w[5, 0, 0, 0] = 40.0  # class 0 score from red channel
    head_layer = b.conv_fixed(0, 7, w, bias, kernel=1, stride=16)
    head = HeadConfig(
        anchors=(((8.0, 8.0),),),
        strides=(16,),
        num_classes=2,
        class_names=("mask", "no_mask"),
    )
    return b.finish([head_layer], head)


def parameter_count(graph: ModelGraph) -> int:
    return sum(int(blob.size) for blob in graph.weights.values())

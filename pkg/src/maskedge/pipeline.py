"""End-to-end detection: letterbox preprocessing, head decoding,
non-maximum suppression, and mapping boxes back to source pixels.

The bilinear resize is implemented here (half-pixel centers, float64
arithmetic, float32 store) rather than delegated to an image library:
the browser port reproduces exactly this arithmetic, so native and
in-browser results agree on identical pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .executor import ExecutionPlan, execute
from .model.graph import HeadConfig, ModelGraph
from .tensor import Tensor

DEFAULT_CONF_THRESHOLD = 0.30
DEFAULT_IOU_THRESHOLD = 0.45
DEFAULT_PAD_VALUE = 114

# Caps exp() arguments during decode so garbage weights cannot overflow.
EXP_CLAMP = 4.0


@dataclass(frozen=True)
class ImageFrame:
    """RGB 8-bit frame, pixels row-major with shape (height, width, 3)."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ShapeError(f"frame size {self.width}x{self.height} is empty")
        if self.pixels.shape != (self.height, self.width, 3):
            raise ShapeError(
                f"pixel buffer shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x3"
            )


@dataclass(frozen=True)
class LetterboxTransform:
    scale: float
    pad_x: int
    pad_y: int

    def to_source(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.pad_x) / self.scale, (y - self.pad_y) / self.scale

    def to_network(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale + self.pad_x, y * self.scale + self.pad_y


@dataclass(frozen=True)
class RawDetection:
    """Candidate in network-input pixel coordinates."""

    class_id: int
    confidence: float
    box: tuple[float, float, float, float]


@dataclass(frozen=True)
class Detection:
    """Final detection in source-image pixel coordinates."""

    class_id: int
    confidence: float
    box: tuple[float, float, float, float]


def resize_bilinear(channel: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resize of one 2-D float64 channel."""
    h, w = channel.shape
    ys = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    xs = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    p00 = channel[np.ix_(y0, x0)]
    p01 = channel[np.ix_(y0, x1)]
    p10 = channel[np.ix_(y1, x0)]
    p11 = channel[np.ix_(y1, x1)]
    return (p00 * (1.0 - fx) + p01 * fx) * (1.0 - fy) + (p10 * (1.0 - fx) + p11 * fx) * fy


def letterbox(
    frame: ImageFrame, target: tuple[int, int], pad_value: int = DEFAULT_PAD_VALUE
) -> tuple[Tensor, LetterboxTransform]:
    """Aspect-preserving resize into a (1, 3, th, tw) tensor in [0, 1].

    The image is scaled by min(tw/w, th/h), centered, and borders filled
    with ``pad_value``.
    """
    tw, th = target
    if tw < 1 or th < 1:
        raise ShapeError(f"target size {tw}x{th} is empty")
    scale = min(tw / frame.width, th / frame.height)
    new_w = max(1, int(math.floor(frame.width * scale + 0.5)))
    new_h = max(1, int(math.floor(frame.height * scale + 0.5)))
    pad_x = (tw - new_w) // 2
    pad_y = (th - new_h) // 2

    out = np.full((1, 3, th, tw), np.float32(pad_value / 255.0), dtype=np.float32)
    src = frame.pixels.astype(np.float64) / 255.0
    for c in range(3):
        resized = resize_bilinear(src[:, :, c], new_h, new_w)
        out[0, c, pad_y : pad_y + new_h, pad_x : pad_x + new_w] = resized.astype(np.float32)
    return Tensor(out), LetterboxTransform(scale=scale, pad_x=pad_x, pad_y=pad_y)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def decode_head(
    head_tensor: Tensor,
    scale_index: int,
    head_cfg: HeadConfig,
    conf_threshold: float,
) -> list[RawDetection]:
    """Grid decode of one head scale into network-pixel candidates.

    Per (cell, anchor): center = (sigmoid(t) + cell) * stride, size =
    anchor * exp(t) with the exp argument clamped, confidence =
    sigmoid(objectness) * sigmoid(class score). Emits one candidate per
    (cell, anchor, class) at or above the threshold, in (anchor, row,
    column, class) order.
    """
    anchors = head_cfg.anchors[scale_index]
    stride = head_cfg.strides[scale_index]
    nc = head_cfg.num_classes
    na = len(anchors)
    n, c, gh, gw = head_tensor.data.shape
    if c != na * (5 + nc):
        raise ShapeError(
            f"head tensor has {c} channels, scale {scale_index} needs "
            f"{na} anchors x (5 + {nc}) = {na * (5 + nc)}"
        )

    t = head_tensor.data[0].astype(np.float64).reshape(na, 5 + nc, gh, gw)
    cx = np.arange(gw, dtype=np.float64)[None, None, :]
    cy = np.arange(gh, dtype=np.float64)[None, :, None]
    bx = (_sigmoid(t[:, 0]) + cx) * stride
    by = (_sigmoid(t[:, 1]) + cy) * stride
    aw = np.array([a[0] for a in anchors])[:, None, None]
    ah = np.array([a[1] for a in anchors])[:, None, None]
    bw = aw * np.exp(np.minimum(t[:, 2], EXP_CLAMP))
    bh = ah * np.exp(np.minimum(t[:, 3], EXP_CLAMP))
    obj = _sigmoid(t[:, 4])
    cls = _sigmoid(t[:, 5:])  # (na, nc, gh, gw)
    conf = obj[:, None] * cls  # (na, nc, gh, gw)

    # nonzero on (na, gh, gw, nc) yields (anchor, row, col, class) order
    conf_t = np.transpose(conf, (0, 2, 3, 1))
    hits = np.nonzero(conf_t >= conf_threshold)
    out: list[RawDetection] = []
    for a, gy, gx, k in zip(*hits):
        x, y = bx[a, gy, gx], by[a, gy, gx]
        hw, hh = bw[a, gy, gx] / 2.0, bh[a, gy, gx] / 2.0
        out.append(
            RawDetection(
                class_id=int(k),
                confidence=float(conf_t[a, gy, gx, k]),
                box=(float(x - hw), float(y - hh), float(x + hw), float(y + hh)),
            )
        )
    return out


def iou(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    """Intersection-over-union of two (x1, y1, x2, y2) boxes."""
    ix1 = max(a[0], b[0])
    iy1 = max(a[1], b[1])
    ix2 = min(a[2], b[2])
    iy2 = min(a[3], b[3])
    iw = max(0.0, ix2 - ix1)
    ih = max(0.0, iy2 - iy1)
    inter = iw * ih
    if inter <= 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def nms(candidates: list[RawDetection], iou_threshold: float) -> list[RawDetection]:
    """Class-aware greedy NMS.

    Candidates are visited by confidence descending (ties broken by
    original index ascending); one is kept iff its IoU with every
    already-kept candidate of the same class is below the threshold.
    """
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].confidence, i))
    kept: list[RawDetection] = []
    for i in order:
        c = candidates[i]
        if all(
            k.class_id != c.class_id or iou(k.box, c.box) < iou_threshold for k in kept
        ):
            kept.append(c)
    return kept


def _input_size(graph: ModelGraph) -> tuple[int, int]:
    p = next(l for l in graph.layers if l.kind == "input").params
    return p.w, p.h


def detect(
    frame: ImageFrame,
    graph: ModelGraph,
    exec_plan: ExecutionPlan,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    kernel_path: str = "optimized",
    pad_value: int = DEFAULT_PAD_VALUE,
) -> list[Detection]:
    """Full pipeline: letterbox, execute, decode every head, NMS, map
    boxes back to source pixels and clamp them inside the frame."""
    tw, th = _input_size(graph)
    tensor, transform = letterbox(frame, (tw, th), pad_value)
    outputs, _ = execute(graph, exec_plan, tensor, kernel_path=kernel_path)
    candidates: list[RawDetection] = []
    for i, head_out in enumerate(outputs):
        candidates.extend(decode_head(head_out, i, graph.head, conf_threshold))
    kept = nms(candidates, iou_threshold)

    detections: list[Detection] = []
    for c in kept:
        x1, y1 = transform.to_source(c.box[0], c.box[1])
        x2, y2 = transform.to_source(c.box[2], c.box[3])
        x1 = min(max(x1, 0.0), float(frame.width))
        x2 = min(max(x2, 0.0), float(frame.width))
        y1 = min(max(y1, 0.0), float(frame.height))
        y2 = min(max(y2, 0.0), float(frame.height))
        if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
            continue
        detections.append(
            Detection(class_id=c.class_id, confidence=c.confidence, box=(x1, y1, x2, y2))
        )
    return detections


def detections_to_json(detections: list[Detection], class_names) -> str:
    """Canonical detection JSON: fixed 5-decimal numbers, compact
    separators, so independent runtimes emit byte-identical output."""
    items = []
    for d in detections:
        box = ",".join(f"{v:.5f}" for v in d.box)
        name = class_names[d.class_id] if d.class_id < len(class_names) else str(d.class_id)
        items.append(
            '{"class":%s,"class_id":%d,"confidence":%.5f,"box":[%s]}'
            % (_json_str(name), d.class_id, d.confidence, box)
        )
    return "[" + ",".join(items) + "]"


def _json_str(s: str) -> str:
    import json

    return json.dumps(s, ensure_ascii=True)

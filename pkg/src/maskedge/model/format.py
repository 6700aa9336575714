"""MEF container: compact binary serialization of a ModelGraph.

Layout (all integers little-endian):

    "MEF1" | u16 version | u16 flags
    u32 metadata_len  | UTF-8 JSON string->string map
    u32 graph_len     | layer table; per layer:
                      |   u32 id, u8 kind, u32 param_len, param block,
                      |   u8 input_count, u32 input ids
    u32 head_len      | UTF-8 JSON head config (anchors, strides,
                      |   num_classes, class_names, output_layers)
    u64 weight_len    | blobs; per blob: u32 layer id, u64 byte length,
                      |   raw little-endian float32 data

Parsing is total: arbitrary bytes either yield a validated graph or a
ModelFormatError carrying a distinct kind and the byte offset of the
offending data. The parser never reads past a declared section length
and never allocates more than the declared (and capped) blob sizes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import ModelFormatError, ShapeError, ValidationError
from ..ops import Activation, ConvParams
from ..tensor import ELEMENT_CAP
from .graph import (
    HeadConfig,
    InputParams,
    LayerDesc,
    ModelGraph,
    PoolParams,
    UpsampleParams,
    validate_graph,
)

MAGIC = b"MEF1"
FORMAT_VERSION = 1

_KIND_CODES = {
    "input": 0,
    "conv": 1,
    "activate": 2,
    "max_pool": 3,
    "upsample": 4,
    "concat": 5,
    "add": 6,
}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}

_ACT_CODES = {"none": 0, "relu": 1, "relu6": 2, "leaky_relu": 3}
_CODE_ACTS = {v: k for k, v in _ACT_CODES.items()}

# Hard ceiling on declared section sizes so a 4-byte file cannot
# request a multi-gigabyte read.
_MAX_SECTION = 1 << 31


def _pack_params(layer: LayerDesc) -> bytes:
    p = layer.params
    if layer.kind == "input":
        return struct.pack("<III", p.c, p.h, p.w)
    if layer.kind == "conv":
        return struct.pack(
            "<IIIIIIIIB",
            p.out_channels,
            p.kernel[0],
            p.kernel[1],
            p.stride[0],
            p.stride[1],
            p.padding[0],
            p.padding[1],
            p.groups,
            1 if p.has_bias else 0,
        )
    if layer.kind == "activate":
        return struct.pack("<Bf", _ACT_CODES[p.kind], np.float32(p.slope))
    if layer.kind == "max_pool":
        return struct.pack("<IIII", p.kernel[0], p.kernel[1], p.stride[0], p.stride[1])
    if layer.kind == "upsample":
        return struct.pack("<I", p.factor)
    return b""


def serialize_model(graph: ModelGraph) -> bytes:
    """Deterministic bytes for a valid graph; raises ValidationError
    (listing all violations) otherwise."""
    validate_graph(graph)

    meta_json = json.dumps(graph.metadata, sort_keys=True, separators=(",", ":")).encode()

    layer_parts = []
    for layer in graph.layers:
        params = _pack_params(layer)
        part = struct.pack("<IBI", layer.id, _KIND_CODES[layer.kind], len(params))
        part += params
        part += struct.pack("<B", len(layer.inputs))
        part += struct.pack(f"<{len(layer.inputs)}I", *layer.inputs)
        layer_parts.append(part)
    graph_section = b"".join(layer_parts)

    head = {
        "anchors": [[[float(w), float(h)] for w, h in scale] for scale in graph.head.anchors],
        "strides": [int(s) for s in graph.head.strides],
        "num_classes": int(graph.head.num_classes),
        "class_names": list(graph.head.class_names),
        "output_layers": [int(i) for i in graph.outputs],
    }
    head_json = json.dumps(head, sort_keys=True, separators=(",", ":")).encode()

    blob_parts = []
    for lid in sorted(graph.weights):
        blob = np.ascontiguousarray(graph.weights[lid], dtype="<f4")
        blob_parts.append(struct.pack("<IQ", lid, blob.nbytes) + blob.tobytes())
    weight_section = b"".join(blob_parts)

    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", graph.version, 0)
    out += struct.pack("<I", len(meta_json)) + meta_json
    out += struct.pack("<I", len(graph_section)) + graph_section
    out += struct.pack("<I", len(head_json)) + head_json
    out += struct.pack("<Q", len(weight_section)) + weight_section
    return bytes(out)


class _Reader:
    """Bounds-checked little-endian cursor over the raw bytes."""

    def __init__(self, data: bytes, offset: int = 0, end: int | None = None):
        self.data = data
        self.pos = offset
        self.end = len(data) if end is None else end

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > self.end:
            raise ModelFormatError(
                "truncated", self.pos, f"need {n} bytes for {what}, have {self.end - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def _read_section(r: _Reader, name: str, wide: bool) -> _Reader:
    at = r.pos
    length = r.u64(f"{name} section length") if wide else r.u32(f"{name} section length")
    if length > _MAX_SECTION:
        raise ModelFormatError(
            "oversize_section", at, f"{name} section declares {length} bytes"
        )
    body_start = r.pos
    r.take(length, f"{name} section body")
    return _Reader(r.data, body_start, body_start + length)


def _parse_json_section(r: _Reader, name: str):
    at = r.pos
    raw = r.data[r.pos : r.end]
    try:
        value = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"bad_{name}", at, f"{name} JSON: {exc}") from None
    return value, at


def _parse_layer(r: _Reader) -> LayerDesc:
    at = r.pos
    lid = r.u32("layer id")
    code = r.u8("layer kind")
    kind = _CODE_KINDS.get(code)
    if kind is None:
        raise ModelFormatError("unknown_layer_kind", at + 4, f"kind code {code}")
    plen = r.u32("param-block length")
    pat = r.pos
    pbytes = r.take(plen, "param block")
    try:
        params = _unpack_params(kind, pbytes)
    except (struct.error, ValueError, ShapeError) as exc:
        raise ModelFormatError("bad_params", pat, f"layer {lid} ({kind}): {exc}") from None
    n_in = r.u8("input count")
    inputs = struct.unpack(f"<{n_in}I", r.take(4 * n_in, "input ids"))
    return LayerDesc(id=lid, kind=kind, params=params, inputs=inputs)


def _unpack_params(kind: str, b: bytes):
    if kind == "input":
        c, h, w = struct.unpack("<III", b)
        return InputParams(c, h, w)
    if kind == "conv":
        oc, kh, kw, sh, sw, ph, pw, g, has_bias = struct.unpack("<IIIIIIIIB", b)
        return ConvParams(
            out_channels=oc,
            kernel=(kh, kw),
            stride=(sh, sw),
            padding=(ph, pw),
            groups=g,
            has_bias=bool(has_bias),
        )
    if kind == "activate":
        code, slope = struct.unpack("<Bf", b)
        if code not in _CODE_ACTS:
            raise ValueError(f"activation code {code}")
        return Activation(kind=_CODE_ACTS[code], slope=float(np.float32(slope)))
    if kind == "max_pool":
        kh, kw, sh, sw = struct.unpack("<IIII", b)
        return PoolParams(kernel=(kh, kw), stride=(sh, sw))
    if kind == "upsample":
        (factor,) = struct.unpack("<I", b)
        return UpsampleParams(factor)
    if b:
        raise ValueError(f"{kind} takes no params, got {len(b)} bytes")
    return None


def _parse_head(value, at: int) -> tuple[HeadConfig, list[int]]:
    try:
        anchors = tuple(
            tuple((float(w), float(h)) for w, h in scale) for scale in value["anchors"]
        )
        strides = tuple(int(s) for s in value["strides"])
        num_classes = int(value["num_classes"])
        class_names = tuple(str(n) for n in value["class_names"])
        outputs = [int(i) for i in value["output_layers"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError("bad_head", at, f"head config: {exc}") from None
    return HeadConfig(anchors, strides, num_classes, class_names), outputs


def parse_model(data: bytes) -> ModelGraph:
    """Parse and validate MEF bytes. Total: any input either returns a
    valid ModelGraph or raises ModelFormatError with a byte offset."""
    r = _Reader(bytes(data))
    magic = r.take(4, "magic") if len(data) >= 4 else None
    if magic != MAGIC:
        raise ModelFormatError("bad_magic", 0, f"expected {MAGIC!r}")
    version = r.u16("format version")
    if version != FORMAT_VERSION:
        raise ModelFormatError("unsupported_version", 4, f"version {version}")
    r.u16("flags")

    meta_r = _read_section(r, "metadata", wide=False)
    meta_val, meta_at = _parse_json_section(meta_r, "metadata")
    if not isinstance(meta_val, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in meta_val.items()
    ):
        raise ModelFormatError("bad_metadata", meta_at, "metadata must map strings to strings")

    graph_r = _read_section(r, "graph", wide=False)
    graph_at = graph_r.pos
    layers: list[LayerDesc] = []
    while graph_r.pos < graph_r.end:
        layers.append(_parse_layer(graph_r))
        if len(layers) > 10_000:
            raise ModelFormatError("oversize_section", graph_at, "more than 10000 layers")

    head_r = _read_section(r, "head", wide=False)
    head_val, head_at = _parse_json_section(head_r, "head")
    head, outputs = _parse_head(head_val, head_at)

    weight_r = _read_section(r, "weights", wide=True)
    weights: dict[int, np.ndarray] = {}
    while weight_r.pos < weight_r.end:
        at = weight_r.pos
        lid = weight_r.u32("blob layer id")
        blen = weight_r.u64("blob length")
        if blen % 4 != 0:
            raise ModelFormatError("bad_blob", at, f"blob length {blen} not a multiple of 4")
        if blen // 4 > ELEMENT_CAP:
            raise ModelFormatError(
                "oversize_blob", at, f"blob declares {blen} bytes, cap is {ELEMENT_CAP * 4}"
            )
        raw = weight_r.take(blen, f"weight blob for layer {lid}")
        if lid in weights:
            raise ModelFormatError("bad_blob", at, f"duplicate blob for layer {lid}")
        weights[lid] = np.frombuffer(raw, dtype="<f4").copy()

    if r.pos != len(r.data):
        raise ModelFormatError(
            "trailing_data", r.pos, f"{len(r.data) - r.pos} bytes after weight section"
        )

    graph = ModelGraph(
        version=version,
        layers=layers,
        weights=weights,
        head=head,
        outputs=outputs,
        metadata=meta_val,
    )
    try:
        validate_graph(graph)
    except ValidationError as exc:
        kind = "invalid_graph"
        text = "; ".join(exc.violations)
        if "does not precede" in text or "duplicated" in text:
            kind = "dag_violation"
        elif "head" in text or "output layer" in text or "anchors" in text:
            kind = "head_mismatch"
        raise ModelFormatError(kind, graph_at, text) from None
    return graph

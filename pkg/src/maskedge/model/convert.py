"""Converter from a JSON weight manifest to a ModelGraph.

The manifest is the interchange point with training frameworks: a JSON
document naming layers plus raw weight blobs supplied separately. The
converter narrows every integer with an explicit 32-bit overflow check
(never silently truncates), folds batch-norm layers into the preceding
convolution, and emits all weights as float32.

Manifest shape::

    {
      "input": {"name": "image", "c": 3, "h": 320, "w": 320},
      "blobs": {"conv1_w": {"shape": [8, 3, 3, 3], "dtype": "f32"}, ...},
      "layers": [
        {"name": "conv1", "kind": "conv", "input": "image",
         "out_channels": 8, "kernel": [3, 3], "stride": [2, 2],
         "padding": [1, 1], "groups": 1,
         "weights": "conv1_w", "bias": "conv1_b"},
        {"name": "bn1", "kind": "batch_norm", "input": "conv1",
         "gamma": "bn1_g", "beta": "bn1_b", "mean": "bn1_m",
         "var": "bn1_v", "eps": 1e-5},
        {"name": "act1", "kind": "activate", "input": "bn1",
         "activation": "relu6"},
        {"name": "pool1", "kind": "max_pool", "input": "act1",
         "kernel": [2, 2], "stride": [2, 2]},
        {"name": "up1", "kind": "upsample", "input": "pool1", "factor": 2},
        {"name": "cat1", "kind": "concat", "inputs": ["a", "b"]},
        {"name": "sum1", "kind": "add", "inputs": ["a", "b"]}
      ],
      "head": {"anchors": [[[10, 14], [23, 27], [37, 58]]],
               "strides": [32], "class_names": ["mask", "no_mask"],
               "outputs": ["head_conv"]},
      "metadata": {"author": "..."}
    }
"""

from __future__ import annotations

import numpy as np

from ..errors import ManifestError, NarrowingError
from ..ops import Activation, ConvParams
from .graph import (
    HeadConfig,
    InputParams,
    LayerDesc,
    ModelGraph,
    PoolParams,
    UpsampleParams,
    validate_graph,
)

SUPPORTED_KINDS = ("conv", "batch_norm", "activate", "max_pool", "upsample", "concat", "add")

_I32_MIN = -(2**31)
_I32_MAX = 2**31 - 1

_BLOB_DTYPES = {"f32": "<f4", "f64": "<f8", "i32": "<i4", "i64": "<i8"}


def _i32(field: str, value) -> int:
    """Narrow a manifest integer, refusing anything outside 32-bit range."""
    if isinstance(value, bool) or not isinstance(value, int):
        raise ManifestError(f"field {field!r} must be an integer, got {value!r}")
    if not (_I32_MIN <= value <= _I32_MAX):
        raise NarrowingError(field, value)
    return value


def _pair(field: str, value) -> tuple[int, int]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ManifestError(f"field {field!r} must be a pair, got {value!r}")
    return (_i32(f"{field}[0]", value[0]), _i32(f"{field}[1]", value[1]))


def _load_blob(name: str, manifest_blobs: dict, raw_blobs: dict) -> np.ndarray:
    if name not in manifest_blobs:
        raise ManifestError(f"blob {name!r} is not declared in the manifest")
    decl = manifest_blobs[name]
    dtype = decl.get("dtype", "f32")
    if dtype not in _BLOB_DTYPES:
        raise ManifestError(
            f"blob {name!r} has unsupported dtype {dtype!r}; supported: "
            + ", ".join(sorted(_BLOB_DTYPES))
        )
    shape = [_i32(f"blobs.{name}.shape[{i}]", d) for i, d in enumerate(decl.get("shape", []))]
    if name not in raw_blobs:
        raise ManifestError(f"blob {name!r} declared but no byte data supplied")
    raw = raw_blobs[name]
    arr = np.frombuffer(raw, dtype=_BLOB_DTYPES[dtype])
    expect = int(np.prod(shape)) if shape else arr.size
    if arr.size != expect:
        raise ManifestError(
            f"blob {name!r}: {len(raw)} bytes hold {arr.size} elements, "
            f"declared shape {shape} needs {expect}"
        )
    if dtype == "i64":
        bad = arr[(arr < _I32_MIN) | (arr > _I32_MAX)]
        if bad.size:
            raise NarrowingError(f"blobs.{name}", int(bad[0]))
    return arr.astype(np.float64).reshape(shape)


def fold_batch_norm(weights, bias, gamma, beta, mean, var, eps=1e-5):
    """Fold BN(scale gamma, shift beta, stats mean/var, eps) into the
    preceding conv: w' = w * g/sqrt(var+eps), b' = (b-mean) * g/sqrt(var+eps) + beta.

    Computed in float64, returned as float32 (weights (oc,...), bias (oc,)).
    """
    w = np.asarray(weights, dtype=np.float64)
    b = np.zeros(w.shape[0]) if bias is None else np.asarray(bias, dtype=np.float64)
    g = np.asarray(gamma, dtype=np.float64)
    scale = g / np.sqrt(np.asarray(var, dtype=np.float64) + float(eps))
    w_f = w * scale.reshape((-1,) + (1,) * (w.ndim - 1))
    b_f = (b - np.asarray(mean, dtype=np.float64)) * scale + np.asarray(beta, dtype=np.float64)
    return w_f.astype(np.float32), b_f.astype(np.float32)


def convert_manifest(manifest: dict, weight_blobs: dict[str, bytes]) -> ModelGraph:
    """Build a validated float32 ModelGraph from a manifest plus raw blobs."""
    if "input" not in manifest or "layers" not in manifest or "head" not in manifest:
        raise ManifestError("manifest must declare 'input', 'layers' and 'head'")
    mblobs = manifest.get("blobs", {})

    inp = manifest["input"]
    input_name = inp.get("name", "input")
    layers: list[LayerDesc] = []
    weights: dict[int, np.ndarray] = {}
    name_to_id: dict[str, int] = {}
    conv_state: dict[int, dict] = {}  # id -> {"w": arr, "b": arr|None, "params": ConvParams}

    def fresh_id(name: str) -> int:
        if name in name_to_id:
            raise ManifestError(f"duplicate layer name {name!r}")
        lid = len(name_to_id)
        name_to_id[name] = lid
        return lid

    def resolve(field: str, name) -> int:
        if name not in name_to_id:
            raise ManifestError(f"{field} references unknown layer {name!r}")
        return name_to_id[name]

    lid = fresh_id(input_name)
    layers.append(
        LayerDesc(
            id=lid,
            kind="input",
            params=InputParams(
                _i32("input.c", inp["c"]), _i32("input.h", inp["h"]), _i32("input.w", inp["w"])
            ),
        )
    )

    consumers: dict[str, int] = {}

    for spec_layer in manifest["layers"]:
        kind = spec_layer.get("kind")
        name = spec_layer.get("name")
        if not name:
            raise ManifestError("every layer needs a 'name'")
        if kind not in SUPPORTED_KINDS:
            raise ManifestError(
                f"layer {name!r}: unsupported operator {kind!r}; supported: "
                + ", ".join(SUPPORTED_KINDS)
            )
        if kind in ("concat", "add"):
            in_names = spec_layer.get("inputs")
            if not (isinstance(in_names, list) and len(in_names) == 2):
                raise ManifestError(f"layer {name!r} ({kind}) needs exactly 2 'inputs'")
        else:
            if "input" not in spec_layer:
                raise ManifestError(f"layer {name!r} ({kind}) needs an 'input'")
            in_names = [spec_layer["input"]]
        for n in in_names:
            consumers[n] = consumers.get(n, 0) + 1

        if kind == "batch_norm":
            src_id = resolve(f"layer {name!r} input", in_names[0])
            if src_id not in conv_state:
                raise ManifestError(
                    f"layer {name!r}: batch_norm must directly follow a conv layer"
                )
            st = conv_state[src_id]
            if consumers.get(in_names[0], 0) > 1:
                raise ManifestError(
                    f"layer {name!r}: cannot fold batch_norm, conv {in_names[0]!r} "
                    "has other consumers"
                )
            if st["folded"]:
                raise ManifestError(f"layer {name!r}: conv already has a folded batch_norm")
            gamma = _load_blob(spec_layer["gamma"], mblobs, weight_blobs)
            beta = _load_blob(spec_layer["beta"], mblobs, weight_blobs)
            mean = _load_blob(spec_layer["mean"], mblobs, weight_blobs)
            var = _load_blob(spec_layer["var"], mblobs, weight_blobs)
            eps = float(spec_layer.get("eps", 1e-5))
            oc = st["params"].out_channels
            for bname, arr in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
                if arr.reshape(-1).size != oc:
                    raise ManifestError(
                        f"layer {name!r}: {bname} has {arr.size} elements, conv has {oc} channels"
                    )
            w_f, b_f = fold_batch_norm(
                st["w"], st["b"], gamma.reshape(-1), beta.reshape(-1),
                mean.reshape(-1), var.reshape(-1), eps,
            )
            st["w"], st["b"], st["folded"] = w_f, b_f, True
            st["params"] = ConvParams(
                out_channels=st["params"].out_channels,
                kernel=st["params"].kernel,
                stride=st["params"].stride,
                padding=st["params"].padding,
                groups=st["params"].groups,
                has_bias=True,
            )
            # the BN's name aliases the folded conv output
            name_to_id[name] = src_id
            continue

        input_ids = tuple(resolve(f"layer {name!r} input", n) for n in in_names)
        lid = fresh_id(name)

        if kind == "conv":
            params = ConvParams(
                out_channels=_i32(f"{name}.out_channels", spec_layer["out_channels"]),
                kernel=_pair(f"{name}.kernel", spec_layer.get("kernel", [1, 1])),
                stride=_pair(f"{name}.stride", spec_layer.get("stride", [1, 1])),
                padding=_pair(f"{name}.padding", spec_layer.get("padding", [0, 0])),
                groups=_i32(f"{name}.groups", spec_layer.get("groups", 1)),
                has_bias="bias" in spec_layer,
            )
            w = _load_blob(spec_layer["weights"], mblobs, weight_blobs)
            b = (
                _load_blob(spec_layer["bias"], mblobs, weight_blobs).reshape(-1)
                if params.has_bias
                else None
            )
            conv_state[lid] = {"w": w, "b": b, "params": params, "folded": False}
            layers.append(LayerDesc(id=lid, kind="conv", params=params, inputs=input_ids))
        elif kind == "activate":
            act = Activation(
                kind=spec_layer.get("activation", "none"),
                slope=float(spec_layer.get("slope", 0.1)),
            )
            layers.append(LayerDesc(id=lid, kind="activate", params=act, inputs=input_ids))
        elif kind == "max_pool":
            params = PoolParams(
                kernel=_pair(f"{name}.kernel", spec_layer["kernel"]),
                stride=_pair(f"{name}.stride", spec_layer.get("stride", spec_layer["kernel"])),
            )
            layers.append(LayerDesc(id=lid, kind="max_pool", params=params, inputs=input_ids))
        elif kind == "upsample":
            params = UpsampleParams(factor=_i32(f"{name}.factor", spec_layer["factor"]))
            layers.append(LayerDesc(id=lid, kind="upsample", params=params, inputs=input_ids))
        else:  # concat / add
            layers.append(LayerDesc(id=lid, kind=kind, params=None, inputs=input_ids))

    # materialize conv blobs (post-folding), fixing up params in the table
    fixed_layers = []
    for layer in layers:
        if layer.kind == "conv":
            st = conv_state[layer.id]
            params: ConvParams = st["params"]
            parts = [np.asarray(st["w"], dtype=np.float32).reshape(-1)]
            if params.has_bias:
                parts.append(np.asarray(st["b"], dtype=np.float32).reshape(-1))
            weights[layer.id] = np.concatenate(parts)
            layer = LayerDesc(id=layer.id, kind="conv", params=params, inputs=layer.inputs)
        fixed_layers.append(layer)

    hd = manifest["head"]
    anchors = tuple(
        tuple((float(w), float(h)) for w, h in scale) for scale in hd["anchors"]
    )
    strides = tuple(_i32(f"head.strides[{i}]", s) for i, s in enumerate(hd["strides"]))
    class_names = tuple(str(n) for n in hd["class_names"])
    head = HeadConfig(
        anchors=anchors,
        strides=strides,
        num_classes=len(class_names),
        class_names=class_names,
    )
    outputs = [resolve("head.outputs", n) for n in hd.get("outputs", [])]

    metadata = {str(k): str(v) for k, v in manifest.get("metadata", {}).items()}
    metadata.setdefault("class_names", ",".join(class_names))
    metadata.setdefault("input_size", f"{inp['w']}x{inp['h']}")

    graph = ModelGraph(
        version=1,
        layers=fixed_layers,
        weights=weights,
        head=head,
        outputs=outputs,
        metadata=metadata,
    )
    validate_graph(graph)
    return graph

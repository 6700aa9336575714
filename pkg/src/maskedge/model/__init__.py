from .graph import (
    HeadConfig,
    InputParams,
    LayerDesc,
    ModelGraph,
    PoolParams,
    UpsampleParams,
    infer_shapes,
    validate_graph,
)
from .format import parse_model, serialize_model
from .convert import convert_manifest, fold_batch_norm

__all__ = [
    "HeadConfig",
    "InputParams",
    "LayerDesc",
    "ModelGraph",
    "PoolParams",
    "UpsampleParams",
    "infer_shapes",
    "validate_graph",
    "parse_model",
    "serialize_model",
    "convert_manifest",
    "fold_batch_norm",
]

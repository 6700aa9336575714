"""maskedge: a self-contained inference engine for tiny YOLO-style
detectors, with a compact binary model format (MEF), an arena-planning
graph executor, a detection pipeline, and a benchmarking CLI."""

from .tensor import ELEMENT_CAP, Shape, Tensor, from_array, tensor_allclose, tensor_new
from .ops import Activation, ConvParams, activate, add, concat_channels, conv2d, max_pool, upsample_nearest
from .model import (
    HeadConfig,
    LayerDesc,
    ModelGraph,
    convert_manifest,
    fold_batch_norm,
    parse_model,
    serialize_model,
    validate_graph,
)
from .executor import ExecutionPlan, LayerProfile, execute, execute_no_reuse, plan
from .pipeline import (
    Detection,
    ImageFrame,
    LetterboxTransform,
    RawDetection,
    decode_head,
    detect,
    detections_to_json,
    iou,
    letterbox,
    nms,
)
from .metrics import GroundTruthBox, average_precision

__version__ = "0.1.0"

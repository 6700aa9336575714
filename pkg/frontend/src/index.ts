export { parseModel, ModelFormatError, convBlobLength, convOutputHw } from "./mef.js";
export type {
  ActivationParams,
  ConvParams,
  HeadConfig,
  InputParams,
  LayerDesc,
  LayerKind,
  Model,
  PoolParams,
  UpsampleParams,
} from "./mef.js";
export type { Tensor } from "./tensor.js";
export { at, setAt, tensorNew } from "./tensor.js";
export {
  activate,
  add,
  concatChannels,
  conv2d,
  maxPool,
  splitConvBlob,
  upsampleNearest,
} from "./ops.js";
export { execute } from "./executor.js";
export {
  DEFAULT_CONF_THRESHOLD,
  DEFAULT_IOU_THRESHOLD,
  DEFAULT_PAD_VALUE,
  EXP_CLAMP,
  decodeHead,
  detect,
  detectionsToJson,
  iou,
  letterbox,
  nms,
  toSource,
} from "./pipeline.js";
export type { Box, Detection, Frame, LetterboxTransform } from "./pipeline.js";
export { Detector, DetectorBusyError } from "./detector.js";
export type { DetectorOptions } from "./detector.js";
export { CLASS_COLORS, FpsMeter, drawDetections } from "./overlay.js";

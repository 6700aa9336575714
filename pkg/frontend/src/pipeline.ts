/** Detection pipeline: letterbox preprocessing, head decoding, NMS,
 * and mapping boxes back to source pixels.
 *
 * Arithmetic mirrors the native engine: the bilinear resize runs in
 * doubles with half-pixel centers and stores float32, the decode runs
 * in doubles, and the canonical JSON uses fixed 5-decimal formatting,
 * so both runtimes emit byte-identical output for identical pixels.
 */

import { execute } from "./executor.js";
import type { HeadConfig, Model } from "./mef.js";
import type { Tensor } from "./tensor.js";
import { tensorNew } from "./tensor.js";

export const DEFAULT_CONF_THRESHOLD = 0.3;
export const DEFAULT_IOU_THRESHOLD = 0.45;
export const DEFAULT_PAD_VALUE = 114;
export const EXP_CLAMP = 4.0;

export type Box = [number, number, number, number];

/** RGB 8-bit frame; pixels row-major, 3 or 4 bytes per pixel. */
export interface Frame {
  width: number;
  height: number;
  pixels: Uint8Array | Uint8ClampedArray;
  /** 3 for packed RGB, 4 for RGBA (canvas ImageData). Default 3. */
  channels?: 3 | 4;
}

export interface LetterboxTransform {
  scale: number;
  padX: number;
  padY: number;
}

export interface Detection {
  classId: number;
  confidence: number;
  box: Box;
}

export function toSource(t: LetterboxTransform, x: number, y: number): [number, number] {
  return [(x - t.padX) / t.scale, (y - t.padY) / t.scale];
}

function resizeBilinear(
  src: Float64Array,
  h: number,
  w: number,
  newH: number,
  newW: number,
): Float64Array {
  const out = new Float64Array(newH * newW);
  const ry = h / newH;
  const rx = w / newW;
  for (let i = 0; i < newH; i++) {
    let y = (i + 0.5) * ry - 0.5;
    y = Math.min(Math.max(y, 0.0), h - 1.0);
    const y0 = Math.floor(y);
    const y1 = Math.min(y0 + 1, h - 1);
    const fy = y - y0;
    for (let j = 0; j < newW; j++) {
      let x = (j + 0.5) * rx - 0.5;
      x = Math.min(Math.max(x, 0.0), w - 1.0);
      const x0 = Math.floor(x);
      const x1 = Math.min(x0 + 1, w - 1);
      const fx = x - x0;
      const p00 = src[y0 * w + x0];
      const p01 = src[y0 * w + x1];
      const p10 = src[y1 * w + x0];
      const p11 = src[y1 * w + x1];
      out[i * newW + j] =
        (p00 * (1.0 - fx) + p01 * fx) * (1.0 - fy) + (p10 * (1.0 - fx) + p11 * fx) * fy;
    }
  }
  return out;
}

/** Aspect-preserving resize into a (3, th, tw) tensor in [0, 1]. */
export function letterbox(
  frame: Frame,
  targetW: number,
  targetH: number,
  padValue: number = DEFAULT_PAD_VALUE,
): { tensor: Tensor; transform: LetterboxTransform } {
  const { width: w, height: h } = frame;
  if (w < 1 || h < 1) throw new RangeError(`frame size ${w}x${h} is empty`);
  const step = frame.channels ?? 3;
  if (frame.pixels.length !== w * h * step) {
    throw new RangeError(`pixel buffer has ${frame.pixels.length} bytes, expected ${w * h * step}`);
  }
  const scale = Math.min(targetW / w, targetH / h);
  const newW = Math.max(1, Math.floor(w * scale + 0.5));
  const newH = Math.max(1, Math.floor(h * scale + 0.5));
  const padX = Math.floor((targetW - newW) / 2);
  const padY = Math.floor((targetH - newH) / 2);

  const tensor = tensorNew(3, targetH, targetW);
  tensor.data.fill(Math.fround(padValue / 255.0));
  const channel = new Float64Array(h * w);
  for (let c = 0; c < 3; c++) {
    for (let i = 0; i < h * w; i++) {
      channel[i] = frame.pixels[i * step + c] / 255.0;
    }
    const resized = resizeBilinear(channel, h, w, newH, newW);
    for (let y = 0; y < newH; y++) {
      for (let x = 0; x < newW; x++) {
        tensor.data[(c * targetH + padY + y) * targetW + padX + x] = resized[y * newW + x];
      }
    }
  }
  return { tensor, transform: { scale, padX, padY } };
}

function sigmoid(x: number): number {
  return 1.0 / (1.0 + Math.exp(-x));
}

/** Grid decode of one head scale into network-pixel candidates, in
 * (anchor, row, column, class) order. */
export function decodeHead(
  head: Tensor,
  scaleIndex: number,
  cfg: HeadConfig,
  confThreshold: number,
): Detection[] {
  const anchors = cfg.anchors[scaleIndex];
  const stride = cfg.strides[scaleIndex];
  const nc = cfg.numClasses;
  const na = anchors.length;
  const { c, h: gh, w: gw } = head;
  if (c !== na * (5 + nc)) {
    throw new RangeError(`head tensor has ${c} channels, scale ${scaleIndex} needs ${na * (5 + nc)}`);
  }
  const step = 5 + nc;
  const plane = gh * gw;
  const out: Detection[] = [];
  for (let a = 0; a < na; a++) {
    const base = a * step * plane;
    for (let gy = 0; gy < gh; gy++) {
      for (let gx = 0; gx < gw; gx++) {
        const cell = gy * gw + gx;
        const obj = sigmoid(head.data[base + 4 * plane + cell]);
        for (let k = 0; k < nc; k++) {
          const conf = obj * sigmoid(head.data[base + (5 + k) * plane + cell]);
          if (conf >= confThreshold) {
            const bx = (sigmoid(head.data[base + cell]) + gx) * stride;
            const by = (sigmoid(head.data[base + plane + cell]) + gy) * stride;
            const tw = head.data[base + 2 * plane + cell];
            const th = head.data[base + 3 * plane + cell];
            const bw = anchors[a][0] * Math.exp(Math.min(tw, EXP_CLAMP));
            const bh = anchors[a][1] * Math.exp(Math.min(th, EXP_CLAMP));
            out.push({
              classId: k,
              confidence: conf,
              box: [bx - bw / 2, by - bh / 2, bx + bw / 2, by + bh / 2],
            });
          }
        }
      }
    }
  }
  return out;
}

export function iou(a: Box, b: Box): number {
  const iw = Math.min(a[2], b[2]) - Math.max(a[0], b[0]);
  const ih = Math.min(a[3], b[3]) - Math.max(a[1], b[1]);
  const inter = Math.max(0.0, iw) * Math.max(0.0, ih);
  if (inter <= 0.0) return 0.0;
  const areaA = (a[2] - a[0]) * (a[3] - a[1]);
  const areaB = (b[2] - b[0]) * (b[3] - b[1]);
  return inter / (areaA + areaB - inter);
}

/** Class-aware greedy NMS: confidence descending, index-ascending ties. */
export function nms(candidates: Detection[], iouThreshold: number): Detection[] {
  const order = candidates
    .map((_, i) => i)
    .sort((i, j) => candidates[j].confidence - candidates[i].confidence || i - j);
  const kept: Detection[] = [];
  for (const i of order) {
    const c = candidates[i];
    if (kept.every((k) => k.classId !== c.classId || iou(k.box, c.box) < iouThreshold)) {
      kept.push(c);
    }
  }
  return kept;
}

/** Full pipeline on one frame; boxes in source-pixel coordinates. */
export function detect(
  frame: Frame,
  model: Model,
  confThreshold: number = DEFAULT_CONF_THRESHOLD,
  iouThreshold: number = DEFAULT_IOU_THRESHOLD,
  padValue: number = DEFAULT_PAD_VALUE,
): Detection[] {
  const inputLayer = model.layers.find((l) => l.kind === "input")!;
  const [, th, tw] = model.shapes.get(inputLayer.id)!;
  const { tensor, transform } = letterbox(frame, tw, th, padValue);
  const outputs = execute(model, tensor);
  const candidates: Detection[] = [];
  outputs.forEach((headOut, i) => {
    candidates.push(...decodeHead(headOut, i, model.head, confThreshold));
  });
  const kept = nms(candidates, iouThreshold);

  const detections: Detection[] = [];
  for (const c of kept) {
    let [x1, y1] = toSource(transform, c.box[0], c.box[1]);
    let [x2, y2] = toSource(transform, c.box[2], c.box[3]);
    x1 = Math.min(Math.max(x1, 0.0), frame.width);
    x2 = Math.min(Math.max(x2, 0.0), frame.width);
    y1 = Math.min(Math.max(y1, 0.0), frame.height);
    y2 = Math.min(Math.max(y2, 0.0), frame.height);
    if (x2 - x1 <= 0.0 || y2 - y1 <= 0.0) continue;
    detections.push({ classId: c.classId, confidence: c.confidence, box: [x1, y1, x2, y2] });
  }
  return detections;
}

function fixed5(v: number): string {
  return (v === 0 ? 0 : v).toFixed(5); // normalize -0
}

function asciiJsonString(s: string): string {
  // JSON string with non-ASCII escaped, matching the native emitter
  return JSON.stringify(s).replace(/[\u0080-\uffff]/g, (ch) => {
    return "\\u" + ch.charCodeAt(0).toString(16).padStart(4, "0");
  });
}

/** Canonical detection JSON: fixed 5-decimal numbers, compact
 * separators, byte-identical across runtimes. */
export function detectionsToJson(detections: Detection[], classNames: string[]): string {
  const items = detections.map((d) => {
    const name = d.classId < classNames.length ? classNames[d.classId] : String(d.classId);
    const box = d.box.map(fixed5).join(",");
    return (
      `{"class":${asciiJsonString(name)},"class_id":${d.classId},` +
      `"confidence":${fixed5(d.confidence)},"box":[${box}]}`
    );
  });
  return "[" + items.join(",") + "]";
}

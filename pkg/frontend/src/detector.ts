/** Stateful detector handle for interactive use: owns a parsed model,
 * rejects overlapping detect calls so a render loop can drop frames,
 * and releases its buffers on dispose. */

import type { Model } from "./mef.js";
import { parseModel } from "./mef.js";
import type { Detection, Frame } from "./pipeline.js";
import {
  DEFAULT_CONF_THRESHOLD,
  DEFAULT_IOU_THRESHOLD,
  detect,
} from "./pipeline.js";

export interface DetectorOptions {
  confThreshold?: number;
  iouThreshold?: number;
}

export class DetectorBusyError extends Error {
  constructor() {
    super("a detect call is already in flight; drop this frame and retry");
    this.name = "DetectorBusyError";
  }
}

export class Detector {
  private model: Model | null;
  private busy = false;
  readonly confThreshold: number;
  readonly iouThreshold: number;

  private constructor(model: Model, opts: DetectorOptions) {
    this.model = model;
    this.confThreshold = opts.confThreshold ?? DEFAULT_CONF_THRESHOLD;
    this.iouThreshold = opts.iouThreshold ?? DEFAULT_IOU_THRESHOLD;
  }

  static fromBuffer(data: ArrayBuffer | Uint8Array, opts: DetectorOptions = {}): Detector {
    return new Detector(parseModel(data), opts);
  }

  static async fromUrl(url: string, opts: DetectorOptions = {}): Promise<Detector> {
    const resp = await fetch(url);
    if (!resp.ok) throw new Error(`fetching model: HTTP ${resp.status} for ${url}`);
    return Detector.fromBuffer(await resp.arrayBuffer(), opts);
  }

  get classNames(): string[] {
    this.ensureLive();
    return this.model!.head.classNames;
  }

  /** Model input size as [width, height]. */
  get inputSize(): [number, number] {
    this.ensureLive();
    const input = this.model!.layers.find((l) => l.kind === "input")!;
    const [, h, w] = this.model!.shapes.get(input.id)!;
    return [w, h];
  }

  get isBusy(): boolean {
    return this.busy;
  }

  /** Run one frame. Rejects with DetectorBusyError if a previous call
   * has not settled yet, so callers can skip frames instead of queuing. */
  async detect(frame: Frame): Promise<Detection[]> {
    this.ensureLive();
    if (this.busy) throw new DetectorBusyError();
    this.busy = true;
    try {
      // yield once so the busy flag is observable before the heavy loop
      await Promise.resolve();
      return detect(frame, this.model!, this.confThreshold, this.iouThreshold);
    } finally {
      this.busy = false;
    }
  }

  dispose(): void {
    this.model = null;
  }

  get disposed(): boolean {
    return this.model === null;
  }

  private ensureLive(): void {
    if (this.model === null) throw new Error("detector has been disposed");
  }
}

/** Straight-line graph execution in layer-table order. */

import type {
  ActivationParams,
  ConvParams,
  Model,
  PoolParams,
  UpsampleParams,
} from "./mef.js";
import { activate, add, concatChannels, conv2d, maxPool, splitConvBlob, upsampleNearest } from "./ops.js";
import type { Tensor } from "./tensor.js";

/** Run the graph on one input tensor; returns head outputs in scale order. */
export function execute(model: Model, input: Tensor): Tensor[] {
  const inputLayer = model.layers.find((l) => l.kind === "input")!;
  const shape = model.shapes.get(inputLayer.id)!;
  if (input.c !== shape[0] || input.h !== shape[1] || input.w !== shape[2]) {
    throw new RangeError(
      `input is ${input.c}x${input.h}x${input.w}, model wants ${shape.join("x")}`,
    );
  }

  const values = new Map<number, Tensor>();
  for (const layer of model.layers) {
    const ins = layer.inputs.map((i) => values.get(i)!);
    let out: Tensor;
    switch (layer.kind) {
      case "input":
        out = input;
        break;
      case "conv": {
        const p = layer.params as ConvParams;
        const wb = splitConvBlob(p, ins[0].c, model.weights.get(layer.id)!);
        out = conv2d(ins[0], p, wb);
        break;
      }
      case "activate":
        out = activate(ins[0], layer.params as ActivationParams);
        break;
      case "max_pool":
        out = maxPool(ins[0], layer.params as PoolParams);
        break;
      case "upsample":
        out = upsampleNearest(ins[0], (layer.params as UpsampleParams).factor);
        break;
      case "concat":
        out = concatChannels(ins[0], ins[1]);
        break;
      case "add":
        out = add(ins[0], ins[1]);
        break;
    }
    for (let i = 0; i < out.data.length; i++) {
      if (!Number.isFinite(out.data[i])) {
        throw new RangeError(`layer ${layer.id} (${layer.kind}) produced a non-finite value`);
      }
    }
    values.set(layer.id, out);
  }
  return model.outputs.map((lid) => values.get(lid)!);
}

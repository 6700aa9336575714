import { describe, expect, it } from "vitest";

import type { ConvParams } from "../src/mef.js";
import {
  activate,
  add,
  concatChannels,
  conv2d,
  maxPool,
  upsampleNearest,
} from "../src/ops.js";
import type { Tensor } from "../src/tensor.js";
import { tensorNew } from "../src/tensor.js";

function tensor(c: number, h: number, w: number, values: number[]): Tensor {
  const t = tensorNew(c, h, w);
  t.data.set(values);
  return t;
}

function convParams(overrides: Partial<ConvParams> = {}): ConvParams {
  return {
    outChannels: 1,
    kernel: [1, 1],
    stride: [1, 1],
    padding: [0, 0],
    groups: 1,
    hasBias: false,
    ...overrides,
  };
}

describe("conv2d", () => {
  it("1x1 identity kernel copies the input", () => {
    const x = tensor(1, 2, 2, [1, 2, 3, 4]);
    const out = conv2d(x, convParams(), { weights: new Float32Array([1]), bias: null });
    expect(Array.from(out.data)).toEqual([1, 2, 3, 4]);
  });

  it("3x3 box filter sums the padded neighborhood", () => {
    const x = tensor(1, 3, 3, [1, 1, 1, 1, 1, 1, 1, 1, 1]);
    const p = convParams({ kernel: [3, 3], padding: [1, 1] });
    const out = conv2d(x, p, { weights: new Float32Array(9).fill(1), bias: null });
    expect(Array.from(out.data)).toEqual([4, 6, 4, 6, 9, 6, 4, 6, 4]);
  });

  it("applies bias per output channel", () => {
    const x = tensor(1, 1, 2, [1, 2]);
    const p = convParams({ outChannels: 2, hasBias: true });
    const out = conv2d(x, p, {
      weights: new Float32Array([1, 10]),
      bias: new Float32Array([0.5, -0.5]),
    });
    expect(Array.from(out.data)).toEqual([1.5, 2.5, 9.5, 19.5]);
  });

  it("depthwise groups keep channels independent", () => {
    const x = tensor(2, 1, 2, [1, 2, 3, 4]);
    const p = convParams({ outChannels: 2, groups: 2 });
    const out = conv2d(x, p, { weights: new Float32Array([2, 10]), bias: null });
    expect(Array.from(out.data)).toEqual([2, 4, 30, 40]);
  });

  it("stride subsamples output positions", () => {
    const x = tensor(1, 1, 4, [1, 2, 3, 4]);
    const p = convParams({ stride: [1, 2] });
    const out = conv2d(x, p, { weights: new Float32Array([1]), bias: null });
    expect(Array.from(out.data)).toEqual([1, 3]);
  });
});

describe("elementwise ops", () => {
  it("relu / relu6 / leaky_relu", () => {
    const x = tensor(1, 1, 4, [-2, -0.5, 3, 8]);
    expect(Array.from(activate(x, { kind: "relu", slope: 0.1 }).data)).toEqual([0, 0, 3, 8]);
    expect(Array.from(activate(x, { kind: "relu6", slope: 0.1 }).data)).toEqual([0, 0, 3, 6]);
    const leaky = activate(x, { kind: "leaky_relu", slope: 0.1 });
    expect(leaky.data[0]).toBeCloseTo(-0.2, 6);
    expect(leaky.data[2]).toBe(3);
  });

  it("leaky slope multiplies in float32 precision", () => {
    const x = tensor(1, 1, 1, [-1]);
    const out = activate(x, { kind: "leaky_relu", slope: 0.1 });
    expect(out.data[0]).toBe(Math.fround(-1 * Math.fround(0.1)));
  });

  it("max_pool 2x2/2", () => {
    const x = tensor(1, 4, 4, [...Array(16).keys()]);
    const out = maxPool(x, { kernel: [2, 2], stride: [2, 2] });
    expect(Array.from(out.data)).toEqual([5, 7, 13, 15]);
  });

  it("upsample replicates blocks and strides back exactly", () => {
    const x = tensor(1, 2, 2, [1, 2, 3, 4]);
    const out = upsampleNearest(x, 2);
    expect(out.h).toBe(4);
    expect(Array.from(out.data)).toEqual([1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4]);
  });

  it("concat stacks channels in order", () => {
    const a = tensor(1, 1, 2, [1, 2]);
    const b = tensor(2, 1, 2, [3, 4, 5, 6]);
    const out = concatChannels(a, b);
    expect(out.c).toBe(3);
    expect(Array.from(out.data)).toEqual([1, 2, 3, 4, 5, 6]);
  });

  it("add sums in float32", () => {
    const a = tensor(1, 1, 2, [1.5, -2]);
    const b = tensor(1, 1, 2, [0.25, 2]);
    expect(Array.from(add(a, b).data)).toEqual([1.75, 0]);
    expect(() => add(a, tensor(1, 1, 3, [0, 0, 0]))).toThrow(/mismatch/);
  });
});

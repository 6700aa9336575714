import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { ModelFormatError, parseModel } from "../src/mef.js";

const FIXTURES = join(__dirname, "fixtures");

function load(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(FIXTURES, name)));
}

describe("parseModel", () => {
  it("parses the single-shot fixture", () => {
    const model = parseModel(load("single_shot.mef"));
    expect(model.version).toBe(1);
    expect(model.layers.map((l) => l.kind)).toEqual(["input", "conv"]);
    expect(model.head.classNames).toEqual(["mask", "no_mask"]);
    expect(model.head.strides).toEqual([16]);
    expect(model.head.anchors).toEqual([[[8, 8]]]);
    expect(model.outputs).toEqual([1]);
    expect(model.weights.get(1)!.length).toBe(7 * 3 + 7);
    expect(model.shapes.get(1)).toEqual([7, 2, 2]);
    expect(model.metadata.input_size).toBe("32x32");
  });

  it("parses the random-graph fixture", () => {
    const model = parseModel(load("rand.mef"));
    expect(model.layers[0].kind).toBe("input");
    expect(model.outputs.length).toBe(1);
    const outShape = model.shapes.get(model.outputs[0])!;
    expect(outShape[0]).toBe(model.head.anchors[0].length * (5 + model.head.numClasses));
  });

  it("rejects a bad magic at offset 0", () => {
    const data = load("single_shot.mef");
    data[0] = 0x58;
    try {
      parseModel(data);
      expect.unreachable();
    } catch (exc) {
      expect(exc).toBeInstanceOf(ModelFormatError);
      expect((exc as ModelFormatError).kind).toBe("bad_magic");
      expect((exc as ModelFormatError).offset).toBe(0);
    }
  });

  it("rejects an unsupported version", () => {
    const data = load("single_shot.mef");
    data[4] = 9;
    expect(() => parseModel(data)).toThrowError(/unsupported_version/);
  });

  it("reports truncation with a byte offset", () => {
    const data = load("single_shot.mef");
    try {
      parseModel(data.subarray(0, data.length - 10));
      expect.unreachable();
    } catch (exc) {
      const e = exc as ModelFormatError;
      expect(e).toBeInstanceOf(ModelFormatError);
      expect(e.kind).toBe("truncated");
      expect(e.offset).toBeGreaterThan(0);
    }
  });

  it("rejects trailing bytes", () => {
    const data = load("single_shot.mef");
    const padded = new Uint8Array(data.length + 4);
    padded.set(data);
    expect(() => parseModel(padded)).toThrowError(/trailing_data/);
  });

  it("never throws anything but ModelFormatError on mutated bytes", () => {
    const base = load("single_shot.mef");
    let seed = 1234;
    const rand = () => {
      // xorshift32, deterministic across runs
      seed ^= seed << 13;
      seed ^= seed >>> 17;
      seed ^= seed << 5;
      return (seed >>> 0) / 2 ** 32;
    };
    for (let i = 0; i < 500; i++) {
      const buf = base.slice();
      const flips = 1 + Math.floor(rand() * 4);
      for (let f = 0; f < flips; f++) {
        buf[Math.floor(rand() * buf.length)] = Math.floor(rand() * 256);
      }
      const cut = rand() < 0.3 ? buf.subarray(0, Math.floor(rand() * buf.length)) : buf;
      try {
        parseModel(cut);
      } catch (exc) {
        expect(exc).toBeInstanceOf(ModelFormatError);
        expect((exc as ModelFormatError).offset).toBeGreaterThanOrEqual(0);
      }
    }
  });
});

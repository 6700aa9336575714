/** Cross-runtime parity: the browser engine must reproduce the native
 * engine's canonical output byte for byte on committed fixtures. The
 * fixtures (models, raw frames, expected JSON, a letterbox tensor dump)
 * are generated by fixtures/generate_fixtures.py. */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseModel } from "../src/mef.js";
import { detect, detectionsToJson, letterbox } from "../src/pipeline.js";
import { Detector, DetectorBusyError } from "../src/detector.js";

const FIXTURES = join(__dirname, "fixtures");

function bytes(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(FIXTURES, name)));
}

function text(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

describe("native parity", () => {
  it("single-shot model: byte-identical detection JSON", () => {
    const model = parseModel(bytes("single_shot.mef"));
    const frame = { width: 32, height: 32, pixels: bytes("frame_single_32x32.rgb") };
    const dets = detect(frame, model, 0.5);
    expect(detectionsToJson(dets, model.head.classNames)).toBe(text("expected_single.json"));
  });

  it("random graph over the full op set: byte-identical detection JSON", () => {
    const model = parseModel(bytes("rand.mef"));
    const frame = { width: 48, height: 40, pixels: bytes("frame_rand_48x40.rgb") };
    const dets = detect(frame, model, 0.05);
    expect(dets.length).toBeGreaterThan(0);
    expect(detectionsToJson(dets, model.head.classNames)).toBe(text("expected_rand.json"));
  });

  it("letterbox tensor matches the native float32 dump bitwise", () => {
    const raw = bytes("letterbox_rand.f32");
    const expected = new Float32Array(raw.length / 4);
    new Uint8Array(expected.buffer).set(raw); // realign to a 4-byte boundary
    const frame = { width: 48, height: 40, pixels: bytes("frame_rand_48x40.rgb") };
    const { tensor } = letterbox(frame, 32, 32);
    expect(tensor.data.length).toBe(expected.length);
    for (let i = 0; i < expected.length; i++) {
      if (tensor.data[i] !== expected[i]) {
        expect.fail(`letterbox value ${i} differs: ${tensor.data[i]} vs ${expected[i]}`);
      }
    }
  });
});

describe("Detector handle", () => {
  it("detects through the handle and reports model info", async () => {
    const d = Detector.fromBuffer(bytes("single_shot.mef"), { confThreshold: 0.5 });
    expect(d.classNames).toEqual(["mask", "no_mask"]);
    expect(d.inputSize).toEqual([32, 32]);
    const dets = await d.detect({
      width: 32,
      height: 32,
      pixels: bytes("frame_single_32x32.rgb"),
    });
    expect(detectionsToJson(dets, d.classNames)).toBe(text("expected_single.json"));
    d.dispose();
    expect(d.disposed).toBe(true);
    expect(() => d.classNames).toThrow(/disposed/);
  });

  it("rejects overlapping calls with DetectorBusyError", async () => {
    const d = Detector.fromBuffer(bytes("single_shot.mef"));
    const frame = { width: 32, height: 32, pixels: bytes("frame_single_32x32.rgb") };
    const first = d.detect(frame);
    await expect(d.detect(frame)).rejects.toBeInstanceOf(DetectorBusyError);
    await first; // the first call still completes normally
    await expect(d.detect(frame)).resolves.toBeDefined();
  });
});

/** Webcam demo: stream frames through the detector and draw overlays.
 *
 * Everything runs client side; the page is static and the model file is
 * the only network fetch. The render loop drops frames whenever the
 * detector is still busy, so video stays smooth even on slow machines.
 */

import { Detector, DetectorBusyError } from "../detector.js";
import { FpsMeter, drawDetections } from "../overlay.js";
import type { Detection } from "../pipeline.js";

const DEFAULT_MODEL_URL = "model.mef";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

/** Tiny wasm module using a v128 op; validates only where SIMD exists. */
const SIMD_PROBE = new Uint8Array([
  0x00, 0x61, 0x73, 0x6d, 0x01, 0x00, 0x00, 0x00, 0x01, 0x05, 0x01, 0x60,
  0x00, 0x01, 0x7b, 0x03, 0x02, 0x01, 0x00, 0x0a, 0x0a, 0x01, 0x08, 0x00,
  0x41, 0x00, 0xfd, 0x0f, 0xfd, 0x62, 0x0b,
]);

function describeCapabilities(): string {
  const parts: string[] = [];
  parts.push(typeof WebAssembly === "object" ? "wasm: yes" : "wasm: no");
  let simd = false;
  try {
    simd = typeof WebAssembly === "object" && WebAssembly.validate(SIMD_PROBE);
  } catch {
    simd = false;
  }
  parts.push(simd ? "simd: yes" : "simd: no");
  parts.push(`threads: ${typeof SharedArrayBuffer === "function" ? "yes" : "no"}`);
  return parts.join(" | ");
}

async function main(): Promise<void> {
  const video = el<HTMLVideoElement>("video");
  const canvas = el<HTMLCanvasElement>("canvas");
  const status = el<HTMLSpanElement>("status");
  const caps = el<HTMLSpanElement>("caps");
  const fpsLabel = el<HTMLSpanElement>("fps");

  caps.textContent = describeCapabilities();

  const modelUrl = new URLSearchParams(location.search).get("model") ?? DEFAULT_MODEL_URL;
  status.textContent = `loading ${modelUrl} ...`;
  let detector: Detector;
  try {
    detector = await Detector.fromUrl(modelUrl);
  } catch (exc) {
    status.textContent = `model load failed: ${exc}`;
    return;
  }
  const [mw, mh] = detector.inputSize;
  status.textContent = `model ready (${mw}x${mh}, classes: ${detector.classNames.join(", ")})`;

  const stream = await navigator.mediaDevices.getUserMedia({
    video: { width: { ideal: 640 }, height: { ideal: 480 }, facingMode: "user" },
    audio: false,
  });
  video.srcObject = stream;
  await video.play();

  canvas.width = video.videoWidth;
  canvas.height = video.videoHeight;
  const ctx = canvas.getContext("2d", { willReadFrequently: true })!;
  const meter = new FpsMeter(0.1);
  let lastDetections: Detection[] = [];
  let dropped = 0;

  const loop = async () => {
    ctx.drawImage(video, 0, 0, canvas.width, canvas.height);
    const image = ctx.getImageData(0, 0, canvas.width, canvas.height);
    try {
      lastDetections = await detector.detect({
        width: image.width,
        height: image.height,
        pixels: image.data,
        channels: 4,
      });
      fpsLabel.textContent = `${meter.tick(performance.now()).toFixed(1)} fps, ${dropped} dropped`;
    } catch (exc) {
      if (exc instanceof DetectorBusyError) {
        dropped += 1; // keep the video smooth; skip this frame
      } else {
        status.textContent = `detect failed: ${exc}`;
        detector.dispose();
        return;
      }
    }
    drawDetections(ctx, lastDetections, detector.classNames);
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

main().catch((exc) => {
  const status = document.getElementById("status");
  if (status) status.textContent = String(exc);
});

/** Operator kernels, float32-faithful.
 *
 * Convolution accumulates in doubles over a fixed (channel, ky, kx) tap
 * order and rounds once to float32 per output element, matching the
 * native engine's reference kernel bit for bit. Elementwise ops round
 * after every arithmetic step with Math.fround, the way a float32
 * pipeline would.
 */

import type { ActivationParams, ConvParams, PoolParams } from "./mef.js";
import { convBlobLength, convOutputHw } from "./mef.js";
import type { Tensor } from "./tensor.js";
import { tensorNew } from "./tensor.js";

export interface ConvWeights {
  /** (oc, ic/groups, kh, kw) row-major. */
  weights: Float32Array;
  bias: Float32Array | null;
}

export function splitConvBlob(p: ConvParams, inChannels: number, blob: Float32Array): ConvWeights {
  const icg = inChannels / p.groups;
  const nw = p.outChannels * icg * p.kernel[0] * p.kernel[1];
  if (blob.length !== convBlobLength(p, inChannels)) {
    throw new RangeError(`weight blob has ${blob.length} floats`);
  }
  return {
    weights: blob.subarray(0, nw),
    bias: p.hasBias ? blob.subarray(nw, nw + p.outChannels) : null,
  };
}

export function conv2d(x: Tensor, p: ConvParams, wb: ConvWeights): Tensor {
  const { c, h, w } = x;
  const [kh, kw] = p.kernel;
  const [sh, sw] = p.stride;
  const [ph, pw] = p.padding;
  const [oh, ow] = convOutputHw(h, w, p);
  const g = p.groups;
  const icg = c / g;
  const ocg = p.outChannels / g;
  const out = tensorNew(p.outChannels, oh, ow);

  for (let gi = 0; gi < g; gi++) {
    for (let oj = 0; oj < ocg; oj++) {
      const oc = gi * ocg + oj;
      const bias = wb.bias !== null ? wb.bias[oc] : 0.0;
      for (let oy = 0; oy < oh; oy++) {
        for (let ox = 0; ox < ow; ox++) {
          let acc = bias; // double accumulation
          for (let cj = 0; cj < icg; cj++) {
            const ci = gi * icg + cj;
            const wBase = ((oc * icg + cj) * kh) * kw;
            const xBase = ci * h * w;
            for (let ky = 0; ky < kh; ky++) {
              const iy = oy * sh - ph + ky;
              for (let kx = 0; kx < kw; kx++) {
                const ix = ox * sw - pw + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                  acc += x.data[xBase + iy * w + ix] * wb.weights[wBase + ky * kw + kx];
                } else {
                  acc += 0.0; // the native kernel adds an explicit zero pad tap
                }
              }
            }
          }
          out.data[(oc * oh + oy) * ow + ox] = acc; // Float32Array store rounds
        }
      }
    }
  }
  return out;
}

export function activate(x: Tensor, p: ActivationParams): Tensor {
  if (p.kind === "none") return x;
  const out = tensorNew(x.c, x.h, x.w);
  const d = x.data;
  const slope = Math.fround(p.slope);
  for (let i = 0; i < d.length; i++) {
    const v = d[i];
    if (p.kind === "relu") {
      out.data[i] = v > 0 ? v : 0;
    } else if (p.kind === "relu6") {
      out.data[i] = v > 6 ? 6 : v > 0 ? v : 0;
    } else {
      out.data[i] = v > 0 ? v : Math.fround(v * slope);
    }
  }
  return out;
}

export function maxPool(x: Tensor, p: PoolParams): Tensor {
  const { c, h, w } = x;
  const [kh, kw] = p.kernel;
  const [sh, sw] = p.stride;
  if (kh > h || kw > w) throw new RangeError(`pool kernel ${kh}x${kw} larger than input`);
  const oh = Math.floor((h - kh) / sh) + 1;
  const ow = Math.floor((w - kw) / sw) + 1;
  const out = tensorNew(c, oh, ow);
  for (let ci = 0; ci < c; ci++) {
    for (let oy = 0; oy < oh; oy++) {
      for (let ox = 0; ox < ow; ox++) {
        let best = -Infinity;
        for (let ky = 0; ky < kh; ky++) {
          for (let kx = 0; kx < kw; kx++) {
            const v = x.data[(ci * h + oy * sh + ky) * w + ox * sw + kx];
            if (v > best) best = v;
          }
        }
        out.data[(ci * oh + oy) * ow + ox] = best;
      }
    }
  }
  return out;
}

export function upsampleNearest(x: Tensor, factor: number): Tensor {
  if (factor === 1) return x;
  const out = tensorNew(x.c, x.h * factor, x.w * factor);
  for (let ci = 0; ci < x.c; ci++) {
    for (let y = 0; y < x.h * factor; y++) {
      const srcRow = (ci * x.h + Math.floor(y / factor)) * x.w;
      const dstRow = (ci * x.h * factor + y) * x.w * factor;
      for (let xx = 0; xx < x.w * factor; xx++) {
        out.data[dstRow + xx] = x.data[srcRow + Math.floor(xx / factor)];
      }
    }
  }
  return out;
}

export function concatChannels(a: Tensor, b: Tensor): Tensor {
  if (a.h !== b.h || a.w !== b.w) throw new RangeError("concat spatial mismatch");
  const out = tensorNew(a.c + b.c, a.h, a.w);
  out.data.set(a.data, 0);
  out.data.set(b.data, a.data.length);
  return out;
}

export function add(a: Tensor, b: Tensor): Tensor {
  if (a.c !== b.c || a.h !== b.h || a.w !== b.w) throw new RangeError("add shape mismatch");
  const out = tensorNew(a.c, a.h, a.w);
  for (let i = 0; i < a.data.length; i++) {
    out.data[i] = a.data[i] + b.data[i]; // store rounds to float32
  }
  return out;
}

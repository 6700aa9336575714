/** NCHW float32 tensor with batch size fixed at 1. */
export interface Tensor {
  c: number;
  h: number;
  w: number;
  /** Row-major (c, h, w) float32 data, length c*h*w. */
  data: Float32Array;
}

export function tensorNew(c: number, h: number, w: number): Tensor {
  if (c < 1 || h < 1 || w < 1) {
    throw new RangeError(`empty tensor shape ${c}x${h}x${w}`);
  }
  return { c, h, w, data: new Float32Array(c * h * w) };
}

export function at(t: Tensor, c: number, y: number, x: number): number {
  return t.data[(c * t.h + y) * t.w + x];
}

export function setAt(t: Tensor, c: number, y: number, x: number, v: number): void {
  t.data[(c * t.h + y) * t.w + x] = v;
}

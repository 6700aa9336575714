/** MEF model container parser.
 *
 * Layout (all integers little-endian):
 *
 *   "MEF1" | u16 version | u16 flags
 *   u32 metadata_len | UTF-8 JSON string->string map
 *   u32 graph_len    | layer table; per layer:
 *                    |   u32 id, u8 kind, u32 param_len, param block,
 *                    |   u8 input_count, u32 input ids
 *   u32 head_len     | UTF-8 JSON head config
 *   u64 weight_len   | blobs; per blob: u32 layer id, u64 byte length,
 *                    |   raw little-endian float32 data
 *
 * Parsing is total: any byte string either yields a validated model or
 * throws ModelFormatError with a distinct kind and the byte offset of
 * the offending data.
 */

export type LayerKind =
  | "input"
  | "conv"
  | "activate"
  | "max_pool"
  | "upsample"
  | "concat"
  | "add";

export type ActivationKind = "none" | "relu" | "relu6" | "leaky_relu";

export interface InputParams {
  c: number;
  h: number;
  w: number;
}

export interface ConvParams {
  outChannels: number;
  kernel: [number, number];
  stride: [number, number];
  padding: [number, number];
  groups: number;
  hasBias: boolean;
}

export interface ActivationParams {
  kind: ActivationKind;
  slope: number;
}

export interface PoolParams {
  kernel: [number, number];
  stride: [number, number];
}

export interface UpsampleParams {
  factor: number;
}

export type LayerParams =
  | InputParams
  | ConvParams
  | ActivationParams
  | PoolParams
  | UpsampleParams
  | null;

export interface LayerDesc {
  id: number;
  kind: LayerKind;
  params: LayerParams;
  inputs: number[];
}

export interface HeadConfig {
  /** Per scale: list of (w, h) anchor sizes. */
  anchors: [number, number][][];
  strides: number[];
  numClasses: number;
  classNames: string[];
}

export interface Model {
  version: number;
  layers: LayerDesc[];
  weights: Map<number, Float32Array>;
  head: HeadConfig;
  outputs: number[];
  metadata: Record<string, string>;
  /** Inferred (c, h, w) per layer id. */
  shapes: Map<number, [number, number, number]>;
}

export class ModelFormatError extends Error {
  constructor(
    public kind: string,
    public offset: number,
    message: string,
  ) {
    super(`${kind} at byte ${offset}: ${message}`);
    this.name = "ModelFormatError";
  }
}

const MAGIC = [0x4d, 0x45, 0x46, 0x31]; // "MEF1"
const FORMAT_VERSION = 1;
const MAX_SECTION = 2 ** 31;
const ELEMENT_CAP = 2 ** 28;

const KIND_CODES: LayerKind[] = [
  "input",
  "conv",
  "activate",
  "max_pool",
  "upsample",
  "concat",
  "add",
];
const ACT_CODES: ActivationKind[] = ["none", "relu", "relu6", "leaky_relu"];
const ARITY: Record<LayerKind, number> = {
  input: 0,
  conv: 1,
  activate: 1,
  max_pool: 1,
  upsample: 1,
  concat: 2,
  add: 2,
};

class Reader {
  pos: number;
  constructor(
    public view: DataView,
    public bytes: Uint8Array,
    offset: number,
    public end: number,
  ) {
    this.pos = offset;
  }

  need(n: number, what: string): void {
    if (n < 0 || this.pos + n > this.end) {
      throw new ModelFormatError(
        "truncated",
        this.pos,
        `need ${n} bytes for ${what}, have ${this.end - this.pos}`,
      );
    }
  }

  u8(what: string): number {
    this.need(1, what);
    return this.view.getUint8(this.pos++);
  }

  u16(what: string): number {
    this.need(2, what);
    const v = this.view.getUint16(this.pos, true);
    this.pos += 2;
    return v;
  }

  u32(what: string): number {
    this.need(4, what);
    const v = this.view.getUint32(this.pos, true);
    this.pos += 4;
    return v;
  }

  u64(what: string): number {
    this.need(8, what);
    const v = this.view.getBigUint64(this.pos, true);
    this.pos += 8;
    if (v > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new ModelFormatError("oversize_section", this.pos - 8, `u64 value ${v}`);
    }
    return Number(v);
  }

  f32(what: string): number {
    this.need(4, what);
    const v = this.view.getFloat32(this.pos, true);
    this.pos += 4;
    return v;
  }

  raw(n: number, what: string): Uint8Array {
    this.need(n, what);
    const out = this.bytes.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }
}

function readSection(r: Reader, name: string, wide: boolean): Reader {
  const at = r.pos;
  const length = wide ? r.u64(`${name} section length`) : r.u32(`${name} section length`);
  if (length > MAX_SECTION) {
    throw new ModelFormatError("oversize_section", at, `${name} section declares ${length} bytes`);
  }
  const start = r.pos;
  r.need(length, `${name} section body`);
  r.pos += length;
  return new Reader(r.view, r.bytes, start, start + length);
}

function parseJsonSection(r: Reader, name: string): unknown {
  const at = r.pos;
  const raw = r.bytes.subarray(r.pos, r.end);
  let text: string;
  try {
    text = new TextDecoder("utf-8", { fatal: true }).decode(raw);
    return JSON.parse(text);
  } catch (exc) {
    throw new ModelFormatError(`bad_${name}`, at, `${name} JSON: ${exc}`);
  }
}

function parseLayer(r: Reader): LayerDesc {
  const at = r.pos;
  const id = r.u32("layer id");
  const code = r.u8("layer kind");
  const kind = KIND_CODES[code];
  if (kind === undefined) {
    throw new ModelFormatError("unknown_layer_kind", at + 4, `kind code ${code}`);
  }
  const plen = r.u32("param-block length");
  const pat = r.pos;
  r.need(plen, "param block");
  const pr = new Reader(r.view, r.bytes, r.pos, r.pos + plen);
  r.pos += plen;
  let params: LayerParams;
  try {
    params = unpackParams(kind, pr, plen);
  } catch (exc) {
    if (exc instanceof ModelFormatError && exc.kind === "truncated") {
      throw new ModelFormatError("bad_params", pat, `layer ${id} (${kind}): ${exc.message}`);
    }
    throw exc instanceof ModelFormatError
      ? exc
      : new ModelFormatError("bad_params", pat, `layer ${id} (${kind}): ${exc}`);
  }
  const nIn = r.u8("input count");
  const inputs: number[] = [];
  for (let i = 0; i < nIn; i++) inputs.push(r.u32("input ids"));
  return { id, kind, params, inputs };
}

function unpackParams(kind: LayerKind, r: Reader, plen: number): LayerParams {
  const exact = (want: number) => {
    if (plen !== want) {
      throw new ModelFormatError(
        "bad_params",
        r.pos,
        `${kind} params need ${want} bytes, got ${plen}`,
      );
    }
  };
  switch (kind) {
    case "input": {
      exact(12);
      return { c: r.u32("c"), h: r.u32("h"), w: r.u32("w") };
    }
    case "conv": {
      exact(33);
      const outChannels = r.u32("out_channels");
      const kernel: [number, number] = [r.u32("kh"), r.u32("kw")];
      const stride: [number, number] = [r.u32("sh"), r.u32("sw")];
      const padding: [number, number] = [r.u32("ph"), r.u32("pw")];
      const groups = r.u32("groups");
      const hasBias = r.u8("has_bias") !== 0;
      if (kernel[0] < 1 || kernel[1] < 1 || stride[0] < 1 || stride[1] < 1) {
        throw new ModelFormatError("bad_params", r.pos, "kernel and stride must be >= 1");
      }
      if (outChannels < 1 || groups < 1 || outChannels % groups !== 0) {
        throw new ModelFormatError("bad_params", r.pos, "bad out_channels/groups");
      }
      return { outChannels, kernel, stride, padding, groups, hasBias };
    }
    case "activate": {
      exact(5);
      const code = r.u8("activation code");
      const slope = r.f32("slope");
      const name = ACT_CODES[code];
      if (name === undefined) {
        throw new ModelFormatError("bad_params", r.pos, `activation code ${code}`);
      }
      if (name === "leaky_relu" && !(slope > 0 && slope < 1)) {
        throw new ModelFormatError("bad_params", r.pos, `leaky_relu slope ${slope}`);
      }
      return { kind: name, slope: Math.fround(slope) };
    }
    case "max_pool": {
      exact(16);
      const kernel: [number, number] = [r.u32("kh"), r.u32("kw")];
      const stride: [number, number] = [r.u32("sh"), r.u32("sw")];
      if (kernel[0] < 1 || kernel[1] < 1 || stride[0] < 1 || stride[1] < 1) {
        throw new ModelFormatError("bad_params", r.pos, "pool kernel and stride must be >= 1");
      }
      return { kernel, stride };
    }
    case "upsample": {
      exact(4);
      const factor = r.u32("factor");
      if (factor < 1) throw new ModelFormatError("bad_params", r.pos, `factor ${factor}`);
      return { factor };
    }
    default:
      exact(0);
      return null;
  }
}

function parseHead(value: unknown, at: number): { head: HeadConfig; outputs: number[] } {
  try {
    const v = value as Record<string, unknown>;
    const anchors = (v.anchors as [number, number][][]).map((scale) =>
      scale.map(([w, h]) => [Number(w), Number(h)] as [number, number]),
    );
    const strides = (v.strides as number[]).map((s) => Math.trunc(Number(s)));
    const numClasses = Math.trunc(Number(v.num_classes));
    const classNames = (v.class_names as string[]).map((n) => String(n));
    const outputs = (v.output_layers as number[]).map((i) => Math.trunc(Number(i)));
    if (
      !Number.isFinite(numClasses) ||
      anchors.some((s) => s.some(([w, h]) => !Number.isFinite(w) || !Number.isFinite(h)))
    ) {
      throw new TypeError("non-finite head numbers");
    }
    return { head: { anchors, strides, numClasses, classNames }, outputs };
  } catch (exc) {
    throw new ModelFormatError("bad_head", at, `head config: ${exc}`);
  }
}

export function convOutputHw(
  h: number,
  w: number,
  p: ConvParams,
): [number, number] {
  const oh = Math.floor((h + 2 * p.padding[0] - p.kernel[0]) / p.stride[0]) + 1;
  const ow = Math.floor((w + 2 * p.padding[1] - p.kernel[1]) / p.stride[1]) + 1;
  if (oh < 1 || ow < 1) throw new RangeError(`conv output would be empty (${oh}x${ow})`);
  return [oh, ow];
}

export function convBlobLength(p: ConvParams, inChannels: number): number {
  let n = p.outChannels * (inChannels / p.groups) * p.kernel[0] * p.kernel[1];
  if (p.hasBias) n += p.outChannels;
  return n;
}

function validate(model: Model, graphAt: number): void {
  const violations: string[] = [];
  const seen = new Map<number, number>();
  let nInputs = 0;
  model.layers.forEach((layer, pos) => {
    if (seen.has(layer.id)) violations.push(`layer id ${layer.id} duplicated`);
    seen.set(layer.id, pos);
    if (layer.kind === "input") nInputs++;
    if (layer.inputs.length !== ARITY[layer.kind]) {
      violations.push(`layer ${layer.id} (${layer.kind}): wrong input count`);
    }
    for (const ref of layer.inputs) {
      const at = seen.get(ref);
      if (at === undefined || at >= pos) {
        violations.push(`layer ${layer.id}: input ${ref} does not precede it`);
      }
    }
  });
  if (nInputs !== 1) violations.push(`graph must have exactly one input layer, found ${nInputs}`);
  if (violations.length) {
    throw new ModelFormatError("dag_violation", graphAt, violations.join("; "));
  }

  // shape propagation
  const shapes = model.shapes;
  for (const layer of model.layers) {
    try {
      shapes.set(layer.id, layerShape(model, layer, shapes));
    } catch (exc) {
      violations.push(`layer ${layer.id} (${layer.kind}): ${(exc as Error).message}`);
    }
  }
  if (violations.length) {
    throw new ModelFormatError("invalid_graph", graphAt, violations.join("; "));
  }

  const head = model.head;
  if (model.outputs.length < 1 || model.outputs.length > 3) {
    violations.push(`head count must be 1..3, got ${model.outputs.length}`);
  }
  if (
    head.anchors.length !== head.strides.length ||
    head.strides.length !== model.outputs.length
  ) {
    violations.push("anchors, strides and output layers must have equal length");
  }
  if (head.classNames.length !== head.numClasses || head.numClasses < 1) {
    violations.push(`${head.classNames.length} class names for ${head.numClasses} classes`);
  }
  const input = model.layers.find((l) => l.kind === "input")!;
  const inShape = shapes.get(input.id)!;
  model.outputs.forEach((lid, i) => {
    const s = shapes.get(lid);
    if (s === undefined) {
      violations.push(`output layer ${lid} does not exist`);
      return;
    }
    if (i >= head.anchors.length || i >= head.strides.length) return;
    const wantC = head.anchors[i].length * (5 + head.numClasses);
    if (s[0] !== wantC) {
      violations.push(`output layer ${lid} has ${s[0]} channels, head scale ${i} needs ${wantC}`);
    }
    const stride = head.strides[i];
    if (stride < 1 || s[1] * stride !== inShape[1] || s[2] * stride !== inShape[2]) {
      violations.push(`output layer ${lid} grid does not cover the input at stride ${stride}`);
    }
  });
  if (violations.length) {
    throw new ModelFormatError("head_mismatch", graphAt, violations.join("; "));
  }
}

function layerShape(
  model: Model,
  layer: LayerDesc,
  shapes: Map<number, [number, number, number]>,
): [number, number, number] {
  const ins = layer.inputs.map((i) => shapes.get(i)!);
  switch (layer.kind) {
    case "input": {
      const p = layer.params as InputParams;
      if (p.c < 1 || p.h < 1 || p.w < 1) throw new RangeError("empty input shape");
      return [p.c, p.h, p.w];
    }
    case "conv": {
      const p = layer.params as ConvParams;
      const [c, h, w] = ins[0];
      if (c % p.groups !== 0) throw new RangeError(`groups ${p.groups} do not divide ${c}`);
      const [oh, ow] = convOutputHw(h, w, p);
      const blob = model.weights.get(layer.id);
      if (blob === undefined) throw new RangeError("missing weight blob");
      const expect = convBlobLength(p, c);
      if (blob.length !== expect) {
        throw new RangeError(`weight blob has ${blob.length} floats, expected ${expect}`);
      }
      return [p.outChannels, oh, ow];
    }
    case "activate":
      return ins[0];
    case "max_pool": {
      const p = layer.params as PoolParams;
      const [c, h, w] = ins[0];
      if (p.kernel[0] > h || p.kernel[1] > w) throw new RangeError("pool kernel larger than input");
      return [
        c,
        Math.floor((h - p.kernel[0]) / p.stride[0]) + 1,
        Math.floor((w - p.kernel[1]) / p.stride[1]) + 1,
      ];
    }
    case "upsample": {
      const p = layer.params as UpsampleParams;
      const [c, h, w] = ins[0];
      return [c, h * p.factor, w * p.factor];
    }
    case "concat": {
      const [a, b] = ins;
      if (a[1] !== b[1] || a[2] !== b[2]) throw new RangeError("concat spatial mismatch");
      return [a[0] + b[0], a[1], a[2]];
    }
    case "add": {
      const [a, b] = ins;
      if (a[0] !== b[0] || a[1] !== b[1] || a[2] !== b[2]) {
        throw new RangeError("add shape mismatch");
      }
      return a;
    }
  }
}

/** Parse and validate MEF bytes. */
export function parseModel(data: ArrayBuffer | Uint8Array): Model {
  const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const r = new Reader(view, bytes, 0, bytes.length);

  if (bytes.length < 4 || MAGIC.some((b, i) => bytes[i] !== b)) {
    throw new ModelFormatError("bad_magic", 0, 'expected "MEF1"');
  }
  r.pos = 4;
  const version = r.u16("format version");
  if (version !== FORMAT_VERSION) {
    throw new ModelFormatError("unsupported_version", 4, `version ${version}`);
  }
  r.u16("flags");

  const metaR = readSection(r, "metadata", false);
  const metaAt = metaR.pos;
  const metaVal = parseJsonSection(metaR, "metadata");
  if (
    metaVal === null ||
    typeof metaVal !== "object" ||
    Array.isArray(metaVal) ||
    Object.values(metaVal).some((v) => typeof v !== "string")
  ) {
    throw new ModelFormatError("bad_metadata", metaAt, "metadata must map strings to strings");
  }

  const graphR = readSection(r, "graph", false);
  const graphAt = graphR.pos;
  const layers: LayerDesc[] = [];
  while (graphR.pos < graphR.end) {
    layers.push(parseLayer(graphR));
    if (layers.length > 10_000) {
      throw new ModelFormatError("oversize_section", graphAt, "more than 10000 layers");
    }
  }

  const headR = readSection(r, "head", false);
  const headAt = headR.pos;
  const { head, outputs } = parseHead(parseJsonSection(headR, "head"), headAt);

  const weightR = readSection(r, "weights", true);
  const weights = new Map<number, Float32Array>();
  while (weightR.pos < weightR.end) {
    const at = weightR.pos;
    const lid = weightR.u32("blob layer id");
    const blen = weightR.u64("blob length");
    if (blen % 4 !== 0) {
      throw new ModelFormatError("bad_blob", at, `blob length ${blen} not a multiple of 4`);
    }
    if (blen / 4 > ELEMENT_CAP) {
      throw new ModelFormatError("oversize_blob", at, `blob declares ${blen} bytes`);
    }
    const raw = weightR.raw(blen, `weight blob for layer ${lid}`);
    if (weights.has(lid)) {
      throw new ModelFormatError("bad_blob", at, `duplicate blob for layer ${lid}`);
    }
    // copy into an aligned buffer; the source slice may be misaligned
    const blob = new Float32Array(blen / 4);
    new Uint8Array(blob.buffer).set(raw);
    weights.set(lid, blob);
  }

  if (r.pos !== bytes.length) {
    throw new ModelFormatError(
      "trailing_data",
      r.pos,
      `${bytes.length - r.pos} bytes after weight section`,
    );
  }

  const model: Model = {
    version,
    layers,
    weights,
    head,
    outputs,
    metadata: metaVal as Record<string, string>,
    shapes: new Map(),
  };
  validate(model, graphAt);
  return model;
}

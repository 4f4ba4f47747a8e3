/**
 * Linear transformation generator: repeated random-rectangle rescaling,
 * numerically identical to the Python implementation for equal seed/config.
 *
 * Draw order per image is fixed: the probability gate first, then per attempt
 * (area fraction, aspect, x, y), then one generator draw per non-empty
 * channel of an accepted rectangle.
 */

import { Rng } from "./rng.js";

export interface NdImage {
  channels: number;
  height: number;
  width: number;
  /** Row-major (c, h, w) buffer of length channels * height * width. */
  data: Float64Array;
}

export type FactorKind = "beta" | "uniform" | "constant";

export interface FactorGenerator {
  kind: FactorKind;
  a?: number;
  b?: number;
  c?: number;
}

export interface LtgConfig {
  p?: number;
  sMin?: number;
  sMax?: number;
  rMin?: number;
  rMax?: number;
  tMin?: number;
  maxIters?: number;
  generator?: FactorGenerator;
}

export interface Rect {
  x: number;
  y: number;
  w: number;
  h: number;
}

export type Termination = "probability-skip" | "threshold" | "iteration-cap";

export interface LtgTrace {
  applied: boolean;
  termination: Termination;
  steps: Array<{ rect: Rect; alphas: number[] }>;
}

export interface LtgResult {
  output: NdImage;
  memory: Float64Array;
  trace: LtgTrace;
}

const ATTEMPTS_PER_ITER = 100;

export function validateImage(img: NdImage): void {
  const { channels, height, width, data } = img;
  for (const [name, v] of [
    ["channels", channels],
    ["height", height],
    ["width", width],
  ] as const) {
    if (!Number.isInteger(v) || v < 1) {
      throw new RangeError(`${name} must be a positive integer, got ${v}`);
    }
  }
  const expected = channels * height * width;
  if (data.length !== expected) {
    throw new RangeError(
      `data length ${data.length} does not match shape ` +
        `(${channels}, ${height}, ${width}) = ${expected}`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    const v = data[i];
    if (!Number.isFinite(v)) {
      throw new RangeError(`non-finite pixel value at flat index ${i}: ${v}`);
    }
    if (v < 0.0 || v > 1.0) {
      throw new RangeError(`pixel out of range [0, 1] at flat index ${i}: ${v}`);
    }
  }
}

interface ResolvedConfig {
  p: number;
  sMin: number;
  sMax: number;
  rMin: number;
  rMax: number;
  tMin: number;
  maxIters: number;
  generator: Required<FactorGenerator>;
}

export function resolveConfig(cfg: LtgConfig = {}): ResolvedConfig {
  const full: ResolvedConfig = {
    p: cfg.p ?? 0.5,
    sMin: cfg.sMin ?? 0.02,
    sMax: cfg.sMax ?? 0.4,
    rMin: cfg.rMin ?? 0.3,
    rMax: cfg.rMax ?? 1.0 / 0.3,
    tMin: cfg.tMin ?? 1e-6,
    maxIters: cfg.maxIters ?? 200,
    generator: {
      kind: cfg.generator?.kind ?? "beta",
      a: cfg.generator?.a ?? 0.5,
      b: cfg.generator?.b ?? 0.5,
      c: cfg.generator?.c ?? 1.0,
    },
  };
  if (!(full.p >= 0.0 && full.p <= 1.0)) {
    throw new RangeError(`p must be in [0, 1], got ${full.p}`);
  }
  if (!(full.sMin > 0.0 && full.sMin <= full.sMax && full.sMax <= 1.0)) {
    throw new RangeError(`bad area bounds [${full.sMin}, ${full.sMax}]`);
  }
  if (!(full.rMin > 0.0 && full.rMin <= full.rMax)) {
    throw new RangeError(`bad aspect bounds [${full.rMin}, ${full.rMax}]`);
  }
  if (!(full.tMin > 0.0)) {
    throw new RangeError(`tMin must be > 0, got ${full.tMin}`);
  }
  if (!Number.isInteger(full.maxIters) || full.maxIters < 1) {
    throw new RangeError(`maxIters must be >= 1, got ${full.maxIters}`);
  }
  const g = full.generator;
  if (g.kind !== "beta" && g.kind !== "uniform" && g.kind !== "constant") {
    throw new RangeError(`unknown generator kind ${JSON.stringify(g.kind)}`);
  }
  if (g.kind === "beta" && (g.a <= 0 || g.b <= 0)) {
    throw new RangeError(`beta parameters must be > 0, got (${g.a}, ${g.b})`);
  }
  if (g.kind === "constant" && !(g.c >= 0.0 && g.c <= 1.0)) {
    throw new RangeError(`constant factor must be in [0, 1], got ${g.c}`);
  }
  return full;
}

export function sampleFactor(rng: Rng, gen: Required<FactorGenerator>): number {
  if (gen.kind === "constant") {
    return gen.c;
  }
  if (gen.kind === "uniform") {
    return rng.u01();
  }
  return rng.beta(gen.a, gen.b);
}

function generateWithRng(img: NdImage, cfg: ResolvedConfig, rng: Rng): LtgResult {
  validateImage(img);
  const { channels: C, height: H, width: W } = img;
  const plane = H * W;
  const out = img.data.slice();
  const memory = new Float64Array(out.length).fill(1.0);

  if (rng.u01() >= cfg.p) {
    return {
      output: { channels: C, height: H, width: W, data: out },
      memory,
      trace: { applied: false, termination: "probability-skip", steps: [] },
    };
  }

  const trace: LtgTrace = { applied: true, termination: "iteration-cap", steps: [] };
  const attemptsCap = ATTEMPTS_PER_ITER * cfg.maxIters;
  let attempts = 0;
  outer: for (;;) {
    attempts += 1;
    if (attempts > attemptsCap) {
      trace.termination = "iteration-cap";
      break;
    }
    const area = (cfg.sMin + (cfg.sMax - cfg.sMin) * rng.u01()) * W * H;
    const aspect = cfg.rMin + (cfg.rMax - cfg.rMin) * rng.u01();
    // round half up, matching int(sqrt(...) + 0.5) on non-negative values
    const hR = Math.floor(Math.sqrt(area * aspect) + 0.5);
    const wR = Math.floor(Math.sqrt(area / aspect) + 0.5);
    const xR = Math.min(Math.floor(rng.u01() * W), W - 1);
    const yR = Math.min(Math.floor(rng.u01() * H), H - 1);
    if (hR < 1 || wR < 1 || xR + wR > W || yR + hR > H) {
      continue;
    }
    const alphas: number[] = [];
    for (let c = 0; c < C; c++) {
      let peak = 0.0;
      for (let y = yR; y < yR + hR; y++) {
        const row = c * plane + y * W;
        for (let x = xR; x < xR + wR; x++) {
          if (out[row + x] > peak) {
            peak = out[row + x];
          }
        }
      }
      if (peak === 0.0) {
        // all-zero patch is a fixed point of linear scaling: no draw
        alphas.push(1.0);
        continue;
      }
      const alpha = sampleFactor(rng, cfg.generator) / peak;
      for (let y = yR; y < yR + hR; y++) {
        const row = c * plane + y * W;
        for (let x = xR; x < xR + wR; x++) {
          out[row + x] *= alpha;
          memory[row + x] *= alpha;
        }
      }
      alphas.push(alpha);
    }
    trace.steps.push({ rect: { x: xR, y: yR, w: wR, h: hR }, alphas });
    for (let i = 0; i < memory.length; i++) {
      if (memory[i] <= cfg.tMin) {
        trace.termination = "threshold";
        break outer;
      }
    }
    if (trace.steps.length >= cfg.maxIters) {
      trace.termination = "iteration-cap";
      break;
    }
  }
  for (let i = 0; i < out.length; i++) {
    out[i] = Math.min(1.0, Math.max(0.0, out[i]));
  }
  return {
    output: { channels: C, height: H, width: W, data: out },
    memory,
    trace,
  };
}

/** Run the generator on one image with the stream of batch position 0. */
export function ltgGenerate(
  img: NdImage,
  cfg: LtgConfig = {},
  seed: number | bigint = 0,
): LtgResult {
  return generateWithRng(img, resolveConfig(cfg), Rng.forImage(seed, 0));
}

/** Apply the generator to each image on its own stream (seed ^ index). */
export function ltgGenerateBatch(
  imgs: NdImage[],
  cfg: LtgConfig = {},
  baseSeed: number | bigint = 0,
): LtgResult[] {
  const resolved = resolveConfig(cfg);
  return imgs.map((img, k) => generateWithRng(img, resolved, Rng.forImage(baseSeed, k)));
}

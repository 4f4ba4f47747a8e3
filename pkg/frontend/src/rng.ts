/**
 * Deterministic splitmix64 stream mirroring the Python package bit for bit.
 *
 * State derivation: state = mix64(seed ^ mix64(stream ^ GOLDEN)), standard
 * splitmix64 advance/finalize, uniform doubles from the top 53 bits.
 * Per-image streams use stream = baseSeed ^ imageIndex.
 */

const MASK = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;
const INV53 = 2 ** -53;

function mix64(z: bigint): bigint {
  z &= MASK;
  z = ((z ^ (z >> 30n)) * MIX1) & MASK;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK;
  return z ^ (z >> 31n);
}

export class Rng {
  readonly seed: bigint;
  readonly stream: bigint;
  private state: bigint;

  constructor(seed: number | bigint, stream: number | bigint = 0n) {
    this.seed = BigInt(seed) & MASK;
    this.stream = BigInt(stream) & MASK;
    this.state = mix64(this.seed ^ mix64(this.stream ^ GOLDEN));
  }

  static forImage(baseSeed: number | bigint, imageIndex: number | bigint): Rng {
    const base = BigInt(baseSeed);
    return new Rng(base, (base ^ BigInt(imageIndex)) & MASK);
  }

  nextU64(): bigint {
    const s = (this.state + GOLDEN) & MASK;
    this.state = s;
    let z = ((s ^ (s >> 30n)) * MIX1) & MASK;
    z = ((z ^ (z >> 27n)) * MIX2) & MASK;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1). */
  u01(): number {
    return Number(this.nextU64() >> 11n) * INV53;
  }

  uniform(lo: number, hi: number): number {
    if (!(lo < hi)) {
      throw new RangeError(`uniform bounds must satisfy lo < hi, got [${lo}, ${hi})`);
    }
    return lo + (hi - lo) * this.u01();
  }

  /** Uniform integer in [0, n). */
  randintBelow(n: number): number {
    if (n < 1) {
      throw new RangeError(`randintBelow needs n >= 1, got ${n}`);
    }
    return Math.min(Math.floor(this.u01() * n), n - 1);
  }

  /** Standard normal via Box-Muller (cosine branch only). */
  normal(): number {
    let u1 = this.u01();
    while (u1 === 0.0) {
      u1 = this.u01();
    }
    const u2 = this.u01();
    return Math.sqrt(-2.0 * Math.log(u1)) * Math.cos(2.0 * Math.PI * u2);
  }

  /** Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost. */
  gamma(shape: number): number {
    if (!(shape > 0.0)) {
      throw new RangeError(`gamma shape must be > 0, got ${shape}`);
    }
    let boost = 1.0;
    let a = shape;
    if (a < 1.0) {
      let u = this.u01();
      while (u === 0.0) {
        u = this.u01();
      }
      boost = Math.pow(u, 1.0 / a);
      a += 1.0;
    }
    const d = a - 1.0 / 3.0;
    const c = 1.0 / Math.sqrt(9.0 * d);
    for (;;) {
      const x = this.normal();
      let v = 1.0 + c * x;
      if (v <= 0.0) {
        continue;
      }
      v = v * v * v;
      const u = this.u01();
      if (u < 1.0 - 0.0331 * x * x * x * x) {
        return boost * d * v;
      }
      if (u > 0.0 && Math.log(u) < 0.5 * x * x + d * (1.0 - v + Math.log(v))) {
        return boost * d * v;
      }
    }
  }

  /** Beta(a, b) from two gamma variates. */
  beta(a: number, b: number): number {
    const x = this.gamma(a);
    const y = this.gamma(b);
    return x / (x + y);
  }
}

/**
 * Center-family metric losses with analytic gradients, mirroring the Python
 * package's values and gradients to better than 1e-12.
 */

export type Modality = "VIS" | "NIR";

export type LossName =
  | "center"
  | "cross_center"
  | "hetero_center"
  | "triplet"
  | "softmax_ce";

export interface LossParams {
  /** Triplet margin; defaults to 0.3. */
  margin?: number;
}

export interface LossOutput {
  value: number;
  /** (N, d) d(loss)/d(feature) — or d(loss)/d(logit) for softmax_ce. */
  gradient: number[][];
}

export const DEFAULT_MARGIN = 0.3;

export class MissingModalityError extends Error {}

function validateBatch(
  features: number[][],
  ids: number[],
  modalities: Modality[],
  requireModalities: boolean,
): void {
  if (!Array.isArray(features) || features.length < 1) {
    throw new RangeError(`features must be (N, d) with N >= 1, got N=${features?.length}`);
  }
  const d = features[0].length;
  if (d < 1) {
    throw new RangeError("features must have at least one dimension");
  }
  for (let i = 0; i < features.length; i++) {
    if (features[i].length !== d) {
      throw new RangeError(
        `ragged features: row ${i} has length ${features[i].length}, expected ${d}`,
      );
    }
    for (let j = 0; j < d; j++) {
      if (!Number.isFinite(features[i][j])) {
        throw new RangeError(`non-finite feature value at (${i}, ${j}): ${features[i][j]}`);
      }
    }
  }
  if (ids.length !== features.length) {
    throw new RangeError(
      `ids length ${ids.length} must match feature count ${features.length}`,
    );
  }
  if (requireModalities) {
    if (modalities.length !== features.length) {
      throw new RangeError(
        `modalities length ${modalities.length} must match feature count ${features.length}`,
      );
    }
    for (let i = 0; i < modalities.length; i++) {
      if (modalities[i] !== "VIS" && modalities[i] !== "NIR") {
        throw new RangeError(
          `unknown modality at index ${i}: ${JSON.stringify(modalities[i])}`,
        );
      }
    }
  }
}

function zeros(n: number, d: number): number[][] {
  return Array.from({ length: n }, () => new Array<number>(d).fill(0));
}

interface CenterInfo {
  all: Map<number, number[]>;
  vis: Map<number, number[]>;
  nir: Map<number, number[]>;
  counts: Map<number, [number, number]>;
}

function meanOf(rows: number[][], d: number): number[] {
  const m = new Array<number>(d).fill(0);
  for (const r of rows) {
    for (let j = 0; j < d; j++) {
      m[j] += r[j];
    }
  }
  for (let j = 0; j < d; j++) {
    m[j] /= rows.length;
  }
  return m;
}

function computeCenters(
  features: number[][],
  ids: number[],
  modalities: Modality[],
): CenterInfo {
  const d = features[0].length;
  const byId = new Map<number, number[]>();
  for (let i = 0; i < ids.length; i++) {
    if (!byId.has(ids[i])) {
      byId.set(ids[i], []);
    }
    byId.get(ids[i])!.push(i);
  }
  const info: CenterInfo = {
    all: new Map(),
    vis: new Map(),
    nir: new Map(),
    counts: new Map(),
  };
  for (const [y, idx] of byId) {
    const visRows = idx.filter((i) => modalities[i] === "VIS").map((i) => features[i]);
    const nirRows = idx.filter((i) => modalities[i] === "NIR").map((i) => features[i]);
    info.all.set(y, meanOf(idx.map((i) => features[i]), d));
    info.counts.set(y, [visRows.length, nirRows.length]);
    if (visRows.length) {
      info.vis.set(y, meanOf(visRows, d));
    }
    if (nirRows.length) {
      info.nir.set(y, meanOf(nirRows, d));
    }
  }
  return info;
}

function requireBothModalities(info: CenterInfo): void {
  for (const [y, [nv, nn]] of info.counts) {
    if (nv === 0 || nn === 0) {
      const missing = nv === 0 ? "VIS" : "NIR";
      throw new MissingModalityError(
        `identity ${y} has no ${missing} samples in this batch`,
      );
    }
  }
}

function centerLoss(
  features: number[][],
  ids: number[],
  modalities: Modality[],
): LossOutput {
  const info = computeCenters(features, ids, modalities);
  const d = features[0].length;
  const grad = zeros(features.length, d);
  let value = 0.0;
  for (let i = 0; i < features.length; i++) {
    const c = info.all.get(ids[i])!;
    let sq = 0.0;
    for (let j = 0; j < d; j++) {
      const diff = features[i][j] - c[j];
      sq += diff * diff;
      grad[i][j] = diff;
    }
    value += 0.5 * sq;
  }
  return { value, gradient: grad };
}

function crossCenterLoss(
  features: number[][],
  ids: number[],
  modalities: Modality[],
): LossOutput {
  const info = computeCenters(features, ids, modalities);
  requireBothModalities(info);
  const d = features[0].length;
  const grad = zeros(features.length, d);
  let value = 0.0;
  for (let i = 0; i < features.length; i++) {
    const target =
      modalities[i] === "VIS" ? info.nir.get(ids[i])! : info.vis.get(ids[i])!;
    let sq = 0.0;
    for (let j = 0; j < d; j++) {
      const diff = features[i][j] - target[j];
      sq += diff * diff;
      grad[i][j] += diff;
    }
    value += 0.5 * sq;
  }
  // through-center terms: a VIS sample moves c^v, which is the target of
  // every NIR sample of the same identity (and symmetrically)
  for (const [y, [nv, nn]] of info.counts) {
    const cv = info.vis.get(y)!;
    const cn = info.nir.get(y)!;
    for (let i = 0; i < features.length; i++) {
      if (ids[i] !== y) {
        continue;
      }
      const scale = modalities[i] === "VIS" ? -(nn / nv) : nv / nn;
      for (let j = 0; j < d; j++) {
        grad[i][j] += scale * (cn[j] - cv[j]);
      }
    }
  }
  return { value, gradient: grad };
}

function heteroCenterLoss(
  features: number[][],
  ids: number[],
  modalities: Modality[],
): LossOutput {
  const info = computeCenters(features, ids, modalities);
  requireBothModalities(info);
  const d = features[0].length;
  const grad = zeros(features.length, d);
  const invN = 1.0 / features.length;
  let value = 0.0;
  for (const [y, [nv, nn]] of info.counts) {
    const cv = info.vis.get(y)!;
    const cn = info.nir.get(y)!;
    let sq = 0.0;
    for (let j = 0; j < d; j++) {
      const gap = cv[j] - cn[j];
      sq += gap * gap;
    }
    value += invN * sq;
    for (let i = 0; i < features.length; i++) {
      if (ids[i] !== y) {
        continue;
      }
      const scale =
        modalities[i] === "VIS" ? (2.0 * invN) / nv : -(2.0 * invN) / nn;
      for (let j = 0; j < d; j++) {
        grad[i][j] += scale * (cv[j] - cn[j]);
      }
    }
  }
  return { value, gradient: grad };
}

function tripletBatchHard(
  features: number[][],
  ids: number[],
  margin: number,
): LossOutput {
  const n = features.length;
  const d = features[0].length;
  const uniqueIds = new Set(ids);
  if (uniqueIds.size < 2) {
    throw new RangeError("triplet loss needs at least 2 identities");
  }
  for (const y of uniqueIds) {
    if (ids.filter((v) => v === y).length < 2) {
      throw new RangeError(`identity ${y} has fewer than 2 samples`);
    }
  }
  const dist = Array.from({ length: n }, () => new Array<number>(n).fill(0));
  for (let a = 0; a < n; a++) {
    for (let b = 0; b < n; b++) {
      let sq = 0.0;
      for (let j = 0; j < d; j++) {
        const diff = features[a][j] - features[b][j];
        sq += diff * diff;
      }
      dist[a][b] = Math.sqrt(sq);
    }
  }
  const grad = zeros(n, d);
  let value = 0.0;
  for (let a = 0; a < n; a++) {
    // ties break toward the lowest sample index (strict comparisons)
    let p = -1;
    let nn = -1;
    for (let b = 0; b < n; b++) {
      if (ids[b] === ids[a]) {
        if (p < 0 || dist[a][b] > dist[a][p]) {
          p = b;
        }
      } else if (nn < 0 || dist[a][b] < dist[a][nn]) {
        nn = b;
      }
    }
    const hinge = margin + dist[a][p] - dist[a][nn];
    if (hinge <= 0.0) {
      continue;
    }
    value += hinge;
    if (dist[a][p] > 0.0) {
      for (let j = 0; j < d; j++) {
        const u = (features[a][j] - features[p][j]) / dist[a][p];
        grad[a][j] += u;
        grad[p][j] -= u;
      }
    }
    if (dist[a][nn] > 0.0) {
      for (let j = 0; j < d; j++) {
        const u = (features[a][j] - features[nn][j]) / dist[a][nn];
        grad[a][j] -= u;
        grad[nn][j] += u;
      }
    }
  }
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < d; j++) {
      grad[i][j] /= n;
    }
  }
  return { value: value / n, gradient: grad };
}

function softmaxCe(logits: number[][], labels: number[]): LossOutput {
  const n = logits.length;
  const k = logits[0].length;
  for (let i = 0; i < n; i++) {
    if (!Number.isInteger(labels[i]) || labels[i] < 0 || labels[i] >= k) {
      throw new RangeError(`label out of range [0, ${k}) at index ${i}: ${labels[i]}`);
    }
  }
  const grad = zeros(n, k);
  let value = 0.0;
  for (let i = 0; i < n; i++) {
    let max = -Infinity;
    for (let j = 0; j < k; j++) {
      if (logits[i][j] > max) {
        max = logits[i][j];
      }
    }
    let norm = 0.0;
    for (let j = 0; j < k; j++) {
      norm += Math.exp(logits[i][j] - max);
    }
    const logNorm = Math.log(norm);
    value += logNorm - (logits[i][labels[i]] - max);
    for (let j = 0; j < k; j++) {
      grad[i][j] = Math.exp(logits[i][j] - max - logNorm) / n;
    }
    grad[i][labels[i]] -= 1.0 / n;
  }
  return { value: value / n, gradient: grad };
}

/**
 * Evaluate one of the metric losses on caller-provided arrays.
 *
 * For "softmax_ce", `features` carries the logits and `ids` the class labels;
 * `modalities` is ignored. Inputs are never mutated.
 */
export function loss(
  name: LossName,
  features: number[][],
  ids: number[],
  modalities: Modality[] = [],
  params: LossParams = {},
): LossOutput {
  validateBatch(
    features,
    ids,
    modalities,
    name === "center" || name === "cross_center" || name === "hetero_center",
  );
  switch (name) {
    case "center":
      return centerLoss(features, ids, modalities);
    case "cross_center":
      return crossCenterLoss(features, ids, modalities);
    case "hetero_center":
      return heteroCenterLoss(features, ids, modalities);
    case "triplet":
      return tripletBatchHard(features, ids, params.margin ?? DEFAULT_MARGIN);
    case "softmax_ce":
      return softmaxCe(features, ids);
    default:
      throw new RangeError(`unknown loss ${JSON.stringify(name)}`);
  }
}

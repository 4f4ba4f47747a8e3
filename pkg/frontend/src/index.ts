export { Rng } from "./rng.js";
export {
  ltgGenerate,
  ltgGenerateBatch,
  sampleFactor,
  validateImage,
  resolveConfig,
} from "./ltg.js";
export type {
  NdImage,
  LtgConfig,
  LtgResult,
  LtgTrace,
  FactorGenerator,
  FactorKind,
  Rect,
  Termination,
} from "./ltg.js";
export { loss, DEFAULT_MARGIN, MissingModalityError } from "./losses.js";
export type { LossName, LossOutput, LossParams, Modality } from "./losses.js";

"""Linear transformation generator: repeated random-rectangle rescaling.

Each applied rectangle is rescaled per channel by alpha = alpha_max * g where
alpha_max = 1/max(patch) keeps the patch inside [0, 1] and g comes from the
configured factor generator (U-shaped Beta(0.5, 0.5) by default).  A memory
matrix records the cumulative per-pixel factor; the loop stops once its
minimum drops to t_min or the iteration cap is hit.

Draw order per image is fixed and documented for replay and cross-language
parity: the probability gate first, then per attempt (s_frac, aspect, x, y),
then one generator draw per non-empty channel of an accepted rectangle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Image, Rect, Rng

__all__ = [
    "FactorGenerator",
    "LtgConfig",
    "LtgTrace",
    "sample_factor",
    "generate",
    "generate_batch",
    "replay",
    "DEFAULT_CONFIG",
]

# Rejected draws do not advance the iteration counter (the algorithm redraws
# on out-of-bounds rectangles), so a separate attempt cap bounds pathological
# configurations where no rectangle can ever fit.
ATTEMPTS_PER_ITER = 100


@dataclass(frozen=True)
class FactorGenerator:
    """Factor law for the rectangle rescaling: beta(a, b), uniform, or constant(c)."""

    kind: str = "beta"  # "beta" | "uniform" | "constant"
    a: float = 0.5
    b: float = 0.5
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("beta", "uniform", "constant"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0):
            raise ValueError(f"beta parameters must be > 0, got ({self.a}, {self.b})")
        if self.kind == "constant" and not 0.0 <= self.c <= 1.0:
            raise ValueError(f"constant factor must be in [0, 1], got {self.c}")

    @classmethod
    def parse(cls, text: str) -> "FactorGenerator":
        """Parse 'beta:a,b', 'uniform', or 'constant:c'."""
        head, _, rest = text.partition(":")
        if head == "beta":
            a, b = (float(v) for v in rest.split(",")) if rest else (0.5, 0.5)
            return cls("beta", a=a, b=b)
        if head == "uniform":
            return cls("uniform")
        if head == "constant":
            return cls("constant", c=float(rest) if rest else 1.0)
        raise ValueError(f"cannot parse generator spec {text!r}")


@dataclass(frozen=True)
class LtgConfig:
    p: float = 0.5
    s_min: float = 0.02
    s_max: float = 0.4
    r_min: float = 0.3
    r_max: float = 1.0 / 0.3
    t_min: float = 1e-6
    max_iters: int = 200
    generator: FactorGenerator = field(default_factory=FactorGenerator)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 0.0 < self.s_min <= self.s_max <= 1.0:
            raise ValueError(f"bad area bounds [{self.s_min}, {self.s_max}]")
        if not 0.0 < self.r_min <= self.r_max:
            raise ValueError(f"bad aspect bounds [{self.r_min}, {self.r_max}]")
        if self.t_min <= 0.0:
            raise ValueError(f"t_min must be > 0, got {self.t_min}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


DEFAULT_CONFIG = LtgConfig()


@dataclass
class LtgTrace:
    """Audit log of applied rectangles: enough to replay the run exactly."""

    applied: bool
    termination: str  # "probability-skip" | "threshold" | "iteration-cap"
    steps: list[tuple[Rect, tuple[float, ...]]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.steps)


def sample_factor(rng: Rng, gen: FactorGenerator) -> float:
    """One draw from the configured factor law, in [0, 1]."""
    if gen.kind == "constant":
        return gen.c
    if gen.kind == "uniform":
        return rng.u01()
    return rng.beta(gen.a, gen.b)


def generate(img: Image, cfg: LtgConfig, rng: Rng) -> tuple[Image, np.ndarray, LtgTrace]:
    """Run the generator on one image; returns (output, memory matrix, trace)."""
    C, H, W = img.pixels.shape
    if rng.u01() >= cfg.p:
        return img, np.ones_like(img.pixels), LtgTrace(False, "probability-skip")

    out = img.pixels.copy()
    memory = np.ones_like(out)
    trace = LtgTrace(True, "iteration-cap")
    attempts_cap = ATTEMPTS_PER_ITER * cfg.max_iters
    attempts = 0
    u01 = rng.u01
    while True:
        attempts += 1
        if attempts > attempts_cap:
            trace.termination = "iteration-cap"
            break
        area = (cfg.s_min + (cfg.s_max - cfg.s_min) * u01()) * W * H
        aspect = cfg.r_min + (cfg.r_max - cfg.r_min) * u01()
        # round half up; both sides use the sqrt form so that h_r / w_r
        # equals the drawn aspect ratio
        h_r = int(math.sqrt(area * aspect) + 0.5)
        w_r = int(math.sqrt(area / aspect) + 0.5)
        x_r = min(int(u01() * W), W - 1)
        y_r = min(int(u01() * H), H - 1)
        if h_r < 1 or w_r < 1 or x_r + w_r > W or y_r + h_r > H:
            continue
        alphas = []
        for c in range(C):
            patch = out[c, y_r:y_r + h_r, x_r:x_r + w_r]
            peak = patch.max()
            if peak == 0.0:
                # all-zero patch is a fixed point of linear scaling: no draw
                alphas.append(1.0)
                continue
            alpha = sample_factor(rng, cfg.generator) / peak
            patch *= alpha
            memory[c, y_r:y_r + h_r, x_r:x_r + w_r] *= alpha
            alphas.append(alpha)
        trace.steps.append((Rect(x_r, y_r, w_r, h_r), tuple(alphas)))
        if memory.min() <= cfg.t_min:
            trace.termination = "threshold"
            break
        if len(trace.steps) >= cfg.max_iters:
            trace.termination = "iteration-cap"
            break
    return Image(np.clip(out, 0.0, 1.0)), memory, trace


def generate_batch(imgs, cfg: LtgConfig, base_seed: int):
    """Apply the generator to each image on its own stream (seed ^ index)."""
    results = []
    for k, img in enumerate(imgs):
        results.append(generate(img, cfg, Rng.for_image(base_seed, k)))
    return results


def replay(img: Image, trace: LtgTrace) -> Image:
    """Re-apply a trace's rectangles; reproduces the generator output."""
    out = img.pixels.copy()
    for rect, alphas in trace.steps:
        for c, alpha in enumerate(alphas):
            out[c, rect.y:rect.y + rect.h, rect.x:rect.x + rect.w] *= alpha
    return Image(np.clip(out, 0.0, 1.0))

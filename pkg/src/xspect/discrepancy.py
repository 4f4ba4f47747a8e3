"""Modality-discrepancy experiment: uniform vs per-part linear scaling.

Images are split into horizontal bands, each band multiplied by a linear
factor, and both the originals and the transformed copies are pushed through
a fixed hand-crafted embedding (band/channel means plus histograms).  With
mean-only, L2-normalized embeddings a single global factor cancels exactly,
while per-band factors shift the embedding, which is the directional claim
this module measures.

Exactness engineering: factors are quantized to 26 fractional bits and the
synthetic images live on a 1/4096 grid, so scaled pixels, band sums, and the
rational normalization below are all exact; a globally rescaled image then
maps to the bit-identical embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Image, Rng

__all__ = [
    "PartScaling",
    "EmbeddingSpec",
    "DiscrepancyReport",
    "apply_part_scaling",
    "embed",
    "run_experiment",
    "pca2d",
    "synthetic_images",
    "quantize_factor",
    "FACTOR_LO",
    "FACTOR_HI",
]

FACTOR_LO = 0.3  # bounded away from 0 so histograms keep mass
FACTOR_HI = 1.0  # factors <= 1 keep clamping a no-op
_FACTOR_BITS = 26
_PIXEL_LEVELS = 4096


@dataclass(frozen=True)
class PartScaling:
    """Per-band, per-channel multiplicative factors in (0, 1]."""

    factors: np.ndarray  # (P, C)

    def __post_init__(self):
        f = np.asarray(self.factors, dtype=np.float64)
        if f.ndim != 2 or min(f.shape) < 1:
            raise ValueError(f"factors must be (P, C), got shape {f.shape}")
        if f.min() <= 0.0:
            raise ValueError(f"non-positive scaling factor: {f.min()}")
        object.__setattr__(self, "factors", f)

    @property
    def parts(self) -> int:
        return self.factors.shape[0]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.factors == self.factors.flat[0]))


@dataclass(frozen=True)
class EmbeddingSpec:
    parts: int = 6
    bins: int = 8  # histogram bins per band-channel; 0 for mean-only
    normalize: bool = True

    def __post_init__(self):
        if self.parts < 1 or self.bins < 0:
            raise ValueError(f"bad embedding spec {self}")

    def dim(self, channels: int) -> int:
        return self.parts * channels * (1 + self.bins)


@dataclass(frozen=True)
class DiscrepancyReport:
    mode: str
    centroid_distance: float
    paired_mean: float
    paired_max: float
    mean_only_centroid_distance: float
    mean_only_paired_mean: float
    pca: np.ndarray | None = None  # (2N, 2): originals then transformed


def _band_bounds(height: int, parts: int) -> list[tuple[int, int]]:
    # last band absorbs the remainder rows when the height does not divide
    if parts < 1 or parts > height:
        raise ValueError(f"cannot split height {height} into {parts} bands")
    band = height // parts
    bounds = [(i * band, (i + 1) * band) for i in range(parts - 1)]
    bounds.append(((parts - 1) * band, height))
    return bounds


def quantize_factor(alpha: float) -> float:
    """Snap a factor to 26 fractional bits so products with grid pixels are exact."""
    return round(alpha * (1 << _FACTOR_BITS)) / (1 << _FACTOR_BITS)


def apply_part_scaling(img: Image, scaling: PartScaling) -> Image:
    factors = scaling.factors
    if factors.shape[1] != img.channels:
        raise ValueError(
            f"scaling has {factors.shape[1]} channels, image has {img.channels}"
        )
    out = img.pixels.copy()
    for i, (lo, hi) in enumerate(_band_bounds(img.height, scaling.parts)):
        out[:, lo:hi, :] *= factors[i][:, None, None]
    return Image(np.clip(out, 0.0, 1.0))


def _unit_direction(fractions: list[Fraction]) -> np.ndarray:
    """L2-normalize a non-negative vector of exact rationals.

    Each output component is sqrt(v_i^2 / sum v_j^2) with the ratio computed
    exactly, so any common factor of the inputs cancels before rounding.
    """
    total = sum(f * f for f in fractions)
    if total == 0:
        return np.zeros(len(fractions))
    return np.array([math.sqrt(float((f * f) / total)) for f in fractions])


def embed(img: Image, spec: EmbeddingSpec) -> np.ndarray:
    """Concatenated band-channel means and histograms, optionally normalized.

    Components are carried as exact rationals up to the normalization step:
    band sums of grid-aligned pixels are exact doubles, so the only rounding
    happens once per output component.
    """
    exact = []
    n_bins = spec.bins
    for lo, hi in _band_bounds(img.height, spec.parts):
        band = img.pixels[:, lo:hi, :]
        for c in range(img.channels):
            vals = band[c].ravel()
            exact.append(Fraction(float(vals.sum())) / vals.size)
            if n_bins:
                hist, _ = np.histogram(vals, bins=n_bins, range=(0.0, 1.0))
                exact.extend(Fraction(int(h), vals.size) for h in hist)
    if spec.normalize:
        return _unit_direction(exact)
    return np.array([float(f) for f in exact])


def _draw_scaling(img: Image, mode: str, parts: int, rng: Rng) -> PartScaling:
    if mode == "uniform":
        alpha = quantize_factor(rng.uniform(FACTOR_LO, FACTOR_HI))
        return PartScaling(np.full((parts, img.channels), alpha))
    if mode == "per-part":
        factors = np.array(
            [
                [quantize_factor(rng.uniform(FACTOR_LO, FACTOR_HI)) for _ in range(img.channels)]
                for _ in range(parts)
            ]
        )
        return PartScaling(factors)
    raise ValueError(f"unknown mode {mode!r}")


def run_experiment(
    imgs: list[Image],
    mode: str,
    parts: int,
    rng: Rng,
    spec: EmbeddingSpec | None = None,
    with_pca: bool = False,
) -> DiscrepancyReport:
    """Scale every image, embed both sets, and report the induced discrepancy."""
    if len(imgs) < 2:
        raise ValueError("experiment needs at least 2 images")
    spec = spec or EmbeddingSpec(parts=parts)
    mean_spec = EmbeddingSpec(parts=spec.parts, bins=0, normalize=True)
    transformed = [
        apply_part_scaling(img, _draw_scaling(img, mode, parts, rng)) for img in imgs
    ]
    orig_full = np.stack([embed(i, spec) for i in imgs])
    trans_full = np.stack([embed(i, spec) for i in transformed])
    orig_mean = np.stack([embed(i, mean_spec) for i in imgs])
    trans_mean = np.stack([embed(i, mean_spec) for i in transformed])

    paired = np.linalg.norm(orig_full - trans_full, axis=1)
    paired_mo = np.linalg.norm(orig_mean - trans_mean, axis=1)
    pca = None
    if with_pca:
        pca = pca2d(np.concatenate([orig_full, trans_full]))
    return DiscrepancyReport(
        mode=mode,
        centroid_distance=float(
            np.linalg.norm(orig_full.mean(axis=0) - trans_full.mean(axis=0))
        ),
        paired_mean=float(paired.mean()),
        paired_max=float(paired.max()),
        mean_only_centroid_distance=float(
            np.linalg.norm(orig_mean.mean(axis=0) - trans_mean.mean(axis=0))
        ),
        mean_only_paired_mean=float(paired_mo.mean()),
        pca=pca,
    )


def pca2d(features: np.ndarray) -> np.ndarray:
    """Project onto the top-2 principal components, sign-fixed deterministically."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("pca2d needs at least 2 feature vectors")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    coords = np.zeros((x.shape[0], 2))
    for out_axis, idx in enumerate(order):
        proj = centered @ evecs[:, idx]
        peak = int(np.argmax(np.abs(proj)))
        if proj[peak] < 0:
            proj = -proj
        coords[:, out_axis] = proj
    return coords


def synthetic_images(count: int, channels: int, height: int, width: int, seed: int) -> list[Image]:
    """Random images on the 1/4096 grid, one deterministic stream per image."""
    imgs = []
    for k in range(count):
        rng = Rng.for_image(seed, k)
        px = np.empty((channels, height, width))
        for i in range(px.size):
            px.flat[i] = rng.randint_below(_PIXEL_LEVELS) / _PIXEL_LEVELS
        imgs.append(Image(px))
    return imgs

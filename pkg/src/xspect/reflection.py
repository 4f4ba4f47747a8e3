"""Lambertian cross-spectral rendering and band-ratio analysis.

A scene carries per-material reflectance spectra on a shared wavelength grid,
an illuminant SPD, and per-spectrum sensor sensitivities.  The rendered pixel
is a shading term times the discretized spectral integral; the ratio of two
rendered spectra is then constant inside a single material, which is what the
ratio statistics quantify.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Image

__all__ = [
    "SPECTRA",
    "demo_scene",
    "SpectralScene",
    "RatioMap",
    "LinearFit",
    "render",
    "band_ratio",
    "fit_linear_factor",
    "ratio_constancy_stats",
    "analytic_ratio",
]

SPECTRA = ("R", "G", "B", "N")

DEFAULT_EPS = 1.0 / 255.0  # below one 8-bit quantization level is noise


@dataclass(frozen=True)
class SpectralScene:
    """Material layout plus everything needed to integrate sensor responses.

    ``reflectance[m]`` is S(lambda) for material id m, ``illuminant`` is the
    relative SPD F(lambda), ``sensitivity[j]`` is Q_j(lambda), ``intensity[j]``
    is omega_j, ``shading`` is the per-pixel Lambertian term, and
    ``incident_ratio`` is the beta term (held at 1 by default, kept as a field
    so shadow experiments can vary it).
    """

    material_map: np.ndarray  # (H, W) int ids
    reflectance: dict[int, np.ndarray]  # material id -> (n_lambda,)
    illuminant: np.ndarray  # (n_lambda,)
    sensitivity: dict[str, np.ndarray]  # spectrum -> (n_lambda,)
    intensity: dict[str, float]  # spectrum -> omega_j > 0
    shading: np.ndarray | None = None  # (H, W), defaults to 1
    incident_ratio: float = 1.0
    delta_lambda: float = 1.0

    def __post_init__(self):
        mm = np.asarray(self.material_map, dtype=np.int64)
        if mm.ndim != 2 or min(mm.shape) < 1:
            raise ValueError(f"material map must be 2-D, got shape {mm.shape}")
        object.__setattr__(self, "material_map", mm)
        grid = None
        for name, spec in list(self.reflectance.items()):
            s = np.asarray(spec, dtype=np.float64)
            if grid is None:
                grid = s.size
            if s.size != grid or s.size < 1:
                raise ValueError("reflectance spectra must share one wavelength grid")
            if s.min() < 0 or s.max() > 1 or not np.all(np.isfinite(s)):
                raise ValueError(f"reflectance for material {name} outside [0, 1]")
            self.reflectance[name] = s
        ill = np.asarray(self.illuminant, dtype=np.float64)
        if ill.size != grid or ill.min() < 0 or not np.all(np.isfinite(ill)):
            raise ValueError("illuminant SPD must be non-negative on the shared grid")
        object.__setattr__(self, "illuminant", ill)
        for j, q in list(self.sensitivity.items()):
            if j not in SPECTRA:
                raise ValueError(f"unknown spectrum id {j!r}")
            qa = np.asarray(q, dtype=np.float64)
            if qa.size != grid or qa.min() < 0 or not np.all(np.isfinite(qa)):
                raise ValueError(f"sensitivity {j} must be non-negative on the grid")
            self.sensitivity[j] = qa
        for j, w in self.intensity.items():
            if w <= 0:
                raise ValueError(f"intensity omega_{j} must be > 0, got {w}")
        missing = set(np.unique(mm)) - set(self.reflectance)
        if missing:
            raise ValueError(f"materials without reflectance: {sorted(missing)}")
        if self.shading is None:
            object.__setattr__(self, "shading", np.ones(mm.shape))
        else:
            sh = np.asarray(self.shading, dtype=np.float64)
            if sh.shape != mm.shape or sh.min() < 0:
                raise ValueError("shading must be non-negative with the map's shape")
            object.__setattr__(self, "shading", sh)

    @property
    def height(self) -> int:
        return self.material_map.shape[0]

    @property
    def width(self) -> int:
        return self.material_map.shape[1]


@dataclass(frozen=True)
class RatioMap:
    """Per-pixel ratio of two single-channel images, defined where masked in."""

    values: np.ndarray  # (H, W); meaningful only where mask is True
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.mask, dtype=bool)
        if v.shape != m.shape or v.ndim != 2:
            raise ValueError("ratio values and mask shapes must match")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    residual_rms: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("fit needs at least one sample")
        if self.residual_rms < 0:
            raise ValueError("negative residual")


def demo_scene(
    materials: int = 3,
    height: int = 32,
    width: int = 48,
    seed: int = 0,
    n_lambda: int = 32,
    shaded: bool = False,
) -> SpectralScene:
    """Synthetic scene with vertical material stripes and random smooth spectra.

    Intensities are scaled so the brightest rendered pixel stays at 0.8,
    keeping every spectrum clear of clamp saturation.
    """
    from .core import Rng

    if materials < 1:
        raise ValueError("need at least one material")
    rng = Rng(seed, 0xD5)
    grid = np.arange(n_lambda) / (n_lambda - 1)
    reflectance = {}
    for m in range(materials):
        base = 0.2 + 0.6 * rng.u01()
        tilt = (rng.u01() - 0.5) * 0.6
        bump = 0.2 * rng.u01() * np.sin(np.pi * grid * (1 + 2 * rng.u01()))
        reflectance[m] = np.clip(base + tilt * (grid - 0.5) + bump, 0.05, 1.0)
    # one broad sensitivity lobe per spectrum, shifted along the grid
    centers = {"B": 0.15, "G": 0.38, "R": 0.6, "N": 0.85}
    sensitivity = {
        j: np.exp(-(((grid - c) / 0.18) ** 2)) for j, c in centers.items()
    }
    stripes = np.tile(
        (np.arange(width) * materials // width)[None, :], (height, 1)
    )
    shading = None
    if shaded:
        yy = np.arange(height)[:, None] / max(height - 1, 1)
        xx = np.arange(width)[None, :] / max(width - 1, 1)
        shading = 0.5 + 0.5 * np.cos(np.pi * yy) * np.cos(np.pi * xx) ** 2
    delta = 1.0 / n_lambda
    illuminant = np.ones(n_lambda)
    intensity = {}
    for j, q in sensitivity.items():
        peak = max(
            float(np.sum(illuminant * s * q) * delta) for s in reflectance.values()
        )
        intensity[j] = 0.8 / peak
    return SpectralScene(
        material_map=stripes,
        reflectance=reflectance,
        illuminant=illuminant,
        sensitivity=sensitivity,
        intensity=intensity,
        shading=shading,
        delta_lambda=delta,
    )


def spectral_factor(scene: SpectralScene, material: int, spectrum: str) -> float:
    """Discretized spectral integral M(material, j) = sum F*S*Q * dlambda."""
    if spectrum not in SPECTRA:
        raise ValueError(f"unknown spectrum id {spectrum!r}")
    s = scene.reflectance[material]
    q = scene.sensitivity[spectrum]
    return float(np.sum(scene.illuminant * s * q) * scene.delta_lambda)


def render(scene: SpectralScene, spectrum: str) -> Image:
    """Render one spectrum: shading * beta * omega * integral, clamped to [0, 1]."""
    if spectrum not in SPECTRA:
        raise ValueError(f"unknown spectrum id {spectrum!r}")
    omega = scene.intensity[spectrum]
    per_material = {
        m: scene.incident_ratio * omega * spectral_factor(scene, m, spectrum)
        for m in scene.reflectance
    }
    flat = np.zeros(scene.material_map.shape)
    for m, val in per_material.items():
        flat[scene.material_map == m] = val
    px = np.clip(scene.shading * flat, 0.0, 1.0)
    return Image(px[None, :, :])


def analytic_ratio(scene: SpectralScene, num: str, den: str, material: int) -> float:
    """Exact cross-spectral ratio omega_a*M(m,a) / (omega_b*M(m,b))."""
    return (scene.intensity[num] * spectral_factor(scene, material, num)) / (
        scene.intensity[den] * spectral_factor(scene, material, den)
    )


def band_ratio(a: Image, b: Image, eps: float = DEFAULT_EPS) -> RatioMap:
    """Per-pixel a/b, masked out where the denominator falls below eps."""
    if a.channels != 1 or b.channels != 1:
        raise ValueError("band_ratio expects single-channel images")
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"size mismatch: {a.pixels.shape} vs {b.pixels.shape}"
        )
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    av = a.pixels[0]
    bv = b.pixels[0]
    mask = bv >= eps
    values = np.zeros_like(av)
    np.divide(av, bv, out=values, where=mask)
    return RatioMap(values, mask)


def fit_linear_factor(pairs) -> LinearFit:
    """Least squares through the origin: slope = sum(a*b) / sum(b*b)."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
        raise ValueError("pairs must be a non-empty list of (a, b)")
    a = arr[:, 0]
    b = arr[:, 1]
    denom = float(np.dot(b, b))
    if denom == 0.0:
        raise ValueError("degenerate input: all denominator samples are zero")
    k = float(np.dot(a, b)) / denom
    resid = a - k * b
    rms = float(np.sqrt(np.mean(resid * resid)))
    return LinearFit(slope=k, residual_rms=rms, n=arr.shape[0])


def ratio_constancy_stats(ratio: RatioMap, material_map) -> dict[int, dict]:
    """Per-material mean and coefficient of variation of masked ratio values.

    Materials with fewer than 2 masked pixels get ``cv = None`` (population
    stddev needs at least two samples to mean anything).
    """
    mm = np.asarray(material_map, dtype=np.int64)
    if mm.shape != ratio.values.shape:
        raise ValueError("material map and ratio map sizes differ")
    stats: dict[int, dict] = {}
    for m in np.unique(mm):
        sel = (mm == m) & ratio.mask
        vals = ratio.values[sel]
        entry = {"n": int(vals.size), "mean": None, "cv": None}
        if vals.size >= 1:
            mean = float(vals.mean())
            entry["mean"] = mean
            if vals.size >= 2 and mean != 0.0:
                entry["cv"] = float(vals.std() / abs(mean))
            elif vals.size >= 2:
                entry["cv"] = float("inf") if vals.std() > 0 else 0.0
        stats[int(m)] = entry
    return stats

"""Shared containers, deterministic RNG, and file I/O.

Images are float arrays of shape (C, H, W) with values in [0, 1]; quantization
to 8-bit happens only at the PNG boundary. Features travel as CSV with header
``id,modality,f0..f{d-1}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

__all__ = [
    "FormatError",
    "MissingModalityError",
    "ProtocolError",
    "Modality",
    "Image",
    "Rect",
    "Rng",
    "LabeledFeature",
    "load_image",
    "save_image",
    "load_features",
    "save_features",
]


class FormatError(ValueError):
    """Unreadable or unsupported input file."""


class MissingModalityError(ValueError):
    """An identity lacks samples in a modality required by the operation."""


class ProtocolError(ValueError):
    """Query/gallery sets violate the retrieval protocol."""


class Modality(str, Enum):
    VIS = "VIS"
    NIR = "NIR"


@dataclass(frozen=True)
class Image:
    """C x H x W pixel grid, every value finite and in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3:
            raise ValueError(f"expected (C, H, W) array, got shape {px.shape}")
        if min(px.shape) < 1:
            raise ValueError(f"empty dimension in shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("non-finite pixel value")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError(
                f"pixel out of range [0, 1]: min={px.min()}, max={px.max()}"
            )
        object.__setattr__(self, "pixels", px)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; addresses [x, x+w) x [y, y+h) in pixel space."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"degenerate rect {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative rect origin ({self.x}, {self.y})")

    def fits(self, width: int, height: int) -> bool:
        return self.x + self.w <= width and self.y + self.h <= height


_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV53 = 2.0 ** -53


def _mix64(z: int) -> int:
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class Rng:
    """Counter-free splitmix64 stream, reproducible across platforms.

    State derivation is fixed so other-language consumers can mirror it:
    ``state = mix64(seed ^ mix64(stream ^ GOLDEN))`` with the standard
    splitmix64 advance/finalize, and uniform doubles built from the top 53
    bits.  Per-image streams use ``stream = base_seed ^ image_index``.
    """

    __slots__ = ("seed", "stream", "_state")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = seed & _MASK
        self.stream = stream & _MASK
        self._state = _mix64(self.seed ^ _mix64(self.stream ^ _GOLDEN))

    @classmethod
    def for_image(cls, base_seed: int, image_index: int) -> "Rng":
        return cls(base_seed, (base_seed ^ image_index) & _MASK)

    def next_u64(self) -> int:
        s = (self._state + _GOLDEN) & _MASK
        self._state = s
        z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def u01(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _INV53

    def uniform(self, lo: float, hi: float) -> float:
        if not lo < hi:
            raise ValueError(f"uniform bounds must satisfy lo < hi, got [{lo}, {hi})")
        return lo + (hi - lo) * self.u01()

    def randint_below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n < 1:
            raise ValueError(f"randint_below needs n >= 1, got {n}")
        return min(int(self.u01() * n), n - 1)

    def normal(self) -> float:
        """Standard normal via Box-Muller (cosine branch only)."""
        u1 = self.u01()
        while u1 == 0.0:
            u1 = self.u01()
        u2 = self.u01()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def gamma(self, shape: float) -> float:
        """Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost."""
        if shape <= 0.0:
            raise ValueError(f"gamma shape must be > 0, got {shape}")
        boost = 1.0
        a = shape
        if a < 1.0:
            u = self.u01()
            while u == 0.0:
                u = self.u01()
            boost = u ** (1.0 / a)
            a += 1.0
        d = a - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = self.u01()
            if u < 1.0 - 0.0331 * x * x * x * x:
                return boost * d * v
            if u > 0.0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return boost * d * v

    def beta(self, a: float, b: float) -> float:
        """Beta(a, b) from two gamma variates."""
        x = self.gamma(a)
        y = self.gamma(b)
        return x / (x + y)


@dataclass(frozen=True)
class LabeledFeature:
    feature: np.ndarray
    identity: int
    modality: Modality

    def __post_init__(self):
        f = np.asarray(self.feature, dtype=np.float64)
        if f.ndim != 1 or f.size < 1:
            raise ValueError(f"feature must be a non-empty vector, got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("non-finite feature value")
        object.__setattr__(self, "feature", f)
        object.__setattr__(self, "modality", Modality(self.modality))


def load_image(path) -> Image:
    """Load an 8-bit grayscale or RGB raster as a [0, 1] float image."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such image file: {path}")
    try:
        with PILImage.open(path) as im:
            if im.mode not in ("L", "RGB"):
                raise FormatError(f"unsupported image mode {im.mode!r} in {path}")
            arr = np.asarray(im, dtype=np.float64)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[None, :, :]
    else:
        arr = np.moveaxis(arr, -1, 0)
    return Image(arr / 255.0)


def save_image(img: Image, path) -> None:
    """Write an 8-bit PNG with round-half-up quantization of 255 * value."""
    bytes_ = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(bytes_[0], mode="L")
    elif img.channels == 3:
        pil = PILImage.fromarray(np.moveaxis(bytes_, 0, -1), mode="RGB")
    else:
        raise ValueError(f"PNG output supports 1 or 3 channels, got {img.channels}")
    pil.save(Path(path), format="PNG")


def save_features(samples: list[LabeledFeature], path) -> None:
    """Write features as UTF-8 CSV with header id,modality,f0..f{d-1}."""
    if not samples:
        raise ValueError("no features to write")
    d = samples[0].feature.size
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "modality"] + [f"f{i}" for i in range(d)])
        for s in samples:
            if s.feature.size != d:
                raise ValueError("inconsistent feature dimensions")
            writer.writerow(
                [s.identity, s.modality.value] + [repr(float(v)) for v in s.feature]
            )


def load_features(path) -> list[LabeledFeature]:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"no such feature file: {path}")
    samples = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "modality"]:
            raise FormatError(f"bad feature CSV header in {path}: {header}")
        for row in reader:
            if not row:
                continue
            try:
                samples.append(
                    LabeledFeature(
                        feature=np.array([float(v) for v in row[2:]]),
                        identity=int(row[0]),
                        modality=Modality(row[1]),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"bad feature row in {path}: {row}: {exc}") from exc
    if not samples:
        raise FormatError(f"feature file {path} has no rows")
    return samples

"""Forward operators for the part-based feature path.

The modality-aware attention applies a per-modality 1x1 linear map, averages
over channels to get one value per spatial site, and squashes with a sigmoid.
The attended map is split into K horizontal bands, each globally averaged and
projected down to the part descriptor dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Modality, Rng

__all__ = [
    "ModalityTransform",
    "Projection",
    "PartDescriptor",
    "mam_attention",
    "apply_attention",
    "pcb_split_gap",
    "reduce_fc",
    "forward_pipeline",
]


def _check_feature_map(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or min(f.shape) < 1:
        raise ValueError(f"feature map must be (C, H, W), got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite feature value")
    return f


@dataclass(frozen=True)
class ModalityTransform:
    """Per-modality 1x1 linear map (C_in -> C_out) with bias, applied per site."""

    weights: dict[Modality, np.ndarray]  # (C_out, C_in)
    biases: dict[Modality, np.ndarray]  # (C_out,)

    def __post_init__(self):
        shapes = {m: w.shape for m, w in self.weights.items()}
        if set(shapes) != {Modality.VIS, Modality.NIR}:
            raise ValueError("transform needs both VIS and NIR parameters")
        if shapes[Modality.VIS] != shapes[Modality.NIR]:
            raise ValueError("both modalities' maps must share one shape")
        for m, w in self.weights.items():
            if w.ndim != 2 or self.biases[m].shape != (w.shape[0],):
                raise ValueError(f"bad parameter shapes for {m}")

    @classmethod
    def seeded(cls, c_in: int, c_out: int, seed: int, scale: float = 0.1) -> "ModalityTransform":
        """Deterministic init: uniform weights in [-scale, scale), zero bias."""
        weights, biases = {}, {}
        for k, m in enumerate((Modality.VIS, Modality.NIR)):
            rng = Rng(seed, k)
            w = np.array(
                [[rng.uniform(-scale, scale) for _ in range(c_in)] for _ in range(c_out)]
            )
            weights[m] = w
            biases[m] = np.zeros(c_out)
        return cls(weights, biases)

    def apply(self, f: np.ndarray, modality: Modality) -> np.ndarray:
        f = _check_feature_map(f)
        w = self.weights[Modality(modality)]
        b = self.biases[Modality(modality)]
        if f.shape[0] != w.shape[1]:
            raise ValueError(
                f"channel mismatch: map expects {w.shape[1]}, feature has {f.shape[0]}"
            )
        return np.einsum("oc,chw->ohw", w, f) + b[:, None, None]


@dataclass(frozen=True)
class Projection:
    """Affine dimension reduction for part vectors."""

    weight: np.ndarray  # (d, C_in)
    bias: np.ndarray  # (d,)

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bad projection shapes")

    @classmethod
    def seeded(cls, c_in: int, d: int, seed: int, scale: float = 0.1) -> "Projection":
        rng = Rng(seed, 2)
        w = np.array(
            [[rng.uniform(-scale, scale) for _ in range(c_in)] for _ in range(d)]
        )
        return cls(w, np.zeros(d))


@dataclass(frozen=True)
class PartDescriptor:
    pooled: np.ndarray  # (K, C_f) band averages
    reduced: np.ndarray  # (K, d) projected part vectors

    @property
    def parts(self) -> int:
        return self.pooled.shape[0]


def mam_attention(f: np.ndarray, transform: ModalityTransform, modality: Modality) -> np.ndarray:
    """Attention map: sigmoid of the channel mean of the transformed features."""
    g = transform.apply(f, modality)
    return 1.0 / (1.0 + np.exp(-g.mean(axis=0)))


def apply_attention(f: np.ndarray, attn: np.ndarray) -> np.ndarray:
    f = _check_feature_map(f)
    attn = np.asarray(attn, dtype=np.float64)
    if attn.shape != f.shape[1:]:
        raise ValueError(
            f"attention shape {attn.shape} does not match spatial dims {f.shape[1:]}"
        )
    return f * attn[None, :, :]


def pcb_split_gap(f: np.ndarray, k: int) -> np.ndarray:
    """Average each of k horizontal bands per channel; returns (k, C)."""
    f = _check_feature_map(f)
    c, h, w = f.shape
    if k < 1 or h % k != 0:
        raise ValueError(f"feature height {h} is not divisible into {k} parts")
    band = h // k
    return np.stack(
        [f[:, i * band:(i + 1) * band, :].mean(axis=(1, 2)) for i in range(k)]
    )


def reduce_fc(v: np.ndarray, proj: Projection) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (proj.weight.shape[1],):
        raise ValueError(
            f"vector dim {v.shape} does not match projection input {proj.weight.shape[1]}"
        )
    return proj.weight @ v + proj.bias


def forward_pipeline(
    f: np.ndarray,
    transform: ModalityTransform,
    modality: Modality,
    k: int,
    proj: Projection,
) -> tuple[PartDescriptor, np.ndarray]:
    """Attention -> attended map -> K-part GAP -> per-part projection.

    Also returns the modality head's global vector: the spatial GAP of the
    transformed features (what the per-modality identity loss consumes).
    """
    attn = mam_attention(f, transform, modality)
    attended = apply_attention(f, attn)
    pooled = pcb_split_gap(attended, k)
    reduced = np.stack([reduce_fc(v, proj) for v in pooled])
    global_vec = transform.apply(f, modality).mean(axis=(1, 2))
    return PartDescriptor(pooled, reduced), global_vec

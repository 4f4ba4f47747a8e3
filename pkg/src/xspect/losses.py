"""Center-family metric losses with analytic gradients.

All center-style losses use squared Euclidean distance and differentiate
through the in-batch centers.  The cross-center loss pulls each sample toward
the *opposite* modality's identity center; the hetero-center comparator
aligns only the two per-identity modality centers and is normalized by batch
size.  A small gradient-descent harness optimizes raw features directly so
the loss geometry can be exercised without any network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import LabeledFeature, MissingModalityError, Modality

__all__ = [
    "ModalityBatch",
    "Centers",
    "LossResult",
    "compute_centers",
    "center_loss",
    "cross_center_loss",
    "hetero_center_loss",
    "triplet_batch_hard",
    "softmax_ce",
    "classifier_loss",
    "total_loss",
    "descent_smoke",
    "DEFAULT_MARGIN",
    "DEFAULT_LAMBDA",
]

DEFAULT_MARGIN = 0.3  # common re-identification triplet margin
DEFAULT_LAMBDA = 3.0  # cross-center weight used throughout the experiments


@dataclass(frozen=True)
class ModalityBatch:
    """N feature vectors with identity labels and VIS/NIR flags."""

    features: np.ndarray  # (N, d)
    ids: np.ndarray  # (N,)
    modalities: np.ndarray  # (N,) of Modality values

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        ids = np.asarray(self.ids, dtype=np.int64)
        mods = np.asarray(
            [Modality(m) for m in self.modalities], dtype=object
        )
        if f.ndim != 2 or f.shape[0] < 1:
            raise ValueError(f"features must be (N, d) with N >= 1, got {f.shape}")
        if ids.shape != (f.shape[0],) or mods.shape != (f.shape[0],):
            raise ValueError("ids/modalities length must match feature count")
        if not np.all(np.isfinite(f)):
            raise ValueError("non-finite feature value")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "modalities", mods)

    @classmethod
    def from_samples(cls, samples: list[LabeledFeature]) -> "ModalityBatch":
        return cls(
            features=np.stack([s.feature for s in samples]),
            ids=np.array([s.identity for s in samples]),
            modalities=np.array([s.modality for s in samples], dtype=object),
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def is_vis(self) -> np.ndarray:
        return np.array([m == Modality.VIS for m in self.modalities])

    def with_features(self, features: np.ndarray) -> "ModalityBatch":
        return ModalityBatch(features, self.ids, self.modalities)


@dataclass(frozen=True)
class Centers:
    """Per-identity all-sample and per-modality means."""

    all: dict[int, np.ndarray]
    vis: dict[int, np.ndarray]
    nir: dict[int, np.ndarray]
    counts: dict[int, tuple[int, int]]  # identity -> (n_vis, n_nir)


def compute_centers(batch: ModalityBatch) -> Centers:
    vis_mask = batch.is_vis()
    all_c, vis_c, nir_c, counts = {}, {}, {}, {}
    for y in np.unique(batch.ids):
        sel = batch.ids == y
        f = batch.features[sel]
        all_c[int(y)] = f.mean(axis=0)
        v = batch.features[sel & vis_mask]
        n = batch.features[sel & ~vis_mask]
        counts[int(y)] = (v.shape[0], n.shape[0])
        if v.shape[0]:
            vis_c[int(y)] = v.mean(axis=0)
        if n.shape[0]:
            nir_c[int(y)] = n.mean(axis=0)
    return Centers(all_c, vis_c, nir_c, counts)


def _require_both_modalities(centers: Centers):
    for y, (nv, nn) in centers.counts.items():
        if nv == 0 or nn == 0:
            missing = "VIS" if nv == 0 else "NIR"
            raise MissingModalityError(
                f"identity {y} has no {missing} samples in this batch"
            )


@dataclass(frozen=True)
class LossResult:
    value: float
    gradient: np.ndarray  # (N, d) d(loss)/d(feature)
    logit_gradient: np.ndarray | None = None


def center_loss(batch: ModalityBatch) -> LossResult:
    """Half the summed squared distance of each sample to its identity center.

    The through-center gradient terms cancel (deviations from a mean sum to
    zero), leaving exactly f_i - c_{y_i}.
    """
    centers = compute_centers(batch)
    value = 0.0
    grad = np.zeros_like(batch.features)
    for i in range(batch.n):
        diff = batch.features[i] - centers.all[int(batch.ids[i])]
        value += 0.5 * float(diff @ diff)
        grad[i] = diff
    return LossResult(value, grad)


def cross_center_loss(batch: ModalityBatch) -> LossResult:
    """Pull each sample toward the opposite modality's center of its identity."""
    centers = compute_centers(batch)
    _require_both_modalities(centers)
    vis_mask = batch.is_vis()
    value = 0.0
    grad = np.zeros_like(batch.features)
    for i in range(batch.n):
        y = int(batch.ids[i])
        target = centers.nir[y] if vis_mask[i] else centers.vis[y]
        diff = batch.features[i] - target
        value += 0.5 * float(diff @ diff)
        grad[i] += diff
    # through-center terms: a VIS sample moves c^v, which is the target of
    # every NIR sample of the same identity (and symmetrically)
    for y, (nv, nn) in centers.counts.items():
        cv, cn = centers.vis[y], centers.nir[y]
        sel = batch.ids == y
        gap = cn - cv
        grad[sel & vis_mask] += -(nn / nv) * gap
        grad[sel & ~vis_mask] += (nv / nn) * gap
    return LossResult(value, grad)


def hetero_center_loss(batch: ModalityBatch) -> LossResult:
    """Squared distance between the two modality centers, over batch size."""
    centers = compute_centers(batch)
    _require_both_modalities(centers)
    vis_mask = batch.is_vis()
    value = 0.0
    grad = np.zeros_like(batch.features)
    inv_n = 1.0 / batch.n
    for y, (nv, nn) in centers.counts.items():
        gap = centers.vis[y] - centers.nir[y]
        value += inv_n * float(gap @ gap)
        sel = batch.ids == y
        grad[sel & vis_mask] += (2.0 * inv_n / nv) * gap
        grad[sel & ~vis_mask] += -(2.0 * inv_n / nn) * gap
    return LossResult(value, grad)


def triplet_batch_hard(batch: ModalityBatch, margin: float = DEFAULT_MARGIN) -> LossResult:
    """Batch-hard triplet loss on plain Euclidean distances.

    Per anchor, the farthest same-identity and nearest different-identity
    samples are mined; ties break toward the lowest sample index.  The
    subgradient at zero distance is taken as zero.
    """
    ids = batch.ids
    if np.unique(ids).size < 2:
        raise ValueError("triplet loss needs at least 2 identities")
    for y in np.unique(ids):
        if np.sum(ids == y) < 2:
            raise ValueError(f"identity {int(y)} has fewer than 2 samples")
    f = batch.features
    n = batch.n
    diff = f[:, None, :] - f[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    same = ids[:, None] == ids[None, :]
    value = 0.0
    grad = np.zeros_like(f)
    for a in range(n):
        pos = np.where(same[a])[0]
        neg = np.where(~same[a])[0]
        p = pos[int(np.argmax(dist[a, pos]))]
        nn_ = neg[int(np.argmin(dist[a, neg]))]
        hinge = margin + dist[a, p] - dist[a, nn_]
        if hinge <= 0.0:
            continue
        value += hinge
        if dist[a, p] > 0.0:
            u = (f[a] - f[p]) / dist[a, p]
            grad[a] += u
            grad[p] -= u
        if dist[a, nn_] > 0.0:
            u = (f[a] - f[nn_]) / dist[a, nn_]
            grad[a] -= u
            grad[nn_] += u
    return LossResult(value / n, grad / n)


def softmax_ce(logits: np.ndarray, labels: np.ndarray) -> LossResult:
    """Mean negative log-softmax of the true class, max-shifted for stability."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise ValueError(f"bad shapes: logits {z.shape}, labels {y.shape}")
    if y.min() < 0 or y.max() >= z.shape[1]:
        raise ValueError(f"label out of range [0, {z.shape[1]}): {y}")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    value = float(np.mean(log_norm - shifted[np.arange(n), y]))
    probs = np.exp(shifted - log_norm[:, None])
    probs[np.arange(n), y] -= 1.0
    return LossResult(value, probs / n)


def classifier_loss(
    batch: ModalityBatch,
    logits: np.ndarray,
    labels: np.ndarray,
    lam: float = DEFAULT_LAMBDA,
    margin: float = DEFAULT_MARGIN,
) -> LossResult:
    """Per-part objective: identity CE + batch-hard triplet + lam * cross-center."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    id_part = softmax_ce(logits, labels)
    tri_part = triplet_batch_hard(batch, margin)
    cc_part = cross_center_loss(batch)
    return LossResult(
        value=id_part.value + tri_part.value + lam * cc_part.value,
        gradient=tri_part.gradient + lam * cc_part.gradient,
        logit_gradient=id_part.gradient,
    )


def total_loss(part_losses, id_loss_vis: float, id_loss_nir: float) -> float:
    """Whole-model objective: the two modality CE heads plus every part loss."""
    parts = list(part_losses)
    if not parts:
        raise ValueError("need at least one part loss")
    return float(id_loss_vis + id_loss_nir + sum(parts))


def fd_gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        lo = x.copy()
        hi = x.copy()
        lo.flat[i] -= step
        hi.flat[i] += step
        grad.flat[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def descent_smoke(
    batch0: ModalityBatch,
    steps: int,
    lr: float,
    loss_fn=cross_center_loss,
):
    """Plain gradient descent on the features under a center-style loss.

    Returns (trajectory, final_batch, diverged) where trajectory rows are
    (loss value, mean per-identity distance between modality centers).
    """
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    batch = batch0
    trajectory = []
    increases = 0
    prev = None
    diverged = False
    for _ in range(steps):
        res = loss_fn(batch)
        centers = compute_centers(batch)
        gaps = [
            float(np.linalg.norm(centers.vis[y] - centers.nir[y]))
            for y in centers.vis
            if y in centers.nir
        ]
        trajectory.append((res.value, float(np.mean(gaps)) if gaps else 0.0))
        if prev is not None and res.value > prev:
            increases += 1
            if increases >= 10:
                diverged = True
        else:
            increases = 0
        prev = res.value
        batch = batch.with_features(batch.features - lr * res.gradient)
    return np.array(trajectory), batch, diverged

"""CMC and mean-average-precision retrieval metrics over labeled features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledFeature, ProtocolError

__all__ = ["RetrievalSet", "CmcCurve", "cmc", "mean_ap"]


@dataclass(frozen=True)
class RetrievalSet:
    query: list[LabeledFeature]
    gallery: list[LabeledFeature]

    def __post_init__(self):
        if not self.query or not self.gallery:
            raise ProtocolError("query and gallery must be non-empty")
        gallery_ids = {g.identity for g in self.gallery}
        for q in self.query:
            if q.identity not in gallery_ids:
                raise ProtocolError(
                    f"query identity {q.identity} never appears in the gallery"
                )

    def distance_matrix(self) -> np.ndarray:
        qf = np.stack([q.feature for q in self.query])
        gf = np.stack([g.feature for g in self.gallery])
        diff = qf[:, None, :] - gf[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))


@dataclass(frozen=True)
class CmcCurve:
    """Rank-indexed accuracies; accuracy[k-1] is the rank-k hit rate."""

    accuracy: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.accuracy, dtype=np.float64)
        if np.any(np.diff(a) < 0) or a.size and (a[0] < 0 or a[-1] > 1):
            raise ValueError("CMC curve must be non-decreasing within [0, 1]")
        object.__setattr__(self, "accuracy", a)

    def at(self, rank: int) -> float:
        return float(self.accuracy[rank - 1])


def _rankings(retrieval: RetrievalSet) -> np.ndarray:
    # stable sort keeps gallery-index order on distance ties
    dist = retrieval.distance_matrix()
    return np.argsort(dist, axis=1, kind="stable")


def cmc(retrieval: RetrievalSet, max_rank: int) -> CmcCurve:
    """Mean rank-k hit curve: a hit if any same-identity item is in the top k."""
    if max_rank < 1 or max_rank > len(retrieval.gallery):
        raise ValueError(
            f"max_rank must be in [1, {len(retrieval.gallery)}], got {max_rank}"
        )
    gallery_ids = np.array([g.identity for g in retrieval.gallery])
    order = _rankings(retrieval)
    hits = np.zeros(max_rank)
    for qi, q in enumerate(retrieval.query):
        ranked_match = gallery_ids[order[qi]] == q.identity
        first = int(np.argmax(ranked_match))
        if first < max_rank:
            hits[first:] += 1.0
    return CmcCurve(hits / len(retrieval.query))


def mean_ap(retrieval: RetrievalSet) -> float:
    """Standard non-interpolated retrieval AP, averaged over queries."""
    gallery_ids = np.array([g.identity for g in retrieval.gallery])
    order = _rankings(retrieval)
    aps = []
    for qi, q in enumerate(retrieval.query):
        ranked_match = gallery_ids[order[qi]] == q.identity
        positions = np.where(ranked_match)[0]
        precisions = (np.arange(len(positions)) + 1.0) / (positions + 1.0)
        aps.append(float(precisions.mean()))
    return float(np.mean(aps))

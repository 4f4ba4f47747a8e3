"""Cross-spectral imaging and metric-learning toolkit.

Synthetic Lambertian rendering with band-ratio analysis, the random-rectangle
linear transformation augmentation, center-family metric losses with analytic
gradients, modality-aware attention with part pooling, a modality-discrepancy
experiment harness, and CMC/mAP retrieval metrics.
"""

__version__ = "0.1.0"

from .core import (
    FormatError,
    Image,
    LabeledFeature,
    MissingModalityError,
    Modality,
    ProtocolError,
    Rect,
    Rng,
    load_features,
    load_image,
    save_features,
    save_image,
)

__all__ = [
    "__version__",
    "FormatError",
    "Image",
    "LabeledFeature",
    "MissingModalityError",
    "Modality",
    "ProtocolError",
    "Rect",
    "Rng",
    "load_features",
    "load_image",
    "save_features",
    "save_image",
]

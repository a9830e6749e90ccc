"""Maritime object-detection pipeline toolkit.

Covers the full tooling path around a pluggable detector backend:
annotation file I/O and validation, dataset statistics, anchor prior
clustering, training-set augmentation, detection-head decoding with
non-maximal suppression, AP/mAP evaluation, optical-flow tracking between
detector invocations, and an annotation review service.
"""

__version__ = "0.1.0"

from .geometry import BoxNorm, BoxPixel, ImageMeta, box_stats, flip_h, iou, iou_norm

__all__ = [
    "BoxNorm",
    "BoxPixel",
    "ImageMeta",
    "box_stats",
    "flip_h",
    "iou",
    "iou_norm",
    "__version__",
]

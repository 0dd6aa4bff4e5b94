"""Mask- and class-conditioned adversarial augmentation for segmentation, on a small numpy autodiff core."""

__version__ = "0.1.0"

"""Mutual graph learning for camouflaged object detection.

Two task branches (region segmentation and object-aware edge extraction)
coupled through graph projection, cross-graph attention, GCN reasoning and an
edge-supportive graph convolution, trained jointly and optionally recurrently
on synthetic camouflage scenes.  Everything runs on a small numpy autodiff
engine; no deep-learning framework is involved.
"""

__version__ = "0.1.0"

from . import autograd

__all__ = ["autograd", "__version__"]

"""Text segmentation refinement network on TextSeg-format data."""

__version__ = "0.1.0"

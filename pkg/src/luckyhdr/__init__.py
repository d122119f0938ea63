"""Bracketed-burst HDR: capture planning, burst simulation, alignment and convex merging.

The pipeline fuses a short-to-long exposure bracket into one HDR estimate by
iteratively aligning each incoming frame to the current fused estimate and
blending it in with per-pixel convex weights, so every output pixel stays a
weighted combination of observed input pixels.
"""

__version__ = "0.1.0"

from .imaging import LinearImage, NoiseModel

__all__ = ["LinearImage", "NoiseModel", "__version__"]

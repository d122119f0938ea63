"""Differentiable re-implementation of the luckyhdr align/merge pipeline.

Trains the three tiny networks on simulated bursts and exports weight
bundles in the runtime's binary format. Talks to the runtime package only
through its external interfaces: the on-disk dataset layout (PFM frames,
sidecars, manifest.json), the LHDRW001 weight format, and the `luckyhdr`
CLI for data generation.
"""

__version__ = "0.1.0"

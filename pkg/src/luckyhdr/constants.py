"""Shared numeric constants.

These are referenced by the feature extractors, the losses and the metrics and
must stay identical everywhere (a trainer reproducing the runtime semantics has
to use the same values).
"""

# Log tone-curve compression parameter, shared by alignment features, the
# tone-mapped L1 loss and the tone-mapped PSNR metric.
MU_DEFAULT = 5000.0

# Display-approximation gamma used for the merge feature's brightness cue.
GAMMA_DEFAULT = 2.2

# Rec.709 luma coefficients for linear RGB.
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)

# Epsilon added to the standard deviation when standardizing tone-mapped
# features, so constant images normalize to zero instead of dividing by zero.
NORM_EPS = 1e-6

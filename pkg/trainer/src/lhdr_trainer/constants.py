"""Shared constants; values must match the runtime bit for bit in meaning.

Any drift here silently breaks forward conformance between the trainer and
the inference runtime.
"""

MU = 5000.0
GAMMA = 2.2
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)
NORM_EPS = 1e-6

COARSE_FACTOR = 4
COARSE_BOUND = 13.0  # pixels at coarse resolution
FINE_BOUND = 6.0  # pixels at full resolution

# Network layer tables: (kernel, in, out, activation); one flat weight file
# carries coarse + fine + merge in this order.
COARSE_LAYERS = ((3, 12, 24, "relu"), (3, 24, 24, "relu"), (3, 24, 24, "relu"), (3, 24, 2, "tanh"))
FINE_LAYERS = ((3, 12, 8, "relu"), (3, 8, 8, "relu"), (3, 8, 2, "tanh"))
MERGE_LAYERS = ((3, 8, 8, "relu"), (3, 8, 8, "relu"), (3, 8, 2, "none"))

# Default loss weights for (pred, warp, var); the source material leaves the
# weighting open, these are declared defaults.
LOSS_WEIGHTS = (1.0, 0.5, 0.01)

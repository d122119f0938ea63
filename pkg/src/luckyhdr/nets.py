"""Default network architectures and the three-network stack used by the pipeline.

A single weight file carries the coarse-align, fine-align and merge networks
as one flat layer sequence in that order; the stack loader splits it by the
spec layer counts and validates every shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WeightIncompatibilityError
from .tinycnn import (
    PARAM_BUDGET,
    ConvLayerSpec,
    LayerWeights,
    NetworkSpec,
    WeightBundle,
    load_weights,
    save_weights,
)

# Layer widths are config-driven; the binding contract is the combined
# parameter budget, not any individual width. These defaults keep one full
# 512x512 align+merge iteration inside the real-time smoke budget on a
# single CPU core.
COARSE_SPEC = NetworkSpec(
    "coarse_align",
    (
        ConvLayerSpec(3, 12, 24, "relu"),
        ConvLayerSpec(3, 24, 24, "relu"),
        ConvLayerSpec(3, 24, 24, "relu"),
        ConvLayerSpec(3, 24, 2, "tanh"),
    ),
)
FINE_SPEC = NetworkSpec(
    "fine_align",
    (
        ConvLayerSpec(3, 12, 8, "relu"),
        ConvLayerSpec(3, 8, 8, "relu"),
        ConvLayerSpec(3, 8, 2, "tanh"),
    ),
)
MERGE_SPEC = NetworkSpec(
    "merge_weights",
    (
        ConvLayerSpec(3, 8, 8, "relu"),
        ConvLayerSpec(3, 8, 8, "relu"),
        ConvLayerSpec(3, 8, 2, "none"),
    ),
)


def default_specs() -> tuple[NetworkSpec, NetworkSpec, NetworkSpec]:
    return COARSE_SPEC, FINE_SPEC, MERGE_SPEC


def total_param_count(specs=None) -> int:
    specs = specs or default_specs()
    return sum(s.param_count for s in specs)


assert total_param_count() <= PARAM_BUDGET


@dataclass
class NetStack:
    """The three networks of one merge pipeline, sharing a single weight file."""

    coarse: WeightBundle
    fine: WeightBundle
    merge: WeightBundle

    def __post_init__(self):
        for spec, bundle in zip(default_specs(), (self.coarse, self.fine, self.merge)):
            if bundle.architecture_hash != spec.architecture_hash:
                raise WeightIncompatibilityError(
                    f"bundle does not match {spec.name!r}: "
                    f"got layers {[lw.spec for lw in bundle.layers]}"
                )

    def to_bundle(self) -> WeightBundle:
        return WeightBundle(self.coarse.layers + self.fine.layers + self.merge.layers)

    @classmethod
    def from_bundle(cls, bundle: WeightBundle) -> "NetStack":
        coarse_spec, fine_spec, merge_spec = default_specs()
        n_c, n_f, n_m = len(coarse_spec.layers), len(fine_spec.layers), len(merge_spec.layers)
        if len(bundle.layers) != n_c + n_f + n_m:
            raise WeightIncompatibilityError(
                f"stack expects {n_c + n_f + n_m} layers (coarse+fine+merge), file has {len(bundle.layers)}"
            )
        return cls(
            coarse=bundle.slice(0, n_c),
            fine=bundle.slice(n_c, n_f),
            merge=bundle.slice(n_c + n_f, n_m),
        )

    @classmethod
    def load(cls, path) -> "NetStack":
        return cls.from_bundle(load_weights(path))

    def save(self, path) -> None:
        save_weights(self.to_bundle(), path)


def _init_layers(spec: NetworkSpec, rng: np.random.Generator | None, scale: float) -> WeightBundle:
    layers = []
    for layer in spec.layers:
        shape = (layer.kernel_size, layer.kernel_size, layer.in_channels, layer.out_channels)
        if rng is None:
            kernel = np.zeros(shape, dtype=np.float32)
            bias = np.zeros(layer.out_channels, dtype=np.float32)
        else:
            fan_in = layer.kernel_size * layer.kernel_size * layer.in_channels
            std = scale / np.sqrt(fan_in)
            kernel = rng.normal(0.0, std, size=shape).astype(np.float32)
            bias = rng.normal(0.0, 0.1 * scale, size=layer.out_channels).astype(np.float32)
        layers.append(LayerWeights(kernel, bias, layer.activation))
    return WeightBundle(layers)


def zero_stack() -> NetStack:
    """All-zero weights: predicts zero shifts and equal merge logits."""
    c, f, m = default_specs()
    return NetStack(_init_layers(c, None, 0.0), _init_layers(f, None, 0.0), _init_layers(m, None, 0.0))


def random_stack(seed: int, scale: float = 1.0) -> NetStack:
    """Deterministic random weights, useful as adversarial fixtures."""
    rng = np.random.default_rng(seed)
    c, f, m = default_specs()
    return NetStack(_init_layers(c, rng, scale), _init_layers(f, rng, scale), _init_layers(m, rng, scale))

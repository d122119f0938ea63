"""Torch modules for the three networks plus bundle import/export.

The weight file stores kernels as (ky, kx, in, out); torch convs use
(out, in, ky, kx), so export/import permute between the two.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .constants import COARSE_LAYERS, FINE_LAYERS, MERGE_LAYERS
from .formats import load_bundle, save_bundle
from .ops import conv_replicate


class ConvNet(nn.Module):
    """Stride-1 replicate-padded conv stack with per-layer activations."""

    def __init__(self, layer_table):
        super().__init__()
        self.layer_table = tuple(layer_table)
        self.convs = nn.ModuleList()
        for i, (k, ci, co, _act) in enumerate(self.layer_table):
            conv = nn.Conv2d(ci, co, k, padding=0)
            if i == len(self.layer_table) - 1:
                # near-zero head: training starts from identity-ish shifts
                # and balanced merge weights
                nn.init.normal_(conv.weight, std=0.01)
            else:
                nn.init.kaiming_normal_(conv.weight, nonlinearity="relu")
            nn.init.zeros_(conv.bias)
            self.convs.append(conv)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv, (_k, _ci, _co, act) in zip(self.convs, self.layer_table):
            x = conv_replicate(x, conv.weight, conv.bias)
            if act == "relu":
                x = torch.relu(x)
            elif act == "tanh":
                x = torch.tanh(x)
        return x

    def export_layers(self) -> list:
        out = []
        for conv, (_k, _ci, _co, act) in zip(self.convs, self.layer_table):
            kernel = conv.weight.detach().cpu().numpy().transpose(2, 3, 1, 0)  # (ky, kx, in, out)
            bias = conv.bias.detach().cpu().numpy()
            out.append((np.ascontiguousarray(kernel), bias.copy(), act))
        return out

    def import_layers(self, layers: list) -> None:
        if len(layers) != len(self.convs):
            raise ValueError(f"expected {len(self.convs)} layers, got {len(layers)}")
        with torch.no_grad():
            for conv, (_k, _ci, _co, act), (kernel, bias, file_act) in zip(self.convs, self.layer_table, layers):
                if act != file_act:
                    raise ValueError(f"activation mismatch: net {act} vs file {file_act}")
                w = torch.from_numpy(np.ascontiguousarray(kernel.transpose(3, 2, 0, 1)))
                if w.shape != conv.weight.shape:
                    raise ValueError(f"kernel shape {tuple(w.shape)} != {tuple(conv.weight.shape)}")
                conv.weight.copy_(w)
                conv.bias.copy_(torch.from_numpy(np.ascontiguousarray(bias)))


class TrainerStack(nn.Module):
    """Coarse align, fine align and merge networks sharing one weight file."""

    def __init__(self):
        super().__init__()
        self.coarse = ConvNet(COARSE_LAYERS)
        self.fine = ConvNet(FINE_LAYERS)
        self.merge = ConvNet(MERGE_LAYERS)

    def export_bundle(self, path, metadata: dict | None = None) -> None:
        layers = self.coarse.export_layers() + self.fine.export_layers() + self.merge.export_layers()
        save_bundle(layers, path, metadata)

    def import_bundle(self, path) -> None:
        layers = load_bundle(path)
        n_c, n_f = len(COARSE_LAYERS), len(FINE_LAYERS)
        n_m = len(MERGE_LAYERS)
        if len(layers) != n_c + n_f + n_m:
            raise ValueError(f"bundle has {len(layers)} layers, expected {n_c + n_f + n_m}")
        self.coarse.import_layers(layers[:n_c])
        self.fine.import_layers(layers[n_c : n_c + n_f])
        self.merge.import_layers(layers[n_c + n_f :])

    def freeze_non_coarse(self) -> None:
        for p in self.fine.parameters():
            p.requires_grad_(False)
        for p in self.merge.parameters():
            p.requires_grad_(False)

"""Analytic gradients of the training losses against central finite differences."""

import numpy as np
import torch

from lhdr_trainer.ops import warp_bilinear
from lhdr_trainer.pipeline import loss_pred, loss_var, loss_warp


def _central_diff(fn, tensor, indices, h=1e-4):
    out = []
    for idx in indices:
        plus = tensor.detach().clone()
        plus[idx] += h
        minus = tensor.detach().clone()
        minus[idx] -= h
        out.append((float(fn(plus)) - float(fn(minus))) / (2 * h))
    return np.array(out)


def _check(fn, tensor, n_probe=12, rel=1e-3, seed=0):
    tensor = tensor.double().requires_grad_(True)
    loss = fn(tensor)
    loss.backward()
    grad = tensor.grad
    rng = np.random.default_rng(seed)
    flat = [np.unravel_index(int(i), tensor.shape) for i in rng.choice(tensor.numel(), n_probe, replace=False)]
    numeric = _central_diff(fn, tensor, flat)
    analytic = np.array([float(grad[idx]) for idx in flat])
    scale = np.maximum(np.abs(numeric), 1e-6)
    assert np.all(np.abs(analytic - numeric) / scale < rel), (analytic, numeric)


def test_loss_pred_gradient(rng):
    h_gt = torch.from_numpy(rng.random((1, 3, 8, 8))).double()
    h_hat = torch.from_numpy((rng.random((1, 3, 8, 8)) * 0.8 + 0.1))
    _check(lambda x: loss_pred(x, h_gt), h_hat)


def test_loss_warp_gradient_wrt_warped(rng):
    target = torch.from_numpy(rng.random((1, 1, 3, 8, 8))).double()
    masks = torch.from_numpy((rng.random((1, 1, 1, 8, 8)) > 0.3).astype(np.float64))
    w = torch.from_numpy(rng.random((1, 3, 8, 8)) + 0.05)
    _check(lambda x: loss_warp([x], target, masks), w)


def test_loss_warp_gradient_through_warp(rng):
    # gradients also flow through the bilinear warp into the shift field
    img = torch.from_numpy(rng.random((1, 3, 8, 8))).double()
    target = torch.from_numpy(rng.random((1, 1, 3, 8, 8))).double()
    masks = torch.ones((1, 1, 1, 8, 8), dtype=torch.float64)
    shift0 = torch.from_numpy((rng.random((1, 2, 8, 8)) - 0.5) * 1.5 + 0.25)

    def fn(shift):
        warped, _ = warp_bilinear(img, shift)
        return loss_warp([warped], target, masks)

    _check(fn, shift0, n_probe=10)


def test_loss_var_gradient(rng):
    s = torch.from_numpy(rng.standard_normal((1, 2, 8, 8)))
    _check(lambda x: loss_var([x]), s)

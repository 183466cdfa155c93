"""Feature alignment: offset prediction and modulated deformable sampling.

A 3x3 tap set (K = 9) is sampled around each pixel's matched reference
position (the pre-offset from the texture warp) plus learned residual
offsets, weighted by a sigmoid modulation and the per-tap convolution
weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (Tensor, concat, conv2d, grid_sample_bilinear, leaky_relu,
                     reshape, sigmoid)

K_TAPS = 9
_TAP_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


@dataclass
class OffsetPrediction:
    offsets: Tensor      # (n, 2*K, h, w), raw, units = pixels of the sampled level
    modulation: Tensor   # (n, K, h, w), sigmoid-bounded to (0, 1)


def init_offset_params(rng, in_channels: int, mid_channels: int = 64,
                       dtype=np.float32) -> dict:
    """Two stacked 3x3 convolutions; the final layer is zero-initialized so
    training starts at plain warped-conv behavior."""
    scale = np.sqrt(2.0 / (in_channels * 9))
    return {
        "w1": Tensor(rng.standard_normal((mid_channels, in_channels, 3, 3)).astype(dtype) * dtype(scale),
                     requires_grad=True),
        "b1": Tensor(np.zeros(mid_channels, dtype=dtype), requires_grad=True),
        "w2": Tensor(np.zeros((3 * K_TAPS, mid_channels, 3, 3), dtype=dtype),
                     requires_grad=True),
        "b2": Tensor(np.zeros(3 * K_TAPS, dtype=dtype), requires_grad=True),
    }


def predict_offsets(f_lr: Tensor, f_ref_i: Tensor, warped_ref: Tensor,
                    params: dict) -> OffsetPrediction:
    """Predict residual offsets and modulation from [F_LR; F_Ref; warped F_Ref]."""
    shapes = {t.shape[2:] for t in (f_lr, f_ref_i, warped_ref)}
    if len(shapes) != 1:
        raise ValueError(f"spatial sizes differ: {sorted(shapes)}")
    x = concat([f_lr, f_ref_i, warped_ref], axis=1)
    x = leaky_relu(conv2d(x, params["w1"], params["b1"], padding=1), 0.1)
    x = conv2d(x, params["w2"], params["b2"], padding=1)
    return OffsetPrediction(offsets=x[:, :2 * K_TAPS],
                            modulation=sigmoid(x[:, 2 * K_TAPS:]))


def deformable_sample(y: Tensor, pre_offset, pred: OffsetPrediction,
                      weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Modulated deformable 3x3 sampling around the matched positions.

    y: (n, c_in, h_y, w_y) reference feature level.
    pre_offset: (2, h, w) or (n, 2, h, w) displacement (x plane first), in
        pixels of y, anchoring each output pixel at its matched position.
    weights: (c_out, c_in, 3, 3) per-tap mixing weights.
    """
    if weights.ndim != 4 or weights.shape[2:] != (3, 3):
        raise ValueError(f"deformable kernel must be 3x3, got {weights.shape[2:]}")
    n, c_in, h_y, w_y = y.shape
    if weights.shape[1] != c_in:
        raise ValueError(f"kernel expects {weights.shape[1]} channels, input has {c_in}")
    offs = pred.offsets
    mods = pred.modulation
    _, _, h, w = offs.shape

    pre = pre_offset.data if isinstance(pre_offset, Tensor) else np.asarray(pre_offset)
    if pre.ndim == 3:
        pre = pre[None]
    dtype = offs.data.dtype
    pre = pre.astype(dtype, copy=False)
    base_x, base_y = np.meshgrid(np.arange(w, dtype=dtype),
                                 np.arange(h, dtype=dtype))
    anchor_x = base_x[None] + pre[:, 0]   # (n or 1, h, w)
    anchor_y = base_y[None] + pre[:, 1]
    anchor_x = np.broadcast_to(anchor_x, (n, h, w))
    anchor_y = np.broadcast_to(anchor_y, (n, h, w))
    sx = 2.0 / max(w_y - 1, 1)
    sy = 2.0 / max(h_y - 1, 1)

    out = None
    for k, (dy, dx) in enumerate(_TAP_OFFSETS):
        ox = offs[:, 2 * k:2 * k + 1]       # (n, 1, h, w)
        oy = offs[:, 2 * k + 1:2 * k + 2]
        gx = (ox + Tensor((anchor_x + dx)[:, None])) * sx - 1.0
        gy = (oy + Tensor((anchor_y + dy)[:, None])) * sy - 1.0
        grid = concat([gx, gy], axis=1)
        sampled = grid_sample_bilinear(y, grid) * mods[:, k:k + 1]
        tap_w = reshape(weights[:, :, dy + 1, dx + 1], (weights.shape[0], c_in, 1, 1))
        contrib = conv2d(sampled, tap_w)
        out = contrib if out is None else out + contrib
    if bias is not None:
        out = out + reshape(bias, (1, weights.shape[0], 1, 1))
    return out

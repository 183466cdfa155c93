"""Texture-adaptive aggregation: decoupled dynamic filters, ESA, DRB.

The decoupled dynamic filter factorizes a per-pixel-per-channel 3x3 filter
into a spatial branch (one filter per pixel) and a channel branch (one
filter per channel); both are filter-normalized (zero mean, unit std over
the 9 taps) before a learnable affine, and their outer product routes the
3x3 neighborhood of every feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (Tensor, concat, conv2d, decoupled_filter,
                     global_avg_pool, leaky_relu, max_pool, relu, reshape,
                     resize_bilinear, sigmoid, tsqrt)

FN_EPS = 1e-5
DF_TAPS = 9


@dataclass
class DecoupledFilters:
    spatial: Tensor   # (n, 9, h, w), normalized per pixel
    channel: Tensor   # (n, c, 9), normalized per channel


@dataclass
class RoutingWeights:
    gamma_sf: Tensor
    beta_sf: Tensor
    gamma_cf: Tensor
    beta_cf: Tensor


def filter_normalize(x: Tensor, axis: int) -> Tensor:
    """Zero-mean, unit-std over one axis (the tap axis), epsilon-regularized."""
    mean = x.mean(axis=axis, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=axis, keepdims=True)
    return centered / tsqrt(var + FN_EPS)


def init_dfm_params(rng, channels: int, dtype=np.float32) -> dict:
    if channels < 4:
        raise ValueError(f"dynamic filter module needs >= 4 channels, got {channels}")
    red = channels // 4

    def conv_w(oc, ic, k):
        scale = np.sqrt(2.0 / (ic * k * k))
        return Tensor(rng.standard_normal((oc, ic, k, k)).astype(dtype) * dtype(scale),
                      requires_grad=True)

    return {
        "spatial_w": conv_w(DF_TAPS, channels, 3),
        "spatial_b": Tensor(np.zeros(DF_TAPS, dtype=dtype), requires_grad=True),
        "fc1_w": conv_w(red, channels, 1),
        "fc1_b": Tensor(np.zeros(red, dtype=dtype), requires_grad=True),
        "fc2_w": conv_w(channels * DF_TAPS, red, 1),
        "fc2_b": Tensor(np.zeros(channels * DF_TAPS, dtype=dtype), requires_grad=True),
        "gamma_sf": Tensor(np.ones((), dtype=dtype), requires_grad=True),
        "beta_sf": Tensor(np.zeros((), dtype=dtype), requires_grad=True),
        "gamma_cf": Tensor(np.ones((), dtype=dtype), requires_grad=True),
        "beta_cf": Tensor(np.zeros((), dtype=dtype), requires_grad=True),
    }


def routing_from_params(params: dict) -> RoutingWeights:
    return RoutingWeights(gamma_sf=params["gamma_sf"], beta_sf=params["beta_sf"],
                          gamma_cf=params["gamma_cf"], beta_cf=params["beta_cf"])


def generate_filters(f: Tensor, params: dict) -> DecoupledFilters:
    """Spatial branch: 3x3 conv -> FN per pixel.  Channel branch:
    GAP -> FC -> ReLU -> FC -> FN per channel."""
    n, c, h, w = f.shape
    if c < 4:
        raise ValueError(f"dynamic filter module needs >= 4 channels, got {c}")
    spatial = conv2d(f, params["spatial_w"], params["spatial_b"], padding=1)
    spatial = filter_normalize(spatial, axis=1)
    pooled = global_avg_pool(f)
    hidden = relu(conv2d(pooled, params["fc1_w"], params["fc1_b"]))
    chan = conv2d(hidden, params["fc2_w"], params["fc2_b"])
    chan = reshape(chan, (n, c, DF_TAPS))
    chan = filter_normalize(chan, axis=2)
    return DecoupledFilters(spatial=spatial, channel=chan)


def dynamic_filter_apply(f: Tensor, filters: DecoupledFilters,
                         routing: RoutingWeights) -> Tensor:
    """Apply the decoupled filters: out(k,i) = sum_t w(k,t,i) * F(k, i+t)."""
    n, c, h, w = f.shape
    if filters.spatial.shape != (n, DF_TAPS, h, w):
        raise ValueError(
            f"spatial filters {filters.spatial.shape} do not match feature map "
            f"({n}, {DF_TAPS}, {h}, {w})")
    if filters.channel.shape != (n, c, DF_TAPS):
        raise ValueError(
            f"channel filters {filters.channel.shape} do not match ({n}, {c}, {DF_TAPS})")
    w_sf = routing.gamma_sf * filters.spatial + routing.beta_sf       # (n, 9, h, w)
    w_cf = routing.gamma_cf * filters.channel + routing.beta_cf       # (n, c, 9)
    return decoupled_filter(f, w_sf, w_cf)


def dfm_forward(f: Tensor, params: dict) -> Tensor:
    return dynamic_filter_apply(f, generate_filters(f, params),
                                routing_from_params(params))


# ---------------------------------------------------------------------------
# enhanced spatial attention
# ---------------------------------------------------------------------------

ESA_MIN_SIZE = 4


def init_esa_params(rng, channels: int, dtype=np.float32) -> dict:
    if channels % 4 != 0:
        raise ValueError(f"ESA needs channels divisible by 4, got {channels}")
    red = channels // 4

    def conv_w(oc, ic, k):
        scale = np.sqrt(2.0 / (ic * k * k))
        return Tensor(rng.standard_normal((oc, ic, k, k)).astype(dtype) * dtype(scale),
                      requires_grad=True)

    def zeros(nc):
        return Tensor(np.zeros(nc, dtype=dtype), requires_grad=True)

    return {
        "reduce_w": conv_w(red, channels, 1), "reduce_b": zeros(red),
        "skip_w": conv_w(red, red, 1), "skip_b": zeros(red),
        "down_w": conv_w(red, red, 3), "down_b": zeros(red),
        "mid1_w": conv_w(red, red, 3), "mid1_b": zeros(red),
        "mid2_w": conv_w(red, red, 3), "mid2_b": zeros(red),
        "expand_w": conv_w(channels, red, 1), "expand_b": zeros(channels),
    }


def esa_attention(f: Tensor, params: dict) -> Tensor:
    """Sigmoid spatial mask from a bottlenecked conv/pool/resize branch."""
    n, c, h, w = f.shape
    if c % 4 != 0:
        raise ValueError(f"ESA needs channels divisible by 4, got {c}")
    if h < ESA_MIN_SIZE or w < ESA_MIN_SIZE:
        raise ValueError(
            f"spatial size {h}x{w} too small for the ESA stride-2 + pool chain "
            f"(needs >= {ESA_MIN_SIZE}x{ESA_MIN_SIZE})")
    f0 = conv2d(f, params["reduce_w"], params["reduce_b"])
    f1 = conv2d(f0, params["skip_w"], params["skip_b"])
    down = conv2d(f0, params["down_w"], params["down_b"], stride=2, padding=1)
    dh, dw = down.shape[2], down.shape[3]
    pooled = max_pool(down, k=min(7, dh, dw), stride=3)
    mid = conv2d(pooled, params["mid1_w"], params["mid1_b"], padding=1)
    mid = conv2d(mid, params["mid2_w"], params["mid2_b"], padding=1)
    f2 = resize_bilinear(mid, h, w)
    mask = sigmoid(conv2d(f1 + f2, params["expand_w"], params["expand_b"]))
    return mask * f


# ---------------------------------------------------------------------------
# dynamic residual block and TAAM
# ---------------------------------------------------------------------------

def init_resblock_params(rng, channels: int, dtype=np.float32) -> dict:
    scale = np.sqrt(2.0 / (channels * 9))

    def conv_w():
        return Tensor(rng.standard_normal((channels, channels, 3, 3)).astype(dtype) * dtype(scale),
                      requires_grad=True)

    return {
        "conv1_w": conv_w(), "conv1_b": Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
        "conv2_w": conv_w(), "conv2_b": Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
    }


def init_drb_unit_params(rng, channels: int, use_dynamic: bool = True) -> dict:
    params = {
        "res": init_resblock_params(rng, channels),
        "esa": init_esa_params(rng, channels),
    }
    if use_dynamic:
        params["dfm1"] = init_dfm_params(rng, channels)
        params["dfm2"] = init_dfm_params(rng, channels)
    return params


def init_drb_params(rng, channels: int, n_units: int = 2, use_dynamic: bool = True) -> dict:
    return {
        "units": [init_drb_unit_params(rng, channels, use_dynamic) for _ in range(n_units)],
        "use_dynamic": use_dynamic,
    }


def _resblock_esa(x: Tensor, params: dict) -> Tensor:
    y = relu(conv2d(x, params["res"]["conv1_w"], params["res"]["conv1_b"], padding=1))
    y = conv2d(y, params["res"]["conv2_w"], params["res"]["conv2_b"], padding=1)
    y = esa_attention(y, params["esa"])
    return x + y


def drb_unit_forward(x: Tensor, params: dict, use_dynamic: bool = True) -> Tensor:
    if use_dynamic:
        x = relu(dfm_forward(x, params["dfm1"]))
        x = relu(dfm_forward(x, params["dfm2"]))
    return _resblock_esa(x, params)


def drb_forward(f_cat: Tensor, params: dict) -> Tensor:
    """Stack of DRB units applied to the fused concatenation features."""
    x = f_cat
    for unit in params["units"]:
        x = drb_unit_forward(x, unit, params.get("use_dynamic", True))
    return x


def init_taam_params(rng, in_channels: int, channels: int, n_units: int = 2,
                     use_dynamic: bool = True, dtype=np.float32) -> dict:
    # damped fusion init: each DRB unit applies two 9-tap dynamic filters whose
    # normalized taps give ~3x gain apiece, so small fused inputs keep the
    # residual branch from swamping F_LR at the start of training
    scale = 0.1 * np.sqrt(2.0 / in_channels)
    return {
        "fuse_w": Tensor(rng.standard_normal((channels, in_channels, 1, 1)).astype(dtype) * dtype(scale),
                         requires_grad=True),
        "fuse_b": Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
        "drb": init_drb_params(rng, channels, n_units, use_dynamic),
    }


def taam_aggregate(f_tex: Tensor, f_lr: Tensor, params: dict,
                   f_sife: Tensor = None, f_reuse: Tensor = None,
                   smallest_scale: bool = False) -> Tensor:
    """Fuse [F_tex; F_LR; F_sife?; F_reuse?] and aggregate, residual on F_LR."""
    if f_sife is not None and not smallest_scale:
        raise ValueError("SIFE features may only be embedded at the smallest scale")
    parts = [f_tex, f_lr]
    if f_sife is not None:
        parts.append(f_sife)
    if f_reuse is not None:
        parts.append(f_reuse)
    shapes = {p.shape[2:] for p in parts}
    if len(shapes) != 1:
        raise ValueError(f"TAAM inputs have mismatched spatial sizes: {sorted(shapes)}")
    cat = concat(parts, axis=1)
    if cat.shape[1] != params["fuse_w"].shape[1]:
        raise ValueError(
            f"TAAM fusion conv expects {params['fuse_w'].shape[1]} channels, "
            f"got {cat.shape[1]}")
    fused = conv2d(cat, params["fuse_w"], params["fuse_b"])
    return drb_forward(fused, params["drb"]) + f_lr

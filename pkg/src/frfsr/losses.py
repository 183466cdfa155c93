"""Reconstruction, perceptual, adversarial (WGAN) and discriminator losses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (Tensor, conv2d, global_avg_pool, grad, leaky_relu,
                     reshape, tabs, tsqrt, tsum)


@dataclass
class LossWeights:
    lambda_rec: float = 1.0
    lambda_per: float = 1e-4
    lambda_adv: float = 1e-6

    def __post_init__(self):
        if min(self.lambda_rec, self.lambda_per, self.lambda_adv) < 0:
            raise ValueError("loss weights must be non-negative")


def l_rec(i_hr: Tensor, i_sr: Tensor) -> Tensor:
    """Mean absolute error over all elements."""
    if i_hr.shape != i_sr.shape:
        raise ValueError(f"shape mismatch: {i_hr.shape} vs {i_sr.shape}")
    return tabs(i_sr - i_hr).mean()


class PerceptualExtractor:
    """Frozen random-weight 3-level conv pyramid with a tap after each level.

    Pluggable: anything with taps(image) -> list[Tensor] works for l_per.
    """

    CHANNELS = (16, 32, 64)

    def __init__(self, seed: int = 7):
        rng = np.random.default_rng(seed)
        self.layers = []
        in_c = 3
        for out_c in self.CHANNELS:
            scale = np.sqrt(2.0 / (in_c * 9))
            w = Tensor(rng.standard_normal((out_c, in_c, 3, 3)).astype(np.float64) * scale)
            b = Tensor(np.zeros(out_c))
            self.layers.append((w, b))
            in_c = out_c

    def taps(self, image: Tensor):
        if image.shape[1] != 3:
            raise ValueError(f"perceptual extractor expects 3 channels, got {image.shape[1]}")
        outs = []
        x = image
        for i, (w, b) in enumerate(self.layers):
            stride = 1 if i == 0 else 2
            x = leaky_relu(conv2d(x, w, b, stride=stride, padding=1), 0.1)
            outs.append(x)
        return outs


def l_per(i_hr: Tensor, i_sr: Tensor, extractor) -> Tensor:
    """Sum of per-tap Frobenius distances, normalized by total tap volume."""
    taps_hr = extractor.taps(i_hr.detach() if i_hr.requires_grad else i_hr)
    taps_sr = extractor.taps(i_sr)
    volume = float(sum(t.size for t in taps_sr))
    total = None
    for th, ts in zip(taps_hr, taps_sr):
        diff = ts - th.detach()
        fro = tsqrt((diff * diff).sum())
        total = fro if total is None else total + fro
    return total * (1.0 / volume)


# ---------------------------------------------------------------------------
# discriminator
# ---------------------------------------------------------------------------

class Discriminator:
    """4 stride-2 3x3 convs (32/64/128/256, leaky 0.2) + GAP + linear scalar."""

    CHANNELS = (32, 64, 128, 256)

    def __init__(self, params: dict):
        self.params = params

    @staticmethod
    def init_params(rng, dtype=np.float32) -> dict:
        params = {}
        in_c = 3
        for i, out_c in enumerate(Discriminator.CHANNELS):
            scale = np.sqrt(2.0 / (in_c * 9))
            params[f"conv{i}_w"] = Tensor(
                rng.standard_normal((out_c, in_c, 3, 3)).astype(dtype) * dtype(scale),
                requires_grad=True)
            params[f"conv{i}_b"] = Tensor(np.zeros(out_c, dtype=dtype), requires_grad=True)
            in_c = out_c
        scale = np.sqrt(1.0 / in_c)
        params["head_w"] = Tensor(rng.standard_normal((1, in_c, 1, 1)).astype(dtype) * dtype(scale),
                                  requires_grad=True)
        params["head_b"] = Tensor(np.zeros(1, dtype=dtype), requires_grad=True)
        return params

    def __call__(self, image: Tensor) -> Tensor:
        """(n, 3, h, w) -> (n,) critic scores."""
        x = image
        for i in range(len(self.CHANNELS)):
            x = leaky_relu(conv2d(x, self.params[f"conv{i}_w"], self.params[f"conv{i}_b"],
                                  stride=2, padding=1), 0.2)
        x = global_avg_pool(x)
        x = conv2d(x, self.params["head_w"], self.params["head_b"])
        return reshape(x, (image.shape[0],))


def l_adv(i_sr: Tensor, d) -> Tensor:
    """WGAN generator loss: -D(I_SR), batch-averaged."""
    return -d(i_sr).mean()


def l_disc(i_sr: Tensor, i_hr: Tensor, d, lambda_gp: float, rng) -> Tensor:
    """WGAN-GP critic loss with a per-sample random convex combination."""
    if i_sr.shape != i_hr.shape:
        raise ValueError(f"shape mismatch: {i_sr.shape} vs {i_hr.shape}")
    n = i_sr.shape[0]
    u = rng.uniform(size=(n, 1, 1, 1)).astype(i_sr.data.dtype)
    ihat = Tensor(u * i_hr.data + (1.0 - u) * i_sr.data, requires_grad=True)
    scores = d(ihat)
    (g,) = grad(scores.sum(), [ihat])
    sq = (g * g).sum(axis=(1, 2, 3))
    norm = tsqrt(sq + 1e-24)
    penalty = ((norm - 1.0) ** 2).mean()
    return d(i_sr.detach()).mean() - d(i_hr).mean() + lambda_gp * penalty


def l_total(parts: dict, weights: LossWeights) -> Tensor:
    """lambda_1 * L_rec + lambda_2 * L_per + lambda_3 * L_adv."""
    for name in ("rec", "per", "adv"):
        part = parts[name]
        value = part.data if isinstance(part, Tensor) else np.asarray(part)
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"loss part {name!r} is non-finite: {value}")
    rec = parts["rec"] if isinstance(parts["rec"], Tensor) else Tensor(parts["rec"])
    per = parts["per"] if isinstance(parts["per"], Tensor) else Tensor(parts["per"])
    adv = parts["adv"] if isinstance(parts["adv"], Tensor) else Tensor(parts["adv"])
    return (weights.lambda_rec * rec + weights.lambda_per * per
            + weights.lambda_adv * adv)

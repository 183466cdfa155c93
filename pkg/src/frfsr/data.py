"""Data synthesis, bicubic degradation, shuffle augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SHUFFLE_LEVELS
from .tensor import Tensor

SHUFFLE_GRID = {"easy": 2, "medium": 4, "hard": 8}


def _arr(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def bicubic_kernel(x, a: float = -0.5):
    """Keys bicubic kernel with parameter a."""
    ax = np.abs(x)
    out = np.where(ax <= 1.0,
                   (a + 2.0) * ax ** 3 - (a + 3.0) * ax ** 2 + 1.0,
                   np.where(ax < 2.0,
                            a * ax ** 3 - 5.0 * a * ax ** 2 + 8.0 * a * ax - 4.0 * a,
                            0.0))
    return out


def _bicubic_weights(n_in: int, factor: int):
    """Antialiased weights: kernel support scaled by the factor.

    Returns (indices, weights) with weights rows summing to 1.
    """
    n_out = n_in // factor
    centers = (np.arange(n_out) + 0.5) * factor - 0.5
    support = 2 * factor
    offsets = np.arange(-support + 1, support + 1)
    idx = np.floor(centers)[:, None].astype(np.int64) + offsets[None, :]
    dist = (idx - centers[:, None]) / factor
    w = bicubic_kernel(dist)
    w = w / w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)  # edge replication
    return idx, w


def _bicubic_up_weights(n_in: int, factor: int):
    """Interpolation weights for upsampling (no antialiasing, support 2).

    Returns (indices, weights) with weights rows summing to 1.
    """
    n_out = n_in * factor
    centers = (np.arange(n_out) + 0.5) / factor - 0.5
    offsets = np.arange(-1, 3)
    idx = np.floor(centers)[:, None].astype(np.int64) + offsets[None, :]
    w = bicubic_kernel(idx - centers[:, None])
    w = w / w.sum(axis=1, keepdims=True)
    idx = np.clip(idx, 0, n_in - 1)  # edge replication
    return idx, w


def bicubic_upsample(image, factor: int = 4) -> Tensor:
    """Bicubic upsampling (kernel a = -0.5), clamped to [0, 1]."""
    img = _arr(image)
    idx_h, w_h = _bicubic_up_weights(img.shape[2], factor)
    idx_w, w_w = _bicubic_up_weights(img.shape[3], factor)
    rows = img[:, :, idx_h, :]                     # (n, c, oh, taps, w)
    rows = np.einsum("nchtw,ht->nchw", rows, w_h)
    cols = rows[:, :, :, idx_w]                    # (n, c, oh, ow, taps)
    out = np.einsum("nchwt,wt->nchw", cols, w_w)
    return Tensor(np.clip(out, 0.0, 1.0))


def bicubic_downsample(image, factor: int = 4) -> Tensor:
    """Antialiased bicubic downsampling (kernel a = -0.5), clamped to [0, 1]."""
    img = _arr(image)
    n, c, h, w = img.shape
    if h % factor != 0 or w % factor != 0:
        raise ValueError(f"image size {h}x{w} not divisible by factor {factor}")
    idx_h, w_h = _bicubic_weights(h, factor)
    idx_w, w_w = _bicubic_weights(w, factor)
    rows = img[:, :, idx_h, :]                     # (n, c, oh, taps, w)
    rows = np.einsum("nchtw,ht->nchw", rows, w_h)
    cols = rows[:, :, :, idx_w]                    # (n, c, oh, ow, taps)
    out = np.einsum("nchwt,wt->nchw", cols, w_w)
    return Tensor(np.clip(out, 0.0, 1.0))


def shuffle_patches(image, level: str, rng) -> Tensor:
    """Split the image into g x g patches and permute their positions."""
    if level not in SHUFFLE_LEVELS:
        raise ValueError(f"shuffle level must be one of {SHUFFLE_LEVELS}, got {level!r}")
    img = _arr(image)
    if level == "none":
        return Tensor(img.copy())
    g = SHUFFLE_GRID[level]
    n, c, h, w = img.shape
    if h % g != 0 or w % g != 0:
        raise ValueError(f"image size {h}x{w} not divisible by grid {g}")
    ph, pw = h // g, w // g
    blocks = img.reshape(n, c, g, ph, g, pw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, g * g, ph, pw)
    perm = rng.permutation(g * g)
    blocks = blocks[:, :, perm]
    out = blocks.reshape(n, c, g, g, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
    return Tensor(out.copy())


def augment_pair(hr: np.ndarray, ref: np.ndarray, rng):
    """Seeded horizontal/vertical flips and 90-degree rotations (both images)."""
    if rng.uniform() < 0.5:
        hr, ref = hr[..., ::-1], ref[..., ::-1]
    if rng.uniform() < 0.5:
        hr, ref = hr[..., ::-1, :], ref[..., ::-1, :]
    k = int(rng.integers(0, 4))
    if k:
        hr = np.rot90(hr, k, axes=(-2, -1))
        ref = np.rot90(ref, k, axes=(-2, -1))
    return np.ascontiguousarray(hr), np.ascontiguousarray(ref)


@dataclass
class SamplePair:
    hr: Tensor    # (1, 3, 4h, 4w)
    lr: Tensor    # (1, 3, h, w)
    ref: Tensor   # (1, 3, 4h, 4w)
    name: str = ""


def _procedural_texture(rng, size: int) -> np.ndarray:
    """One (3, size, size) image mixing gratings, checkerboards and blobs."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((3, size, size))
    for ch in range(3):
        freq = rng.uniform(0.1, 0.5)
        theta = rng.uniform(0, np.pi)
        phase = rng.uniform(0, 2 * np.pi)
        grating = 0.5 + 0.5 * np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
        period = int(rng.integers(4, 12))
        checker = ((xx // period + yy // period) % 2).astype(np.float64)
        blob = np.zeros((size, size))
        for _ in range(3):
            cy, cx = rng.uniform(0, size, 2)
            s = rng.uniform(size / 10, size / 4)
            blob += np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s))
        mix = rng.dirichlet(np.ones(3))
        img[ch] = mix[0] * grating + mix[1] * checker + mix[2] * np.clip(blob, 0, 1)
    return np.clip(img, 0.0, 1.0)


def make_pair(rng, hr_size: int, name: str = "") -> SamplePair:
    """HR texture plus a reference that is a shifted (rolled) copy of it,
    so matched textures exist by construction."""
    hr = _procedural_texture(rng, hr_size)
    dy, dx = rng.integers(hr_size // 8, hr_size // 2, 2)
    ref = np.roll(hr, (int(dy), int(dx)), axis=(-2, -1))
    if rng.uniform() < 0.5:
        ref = np.ascontiguousarray(ref[..., ::-1])
    hr_t = Tensor(hr[None].astype(np.float32))
    ref_t = Tensor(ref[None].astype(np.float32))
    lr_t = Tensor(bicubic_downsample(hr_t, 4).data.astype(np.float32))
    return SamplePair(hr=hr_t, lr=lr_t, ref=ref_t, name=name)


def synthetic_dataset(n_pairs: int, hr_size: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [make_pair(rng, hr_size, name=f"pair{i:03d}") for i in range(n_pairs)]

"""PSNR / SSIM on the BT.601 luma channel."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def _arr(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def rgb_to_y(image) -> np.ndarray:
    """ITU-R BT.601 studio-swing luma of an (n, 3, h, w) image in [0, 1]."""
    img = _arr(image)
    if img.ndim != 4 or img.shape[1] != 3:
        raise ValueError(f"expected (n, 3, h, w) image, got shape {img.shape}")
    r, g, b = img[:, 0], img[:, 1], img[:, 2]
    y = (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0
    return y[:, None]


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB at peak 1.0; +inf for identical inputs."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """2-d correlation, valid mode, via stride tricks."""
    k = window.shape[0]
    h, w = img.shape
    sh, sw = img.strides
    patches = np.lib.stride_tricks.as_strided(
        img, shape=(h - k + 1, w - k + 1, k, k), strides=(sh, sw, sh, sw),
        writeable=False)
    return np.tensordot(patches, window, axes=([2, 3], [0, 1]))


def ssim(a, b, window_size: int = 11, sigma: float = 1.5) -> float:
    """Mean local SSIM with a Gaussian window, constants at peak 1.0."""
    a, b = _arr(a).astype(np.float64), _arr(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a2, b2 = a.reshape(-1, a.shape[-2], a.shape[-1]), b.reshape(-1, b.shape[-2], b.shape[-1])
    h, w = a2.shape[1:]
    if h < window_size or w < window_size:
        raise ValueError(f"image {h}x{w} smaller than the {window_size}x{window_size} window")
    window = _gaussian_window(window_size, sigma)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for x, y in zip(a2, b2):
        mu_x = _filter_valid(x, window)
        mu_y = _filter_valid(y, window)
        xx = _filter_valid(x * x, window) - mu_x ** 2
        yy = _filter_valid(y * y, window) - mu_y ** 2
        xy = _filter_valid(x * y, window) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def psnr_y(a, b) -> float:
    return psnr(rgb_to_y(a), rgb_to_y(b))


def ssim_y(a, b) -> float:
    return ssim(rgb_to_y(a), rgb_to_y(b))

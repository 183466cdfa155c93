"""Correlation-based texture warp: encode, match, index-to-flow, warp.

The matching path is frozen (no gradients): a seed-deterministic texture
encoder stands in for the pretrained matching encoder, patches are compared
by cosine similarity, the per-row argmax becomes a dense flow field, and
reference features are warped by bilinear sampling at each pyramid scale.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import Tensor, conv2d, grid_sample_bilinear, leaky_relu, resize_bilinear

FLO_MAGIC = b"FLO1"


# ---------------------------------------------------------------------------
# texture encoder stand-in
# ---------------------------------------------------------------------------

def _he_conv(rng, out_c, in_c, k, dtype=np.float32):
    scale = np.sqrt(2.0 / (in_c * k * k))
    w = rng.standard_normal((out_c, in_c, k, k)).astype(dtype) * dtype(scale)
    b = np.zeros(out_c, dtype=dtype)
    return Tensor(w), Tensor(b)


class TextureEncoder:
    """Frozen 3-layer convolutional encoder shared between LR and Ref.

    3 -> 16 -> 32 -> 64 channels, 3x3 kernels, leaky slope 0.1.  Weights are
    fully determined by the seed; the fingerprint identifies them.
    """

    CHANNELS = (16, 32, 64)

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.layers = []
        in_c = 3
        for out_c in self.CHANNELS:
            self.layers.append(_he_conv(rng, out_c, in_c, 3))
            in_c = out_c
        self.out_channels = in_c
        h = hashlib.sha256()
        for w, b in self.layers:
            h.update(w.data.tobytes())
            h.update(b.data.tobytes())
        self.fingerprint = h.hexdigest()

    def __call__(self, image: Tensor) -> Tensor:
        if image.shape[1] != 3:
            raise ValueError(f"texture encoder expects 3 channels, got {image.shape[1]}")
        x = image.detach()
        for i, (w, b) in enumerate(self.layers):
            x = conv2d(x, w, b, stride=1, padding=1)
            if i < len(self.layers) - 1:
                x = leaky_relu(x, 0.1)
        return x


@dataclass
class TextureFeatures:
    lr: Tensor    # (n, c, h_lr, w_lr)
    ref: Tensor   # (n, c, h_ref, w_ref)
    encoder_fingerprint: str


def zero_pad_to(image: Tensor, h: int, w: int) -> Tensor:
    """Zero-pad an image at the bottom/right up to (h, w)."""
    n, c, hi, wi = image.shape
    if hi > h or wi > w:
        raise ValueError(f"cannot pad {hi}x{wi} down to {h}x{w}")
    if (hi, wi) == (h, w):
        return image
    out = np.zeros((n, c, h, w), dtype=image.data.dtype)
    out[:, :, :hi, :wi] = image.data
    return Tensor(out)


def texture_encode(lr_image: Tensor, ref_image: Tensor,
                   encoder: TextureEncoder) -> TextureFeatures:
    """Encode LR (zero-padded to Ref size, features cropped back) and Ref."""
    n, c, h_lr, w_lr = lr_image.shape
    _, _, h_ref, w_ref = ref_image.shape
    padded = zero_pad_to(lr_image, h_ref, w_ref)
    f_lr = encoder(padded)[:, :, :h_lr, :w_lr]
    f_ref = encoder(ref_image)
    return TextureFeatures(lr=f_lr.detach(), ref=f_ref.detach(),
                           encoder_fingerprint=encoder.fingerprint)


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------

def feature_patches(features: np.ndarray, k: int = 3) -> np.ndarray:
    """(c, h, w) -> (h*w, c*k*k) patch vectors (k odd, stride 1, pad k//2)."""
    c, h, w = features.shape
    cols = kernels.im2col(features[None], k, k, 1, k // 2, 1)[0]
    return np.ascontiguousarray(cols.T)


def cosine_similarity_matrix(lr_patches: np.ndarray, ref_patches: np.ndarray) -> np.ndarray:
    """Rows: cosine similarity of each LR patch against every Ref patch.

    Zero-norm patches get similarity 0.
    """
    def normalize(p):
        norms = np.linalg.norm(p, axis=1, keepdims=True)
        return np.divide(p, norms, out=np.zeros_like(p), where=norms > 0)

    return normalize(lr_patches) @ normalize(ref_patches).T


def best_match_indices(m: np.ndarray) -> np.ndarray:
    """Per-row argmax; first index on ties."""
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"similarity matrix must be non-empty 2-d, got shape {m.shape}")
    return np.argmax(m, axis=1)


@dataclass
class FlowField:
    """Per-pixel displacement map in LR pixels (match position - grid position)."""

    flow: np.ndarray                     # (2, h, w): plane 0 x, plane 1 y
    indices: np.ndarray | None = None    # the index map it came from

    @property
    def height(self):
        return self.flow.shape[1]

    @property
    def width(self):
        return self.flow.shape[2]

    def save(self, path):
        h, w = self.flow.shape[1:]
        with open(path, "wb") as f:
            f.write(FLO_MAGIC)
            f.write(struct.pack("<II", h, w))
            f.write(self.flow[0].astype("<f4").tobytes())
            f.write(self.flow[1].astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "FlowField":
        with open(path, "rb") as f:
            raw = f.read()
        if raw[:4] != FLO_MAGIC:
            raise ValueError(f"bad magic: expected {FLO_MAGIC!r}, got {raw[:4]!r}")
        if len(raw) < 12:
            raise ValueError("truncated flow file: missing header")
        h, w = struct.unpack("<II", raw[4:12])
        need = 12 + 2 * 4 * h * w
        if len(raw) < need:
            raise ValueError(f"truncated flow file: expected {need} bytes, got {len(raw)}")
        fx = np.frombuffer(raw[12:12 + 4 * h * w], dtype="<f4").reshape(h, w)
        fy = np.frombuffer(raw[12 + 4 * h * w:need], dtype="<f4").reshape(h, w)
        return cls(flow=np.stack([fx, fy]).astype(np.float64))


def indices_to_flow(indices: np.ndarray, w_lr: int, h_lr: int,
                    w_ref: int, h_ref: int) -> FlowField:
    """Convert per-pixel best-match indices to a displacement field."""
    indices = np.asarray(indices)
    if indices.size != h_lr * w_lr:
        raise ValueError(f"index map has {indices.size} entries, expected {h_lr * w_lr}")
    if indices.max(initial=0) >= h_ref * w_ref:
        raise ValueError(
            f"index {int(indices.max())} out of range for {h_ref}x{w_ref} reference grid")
    p = indices.reshape(h_lr, w_lr)
    gx, gy = np.meshgrid(np.arange(w_lr), np.arange(h_lr))
    flow = np.stack([(p % w_ref) - gx, (p // w_ref) - gy]).astype(np.float64)
    return FlowField(flow=flow, indices=indices)


def flow_to_grid(flow: FlowField, scale: float, w_i: int, h_i: int) -> Tensor:
    """Normalized sampling grid for a feature level of size (h_i, w_i).

    Absolute sample coordinate = scale * (grid + flow), normalized to [-1, 1]
    with denominator max(dim - 1, 1).  The flow is nearest-upsampled so each
    LR pixel's displacement covers its scale x scale block.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    h_lr, w_lr = flow.height, flow.width
    up = int(round(h_i / h_lr))
    fx = np.repeat(np.repeat(flow.flow[0], up, axis=0), up, axis=1)[:h_i, :w_i]
    fy = np.repeat(np.repeat(flow.flow[1], up, axis=0), up, axis=1)[:h_i, :w_i]
    gx, gy = np.meshgrid(np.arange(w_i, dtype=np.float64),
                         np.arange(h_i, dtype=np.float64))
    ax = gx + scale * fx
    ay = gy + scale * fy
    nx = 2.0 * ax / max(w_i - 1, 1) - 1.0
    ny = 2.0 * ay / max(h_i - 1, 1) - 1.0
    return Tensor(np.stack([nx, ny])[None])


def warp_reference(f_ref_i: Tensor, flow: FlowField, scale: float) -> Tensor:
    """Warp a reference feature level to the matched positions."""
    n, c, h, w = f_ref_i.shape
    h_i = int(round(scale * flow.height))
    w_i = int(round(scale * flow.width))
    if (h, w) != (h_i, w_i):
        raise ValueError(
            f"reference level is {h}x{w} but scale {scale} x flow {flow.height}x{flow.width} "
            f"implies {h_i}x{w_i}")
    grid = flow_to_grid(flow, scale, w_i, h_i)
    if n > 1:
        grid = Tensor(np.broadcast_to(grid.data, (n, 2, h_i, w_i)).copy())
    return grid_sample_bilinear(f_ref_i, grid)


def match_textures(f_lr: np.ndarray, f_ref: np.ndarray, k: int = 3):
    """Full matching path on single-image feature maps (c, h, w).

    Returns (similarity matrix, index map, flow field).
    """
    if f_lr.shape[0] != f_ref.shape[0]:
        raise ValueError(
            f"channel mismatch: LR {f_lr.shape[0]} vs Ref {f_ref.shape[0]}")
    q = feature_patches(f_lr, k)
    kk = feature_patches(f_ref, k)
    m = cosine_similarity_matrix(q, kk)
    p = best_match_indices(m)
    flow = indices_to_flow(p, f_lr.shape[2], f_lr.shape[1],
                           f_ref.shape[2], f_ref.shape[1])
    return m, p, flow


# ---------------------------------------------------------------------------
# fixed multi-scale reference feature pyramid (stand-in for pretrained taps)
# ---------------------------------------------------------------------------

class ReferencePyramid:
    """Frozen 3-level feature pyramid of the reference image.

    Levels at scales {1, 1/2, 1/4} of the Ref resolution with 32/64/128
    channels; level 2 (the coarsest) matches the LR resolution when the Ref
    is 4x the LR.
    """

    CHANNELS = (32, 64, 128)

    def __init__(self, seed: int = 1):
        rng = np.random.default_rng(seed)
        self.stem_w, self.stem_b = _he_conv(rng, 32, 3, 3)
        self.down1_w, self.down1_b = _he_conv(rng, 64, 32, 3)
        self.down2_w, self.down2_b = _he_conv(rng, 128, 64, 3)

    def __call__(self, ref_image: Tensor):
        x = ref_image.detach()
        f0 = leaky_relu(conv2d(x, self.stem_w, self.stem_b, padding=1), 0.1)
        f1 = leaky_relu(conv2d(f0, self.down1_w, self.down1_b, stride=2, padding=1), 0.1)
        f2 = leaky_relu(conv2d(f1, self.down2_w, self.down2_b, stride=2, padding=1), 0.1)
        return [f0.detach(), f1.detach(), f2.detach()]

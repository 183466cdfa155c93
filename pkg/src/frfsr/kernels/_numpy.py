"""Pure numpy implementations of the hot inner-loop kernels.

These are the fallback backend used when the compiled extension is not
available.  Every function here has a twin in ``_ext.pyx`` with identical
semantics; ``tests/test_kernels.py`` checks the two backends against each
other.
"""

import numpy as np

__all__ = [
    "im2col",
    "col2im",
    "grid_sample_fwd",
    "grid_sample_bwd_input",
    "grid_sample_bwd_grid",
    "ddf_fwd",
    "ddf_bwd",
]


def _out_size(size, k, stride, pad, dilation):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def im2col(x, kh, kw, stride, pad, dilation):
    """(n, c, h, w) -> (n, c*kh*kw, oh*ow) patch matrix (channel-major taps)."""
    n, c, h, w = x.shape
    oh = _out_size(h, kh, stride, pad, dilation)
    ow = _out_size(w, kw, stride, pad, dilation)
    if oh < 1 or ow < 1:
        raise ValueError(
            f"im2col: output size {oh}x{ow} < 1 for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}, dilation {dilation}"
        )
    if pad > 0:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, :, pad:pad + h, pad:pad + w] = x
    else:
        xp = np.ascontiguousarray(x)
    sn, sc, sh, sw = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh * dilation, sw * dilation, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(windows).reshape(n, c * kh * kw, oh * ow)


def col2im(cols, x_shape, kh, kw, stride, pad, dilation):
    """Adjoint of :func:`im2col`: scatter-add patches back to (n, c, h, w)."""
    n, c, h, w = x_shape
    oh = _out_size(h, kh, stride, pad, dilation)
    ow = _out_size(w, kw, stride, pad, dilation)
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        yi = i * dilation
        for j in range(kw):
            xj = j * dilation
            xp[:, :, yi:yi + stride * oh:stride, xj:xj + stride * ow:stride] += cols[:, :, i, j]
    if pad > 0:
        return np.ascontiguousarray(xp[:, :, pad:pad + h, pad:pad + w])
    return xp


def _corners(h, w, grid):
    """Corner indices, validity masks and bilinear weights for each grid point."""
    gx = (grid[:, 0] + 1.0) * 0.5 * (w - 1)
    gy = (grid[:, 1] + 1.0) * 0.5 * (h - 1)
    x0 = np.floor(gx).astype(np.int64)
    y0 = np.floor(gy).astype(np.int64)
    fx = gx - x0
    fy = gy - y0
    out = []
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            wgt = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            out.append((np.clip(xi, 0, w - 1), np.clip(yi, 0, h - 1), valid, wgt))
    return out, fx, fy


def _ddf_windows(x):
    """Zero-padded 3x3 neighborhood view: (n, c, 3, 3, h, w), no copy."""
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2, w + 2), dtype=x.dtype)
    xp[:, :, 1:1 + h, 1:1 + w] = x
    sn, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(n, c, 3, 3, h, w), strides=(sn, sc, sh, sw, sh, sw),
        writeable=False)


def ddf_fwd(x, sf, cf):
    """Decoupled dynamic filtering with zero padding.

    x: (n, c, h, w); sf: (n, 9, h, w) per-pixel taps; cf: (n, c, 9)
    per-channel taps.  out[b,k,p] = sum_t sf[b,t,p] * cf[b,k,t] * x[b,k,p+t].
    """
    n, c, h, w = x.shape
    win = _ddf_windows(x)
    return np.einsum("ncijhw,nijhw,ncij->nchw", win,
                     sf.reshape(n, 3, 3, h, w), cf.reshape(n, c, 3, 3),
                     optimize=True)


def ddf_bwd(x, sf, cf, gout):
    """Gradients of ddf_fwd w.r.t. (x, sf, cf)."""
    n, c, h, w = x.shape
    win = _ddf_windows(x)
    sfr = sf.reshape(n, 3, 3, h, w)
    cfr = cf.reshape(n, c, 3, 3)
    gsf = np.einsum("ncijhw,ncij,nchw->nijhw", win, cfr, gout,
                    optimize=True).reshape(n, 9, h, w)
    gcf = np.einsum("ncijhw,nijhw,nchw->ncij", win, sfr, gout,
                    optimize=True).reshape(n, c, 9)
    gxp = np.zeros((n, c, h + 2, w + 2), dtype=gout.dtype)
    for i in range(3):
        for j in range(3):
            gxp[:, :, i:i + h, j:j + w] += (gout * sfr[:, None, i, j]
                                            * cfr[:, :, i, j, None, None])
    gx = np.ascontiguousarray(gxp[:, :, 1:1 + h, 1:1 + w])
    return gx, gsf, gcf


def grid_sample_fwd(x, grid):
    """Bilinear sampling with zero padding.  grid: (n, 2, oh, ow) in [-1, 1]."""
    n, c, h, w = x.shape
    _, _, oh, ow = grid.shape
    corners, _, _ = _corners(h, w, grid)
    out = np.zeros((n, c, oh, ow), dtype=x.dtype)
    bidx = np.arange(n)[:, None, None]
    for xi, yi, valid, wgt in corners:
        vals = x[bidx, :, yi, xi]  # (n, oh, ow, c)
        out += np.moveaxis(vals * (wgt * valid)[..., None], 3, 1)
    return out


def grid_sample_bwd_input(gout, grid, x_shape):
    """Gradient of grid_sample_fwd w.r.t. the sampled input (scatter-add)."""
    n, c, h, w = x_shape
    corners, _, _ = _corners(h, w, grid)
    gx = np.zeros((n * h * w, c), dtype=gout.dtype)
    base = (np.arange(n) * h * w)[:, None, None]
    g = np.moveaxis(gout, 1, 3)  # (n, oh, ow, c)
    for xi, yi, valid, wgt in corners:
        idx = (base + yi * w + xi).reshape(-1)
        contrib = (g * (wgt * valid)[..., None]).reshape(-1, c)
        np.add.at(gx, idx, contrib)
    return np.moveaxis(gx.reshape(n, h, w, c), 3, 1).copy()


def grid_sample_bwd_grid(x, grid, gout):
    """Gradient of grid_sample_fwd w.r.t. the normalized grid coordinates."""
    n, c, h, w = x.shape
    corners, fx, fy = _corners(h, w, grid)
    (x0, y0, v00, _), (x1, _, v01, _), (_, y1, v10, _), (_, _, v11, _) = corners
    bidx = np.arange(n)[:, None, None]

    def val(xi, yi, valid):
        return np.moveaxis(x[bidx, :, yi, xi], 3, 1) * valid[:, None]

    v_00 = val(x0, y0, v00)
    v_01 = val(x1, y0, v01)
    v_10 = val(x0, y1, v10)
    v_11 = val(x1, y1, v11)
    dgx = (v_01 - v_00) * (1.0 - fy)[:, None] + (v_11 - v_10) * fy[:, None]
    dgy = (v_10 - v_00) * (1.0 - fx)[:, None] + (v_11 - v_01) * fx[:, None]
    ggx = (gout * dgx).sum(axis=1) * (0.5 * (w - 1))
    ggy = (gout * dgy).sum(axis=1) * (0.5 * (h - 1))
    return np.stack([ggx, ggy], axis=1).astype(gout.dtype, copy=False)

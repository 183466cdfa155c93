# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the numpy kernel backend (see _numpy.py for contracts)."""

import numpy as np

cimport cython
from libc.math cimport floor

ctypedef fused floating:
    float
    double



def _carr(a, dtype=None):
    """Contiguous, writable array view (typed memoryviews reject read-only)."""
    out = np.ascontiguousarray(a, dtype=dtype)
    if not out.flags.writeable:
        out = out.copy()
    return out

def _out_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t dilation):
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def im2col(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t dilation):
    x = _carr(x)
    if x.dtype == np.float32:
        return _im2col(x, kh, kw, stride, pad, dilation)
    return _im2col(np.asarray(x, dtype=np.float64), kh, kw, stride, pad, dilation)


def _im2col(floating[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
            Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t dilation):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = _out_size(h, kh, stride, pad, dilation)
    cdef Py_ssize_t ow = _out_size(w, kw, stride, pad, dilation)
    if oh < 1 or ow < 1:
        raise ValueError(
            f"im2col: output size {oh}x{ow} < 1 for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}, dilation {dilation}")
    dtype = np.float32 if floating is float else np.float64
    cols_arr = np.zeros((n, c * kh * kw, oh * ow), dtype=dtype)
    cdef floating[:, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, yy, xx, row
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for oy in range(oh):
                            yy = oy * stride + i * dilation - pad
                            if yy < 0 or yy >= h:
                                continue
                            for ox in range(ow):
                                xx = ox * stride + j * dilation - pad
                                if xx < 0 or xx >= w:
                                    continue
                                cols[b, row, oy * ow + ox] = x[b, ch, yy, xx]
    return cols_arr


def col2im(cols, x_shape, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t pad, Py_ssize_t dilation):
    cols = _carr(cols)
    n, c, h, w = x_shape
    if cols.dtype == np.float32:
        return _col2im(cols.reshape(n, c * kh * kw, -1), n, c, h, w, kh, kw, stride, pad, dilation)
    return _col2im(np.asarray(cols, dtype=np.float64).reshape(n, c * kh * kw, -1),
                           n, c, h, w, kh, kw, stride, pad, dilation)


def _col2im(floating[:, :, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
            Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad, Py_ssize_t dilation):
    cdef Py_ssize_t oh = _out_size(h, kh, stride, pad, dilation)
    cdef Py_ssize_t ow = _out_size(w, kw, stride, pad, dilation)
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, yy, xx, row
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for oy in range(oh):
                            yy = oy * stride + i * dilation - pad
                            if yy < 0 or yy >= h:
                                continue
                            for ox in range(ow):
                                xx = ox * stride + j * dilation - pad
                                if xx < 0 or xx >= w:
                                    continue
                                out[b, ch, yy, xx] += cols[b, row, oy * ow + ox]
    return out_arr


def grid_sample_fwd(x, grid):
    x = _carr(x)
    grid = _carr(grid, x.dtype)
    if x.dtype == np.float32:
        return _gs_fwd(x, grid)
    return _gs_fwd(np.asarray(x, dtype=np.float64), np.asarray(grid, dtype=np.float64))


def _gs_fwd(floating[:, :, :, ::1] x, floating[:, :, :, ::1] grid):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = grid.shape[2], ow = grid.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, oh, ow), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, oy, ox, x0, y0, x1, y1
    cdef floating gx, gy, fx, fy, w00, w01, w10, w11, acc
    with nogil:
        for b in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    gx = (grid[b, 0, oy, ox] + 1) * 0.5 * (w - 1)
                    gy = (grid[b, 1, oy, ox] + 1) * 0.5 * (h - 1)
                    x0 = <Py_ssize_t>floor(gx)
                    y0 = <Py_ssize_t>floor(gy)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    fx = gx - x0
                    fy = gy - y0
                    w00 = (1 - fx) * (1 - fy)
                    w01 = fx * (1 - fy)
                    w10 = (1 - fx) * fy
                    w11 = fx * fy
                    for ch in range(c):
                        acc = 0
                        if 0 <= x0 < w and 0 <= y0 < h:
                            acc += w00 * x[b, ch, y0, x0]
                        if 0 <= x1 < w and 0 <= y0 < h:
                            acc += w01 * x[b, ch, y0, x1]
                        if 0 <= x0 < w and 0 <= y1 < h:
                            acc += w10 * x[b, ch, y1, x0]
                        if 0 <= x1 < w and 0 <= y1 < h:
                            acc += w11 * x[b, ch, y1, x1]
                        out[b, ch, oy, ox] = acc
    return out_arr


def grid_sample_bwd_input(gout, grid, x_shape):
    gout = _carr(gout)
    grid = _carr(grid, gout.dtype)
    n, c, h, w = x_shape
    if gout.dtype == np.float32:
        return _gs_bwd_input(gout, grid, n, c, h, w)
    return _gs_bwd_input(np.asarray(gout, dtype=np.float64),
                                 np.asarray(grid, dtype=np.float64), n, c, h, w)


def _gs_bwd_input(floating[:, :, :, ::1] gout, floating[:, :, :, ::1] grid,
                  Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t oh = grid.shape[2], ow = grid.shape[3]
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] gx_ = gx_arr
    cdef Py_ssize_t b, ch, oy, ox, x0, y0, x1, y1
    cdef floating gx, gy, fx, fy, w00, w01, w10, w11, g
    with nogil:
        for b in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    gx = (grid[b, 0, oy, ox] + 1) * 0.5 * (w - 1)
                    gy = (grid[b, 1, oy, ox] + 1) * 0.5 * (h - 1)
                    x0 = <Py_ssize_t>floor(gx)
                    y0 = <Py_ssize_t>floor(gy)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    fx = gx - x0
                    fy = gy - y0
                    w00 = (1 - fx) * (1 - fy)
                    w01 = fx * (1 - fy)
                    w10 = (1 - fx) * fy
                    w11 = fx * fy
                    for ch in range(c):
                        g = gout[b, ch, oy, ox]
                        if 0 <= x0 < w and 0 <= y0 < h:
                            gx_[b, ch, y0, x0] += w00 * g
                        if 0 <= x1 < w and 0 <= y0 < h:
                            gx_[b, ch, y0, x1] += w01 * g
                        if 0 <= x0 < w and 0 <= y1 < h:
                            gx_[b, ch, y1, x0] += w10 * g
                        if 0 <= x1 < w and 0 <= y1 < h:
                            gx_[b, ch, y1, x1] += w11 * g
    return gx_arr


def grid_sample_bwd_grid(x, grid, gout):
    x = _carr(x)
    grid = _carr(grid, x.dtype)
    gout = _carr(gout, x.dtype)
    if x.dtype == np.float32:
        return _gs_bwd_grid(x, grid, gout)
    return _gs_bwd_grid(np.asarray(x, dtype=np.float64),
                                np.asarray(grid, dtype=np.float64),
                                np.asarray(gout, dtype=np.float64))


def _gs_bwd_grid(floating[:, :, :, ::1] x, floating[:, :, :, ::1] grid,
                 floating[:, :, :, ::1] gout):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = grid.shape[2], ow = grid.shape[3]
    dtype = np.float32 if floating is float else np.float64
    gg_arr = np.zeros((n, 2, oh, ow), dtype=dtype)
    cdef floating[:, :, :, ::1] gg = gg_arr
    cdef Py_ssize_t b, ch, oy, ox, x0, y0, x1, y1
    cdef floating gx, gy, fx, fy, v00, v01, v10, v11, g, ax, ay
    with nogil:
        for b in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    gx = (grid[b, 0, oy, ox] + 1) * 0.5 * (w - 1)
                    gy = (grid[b, 1, oy, ox] + 1) * 0.5 * (h - 1)
                    x0 = <Py_ssize_t>floor(gx)
                    y0 = <Py_ssize_t>floor(gy)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    fx = gx - x0
                    fy = gy - y0
                    ax = 0
                    ay = 0
                    for ch in range(c):
                        v00 = x[b, ch, y0, x0] if (0 <= x0 < w and 0 <= y0 < h) else 0
                        v01 = x[b, ch, y0, x1] if (0 <= x1 < w and 0 <= y0 < h) else 0
                        v10 = x[b, ch, y1, x0] if (0 <= x0 < w and 0 <= y1 < h) else 0
                        v11 = x[b, ch, y1, x1] if (0 <= x1 < w and 0 <= y1 < h) else 0
                        g = gout[b, ch, oy, ox]
                        ax += g * ((v01 - v00) * (1 - fy) + (v11 - v10) * fy)
                        ay += g * ((v10 - v00) * (1 - fx) + (v11 - v01) * fx)
                    gg[b, 0, oy, ox] = ax * 0.5 * (w - 1)
                    gg[b, 1, oy, ox] = ay * 0.5 * (h - 1)
    return gg_arr


def ddf_fwd(x, sf, cf):
    x = _carr(x)
    sf = _carr(sf, x.dtype)
    cf = _carr(cf, x.dtype)
    if x.dtype == np.float32:
        return _ddf_fwd(x, sf, cf)
    return _ddf_fwd(np.asarray(x, dtype=np.float64),
                            np.asarray(sf, dtype=np.float64),
                            np.asarray(cf, dtype=np.float64))


def _ddf_fwd(floating[:, :, :, ::1] x, floating[:, :, :, ::1] sf,
             floating[:, :, ::1] cf):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, y, xx, i, j, t, yy, xj
    cdef floating acc
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(h):
                    for xx in range(w):
                        acc = 0
                        for i in range(3):
                            yy = y + i - 1
                            if yy < 0 or yy >= h:
                                continue
                            for j in range(3):
                                xj = xx + j - 1
                                if xj < 0 or xj >= w:
                                    continue
                                t = i * 3 + j
                                acc += sf[b, t, y, xx] * cf[b, ch, t] * x[b, ch, yy, xj]
                        out[b, ch, y, xx] = acc
    return out_arr


def ddf_bwd(x, sf, cf, gout):
    x = _carr(x)
    sf = _carr(sf, x.dtype)
    cf = _carr(cf, x.dtype)
    gout = _carr(gout, x.dtype)
    if x.dtype == np.float32:
        return _ddf_bwd(x, sf, cf, gout)
    return _ddf_bwd(np.asarray(x, dtype=np.float64),
                            np.asarray(sf, dtype=np.float64),
                            np.asarray(cf, dtype=np.float64),
                            np.asarray(gout, dtype=np.float64))


def _ddf_bwd(floating[:, :, :, ::1] x, floating[:, :, :, ::1] sf,
             floating[:, :, ::1] cf, floating[:, :, :, ::1] gout):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.zeros((n, c, h, w), dtype=dtype)
    gsf_arr = np.zeros((n, 9, h, w), dtype=dtype)
    gcf_arr = np.zeros((n, c, 9), dtype=dtype)
    cdef floating[:, :, :, ::1] gx = gx_arr
    cdef floating[:, :, :, ::1] gsf = gsf_arr
    cdef floating[:, :, ::1] gcf = gcf_arr
    cdef Py_ssize_t b, ch, y, xx, i, j, t, yy, xj
    cdef floating g, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(h):
                    for xx in range(w):
                        g = gout[b, ch, y, xx]
                        for i in range(3):
                            yy = y + i - 1
                            if yy < 0 or yy >= h:
                                continue
                            for j in range(3):
                                xj = xx + j - 1
                                if xj < 0 or xj >= w:
                                    continue
                                t = i * 3 + j
                                v = x[b, ch, yy, xj]
                                gx[b, ch, yy, xj] += g * sf[b, t, y, xx] * cf[b, ch, t]
                                gsf[b, t, y, xx] += g * cf[b, ch, t] * v
                                gcf[b, ch, t] += g * sf[b, t, y, xx] * v
    return gx_arr, gsf_arr, gcf_arr

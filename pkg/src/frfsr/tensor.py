"""Dense (n, c, h, w) tensors with reverse-mode automatic differentiation.

The graph is define-by-run: every operation records its parents and a
backward closure that itself builds Tensor operations, so gradients are
Tensors and can be differentiated again (needed for the WGAN gradient
penalty).  The heavy kernels (convolution via im2col, bilinear grid
sampling) are delegated to :mod:`frfsr.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Tensor | None = None
        self._parents: tuple = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), self.requires_grad)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph machinery -----------------------------------------------------
    def backward(self, grad: "Tensor" = None):
        """Accumulate gradients of self (summed if non-scalar) into .grad."""
        if grad is None:
            grad = Tensor(np.ones_like(self.data))
        for node, g in _backprop(self, grad):
            node.grad = g if node.grad is None else Tensor(node.grad.data + g.data)

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pair(a, b):
    """Coerce a binary-op operand pair; bare python numbers adopt the other
    operand's dtype so float32 graphs stay float32."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.isscalar(b):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.isscalar(a):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return _as_tensor(a), _as_tensor(b)


def _node(data, parents, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _toposort(root: Tensor):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def _backprop(root: Tensor, seed: Tensor):
    """Yield (node, grad_tensor) for every requires_grad node reachable from root."""
    if root.data.shape != seed.data.shape:
        raise ValueError(f"gradient shape {seed.shape} does not match output shape {root.shape}")
    grads = {id(root): seed}
    order = _toposort(root)
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        yield node, g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg


def grad(output: Tensor, wrt, grad_output: Tensor = None):
    """Gradients of (summed) output w.r.t. each tensor in wrt, as graph-connected Tensors.

    Missing gradients (no path from output) come back as zero tensors.
    """
    if grad_output is None:
        grad_output = Tensor(np.ones_like(output.data))
    found = {}
    targets = {id(w) for w in wrt}
    for node, g in _backprop(output, grad_output):
        if id(node) in targets:
            found[id(node)] = g
    return [found.get(id(w), Tensor(np.zeros_like(w.data))) for w in wrt]


# ---------------------------------------------------------------------------
# elementwise / shape primitives
# ---------------------------------------------------------------------------

def _sum_to(t: Tensor, shape) -> Tensor:
    """Reduce a broadcast gradient back to the original operand shape."""
    if t.data.shape == tuple(shape):
        return t
    extra = t.data.ndim - len(shape)
    if extra > 0:
        t = tsum(t, axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and t.data.shape[i] != 1)
    if axes:
        t = tsum(t, axis=axes, keepdims=True)
    return reshape(t, tuple(shape))


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_sum_to(g, a.shape), _sum_to(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_sum_to(g * b, a.shape), _sum_to(g * a, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    return _node(a.data / b.data, (a, b),
                 lambda g: (_sum_to(g / b, a.shape),
                            _sum_to(g * (-a / (b * b)), b.shape)))


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    return _node(a.data ** p, (a,), lambda g: (g * (p * a ** (p - 1.0)),))


def texp(a) -> Tensor:
    a = _as_tensor(a)
    out = _node(np.exp(a.data), (a,), None)
    if out.requires_grad:
        out._backward = lambda g: (g * out,)
    return out


def tlog(a) -> Tensor:
    a = _as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a,))


def tsqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = _node(np.sqrt(a.data), (a,), None)
    if out.requires_grad:
        out._backward = lambda g: (g / (out * 2.0),)
    return out


def tabs(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return _node(np.abs(a.data), (a,), lambda g: (g * Tensor(sign),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = (a.data > 0).astype(a.data.dtype)
    return _node(a.data * mask, (a,), lambda g: (g * Tensor(mask),))


def leaky_relu(a, slope: float = 0.1) -> Tensor:
    a = _as_tensor(a)
    mask = np.where(a.data > 0, 1.0, slope).astype(a.data.dtype)
    return _node(a.data * mask, (a,), lambda g: (g * Tensor(mask),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    e = np.exp(-np.abs(a.data))
    s = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    out = _node(s, (a,), None)
    if out.requires_grad:
        out._backward = lambda g: (g * out * (1.0 - out),)
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def bwd(g):
        gd = g
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            ax = tuple(i % len(shape) for i in ax)
            kshape = tuple(1 if i in ax else s for i, s in enumerate(shape))
            gd = reshape(gd, kshape)
        elif axis is None and not keepdims:
            gd = reshape(gd, (1,) * len(shape))
        return (broadcast_to(gd, shape),)

    return _node(data, (a,), bwd)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))])
    return tsum(a, axis, keepdims) * (1.0 / float(n))


def broadcast_to(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = np.broadcast_to(a.data, shape).copy()
    return _node(data, (a,), lambda g: (_sum_to(g, a.shape),))


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),))


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    inv = tuple(np.argsort(axes))
    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = _as_tensor(a)
    data = a.data[idx]
    if data.base is not None:
        data = data.copy()
    shape = a.data.shape
    return _node(data, (a,), lambda g: (scatter_slice(g, shape, idx),))


def scatter_slice(g, shape, idx) -> Tensor:
    """Adjoint of basic-slice getitem: embed g into zeros of the given shape."""
    g = _as_tensor(g)
    data = np.zeros(shape, dtype=g.data.dtype)
    data[idx] = g.data
    return _node(data, (g,), lambda gg: (getitem(gg, idx),))


def concat(parts, axis: int) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        grads = []
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.data.ndim
            sl[axis] = slice(int(start), int(stop))
            grads.append(getitem(g, tuple(sl)))
        return tuple(grads)

    return _node(data, tuple(parts), bwd)


# ---------------------------------------------------------------------------
# convolution family (mutually adjoint primitives -> arbitrary-order autodiff)
# ---------------------------------------------------------------------------

@dataclass
class ConvSpec:
    """A convolution: (out_c, in_c, kh, kw) kernel, optional bias, geometry."""

    kernel: Tensor
    bias: Tensor | None = None
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self):
        if self.kernel.ndim != 4:
            raise ValueError(f"kernel must be rank 4, got shape {self.kernel.shape}")
        if self.stride < 1 or self.padding < 0 or self.dilation < 1:
            raise ValueError("require stride >= 1, padding >= 0, dilation >= 1")
        if self.bias is not None and self.bias.shape != (self.kernel.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match out_c {self.kernel.shape[0]}")

    def out_size(self, h: int, w: int):
        kh, kw = self.kernel.shape[2], self.kernel.shape[3]
        oh = (h + 2 * self.padding - self.dilation * (kh - 1) - 1) // self.stride + 1
        ow = (w + 2 * self.padding - self.dilation * (kw - 1) - 1) // self.stride + 1
        return oh, ow


def _im2col_fast(x, kh, kw, stride, padding, dilation):
    """im2col with a copy-free shortcut for pointwise (1x1, s1, p0) convs."""
    if kh == 1 and kw == 1 and stride == 1 and padding == 0:
        n, c, h, w = x.shape
        return x.reshape(n, c, h * w)
    return kernels.im2col(x, kh, kw, stride, padding, dilation)


def _col2im_fast(cols, x_shape, kh, kw, stride, padding, dilation):
    if kh == 1 and kw == 1 and stride == 1 and padding == 0:
        return np.ascontiguousarray(cols).reshape(x_shape)
    return kernels.col2im(cols, x_shape, kh, kw, stride, padding, dilation)


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation with zero padding.  Accepts a ConvSpec in place of weight."""
    if isinstance(weight, ConvSpec):
        spec = weight
        return conv2d(x, spec.kernel, spec.bias, spec.stride, spec.padding, spec.dilation)
    x, weight = _as_tensor(x), _as_tensor(weight)
    n, c, h, w = x.shape
    oc, ic, kh, kw = weight.shape
    if ic != c:
        raise ValueError(f"conv2d: input has {c} channels but kernel expects {ic}")
    oh = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    ow = (w + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(
            f"conv2d: output size {oh}x{ow} < 1 for input {h}x{w}, kernel {kh}x{kw}")
    cols = _im2col_fast(x.data, kh, kw, stride, padding, dilation)
    out = np.matmul(weight.data.reshape(oc, -1), cols).reshape(n, oc, oh, ow)
    geom = (stride, padding, dilation)

    def bwd(g):
        return (_conv2d_input_grad(g, weight, x.shape, geom),
                _conv2d_kernel_grad(x, g, weight.shape, geom))

    out_t = _node(out, (x, weight), bwd)
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (oc,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({oc},)")
        out_t = out_t + reshape(bias, (1, oc, 1, 1))
    return out_t


def _conv2d_input_grad(gout, weight, x_shape, geom) -> Tensor:
    gout, weight = _as_tensor(gout), _as_tensor(weight)
    stride, padding, dilation = geom
    oc, ic, kh, kw = weight.shape
    n = gout.shape[0]
    cols = np.matmul(weight.data.reshape(oc, -1).T,
                     gout.data.reshape(n, oc, -1))
    data = _col2im_fast(cols, x_shape, kh, kw, stride, padding, dilation)

    def bwd(g):
        return (conv2d(g, weight, None, stride, padding, dilation),
                _conv2d_kernel_grad(g, gout, weight.shape, geom))

    return _node(data, (gout, weight), bwd)


def _conv2d_kernel_grad(x, gout, w_shape, geom) -> Tensor:
    x, gout = _as_tensor(x), _as_tensor(gout)
    stride, padding, dilation = geom
    oc, ic, kh, kw = w_shape
    n = x.shape[0]
    cols = _im2col_fast(x.data, kh, kw, stride, padding, dilation)
    data = np.matmul(gout.data.reshape(n, oc, -1),
                     cols.transpose(0, 2, 1)).sum(axis=0).reshape(w_shape)

    def bwd(g):
        return (_conv2d_input_grad(gout, g, x.shape, geom),
                conv2d(x, g, None, stride, padding, dilation))

    return _node(data, (x, gout), bwd)


# ---------------------------------------------------------------------------
# bilinear grid sampling
# ---------------------------------------------------------------------------

def grid_sample_bilinear(x, grid) -> Tensor:
    """Sample x at normalized grid coords ([-1, 1], zero padding outside).

    grid: (n, 2, oh, ow); plane 0 is x (width) coordinate, plane 1 is y.
    """
    x, grid = _as_tensor(x), _as_tensor(grid)
    if grid.ndim != 4 or grid.shape[1] != 2:
        raise ValueError(f"grid must be (n, 2, h, w), got {grid.shape}")
    if grid.shape[0] != x.shape[0]:
        raise ValueError(f"batch mismatch: input {x.shape[0]} vs grid {grid.shape[0]}")
    data = kernels.grid_sample_fwd(x.data, grid.data)

    def bwd(g):
        return (_grid_sample_input_grad(g, grid, x.shape),
                _grid_sample_grid_grad(x, grid, g))

    return _node(data, (x, grid), bwd)


def _grid_sample_input_grad(gout, grid, x_shape) -> Tensor:
    gout, grid = _as_tensor(gout), _as_tensor(grid)
    data = kernels.grid_sample_bwd_input(gout.data, grid.data, x_shape)

    def bwd(g):
        return (grid_sample_bilinear(g, grid),
                _grid_sample_grid_grad(g, grid, gout))

    return _node(data, (gout, grid), bwd)


def _grid_sample_grid_grad(x, grid, gout) -> Tensor:
    # Differentiable w.r.t. nothing further: second derivatives through the
    # sampling locations are not needed anywhere in the model.
    x, grid, gout = _as_tensor(x), _as_tensor(grid), _as_tensor(gout)
    data = kernels.grid_sample_bwd_grid(x.data, grid.data, gout.data)
    return _node(data, (x, grid, gout), lambda g: (None, None, None))


def decoupled_filter(x, sf, cf) -> Tensor:
    """Fused decoupled dynamic filtering (3x3 taps, zero padding).

    out[n,c,p] = sum_t sf[n,t,p] * cf[n,c,t] * x[n,c,p+t].  First-order
    differentiable w.r.t. all three inputs; like the grid gradient, the
    backward results are not differentiable further (nothing needs it).
    """
    x, sf, cf = _as_tensor(x), _as_tensor(sf), _as_tensor(cf)
    n, c, h, w = x.shape
    if sf.shape != (n, 9, h, w):
        raise ValueError(f"spatial filters {sf.shape} do not match ({n}, 9, {h}, {w})")
    if cf.shape != (n, c, 9):
        raise ValueError(f"channel filters {cf.shape} do not match ({n}, {c}, 9)")
    data = kernels.ddf_fwd(x.data, sf.data, cf.data)

    def bwd(g):
        gx, gsf, gcf = kernels.ddf_bwd(x.data, sf.data, cf.data, g.data)
        return (Tensor(gx), Tensor(gsf), Tensor(gcf))

    return _node(data, (x, sf, cf), bwd)


# ---------------------------------------------------------------------------
# unfold / fold, pixel shuffle, pooling, resize
# ---------------------------------------------------------------------------

def unfold(x, k: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Extract k x k patches: (n, c, h, w) -> (n, c*k*k, l)."""
    x = _as_tensor(x)
    n, c, h, w = x.shape
    shape = x.shape
    data = kernels.im2col(x.data, k, k, stride, pad, 1)

    def bwd(g):
        return (_fold_sum(g, shape, k, stride, pad),)

    return _node(data, (x,), bwd)


def _fold_sum(cols, x_shape, k, stride, pad) -> Tensor:
    cols = _as_tensor(cols)
    data = kernels.col2im(cols.data, x_shape, k, k, stride, pad, 1)
    return _node(data, (cols,), lambda g: (unfold(g, k, stride, pad),))


def fold_average(cols, x_shape, k: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Inverse of unfold with overlap averaging."""
    cols = _as_tensor(cols)
    counts = kernels.col2im(np.ones((x_shape[0], x_shape[1] * k * k,
                                     cols.shape[-1]), dtype=cols.dtype),
                            x_shape, k, k, stride, pad, 1)
    return _fold_sum(cols, x_shape, k, stride, pad) * Tensor(1.0 / counts)


def pixel_shuffle(x, r: int) -> Tensor:
    """(n, c, h, w) -> (n, c/r^2, h*r, w*r), sub-pixel rearrangement."""
    x = _as_tensor(x)
    n, c, h, w = x.shape
    if r < 1:
        raise ValueError(f"upscale factor must be >= 1, got {r}")
    if c % (r * r) != 0:
        raise ValueError(f"channels {c} not divisible by r^2 = {r * r}")
    oc = c // (r * r)
    y = reshape(x, (n, oc, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (n, oc, h * r, w * r))


def pixel_unshuffle(x, r: int) -> Tensor:
    """Inverse of pixel_shuffle."""
    x = _as_tensor(x)
    n, c, hr, wr = x.shape
    if hr % r != 0 or wr % r != 0:
        raise ValueError(f"spatial size {hr}x{wr} not divisible by r = {r}")
    h, w = hr // r, wr // r
    y = reshape(x, (n, c, h, r, w, r))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (n, c * r * r, h, w))


def max_pool(x, k: int, stride: int) -> Tensor:
    """Windowed maximum; subgradient routes to the first argmax in scan order."""
    x = _as_tensor(x)
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ValueError(f"max_pool: window {k} larger than input {h}x{w}")
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    sn, sc, sh, sw = x.data.strides
    win = np.lib.stride_tricks.as_strided(
        x.data, shape=(n, c, oh, ow, k, k),
        strides=(sn, sc, sh * stride, sw * stride, sh, sw), writeable=False)
    flat = win.reshape(n, c, oh, ow, k * k)
    arg = flat.argmax(axis=-1)  # first max in scan order
    data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    ay, ax_ = arg // k, arg % k
    oy = (np.arange(oh) * stride)[None, None, :, None]
    ox = (np.arange(ow) * stride)[None, None, None, :]
    src_y = oy + ay
    src_x = ox + ax_
    flat_idx = ((np.arange(n)[:, None, None, None] * c
                 + np.arange(c)[None, :, None, None]) * h + src_y) * w + src_x

    def bwd(g):
        return (_maxpool_scatter(g, flat_idx, x.shape),)

    return _node(data, (x,), bwd)


def _maxpool_scatter(g, flat_idx, x_shape) -> Tensor:
    g = _as_tensor(g)
    out = np.zeros(int(np.prod(x_shape)), dtype=g.data.dtype)
    np.add.at(out, flat_idx.reshape(-1), g.data.reshape(-1))
    out = out.reshape(x_shape)

    def bwd(gg):
        data = gg.data.reshape(-1)[flat_idx.reshape(-1)].reshape(g.shape)
        return (_node(data, (gg,), None),)  # gather; adjoint of scatter

    return _node(out, (g,), bwd)


def _resize_matrix(n_in: int, n_out: int, dtype):
    """Row-interpolation matrix for align-corners bilinear resize."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_out == 1:
        m[0, 0] = 1.0
        return m
    src = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    i0 = np.floor(src).astype(np.int64)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = src - i0
    m[np.arange(n_out), i0] += 1.0 - f
    m[np.arange(n_out), i1] += f
    return m


def resize_bilinear(x, h_out: int, w_out: int) -> Tensor:
    """Align-corners bilinear resize."""
    x = _as_tensor(x)
    if h_out < 1 or w_out < 1:
        raise ValueError(f"target size must be >= 1, got {h_out}x{w_out}")
    n, c, h, w = x.shape
    rh = _resize_matrix(h, h_out, x.data.dtype)
    rw = _resize_matrix(w, w_out, x.data.dtype)
    return _rowcol_apply(x, rh, rw)


def _rowcol_apply(x, rh, rw) -> Tensor:
    """out[..., i, j] = sum_{y,x} rh[i,y] * rw[j,x] * x[..., y, x] (linear)."""
    x = _as_tensor(x)
    data = np.matmul(np.matmul(rh, x.data), rw.T)
    return _node(data, (x,), lambda g: (_rowcol_apply(g, rh.T, rw.T),))


def global_avg_pool(x) -> Tensor:
    return tmean(x, axis=(2, 3), keepdims=True)


def stack_ch(parts) -> Tensor:
    """Stack (n, h, w) tensors into (n, len(parts), h, w)."""
    return concat([reshape(p, (p.shape[0], 1) + tuple(p.shape[1:])) for p in parts], axis=1)

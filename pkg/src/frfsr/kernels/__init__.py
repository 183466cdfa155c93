"""Kernel backend selection.

The hot inner loops (im2col/col2im for convolutions and bilinear grid
sampling) exist twice: a compiled Cython extension (``frfsr.kernels._ext``)
and a pure numpy fallback (``frfsr.kernels._numpy``).  The extension is
preferred when importable; set ``FRFSR_KERNELS=numpy`` or ``FRFSR_KERNELS=ext``
to force a backend.  ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_choice = os.environ.get("FRFSR_KERNELS", "auto")
if _choice not in ("auto", "ext", "numpy"):
    raise ValueError(f"FRFSR_KERNELS must be auto|ext|numpy, got {_choice!r}")

_impl = None
if _choice in ("auto", "ext"):
    try:
        from . import _ext as _impl
        BACKEND = "ext"
    except ImportError:
        if _choice == "ext":
            raise
        _impl = None
if _impl is None:
    from . import _numpy as _impl
    BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
grid_sample_fwd = _impl.grid_sample_fwd
grid_sample_bwd_input = _impl.grid_sample_bwd_input
grid_sample_bwd_grid = _impl.grid_sample_bwd_grid
ddf_fwd = _impl.ddf_fwd
ddf_bwd = _impl.ddf_bwd

__all__ = [
    "BACKEND",
    "im2col",
    "col2im",
    "grid_sample_fwd",
    "grid_sample_bwd_input",
    "grid_sample_bwd_grid",
    "ddf_fwd",
    "ddf_bwd",
]

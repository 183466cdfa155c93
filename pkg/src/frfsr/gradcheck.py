"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, grad


@dataclass
class GradCheckReport:
    op_name: str
    max_rel_error: float
    per_input_errors: dict = field(default_factory=dict)

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(fn, inputs, wrt=None, step: float = 1e-3, seed: int = 0,
               op_name: str = "op") -> GradCheckReport:
    """Compare analytic gradients of sum(fn(*inputs) * R) against central differences.

    All differentiated inputs are promoted to float64.  R is a fixed random
    projection so a single scalar exercises every output element.
    """
    rng = np.random.default_rng(seed)
    tensors = []
    for x in inputs:
        if isinstance(x, Tensor):
            t = Tensor(x.data.astype(np.float64), requires_grad=x.requires_grad)
        else:
            t = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
        tensors.append(t)
    if wrt is None:
        wrt = [t for t in tensors if t.requires_grad]

    def loss_value():
        out = fn(*tensors)
        if not np.all(np.isfinite(out.data)):
            raise FloatingPointError(f"{op_name}: non-finite values in output")
        return out

    out = loss_value()
    proj = rng.standard_normal(out.shape)
    scalar = (out * Tensor(proj)).sum()
    analytic = grad(scalar, wrt)

    errors = {}
    worst = 0.0
    for i, t in enumerate(wrt):
        num = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            plus = float((loss_value().data * proj).sum())
            flat[j] = orig - step
            minus = float((loss_value().data * proj).sum())
            flat[j] = orig
            nflat[j] = (plus - minus) / (2.0 * step)
        err = _rel_err(analytic[i].data, num)
        errors[f"input{i}"] = err
        worst = max(worst, err)
    return GradCheckReport(op_name=op_name, max_rel_error=worst, per_input_errors=errors)

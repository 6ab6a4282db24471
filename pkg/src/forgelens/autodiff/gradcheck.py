"""Central finite-difference verification of recorded backward rules."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import UsageError
from .tensor import Tensor


def grad_check(
    op: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients of ``op`` against central differences.

    ``op`` maps the given tensors to a scalar Tensor.  All inputs must be
    float64 (central differences at eps=1e-5 are meaningless in fp32).
    Returns the maximum relative error over every element of every input,
    where the relative error of (analytic a, numeric n) is
    |a - n| / max(1, |a|, |n|).
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise UsageError("grad_check requires float64 inputs")
        t.zero_grad()

    out = op(*inputs)
    if out.size != 1:
        raise UsageError(f"grad_check target must be scalar, got shape {out.shape}")
    out.backward()

    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = op(*inputs).item()
            flat[i] = orig - eps
            lo = op(*inputs).item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst

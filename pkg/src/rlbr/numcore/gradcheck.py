"""Central finite differences for checking tape gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor

# below this magnitude both gradients count as zero and the error is absolute
GRAD_FLOOR = 1e-6


def numerical_grad(loss_fn: Callable[[], float], params: list[Tensor], h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of ``loss_fn()`` w.r.t. each parameter's data (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            g.reshape(-1)[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric, floor: float = GRAD_FLOOR) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.concatenate([np.ravel(x) for x in analytic]) if isinstance(analytic, (list, tuple)) else np.ravel(analytic)
    n = np.concatenate([np.ravel(x) for x in numeric]) if isinstance(numeric, (list, tuple)) else np.ravel(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0

"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor, backward, no_grad

REL_FLOOR = 1e-7


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grad(f: Callable[[], Tensor], t: Tensor, step: float = 1e-4,
                 index: np.ndarray | None = None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. entries of ``t``.

    ``index`` selects flat positions to probe; the rest are left as NaN.
    """
    flat = t.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if index is None else index
    with no_grad():
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = f().item()
            flat[i] = orig - step
            fm = f().item()
            flat[i] = orig
            out[i] = (fp - fm) / (2 * step)
    return out.reshape(t.shape)


def check_gradients(f: Callable[[], Tensor], tensors: Mapping[str, Tensor], step: float = 1e-4,
                    max_entries: int | None = None, rng: np.random.Generator | None = None,
                    floor: float = REL_FLOOR) -> dict[str, float]:
    """Return the worst elementwise relative error per tensor.

    With ``max_entries`` set, only that many randomly chosen entries per tensor
    are probed (the analytic gradient is still computed in full).
    """
    for t in tensors.values():
        t.grad = None
    loss = f()
    backward(loss)
    rng = rng or np.random.default_rng(0)
    worst = {}
    for name, t in tensors.items():
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        index = None
        if max_entries is not None and t.size > max_entries:
            index = np.sort(rng.choice(t.size, size=max_entries, replace=False))
        num = numeric_grad(f, t, step=step, index=index)
        mask = ~np.isnan(num)
        worst[name] = float(rel_error(analytic[mask], num[mask], floor).max()) if mask.any() else 0.0
    return worst

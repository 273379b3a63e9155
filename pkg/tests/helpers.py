"""Shared test oracles: finite differences and small graph builders."""

from __future__ import annotations

import numpy as np

from text23d.autodiff import Tensor


def central_diff(f, arr: np.ndarray, h: float = 1e-5, coords=None) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. entries of ``arr``.

    Mutates ``arr`` in place around each evaluation.  When ``coords`` is
    given, only those flat indices are probed (others reported as nan).
    """
    flat = arr.reshape(-1)
    grad = np.full_like(flat, np.nan)
    indices = range(flat.size) if coords is None else coords
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(arr.shape)


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation relative to the gradient scale."""
    mask = np.isfinite(numeric)
    a = analytic[mask]
    n = numeric[mask]
    scale = max(np.abs(n).max() if n.size else 0.0, 1e-6)
    return float(np.abs(a - n).max() / scale) if a.size else 0.0


def check_gradients(loss_fn, params: list[Tensor], h: float = 1e-5,
                    max_coords: int | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Compare autodiff gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph from the live ``params`` on every
    call.  Returns the worst relative error across all parameters.
    """
    loss = loss_fn()
    for p in params:
        p.grad = None
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        coords = None
        if max_coords is not None and p.data.size > max_coords:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(p.data.size, size=max_coords, replace=False)
        gn = central_diff(lambda: loss_fn().data.item(), p.data, h=h, coords=coords)
        worst = max(worst, rel_error(ga, gn))
    return worst

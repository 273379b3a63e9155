"""Image quality metrics: PSNR, SSIM, adjacent-view consistency error.

All functions take float arrays with pixels in [0, 1].  Reports are plain
dicts so the CLI can serialize them as structured-text rows.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10*log10(1/MSE) in dB, capped at 99 dB for (near-)identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _to_luminance(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _window_means(x: np.ndarray, win: int) -> np.ndarray:
    """Means of all win x win windows (stride 1) via summed-area tables."""
    pad = np.zeros((x.shape[0] + 1, x.shape[1] + 1))
    pad[1:, 1:] = np.cumsum(np.cumsum(x, axis=0), axis=1)
    s = (pad[win:, win:] - pad[:-win, win:] - pad[win:, :-win] + pad[:-win, :-win])
    return s / (win * win)


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW) -> float:
    """Mean local SSIM over uniform windows, luminance only, dynamic range 1."""
    a = _to_luminance(a)
    b = _to_luminance(b)
    if a.shape != b.shape:
        raise ContractViolation(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ContractViolation(
            f"image {a.shape} smaller than ssim window {window}")
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mu_a = _window_means(a, window)
    mu_b = _window_means(b, window)
    var_a = _window_means(a * a, window) - mu_a ** 2
    var_b = _window_means(b * b, window) - mu_b ** 2
    cov = _window_means(a * b, window) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def consistency_error(views: list[np.ndarray] | np.ndarray) -> float:
    """100x mean RMS RGB distance between adjacent views in rig order.

    Lower is better; invariant to reversing the view order.
    """
    views = [np.asarray(v, dtype=np.float64) for v in views]
    if len(views) < 2:
        raise ContractViolation("consistency_error needs at least 2 views")
    errs = []
    for a, b in zip(views[:-1], views[1:]):
        if a.shape != b.shape:
            raise ContractViolation("consistency_error shape mismatch")
        errs.append(np.sqrt(np.mean((a - b) ** 2)))
    return float(100.0 * np.mean(errs))


def metric_report(name: str, per_view: list[float], config: dict | None = None) -> dict:
    """Bundle per-view values with their arithmetic mean."""
    values = [float(v) for v in per_view]
    return {
        "metric": name,
        "per_view": values,
        "mean": float(np.mean(values)) if values else float("nan"),
        "config": dict(config or {}),
    }

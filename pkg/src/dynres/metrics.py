"""Distortion metrics and the predictor cost ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .resample import as_grid
from .schedule import ResolutionPlan, TimeGrid

#: returned by :func:`psnr` when the two grids are identical
PSNR_CAP = 300.0
DEFAULT_PEAK = 2.0


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mse: float
    runtime_ms: float = 0.0
    pixel_step_count: int = 0


def mse(x, ref) -> float:
    x, ref = as_grid(x), as_grid(ref)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    return float(np.mean((x - ref) ** 2))


def psnr(x, ref, peak: float = DEFAULT_PEAK) -> float:
    if peak <= 0:
        raise ValueError("peak must be positive")
    err = mse(x, ref)
    if err == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / err))


def _gaussian_window(size: int = 11, std: float = 1.5) -> np.ndarray:
    r = np.arange(size) - size // 2
    g = np.exp(-0.5 * (r / std) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def ssim(x, ref, peak: float = DEFAULT_PEAK, window: int = 11, std: float = 1.5) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows, averaged over channels."""
    x, ref = as_grid(x), as_grid(ref)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    H, W, C = x.shape
    if H < window or W < window:
        raise ValueError(f"image {H}x{W} is smaller than the {window}x{window} SSIM window")
    w = _gaussian_window(window, std)
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    pad = window // 2
    crop = (slice(pad, H - pad), slice(pad, W - pad))
    scores = []
    for c in range(C):
        a, b = x[:, :, c], ref[:, :, c]

        def filt(img):
            return correlate(img, w, mode="reflect")[crop]

        mu_a, mu_b = filt(a), filt(b)
        var_a = filt(a * a) - mu_a**2
        var_b = filt(b * b) - mu_b**2
        cov = filt(a * b) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def pixel_step_ledger(plan: ResolutionPlan, grid: TimeGrid | None = None) -> int:
    """Pixels processed by one predictor call per outer step ``i = N..1``."""
    if grid is not None and grid.N != plan.N:
        raise ValueError("grid and plan disagree on N")
    return sum(plan.pixels(i) for i in range(1, plan.N + 1))


def report(x, ref, peak: float = DEFAULT_PEAK, runtime_ms: float = 0.0,
           pixel_step_count: int = 0) -> MetricReport:
    return MetricReport(psnr(x, ref, peak), ssim(x, ref, peak), mse(x, ref),
                        runtime_ms, int(pixel_step_count))

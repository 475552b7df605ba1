"""Orthonormal block up/downsampling between resolution stages.

Images are ``(H, W, C)`` float64 arrays. ``upsample`` replicates every pixel
into an ``f x f`` block scaled by ``1/f``; the columns of that map are
orthonormal with disjoint support, so ``downsample`` (block sum ``/ f``) is
both its adjoint and its left inverse.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def as_grid(x, dims: Sequence[int] | None = None) -> np.ndarray:
    """Validate ``x`` as an ``(H, W, C)`` image grid of finite floats."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"image grid must be (H, W, C), got shape {x.shape}")
    if dims is not None and x.shape != tuple(dims):
        raise ValueError(f"expected dims {tuple(dims)}, got {x.shape}")
    return x


def upsample(x: np.ndarray, factor: int) -> np.ndarray:
    x = as_grid(x)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return x.copy()
    return np.repeat(np.repeat(x, factor, axis=0), factor, axis=1) / factor


def downsample(x: np.ndarray, factor: int) -> np.ndarray:
    x = as_grid(x)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    H, W, C = x.shape
    if H % factor or W % factor:
        raise ValueError(f"{H}x{W} is not divisible by {factor}")
    if factor == 1:
        return x.copy()
    return x.reshape(H // factor, factor, W // factor, factor, C).sum(axis=(1, 3)) / factor


def _factor(from_dims: Sequence[int], to_dims: Sequence[int]) -> int:
    (h0, w0, c0), (h1, w1, c1) = from_dims, to_dims
    if c0 != c1 or h1 % h0 or w1 % w0 or h1 // h0 != w1 // w0:
        raise ValueError(f"no integer resampling from {tuple(from_dims)} to {tuple(to_dims)}")
    return h1 // h0


def cross_upsample(x: np.ndarray, from_dims: Sequence[int], to_dims: Sequence[int]) -> np.ndarray:
    """Apply ``U_{i-1}^T U_i``, mapping a stage-``i`` grid to stage ``i-1``.

    For block maps this is a single block upsampling by the ratio of sizes,
    which equals the composition of the per-stage x2 upsamplings.
    """
    x = as_grid(x, from_dims)
    return upsample(x, _factor(from_dims, to_dims))


def cross_downsample(x: np.ndarray, from_dims: Sequence[int], to_dims: Sequence[int]) -> np.ndarray:
    """Adjoint of :func:`cross_upsample`."""
    x = as_grid(x, from_dims)
    return downsample(x, _factor(to_dims, from_dims))

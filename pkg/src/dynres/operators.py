"""Forward measurement operators ``A`` and observation synthesis.

Every operator acts on full-resolution ``(H, W, C)`` grids and exposes
``apply``, ``jvp`` (directional derivative) and ``vjp`` (transposed Jacobian
product). Linear operators also provide an exact ``adjoint``. Convolutions
use periodic boundaries so that adjoints are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .resample import as_grid


class OperatorError(ValueError):
    pass


class ForwardOperator:
    """Base class; subclasses set ``input_dims``/``output_shape``."""

    kind: str = "abstract"
    linear: bool = True
    input_dims: tuple[int, int, int]
    output_shape: tuple[int, ...]

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != tuple(self.input_dims):
            raise OperatorError(f"{self.kind}: expected input {self.input_dims}, got {x.shape}")
        return x

    def _check_out(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != tuple(self.output_shape):
            raise OperatorError(f"{self.kind}: expected measurement {self.output_shape}, got {v.shape}")
        return v

    def apply(self, x):
        raise NotImplementedError

    def jvp(self, x, d):
        # linear operators: the derivative is the operator itself
        self._check(x)
        return self.apply(d)

    def adjoint(self, v):
        raise NotImplementedError

    def vjp(self, x, v):
        self._check(x)
        return self.adjoint(v)

    @property
    def lipschitz(self) -> float:
        """Upper bound on the largest eigenvalue of ``J^T J``."""
        return 1.0

    def __call__(self, x):
        return self.apply(x)


class Inpaint(ForwardOperator):
    """Keeps the pixels where ``mask`` is true (mask shared across channels)."""

    kind = "inpaint"

    def __init__(self, mask, channels: int = 3):
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 2:
            raise OperatorError("inpainting mask must be (H, W)")
        self.mask = mask
        self.input_dims = (*mask.shape, int(channels))
        self.output_shape = (int(mask.sum()), int(channels))

    def apply(self, x):
        return self._check(x)[self.mask]

    def adjoint(self, v):
        v = self._check_out(v)
        out = np.zeros(self.input_dims)
        out[self.mask] = v
        return out

    def embed(self, v):
        """Observed values in image layout, zeros elsewhere."""
        return self.adjoint(v)


def random_mask(height: int, width: int, keep_ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask keeping exactly ``ceil(keep_ratio * H * W)`` positions."""
    if not 0.0 <= keep_ratio <= 1.0:
        raise OperatorError("keep_ratio must lie in [0, 1]")
    n = height * width
    keep = min(n, math.ceil(keep_ratio * n - 1e-9))
    idx = rng.choice(n, size=keep, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask.reshape(height, width)


class SuperResolution(ForwardOperator):
    """Block-mean decimation by ``factor`` in both spatial axes."""

    kind = "super_resolution"

    def __init__(self, dims, factor: int = 4):
        H, W, C = dims
        if factor < 1 or H % factor or W % factor:
            raise OperatorError(f"{H}x{W} is not divisible by factor {factor}")
        self.factor = int(factor)
        self.input_dims = (H, W, C)
        self.output_shape = (H // factor, W // factor, C)

    def apply(self, x):
        x = self._check(x)
        H, W, C = self.input_dims
        f = self.factor
        return x.reshape(H // f, f, W // f, f, C).mean(axis=(1, 3))

    def adjoint(self, v):
        v = self._check_out(v)
        f = self.factor
        return np.repeat(np.repeat(v, f, axis=0), f, axis=1) / (f * f)

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.factor**2

    def embed(self, v):
        """Nearest-neighbour replication of a low-resolution measurement."""
        v = self._check_out(v)
        f = self.factor
        return np.repeat(np.repeat(v, f, axis=0), f, axis=1)


def gaussian_kernel(std: float, size: int) -> np.ndarray:
    """Separable 2-D Gaussian, truncated at +-4 std and at ``size``, sum 1."""
    half = min(size // 2, max(1, int(math.ceil(4 * std))))
    r = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (r / std) ** 2)
    k1 /= k1.sum()
    k = np.outer(k1, k1)
    return k / k.sum()


def motion_kernel(size: int, rng: np.random.Generator, std: float = 0.5,
                  n_points: int = 64) -> np.ndarray:
    """Straight blur trace at a random angle with N(0, std) jitter on each
    trace sample, splatted bilinearly and normalised to sum 1."""
    if size < 3 or size % 2 == 0:
        raise OperatorError("motion kernel size must be odd and >= 3")
    half = size // 2
    angle = rng.uniform(0.0, np.pi)
    s = np.linspace(-half + 0.5, half - 0.5, n_points)
    px = s * np.cos(angle) + rng.normal(0.0, std, n_points)
    py = s * np.sin(angle) + rng.normal(0.0, std, n_points)
    px = np.clip(px + half, 0, size - 1 - 1e-9)
    py = np.clip(py + half, 0, size - 1 - 1e-9)
    k = np.zeros((size, size))
    x0, y0 = np.floor(px).astype(int), np.floor(py).astype(int)
    fx, fy = px - x0, py - y0
    np.add.at(k, (y0, x0), (1 - fx) * (1 - fy))
    np.add.at(k, (y0, x0 + 1), fx * (1 - fy))
    np.add.at(k, (y0 + 1, x0), (1 - fx) * fy)
    np.add.at(k, (y0 + 1, x0 + 1), fx * fy)
    return k / k.sum()


def scaled_kernel_size(height: int, reference_size: int = 61, reference_height: int = 256) -> int:
    """Odd kernel size shrunk from ``reference_size`` in proportion to the image."""
    half = int(round((reference_size // 2) * height / reference_height))
    return 2 * max(1, half) + 1


DENSE_BLUR_MAX_PIXELS = 1024


class Blur(ForwardOperator):
    """Periodic 2-D convolution with a normalised kernel (per channel)."""

    kind = "blur"

    def __init__(self, dims, kernel, kind: str = "blur"):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise OperatorError("blur kernel must be 2-D with odd sides")
        if not np.isclose(kernel.sum(), 1.0, atol=1e-12):
            raise OperatorError("blur kernel must sum to 1")
        self.kind = kind
        self.kernel = kernel
        self.input_dims = tuple(int(v) for v in dims)
        self.output_shape = self.input_dims
        H, W, _ = self.input_dims
        # wrap the centred kernel onto the periodic grid
        wrapped = np.zeros((H, W))
        kh, kw = kernel.shape
        rows = (np.arange(kh) - kh // 2) % H
        cols = (np.arange(kw) - kw // 2) % W
        np.add.at(wrapped, (rows[:, None], cols[None, :]), kernel)
        self.transfer = np.fft.rfft2(wrapped)
        # small grids: a dense circulant matmul beats per-call FFT overhead
        self.matrix = None
        if H * W <= DENSE_BLUR_MAX_PIXELS:
            basis = np.eye(H * W).reshape(H * W, H, W).transpose(1, 2, 0)
            self.matrix = self._fft_conv(basis, self.transfer).reshape(H * W, H * W)

    def _fft_conv(self, x, transfer):
        H, W = self.input_dims[:2]
        X = np.fft.rfft2(x, axes=(0, 1))
        return np.fft.irfft2(X * transfer[:, :, None], s=(H, W), axes=(0, 1))

    def _conv(self, x, transfer, transpose=False):
        if self.matrix is None:
            return self._fft_conv(x, transfer)
        H, W, C = x.shape
        m = self.matrix.T if transpose else self.matrix
        return (m @ x.reshape(H * W, C)).reshape(H, W, C)

    def apply(self, x):
        return self._conv(self._check(x), self.transfer)

    def adjoint(self, v):
        return self._conv(self._check_out(v), np.conj(self.transfer), transpose=True)

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(self.transfer)) ** 2)


def gaussian_blur(dims, std: float = 3.0, size: int | None = None) -> Blur:
    size = scaled_kernel_size(dims[0]) if size is None else size
    return Blur(dims, gaussian_kernel(std, size), kind="gaussian_blur")


def motion_blur(dims, rng: np.random.Generator, std: float = 0.5, size: int | None = None) -> Blur:
    size = scaled_kernel_size(dims[0]) if size is None else size
    return Blur(dims, motion_kernel(size, rng, std), kind="motion_blur")


class HdrClip(ForwardOperator):
    """``A(x) = clip(gain * x, -1, 1)``; the derivative is taken as 0 on and
    beyond the clipping kinks."""

    kind = "hdr_clip"
    linear = False

    def __init__(self, dims, gain: float = 2.0):
        self.gain = float(gain)
        self.input_dims = tuple(int(v) for v in dims)
        self.output_shape = self.input_dims

    def apply(self, x):
        return np.clip(self.gain * self._check(x), -1.0, 1.0)

    def _slope(self, x):
        return np.where(np.abs(self.gain * x) < 1.0, self.gain, 0.0)

    def jvp(self, x, d):
        return self._slope(self._check(x)) * self._check(d)

    def vjp(self, x, v):
        return self._slope(self._check(x)) * self._check_out(v)

    def adjoint(self, v):
        raise OperatorError("hdr_clip is nonlinear; use vjp(x, v) at a point")

    @property
    def lipschitz(self) -> float:
        return self.gain**2


@dataclass(frozen=True)
class Observation:
    y: np.ndarray
    noise_sigma: float
    operator: ForwardOperator

    def __post_init__(self):
        if np.shape(self.y) != tuple(self.operator.output_shape):
            raise OperatorError("observation does not match the operator's output shape")


def degrade(op: ForwardOperator, x, sigma: float, rng: np.random.Generator) -> Observation:
    """``y = A(x) + sigma * z`` with ``z`` drawn from ``rng``."""
    if sigma < 0:
        raise OperatorError("noise level must be >= 0")
    clean = op.apply(as_grid(x))
    if sigma == 0:
        return Observation(clean, 0.0, op)
    return Observation(clean + sigma * rng.standard_normal(clean.shape), float(sigma), op)


def observation_image(obs: Observation) -> np.ndarray:
    """Observation laid out on the operator's input grid, for PSNR baselines."""
    op = obs.operator
    if hasattr(op, "embed"):
        return op.embed(obs.y)
    return np.asarray(obs.y, dtype=np.float64)


def make_operator(kind: str, dims, rng: np.random.Generator | None = None, **params) -> ForwardOperator:
    """Construct an operator by name; ``rng`` drives mask/kernel generation."""
    dims = tuple(int(v) for v in dims)
    rng = np.random.default_rng(0) if rng is None else rng
    if kind == "inpaint":
        keep = 1.0 - float(params.pop("drop_ratio", 0.7))
        return Inpaint(random_mask(dims[0], dims[1], keep, rng), dims[2], **params)
    if kind == "super_resolution":
        return SuperResolution(dims, **params)
    if kind == "gaussian_blur":
        return gaussian_blur(dims, **params)
    if kind == "motion_blur":
        return motion_blur(dims, rng, **params)
    if kind == "hdr_clip":
        return HdrClip(dims, **params)
    raise OperatorError(f"unknown operator kind {kind!r}")


class DenseLinear(ForwardOperator):
    """Explicit matrix acting on the flattened grid; used for small test problems."""

    kind = "dense"

    def __init__(self, matrix, dims):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.input_dims = tuple(int(v) for v in dims)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != int(np.prod(self.input_dims)):
            raise OperatorError("matrix columns must match the flattened input size")
        self.output_shape = (self.matrix.shape[0],)

    def apply(self, x):
        return self.matrix @ self._check(x).ravel()

    def adjoint(self, v):
        return (self.matrix.T @ self._check_out(v)).reshape(self.input_dims)

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.matrix, 2) ** 2)

"""Noise schedules, timestep grids and dynamic-resolution plans.

Two schedule families are supported:

* variance exploding (``"ve"``): ``alpha_t = 1`` and ``sigma_t = t`` on ``(0, sigma_max]``;
* variance preserving (``"vp"``): linear ``beta(t)`` on ``(0, 1]`` with
  ``alpha_t = exp(-0.5 * int_0^t beta)`` and ``sigma_t = sqrt(1 - alpha_t**2)``.

All objects here are immutable and every function is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

ScheduleKind = Literal["ve", "vp"]
Spacing = Literal["linear", "log-snr", "polynomial"]

#: relative position of the first grid point, ``t_0 = TIME_FLOOR * T``
TIME_FLOOR = 1e-3


class ScheduleDomainError(ValueError):
    """Raised when a schedule function is evaluated outside its domain."""


@dataclass(frozen=True)
class NoiseSchedule:
    kind: ScheduleKind = "ve"
    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_max: float = 20.0

    def __post_init__(self):
        if self.kind not in ("ve", "vp"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "vp" and not (0 < self.beta_min < self.beta_max):
            raise ValueError("VP schedule needs 0 < beta_min < beta_max")
        if self.kind == "ve" and self.sigma_max <= 0:
            raise ValueError("VE schedule needs sigma_max > 0")

    @property
    def T(self) -> float:
        return float(self.sigma_max) if self.kind == "ve" else 1.0

    @property
    def t_floor(self) -> float:
        return TIME_FLOOR * self.T

    def _check(self, t):
        if isinstance(t, float):
            # scalar fast path; the comparison is False for NaN
            if not 0.0 <= t <= self.T * (1 + 1e-12):
                raise ScheduleDomainError(f"t outside [0, {self.T}]: {t}")
            return np.float64(t)
        t = np.asarray(t, dtype=np.float64)
        if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > self.T * (1 + 1e-12)):
            raise ScheduleDomainError(f"t outside [0, {self.T}]: {t}")
        return t

    def beta(self, t):
        return self.beta_min + np.asarray(t, dtype=np.float64) * (self.beta_max - self.beta_min)

    def log_alpha(self, t):
        t = self._check(t)
        if self.kind == "ve":
            return np.zeros_like(t)[()]
        return (-0.5 * (self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t**2))[()]

    def alpha(self, t):
        return np.exp(self.log_alpha(t))

    def sigma(self, t):
        t = self._check(t)
        if self.kind == "ve":
            return t[()]
        # -expm1(2 log a) = 1 - a^2 without cancellation near t = 0
        return np.sqrt(-np.expm1(2.0 * self.log_alpha(t)))

    def half_log_snr(self, t):
        s = self.sigma(t)
        if np.any(s <= 0):
            raise ScheduleDomainError("half log-SNR undefined where sigma_t = 0")
        return self.log_alpha(t) - np.log(s)

    def snr(self, t):
        return self.alpha(t) ** 2 / self.sigma(t) ** 2

    def drift_diffusion(self, t):
        """Return ``(f, g2)`` with ``f = d log(alpha)/dt`` and
        ``g2 = d(sigma^2)/dt - 2 f sigma^2``."""
        t = self._check(t)
        if self.kind == "ve":
            f = np.zeros_like(t)
            g2 = 2.0 * t
        else:
            f = -0.5 * self.beta(t)
            a2 = np.exp(2.0 * self.log_alpha(t))
            # sigma^2 = 1 - a^2, d(sigma^2)/dt = -2 f a^2
            g2 = -2.0 * f * a2 - 2.0 * f * (1.0 - a2)
        return f[()], g2[()]

    # inverses used by the grid builders
    def t_from_log_alpha(self, la):
        la = np.asarray(la, dtype=np.float64)
        if self.kind == "ve":
            raise ScheduleDomainError("log alpha is constant for a VE schedule")
        # 0.25 db t^2 + 0.5 b0 t + la = 0
        a = 0.25 * (self.beta_max - self.beta_min)
        b = 0.5 * self.beta_min
        disc = b * b - 4.0 * a * la
        return (2.0 * (-la) / (b + np.sqrt(disc)))[()]

    def t_from_sigma(self, s):
        s = np.asarray(s, dtype=np.float64)
        if self.kind == "ve":
            return s[()]
        return self.t_from_log_alpha(0.5 * np.log1p(-(s**2)))

    def t_from_half_log_snr(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        if self.kind == "ve":
            return np.exp(-lam)[()]
        # alpha^2 = sigmoid(2 lam)
        la = -0.5 * np.logaddexp(0.0, -2.0 * lam)
        return self.t_from_log_alpha(la)


def alpha(schedule: NoiseSchedule, t):
    if np.any(np.asarray(t) <= 0):
        raise ScheduleDomainError("alpha is evaluated on (0, T]")
    return schedule.alpha(t)


def sigma(schedule: NoiseSchedule, t):
    if np.any(np.asarray(t) <= 0):
        raise ScheduleDomainError("sigma is evaluated on (0, T]")
    return schedule.sigma(t)


def half_log_snr(schedule: NoiseSchedule, t):
    return schedule.half_log_snr(t)


def drift_diffusion(schedule: NoiseSchedule, t):
    t_arr = np.asarray(t)
    if np.any(t_arr <= 0) or np.any(t_arr >= schedule.T):
        raise ScheduleDomainError("drift/diffusion is evaluated on the open interval (0, T)")
    return schedule.drift_diffusion(t)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times ``t_0 < ... < t_N``."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.float64)
        if steps.ndim != 1 or steps.size < 3:
            raise ValueError("a time grid needs N >= 2 (at least three points)")
        if np.any(np.diff(steps) <= 0):
            raise ValueError("time grid must be strictly increasing")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    @property
    def N(self) -> int:
        return self.steps.size - 1

    def __getitem__(self, i) -> float:
        return float(self.steps[i])

    def __len__(self) -> int:
        return self.steps.size


def make_time_grid(schedule: NoiseSchedule, N: int, spacing: Spacing | None = None,
                   rho: float = 7.0) -> TimeGrid:
    """Build ``N + 1`` times from ``t_0 = 1e-3 T`` to ``t_N = T``.

    ``spacing`` defaults to ``"polynomial"`` (in sigma, exponent ``rho``) for VE
    schedules and ``"linear"`` for VP.
    """
    if int(N) != N or N < 2:
        raise ValueError(f"N must be an integer >= 2, got {N}")
    N = int(N)
    if spacing is None:
        spacing = "polynomial" if schedule.kind == "ve" else "linear"
    lo, hi = schedule.t_floor, schedule.T
    u = np.linspace(0.0, 1.0, N + 1)
    if spacing == "linear":
        steps = lo + u * (hi - lo)
    elif spacing == "log-snr":
        lam = np.linspace(schedule.half_log_snr(lo), schedule.half_log_snr(hi), N + 1)
        steps = schedule.t_from_half_log_snr(lam)
    elif spacing == "polynomial":
        s_lo, s_hi = schedule.sigma(lo), schedule.sigma(hi)
        sig = (s_lo ** (1 / rho) + u * (s_hi ** (1 / rho) - s_lo ** (1 / rho))) ** rho
        steps = schedule.t_from_sigma(sig)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    steps = np.array(steps, dtype=np.float64)
    steps[0], steps[-1] = lo, hi
    return TimeGrid(steps)


Dims = tuple[int, int, int]


@dataclass(frozen=True)
class ResolutionPlan:
    """Per-index state dimensions ``dims[i]`` (the shape of ``x_{t_i}``).

    ``guard_index`` is the ``h`` of the stochastic/deterministic rule: a step
    ``i`` may only be deterministic when ``i < guard_index``. Constant plans
    use ``N + 1`` so the guard never fires.
    """

    dims: tuple[Dims, ...]
    guard_index: int
    boundaries: tuple[int, ...] = ()
    switch_indices: frozenset[int] = field(init=False)

    def __post_init__(self):
        dims = tuple(tuple(int(v) for v in d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        for i in range(1, len(dims)):
            (h0, w0, c0), (h1, w1, c1) = dims[i - 1], dims[i]
            if c0 != c1:
                raise ValueError("channel count must be constant across stages")
            if (h0, w0) != (h1, w1) and (h0 != 2 * h1 or w0 != 2 * w1):
                raise ValueError(f"resolution change at i={i} is not a x2 change")
        object.__setattr__(self, "switch_indices", frozenset(
            i for i in range(1, len(dims)) if dims[i - 1] != dims[i]))

    @property
    def N(self) -> int:
        return len(self.dims) - 1

    @property
    def full_dims(self) -> Dims:
        return self.dims[0]

    @property
    def stages(self) -> int:
        return len(self.switch_indices) + 1

    def factor(self, i: int) -> int:
        """Spatial factor of ``U_i`` (state at index ``i`` -> full resolution)."""
        return self.dims[0][0] // self.dims[i][0]

    def pixels(self, i: int) -> int:
        h, w, c = self.dims[i]
        return h * w * c


def make_resolution_plan(grid: TimeGrid | int, base: Sequence[int], stages: int = 3) -> ResolutionPlan:
    """Split the ``N`` steps into ``stages`` resolution levels.

    Stage boundaries sit at ``floor(k N / stages)``; with three stages these
    are ``h = floor(N/3)`` and ``s = floor(2N/3)``. Indices ``i <= h`` run at
    ``base``, each later stage halves height and width.
    """
    N = grid if isinstance(grid, int) else grid.N
    H, W, C = (int(v) for v in base)
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if N < stages:
        raise ValueError(f"N={N} is too small for {stages} stages")
    f = 2 ** (stages - 1)
    if H % f or W % f:
        raise ValueError(f"base {H}x{W} is not divisible by {f}")
    boundaries = tuple((k * N) // stages for k in range(1, stages))
    dims = []
    for i in range(N + 1):
        level = sum(i > b for b in boundaries)
        dims.append((H >> level, W >> level, C))
    guard = boundaries[0] if boundaries else N + 1
    return ResolutionPlan(tuple(dims), guard, boundaries)

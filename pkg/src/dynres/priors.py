"""Data-prediction models ``x_theta(x_t, t)`` and related utilities.

The analytic priors (a Gaussian and a Gaussian mixture with isotropic
components) have exact posterior means ``E[x_0 | x_t]`` at every resolution
stage. Means are defined at the finest stage; the mean used at a coarser
stage is its orthonormal downsampling, and because the downsampling map has
orthonormal rows the per-pixel variance is unchanged across stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy.special import logsumexp

from .resample import as_grid, downsample
from .schedule import NoiseSchedule, ResolutionPlan


class DataPredictor(Protocol):
    schedule: NoiseSchedule

    def predict(self, x: np.ndarray, t: float) -> np.ndarray: ...

    def vjp(self, x: np.ndarray, t: float, v: np.ndarray) -> np.ndarray: ...


def _stage_factor(full_dims, dims) -> int:
    H, W, C = full_dims
    h, w, c = dims
    if c != C or H % h or W % w or H // h != W // w:
        raise ValueError(f"dims {tuple(dims)} are not a stage of {tuple(full_dims)}")
    f = H // h
    if f & (f - 1):
        raise ValueError(f"stage factor {f} is not a power of two")
    return f


@dataclass(frozen=True)
class GaussianPrior:
    """``x_0 ~ N(mean, var * I)`` at the finest stage."""

    mean: np.ndarray
    var: float

    def __post_init__(self):
        object.__setattr__(self, "mean", as_grid(self.mean).copy())
        if not self.var > 0:
            raise ValueError("prior variance must be positive")

    @property
    def dims(self):
        return self.mean.shape

    def mean_at(self, dims) -> np.ndarray:
        return downsample(self.mean, _stage_factor(self.dims, dims))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + np.sqrt(self.var) * rng.standard_normal(self.dims)

    def marginal_var(self, t, schedule: NoiseSchedule) -> float:
        return schedule.alpha(t) ** 2 * self.var + schedule.sigma(t) ** 2

    def posterior_var(self, t, schedule: NoiseSchedule) -> float:
        """Per-pixel ``Var[x_0 | x_t]``."""
        return self.var * schedule.sigma(t) ** 2 / self.marginal_var(t, schedule)

    def gain(self, t, schedule: NoiseSchedule) -> float:
        """Scalar Jacobian of the posterior mean with respect to ``x_t``."""
        return self.var * schedule.alpha(t) / self.marginal_var(t, schedule)

    def posterior_mean(self, x, t, schedule: NoiseSchedule) -> np.ndarray:
        x = as_grid(x)
        mu = self.mean_at(x.shape)
        a, s2 = schedule.alpha(t), schedule.sigma(t) ** 2
        return (self.var * a * x + s2 * mu) / (a * a * self.var + s2)

    def marginal_score(self, x, t, schedule: NoiseSchedule) -> np.ndarray:
        x = as_grid(x)
        return -(x - schedule.alpha(t) * self.mean_at(x.shape)) / self.marginal_var(t, schedule)

    def log_marginal(self, x, t, schedule: NoiseSchedule) -> float:
        x = as_grid(x)
        v = self.marginal_var(t, schedule)
        r = x - schedule.alpha(t) * self.mean_at(x.shape)
        return float(-0.5 * np.sum(r * r) / v - 0.5 * r.size * np.log(2 * np.pi * v))


@dataclass(frozen=True)
class MixturePrior:
    """Mixture of isotropic Gaussians ``sum_k w_k N(mean_k, var_k I)``."""

    weights: np.ndarray
    means: tuple
    vars: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        means = tuple(as_grid(m).copy() for m in self.means)
        v = np.asarray(self.vars, dtype=np.float64)
        if not (len(w) == len(means) == len(v) >= 1):
            raise ValueError("weights, means and vars must have equal non-zero length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise ValueError("component variances must be positive")
        if len({m.shape for m in means}) != 1:
            raise ValueError("component means must share dims")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "vars", v)

    @property
    def dims(self):
        return self.means[0].shape

    def means_at(self, dims) -> np.ndarray:
        f = _stage_factor(self.dims, dims)
        return np.stack([downsample(m, f) for m in self.means])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = rng.choice(len(self.weights), p=self.weights)
        return self.means[k] + np.sqrt(self.vars[k]) * rng.standard_normal(self.dims)

    def _parts(self, x, t, schedule):
        """Responsibilities, per-component posterior means, gains and scores."""
        x = as_grid(x)
        mus = self.means_at(x.shape)
        a, s2 = schedule.alpha(t), schedule.sigma(t) ** 2
        mv = a * a * self.vars + s2                       # marginal variances
        resid = x[None] - a * mus
        n = x.size
        logp = (np.log(self.weights) - 0.5 * np.sum(resid**2, axis=(1, 2, 3)) / mv
                - 0.5 * n * np.log(2 * np.pi * mv))
        log_norm = logsumexp(logp)
        resp = np.exp(logp - log_norm)
        gains = self.vars * a / mv
        shape = (-1, 1, 1, 1)
        means = (self.vars.reshape(shape) * a * x[None] + s2 * mus) / mv.reshape(shape)
        scores = -resid / mv.reshape(shape)
        return resp, means, gains, scores, log_norm

    def posterior_mean(self, x, t, schedule: NoiseSchedule) -> np.ndarray:
        resp, means, *_ = self._parts(x, t, schedule)
        return np.tensordot(resp, means, axes=1)

    def posterior_mean_vjp(self, x, t, schedule: NoiseSchedule, v) -> np.ndarray:
        resp, means, gains, scores, _ = self._parts(x, t, schedule)
        v = as_grid(v)
        sbar = np.tensordot(resp, scores, axes=1)
        proj = np.sum(means * v[None], axis=(1, 2, 3))
        return np.dot(resp, gains) * v + np.tensordot(resp * proj, scores - sbar[None], axes=1)

    def marginal_score(self, x, t, schedule: NoiseSchedule) -> np.ndarray:
        resp, _, _, scores, _ = self._parts(x, t, schedule)
        return np.tensordot(resp, scores, axes=1)

    def log_marginal(self, x, t, schedule: NoiseSchedule) -> float:
        return float(self._parts(x, t, schedule)[-1])


class AnalyticPredictor:
    """Exact ``x_theta`` for an analytic prior under ``schedule``."""

    def __init__(self, prior: GaussianPrior | MixturePrior, schedule: NoiseSchedule):
        self.prior = prior
        self.schedule = schedule

    def predict(self, x, t):
        return self.prior.posterior_mean(x, t, self.schedule)

    def vjp(self, x, t, v):
        if isinstance(self.prior, GaussianPrior):
            return self.prior.gain(t, self.schedule) * as_grid(v)
        return self.prior.posterior_mean_vjp(x, t, self.schedule, v)

    def supports(self, dims) -> bool:
        try:
            _stage_factor(self.prior.dims, dims)
        except ValueError:
            return False
        return True

    __call__ = predict


def gaussian_predict(prior: GaussianPrior, x, t, schedule: NoiseSchedule) -> np.ndarray:
    return prior.posterior_mean(x, t, schedule)


def mixture_predict(prior: MixturePrior, x, t, schedule: NoiseSchedule) -> np.ndarray:
    return prior.posterior_mean(x, t, schedule)


class TabulatedPredictor:
    """Affine predictor ``x_theta(x, t) = gain(t) * x + offset(t)``.

    ``gain`` and ``offset`` are interpolated linearly in ``t`` between stored
    knots; offsets are stored at full resolution and downsampled per stage.
    This is the hook for plugging in denoisers that were tabulated offline.
    """

    def __init__(self, times, gains, offsets, schedule: NoiseSchedule):
        times = np.asarray(times, dtype=np.float64)
        if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("knot times must be strictly increasing with >= 2 entries")
        self.times = times
        self.gains = np.asarray(gains, dtype=np.float64)
        self.offsets = np.stack([as_grid(o) for o in offsets])
        if self.gains.shape != times.shape or self.offsets.shape[0] != times.size:
            raise ValueError("one gain and one offset grid per knot")
        self.schedule = schedule

    @classmethod
    def from_prior(cls, prior: GaussianPrior, schedule: NoiseSchedule, times) -> "TabulatedPredictor":
        times = np.asarray(times, dtype=np.float64)
        gains = [prior.gain(t, schedule) for t in times]
        offsets = [schedule.sigma(t) ** 2 * prior.mean / prior.marginal_var(t, schedule) for t in times]
        return cls(times, gains, offsets, schedule)

    @classmethod
    def load(cls, index_path, schedule: NoiseSchedule) -> "TabulatedPredictor":
        """Read a JSON index ``{"knots": [{"t", "gain", "offset"}, ...]}`` whose
        ``offset`` entries name raw tensor files relative to the index."""
        import json
        from pathlib import Path

        from .harness.imageio import read_raw

        index_path = Path(index_path)
        knots = json.loads(index_path.read_text())["knots"]
        return cls([k["t"] for k in knots], [k["gain"] for k in knots],
                   [read_raw(index_path.parent / k["offset"]) for k in knots], schedule)

    def _weights(self, t):
        j = int(np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 2))
        t0, t1 = self.times[j], self.times[j + 1]
        u = float(np.clip((t - t0) / (t1 - t0), 0.0, 1.0))
        return j, u

    def predict(self, x, t):
        x = as_grid(x)
        j, u = self._weights(t)
        gain = (1 - u) * self.gains[j] + u * self.gains[j + 1]
        offset = (1 - u) * self.offsets[j] + u * self.offsets[j + 1]
        f = _stage_factor(self.offsets.shape[1:], x.shape)
        return gain * x + downsample(offset, f)

    def vjp(self, x, t, v):
        j, u = self._weights(t)
        return ((1 - u) * self.gains[j] + u * self.gains[j + 1]) * as_grid(v)

    __call__ = predict


def score_from_predictor(pred: DataPredictor, x, t, schedule: NoiseSchedule) -> np.ndarray:
    """``(alpha_t * x_theta(x, t) - x) / sigma_t**2``."""
    s = schedule.sigma(t)
    if s <= 0:
        raise ValueError("score is undefined at sigma_t = 0")
    return (schedule.alpha(t) * pred.predict(x, t) - as_grid(x)) / s**2


def ddim_step(x, x0_hat, t_from, t_to, schedule: NoiseSchedule) -> np.ndarray:
    """First-order data-prediction step of the probability-flow ODE."""
    a_to, s_to = schedule.alpha(t_to), schedule.sigma(t_to)
    a_from, s_from = schedule.alpha(t_from), schedule.sigma(t_from)
    ratio = s_to / s_from
    return a_to * x0_hat + ratio * (x - a_from * x0_hat)


def solve_unconditional_ode(pred: DataPredictor, x_start, t_start: float, t_end: float,
                            steps: int, schedule: NoiseSchedule) -> np.ndarray:
    """Integrate the probability-flow ODE from ``t_start`` down to ``t_end``
    with ``steps`` uniformly spaced first-order data-prediction steps.

    ``t_end = 0`` is allowed; the last step then returns the prediction.
    """
    x = as_grid(x_start).copy()
    if t_end == t_start:
        return x
    if t_end > t_start or t_end < 0:
        raise ValueError("need 0 <= t_end <= t_start")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    ts = np.linspace(t_start, t_end, steps + 1)
    for t_from, t_to in zip(ts[:-1], ts[1:]):
        x = ddim_step(x, pred.predict(x, t_from), t_from, t_to, schedule)
    return x


def stage_dims(plan: ResolutionPlan) -> list[tuple[int, int, int]]:
    """Distinct stage dims of ``plan``, finest first."""
    seen = []
    for d in plan.dims:
        if d not in seen:
            seen.append(d)
    return seen


def finetune_objective(pred: DataPredictor, x0, t: float, rng: np.random.Generator,
                       schedule: NoiseSchedule, plan: ResolutionPlan | Sequence) -> float:
    """Single-sample estimate of the multi-resolution denoising loss.

    One term per resolution stage of ``plan`` (finest first); each term uses
    the orthonormally downsampled ``x0`` and its own noise draw.
    """
    x0 = as_grid(x0)
    dims_list = stage_dims(plan) if isinstance(plan, ResolutionPlan) else [tuple(d) for d in plan]
    if dims_list[0] != x0.shape:
        raise ValueError("x0 must be at the finest stage resolution")
    a, s = schedule.alpha(t), schedule.sigma(t)
    total = 0.0
    for dims in dims_list:
        x0_s = downsample(x0, x0.shape[0] // dims[0])
        eps = rng.standard_normal(dims)
        r = x0_s - pred.predict(a * x0_s + s * eps, t)
        total += float(np.sum(r * r))
    return total

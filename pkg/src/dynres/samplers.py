"""Dynamic-resolution posterior samplers.

* :func:`subdps_sample`: ancestral sampling with likelihood guidance through
  the data prediction.
* :func:`subdaps_sample`: ODE-based data estimate, Langevin refinement and
  renoising at every step.
* :func:`subdapspp_sample`: one-shot data estimate, conjugate-gradient
  refinement, thresholded switch to deterministic updates at the finest
  stage, and a model-free corrector pass over the stored trajectory.

States live at the stage dims of the :class:`~dynres.schedule.ResolutionPlan`;
``U_i`` is the orthonormal block upsampling from stage ``i`` to full
resolution and ``cross_upsample`` realises ``U_{i-1}^T U_i``.

RNG draw order (frozen, so full-dimension references can replay it):

* every sampler first draws ``x_{t_N}`` at ``dims[N]``;
* SubDPS then draws one grid at ``dims[i-1]`` per step;
* SubDAPS draws ``J`` Langevin grids at ``dims[i]`` followed by one renoising
  grid at ``dims[i-1]`` per step;
* SubDAPS++ draws one grid at ``dims[i-1]`` per step, also on deterministic
  steps where it is discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import ForwardOperator
from .priors import DataPredictor, ddim_step, solve_unconditional_ode
from .resample import cross_upsample, downsample, upsample
from .schedule import NoiseSchedule, ResolutionPlan, TimeGrid, make_resolution_plan


class NumericalAbort(ArithmeticError):
    """A sampler produced a non-finite quantity."""


@dataclass(frozen=True)
class SamplerConfig:
    """Hyperparameters shared by the samplers.

    Unset schedules are derived per step from ``noise_sigma``:
    ``r_i = r_scale * max(noise_sigma, sigma_floor)**2 / sigma_{t_i}**2``,
    ``eta_i = eta0 / (r_i + L_A)`` and ``zeta_i = zeta / ||y - A(U x_theta)||``.
    """

    J: int = 20
    tau: float = 1e-4
    noise_sigma: float = 0.05
    r_scale: float = 1.0
    sigma_floor: float = 1e-3
    eta0: float = 0.5
    zeta: float = 1.0
    corrector: bool = True
    ode_steps: int = 5
    langevin_temperature: float | None = None
    r_schedule: tuple | None = None
    eta_schedule: tuple | None = None
    zeta_schedule: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.ode_steps < 1:
            raise ValueError("ode_steps must be >= 1")
        for name in ("r_schedule", "eta_schedule", "zeta_schedule"):
            vals = getattr(self, name)
            if vals is not None:
                vals = tuple(float(v) for v in vals)
                object.__setattr__(self, name, vals)
                if name != "zeta_schedule" and any(v <= 0 for v in vals[1:]):
                    raise ValueError(f"{name} entries must be positive")

    def r(self, i: int, t: float, schedule: NoiseSchedule) -> float:
        if self.r_schedule is not None:
            return self.r_schedule[i]
        s = max(self.noise_sigma, self.sigma_floor)
        return self.r_scale * s * s / schedule.sigma(t) ** 2

    def eta(self, i: int, r: float, op: ForwardOperator) -> float:
        if self.eta_schedule is not None:
            return self.eta_schedule[i]
        return self.eta0 / (r + op.lipschitz)

    def temperature(self) -> float:
        if self.langevin_temperature is not None:
            return self.langevin_temperature
        s = max(self.noise_sigma, self.sigma_floor)
        return 2.0 * s * s


@dataclass
class Trajectory:
    """Per-index record of a sampler run (lists indexed by ``i = 0..N``)."""

    states: list
    estimates: list
    unconditional: list
    stochastic: list
    predictor_pixels: int = 0
    output: np.ndarray | None = None

    @classmethod
    def empty(cls, N: int) -> "Trajectory":
        return cls([None] * (N + 1), [None] * (N + 1), [None] * (N + 1), [None] * (N + 1))

    def deterministic_flags(self) -> list:
        return [None if s is None else not s for s in self.stochastic]


def _check_finite(name, value, i):
    if not np.all(np.isfinite(value)):
        raise NumericalAbort(f"non-finite {name} at step i={i}")


def _predict(pred, x, t, traj):
    traj.predictor_pixels += x.size
    return pred.predict(x, t)


def _check_inputs(grid: TimeGrid, plan: ResolutionPlan, op: ForwardOperator):
    if grid.N != plan.N:
        raise ValueError(f"grid has N={grid.N} but plan has N={plan.N}")
    if tuple(op.input_dims) != tuple(plan.full_dims):
        raise ValueError("operator input dims differ from the plan's full resolution")


# --------------------------------------------------------------------------
# measurement-consistency solvers
# --------------------------------------------------------------------------

def _half_neg_grad(x, x_tilde, op, y, r, factor):
    """``-0.5 * grad L`` and the residual for ``L = r||x - x~||^2 + ||y - A(Ux)||^2``."""
    ux = upsample(x, factor)
    resid = y - op.apply(ux)
    g = r * (x_tilde - x) + downsample(op.vjp(ux, resid), factor)
    return g, resid


def subspace_loss(x, x_tilde, op, y, r, factor=1) -> float:
    resid = y - op.apply(upsample(x, factor))
    return float(r * np.sum((x - x_tilde) ** 2) + np.sum(resid * resid))


def cg_refine(x_tilde, op: ForwardOperator, y, r: float, J: int, factor: int = 1,
              history: list | None = None) -> np.ndarray:
    """Minimise ``r||x - x~||^2 + ||y - A(U x)||^2`` by Fletcher-Reeves CG.

    The step length is the exact minimiser of the loss with ``A`` linearised
    along the search direction. Gradients are taken as ``-0.5 * grad L`` so
    that this step is exact on quadratics. ``history``, if given, receives
    ``(iterate, gradient)`` pairs.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if J < 1:
        raise ValueError("J must be >= 1")
    x = np.array(x_tilde, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    g, _ = _half_neg_grad(x, x_tilde, op, y, r, factor)
    d = g.copy()
    gg = float(np.sum(g * g))
    if history is not None:
        history.append((x.copy(), g.copy()))
    for _ in range(J):
        if gg < 1e-30:
            break
        omega = op.jvp(upsample(x, factor), upsample(d, factor))
        denom = r * float(np.sum(d * d)) + float(np.sum(omega * omega))
        step = float(np.sum(g * d)) / denom
        if not math.isfinite(step):
            raise NumericalAbort(f"non-finite CG step (g.d={np.sum(g * d)}, denominator={denom})")
        x = x + step * d
        g_new, _ = _half_neg_grad(x, x_tilde, op, y, r, factor)
        gg_new = float(np.sum(g_new * g_new))
        d = g_new + (gg_new / gg) * d
        g, gg = g_new, gg_new
        if history is not None:
            history.append((x.copy(), g.copy()))
    return x


def langevin_refine(x_init, x_tilde, op: ForwardOperator, y, r: float, eta: float, J: int,
                    rng: np.random.Generator | None, factor: int = 1,
                    temperature: float = 1.0) -> np.ndarray:
    """``J`` steps of ``x <- x - eta grad L + sqrt(2 eta T) z``.

    With ``T = 1`` the chain targets ``exp(-L)``; ``rng=None`` disables the
    noise (plain gradient descent). One noise grid is drawn per step.
    """
    if eta <= 0 or r <= 0:
        raise ValueError("eta and r must be positive")
    x = np.array(x_init, dtype=np.float64)
    noise_scale = math.sqrt(2.0 * eta * temperature)
    for j in range(J):
        g, _ = _half_neg_grad(x, x_tilde, op, y, r, factor)
        x = x + 2.0 * eta * g
        if rng is not None:
            x = x + noise_scale * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            loss = subspace_loss(x, x_tilde, op, y, r, factor) if np.all(np.isfinite(x)) else math.nan
            raise NumericalAbort(f"Langevin iterate diverged at j={j} (loss={loss}, eta={eta}, r={r})")
    return x


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------

def _initial_state(schedule, grid, plan, rng):
    return schedule.sigma(grid[plan.N]) * rng.standard_normal(plan.dims[plan.N])


def subdps_sample(pred: DataPredictor, op: ForwardOperator, y, schedule: NoiseSchedule,
                  grid: TimeGrid, plan: ResolutionPlan, config: SamplerConfig,
                  rng: np.random.Generator, trajectory: Trajectory | None = None) -> np.ndarray:
    """Ancestral sampling guided by ``-zeta grad_x ||y - A(U x_theta(x))||^2``;
    stage changes upsample the data estimate and inject fresh noise."""
    _check_inputs(grid, plan, op)
    N = plan.N
    traj = Trajectory.empty(N) if trajectory is None else trajectory
    y = np.asarray(y, dtype=np.float64)
    x = _initial_state(schedule, grid, plan, rng)
    traj.states[N] = x
    for i in range(N, 0, -1):
        t, s = grid[i], grid[i - 1]
        f = plan.factor(i)
        x0 = _predict(pred, x, t, traj)
        traj.unconditional[i] = traj.estimates[i] = x0
        eps = rng.standard_normal(plan.dims[i - 1])
        if plan.dims[i - 1] == plan.dims[i]:
            a_t, a_s = schedule.alpha(t), schedule.alpha(s)
            s_t, s_s = schedule.sigma(t), schedule.sigma(s)
            a_ts = a_t / a_s
            var_ts = s_t**2 - a_ts**2 * s_s**2
            mean = (a_ts * s_s**2 / s_t**2) * x + (a_s * var_ts / s_t**2) * x0
            std = math.sqrt(max(var_ts, 0.0)) * s_s / s_t
            ux0 = upsample(x0, f)
            resid = y - op.apply(ux0)
            # grad_x ||y - A(U x_theta(x))||^2
            grad = -2.0 * pred.vjp(x, t, downsample(op.vjp(ux0, resid), f))
            if config.zeta_schedule is not None:
                zeta = config.zeta_schedule[i]
            else:
                norm = float(np.linalg.norm(resid))
                zeta = config.zeta / norm if norm > 0 else 0.0
            # last step lands on the time floor noise-free; eps is still drawn
            x = mean + (std * eps if i > 1 else 0.0) - zeta * grad
            traj.stochastic[i] = True
        else:
            x = schedule.alpha(s) * cross_upsample(x0, plan.dims[i], plan.dims[i - 1]) + schedule.sigma(s) * eps
            traj.stochastic[i] = True
        _check_finite("state", x, i)
        traj.states[i - 1] = x
    traj.output = x
    return x


def subdaps_sample(pred: DataPredictor, op: ForwardOperator, y, schedule: NoiseSchedule,
                   grid: TimeGrid, plan: ResolutionPlan, config: SamplerConfig,
                   rng: np.random.Generator, trajectory: Trajectory | None = None) -> np.ndarray:
    """ODE data estimate, Langevin refinement, then ``x_{t_{i-1}} =
    alpha U_dot x0_hat + sigma eps`` at every step."""
    _check_inputs(grid, plan, op)
    N = plan.N
    traj = Trajectory.empty(N) if trajectory is None else trajectory
    y = np.asarray(y, dtype=np.float64)
    temperature = config.temperature()
    x = _initial_state(schedule, grid, plan, rng)
    traj.states[N] = x
    for i in range(N, 0, -1):
        t, s = grid[i], grid[i - 1]
        f = plan.factor(i)
        traj.predictor_pixels += config.ode_steps * x.size
        x_tilde = solve_unconditional_ode(pred, x, t, 0.0, config.ode_steps, schedule)
        r = config.r(i, t, schedule)
        eta = config.eta(i, r, op)
        x_hat = langevin_refine(x_tilde, x_tilde, op, y, r, eta, config.J, rng, f, temperature)
        traj.unconditional[i], traj.estimates[i] = x_tilde, x_hat
        eps = rng.standard_normal(plan.dims[i - 1])
        x = schedule.alpha(s) * cross_upsample(x_hat, plan.dims[i], plan.dims[i - 1]) + schedule.sigma(s) * eps
        traj.stochastic[i] = True
        _check_finite("state", x, i)
        traj.states[i - 1] = x
    traj.output = x
    return x


def corrector_integral(lam_prev: float, lam_cur: float) -> float:
    """``int_{lam_prev}^{lam_cur} e^l (l - lam_cur) dl`` via the antiderivative
    ``e^l (l - lam_cur - 1)``."""
    def F(l):
        return math.exp(l) * (l - lam_cur - 1.0)
    return F(lam_cur) - F(lam_prev)


def corrector_integral_quad(lam_prev: float, lam_cur: float) -> float:
    from scipy.integrate import quad

    val, _ = quad(lambda l: math.exp(l) * (l - lam_cur), lam_prev, lam_cur, epsabs=1e-14, epsrel=1e-13)
    return val


def corrector_pass(traj: Trajectory, schedule: NoiseSchedule, grid: TimeGrid,
                   plan: ResolutionPlan) -> np.ndarray:
    """Second-order refinement of a stored trajectory without model calls.

    Walking ``i = N..1`` from ``x^c_{t_N} = x_{t_N}`` with
    ``x0_hat^{t_0} = x_{t_0}``::

        x^c_{i-1} = (sigma_{i-1}/sigma_i) U_dot x^c_i
                    - (sigma_{i-1} alpha_i / sigma_i - alpha_{i-1}) x0_hat^{t_{i-1}}
                    - sigma_{i-1} I_i (x0_hat^{t_{i-1}} - U_dot x0_hat^{t_i}) / (lam_{i-1} - lam_i)
    """
    N = plan.N
    lam = [schedule.half_log_snr(grid[i]) for i in range(N + 1)]
    if any(lam[i - 1] <= lam[i] for i in range(1, N + 1)):
        raise ValueError("half log-SNR must be strictly decreasing along the grid")
    est = list(traj.estimates)
    est[0] = traj.states[0]
    xc = traj.states[N]
    for i in range(N, 0, -1):
        t, s = grid[i], grid[i - 1]
        a_t, a_s = schedule.alpha(t), schedule.alpha(s)
        s_t, s_s = schedule.sigma(t), schedule.sigma(s)
        up_xc = cross_upsample(xc, plan.dims[i], plan.dims[i - 1])
        up_est = cross_upsample(est[i], plan.dims[i], plan.dims[i - 1])
        integral = corrector_integral(lam[i - 1], lam[i])
        xc = ((s_s / s_t) * up_xc - (s_s * a_t / s_t - a_s) * est[i - 1]
              - s_s * integral * (est[i - 1] - up_est) / (lam[i - 1] - lam[i]))
        _check_finite("corrected state", xc, i)
    return xc


def subdapspp_sample(pred: DataPredictor, op: ForwardOperator, y, schedule: NoiseSchedule,
                     grid: TimeGrid, plan: ResolutionPlan, config: SamplerConfig,
                     rng: np.random.Generator, trajectory: Trajectory | None = None) -> np.ndarray:
    """One-shot estimate, CG refinement, thresholded renoising, corrector.

    Step ``i`` is stochastic when ``||x0_hat - x0_tilde||^2 >= tau`` or
    ``i >= plan.guard_index``; otherwise it takes the deterministic update
    ``alpha_{i-1} x0_hat + (sigma_{i-1}/sigma_i)(x_i - alpha_i x0_hat)``.
    """
    _check_inputs(grid, plan, op)
    N = plan.N
    traj = Trajectory.empty(N) if trajectory is None else trajectory
    y = np.asarray(y, dtype=np.float64)
    x = _initial_state(schedule, grid, plan, rng)
    traj.states[N] = x
    for i in range(N, 0, -1):
        t, s = grid[i], grid[i - 1]
        x_tilde = _predict(pred, x, t, traj)
        x_hat = cg_refine(x_tilde, op, y, config.r(i, t, schedule), config.J, plan.factor(i))
        traj.unconditional[i], traj.estimates[i] = x_tilde, x_hat
        gap = float(np.sum((x_hat - x_tilde) ** 2))
        eps = rng.standard_normal(plan.dims[i - 1])
        stochastic = gap >= config.tau or i >= plan.guard_index
        if stochastic:
            x = schedule.alpha(s) * cross_upsample(x_hat, plan.dims[i], plan.dims[i - 1]) + schedule.sigma(s) * eps
        else:
            x = ddim_step(x, x_hat, t, s, schedule)
        traj.stochastic[i] = stochastic
        _check_finite("state", x, i)
        traj.states[i - 1] = x
    out = corrector_pass(traj, schedule, grid, plan) if config.corrector else x
    traj.output = out
    return out


def subdaps_fpp_sample(pred: DataPredictor, op: ForwardOperator, y, schedule: NoiseSchedule,
                       grid: TimeGrid, plan: ResolutionPlan, config: SamplerConfig,
                       rng: np.random.Generator, trajectory: Trajectory | None = None) -> np.ndarray:
    """SubDAPS++ on a constant full-resolution plan."""
    full = make_resolution_plan(grid, plan.full_dims, stages=1)
    return subdapspp_sample(pred, op, y, schedule, grid, full, config, rng, trajectory)


SAMPLERS = {
    "subdps": subdps_sample,
    "subdaps": subdaps_sample,
    "subdapspp": subdapspp_sample,
    "subdaps_fpp": subdaps_fpp_sample,
}

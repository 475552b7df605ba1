"""Dynamic-resolution diffusion samplers for linear and nonlinear inverse problems."""

from .metrics import MetricReport, pixel_step_ledger, psnr, report, ssim
from .operators import (ForwardOperator, Observation, OperatorError, degrade, make_operator,
                        observation_image)
from .priors import (AnalyticPredictor, DataPredictor, GaussianPrior, MixturePrior,
                     TabulatedPredictor, score_from_predictor, solve_unconditional_ode)
from .resample import cross_downsample, cross_upsample, downsample, upsample
from .samplers import (NumericalAbort, SamplerConfig, Trajectory, cg_refine, corrector_pass,
                       langevin_refine, subdaps_fpp_sample, subdaps_sample, subdapspp_sample,
                       subdps_sample)
from .schedule import (NoiseSchedule, ResolutionPlan, ScheduleDomainError, TimeGrid,
                       make_resolution_plan, make_time_grid)

__all__ = [
    "AnalyticPredictor", "DataPredictor", "ForwardOperator", "GaussianPrior", "MetricReport",
    "MixturePrior", "NoiseSchedule", "NumericalAbort", "Observation", "OperatorError",
    "ResolutionPlan", "SamplerConfig", "ScheduleDomainError", "TabulatedPredictor", "TimeGrid",
    "Trajectory", "cg_refine", "corrector_pass", "cross_downsample", "cross_upsample", "degrade",
    "downsample", "langevin_refine", "make_operator", "make_resolution_plan", "make_time_grid",
    "observation_image", "pixel_step_ledger", "psnr", "report", "score_from_predictor",
    "solve_unconditional_ode", "ssim", "subdaps_fpp_sample", "subdaps_sample",
    "subdapspp_sample", "subdps_sample", "upsample",
]

"""Experiment harness: config files, seeded streams, image I/O and the ``restore`` CLI."""

from .config import ConfigError, ExperimentConfig, parse_config, parse_config_text
from .experiment import RunRecord, SeedFailure, emit_report, run_experiment, run_single
from .imageio import ImageFormatError, read_image, write_image
from .rng import stream

__all__ = [
    "ConfigError", "ExperimentConfig", "ImageFormatError", "RunRecord", "SeedFailure",
    "emit_report", "parse_config", "parse_config_text", "read_image", "run_experiment",
    "run_single", "stream", "write_image",
]

"""Experiment configuration.

The file format is flat ``key = value`` text with dotted section prefixes::

    # Gaussian deblurring with the default Gaussian prior
    task.kind = gaussian_blur
    prior.kind = gaussian
    sampler.name = subdapspp
    sampler.tau = 1e-4

Blank lines and ``#`` comments are ignored. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

SAMPLER_NAMES = ("subdps", "subdaps", "subdapspp", "subdaps_fpp")
TASK_KINDS = ("inpaint", "super_resolution", "gaussian_blur", "motion_blur", "hdr_clip")

#: threshold defaults per task
DEFAULT_TAU = {
    "super_resolution": 1e-5,
    "inpaint": 1e-5,
    "gaussian_blur": 1e-4,
    "motion_blur": 3e-4,
    "hdr_clip": 1e-5,
}
DEFAULT_N = 100
DEFAULT_J = 20
DEFAULT_NOISE_SIGMA = 0.05


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0..9"`` (inclusive range), ``"1,4,7"`` or a single integer."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        a, b = int(a), int(b)
        if b < a:
            raise ValueError(f"empty seed range {text!r}")
        return tuple(range(a, b + 1))
    seeds = tuple(int(s) for s in text.split(",") if s.strip())
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


# key -> (converter, default); None default means required
_FIELDS = {
    "task.kind": (str, None),
    "task.drop_ratio": (float, 0.7),
    "task.factor": (int, 4),
    "task.std": (float, None),
    "task.size": (int, 0),
    "task.gain": (float, 2.0),
    "task.seed": (int, 0),
    "prior.kind": (str, None),
    "prior.var": (float, 0.0025),
    "prior.components": (int, 3),
    "prior.seed": (int, 0),
    "sampler.name": (str, None),
    "sampler.J": (int, DEFAULT_J),
    "sampler.tau": (float, None),
    "sampler.r_scale": (float, 1.0),
    "sampler.eta0": (float, 0.5),
    "sampler.zeta": (float, 1.0),
    "sampler.corrector": (_bool, True),
    "sampler.ode_steps": (int, 5),
    "schedule.kind": (str, "ve"),
    "schedule.sigma_max": (float, 20.0),
    "schedule.beta_min": (float, 0.1),
    "schedule.beta_max": (float, 20.0),
    "schedule.spacing": (str, ""),
    "plan.N": (int, DEFAULT_N),
    "plan.stages": (int, 3),
    "plan.height": (int, 16),
    "plan.width": (int, 16),
    "plan.channels": (int, 3),
    "noise.sigma": (float, DEFAULT_NOISE_SIGMA),
    "run.seeds": (parse_seeds, (0,)),
    "run.master_seed": (int, 0),
    "run.output": (str, "restore-out"),
    "run.write_images": (_bool, True),
    "run.record_timing": (_bool, False),
    "input.image": (str, ""),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration; every key of the file format is a field here,
    with dots replaced by underscores."""

    task_kind: str
    prior_kind: str
    sampler_name: str
    task_drop_ratio: float = 0.7
    task_factor: int = 4
    task_std: float = 3.0
    task_size: int = 0
    task_gain: float = 2.0
    task_seed: int = 0
    prior_var: float = 0.0025
    prior_components: int = 3
    prior_seed: int = 0
    sampler_J: int = DEFAULT_J
    sampler_tau: float = 1e-4
    sampler_r_scale: float = 1.0
    sampler_eta0: float = 0.5
    sampler_zeta: float = 1.0
    sampler_corrector: bool = True
    sampler_ode_steps: int = 5
    schedule_kind: str = "ve"
    schedule_sigma_max: float = 20.0
    schedule_beta_min: float = 0.1
    schedule_beta_max: float = 20.0
    schedule_spacing: str = ""
    plan_N: int = DEFAULT_N
    plan_stages: int = 3
    plan_height: int = 16
    plan_width: int = 16
    plan_channels: int = 3
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    run_seeds: tuple = (0,)
    run_master_seed: int = 0
    run_output: str = "restore-out"
    run_write_images: bool = True
    run_record_timing: bool = False
    input_image: str = ""
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"task.kind: unknown task {self.task_kind!r} (expected one of {TASK_KINDS})")
        if self.prior_kind not in ("gaussian", "mixture"):
            raise ConfigError(f"prior.kind: expected gaussian or mixture, got {self.prior_kind!r}")
        if self.sampler_name not in SAMPLER_NAMES:
            raise ConfigError(f"sampler.name: unknown sampler {self.sampler_name!r} (expected one of {SAMPLER_NAMES})")
        if self.schedule_kind not in ("ve", "vp"):
            raise ConfigError(f"schedule.kind: expected ve or vp, got {self.schedule_kind!r}")
        if self.schedule_spacing not in ("", "linear", "log-snr", "polynomial"):
            raise ConfigError(f"schedule.spacing: unknown spacing {self.schedule_spacing!r}")
        if not self.run_seeds:
            raise ConfigError("run.seeds: at least one seed is required")
        if self.plan_N < 2:
            raise ConfigError("plan.N: must be >= 2")
        if self.sampler_J < 1:
            raise ConfigError("sampler.J: must be >= 1")
        if self.sampler_tau < 0:
            raise ConfigError("sampler.tau: must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise.sigma: must be >= 0")
        if self.prior_var <= 0:
            raise ConfigError("prior.var: must be > 0")

    @property
    def base_dims(self) -> tuple[int, int, int]:
        return (self.plan_height, self.plan_width, self.plan_channels)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d["run_seeds"] = list(self.run_seeds)
        # output location and seeds do not change what a single run computes
        for k in ("run_output", "run_seeds", "run_write_images", "run_record_timing"):
            d.pop(k)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        conv, _ = _FIELDS[key]
        try:
            values[key] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: field {key!r}: invalid value {value!r} ({exc})") from None
    for key, (_, default) in _FIELDS.items():
        if default is None and key not in values and key not in ("task.std", "sampler.tau"):
            raise ConfigError(f"{source}: missing required key {key!r}")
    task = values["task.kind"]
    if "sampler.tau" not in values:
        values["sampler.tau"] = DEFAULT_TAU.get(task, 1e-4)
    if "task.std" not in values:
        values["task.std"] = 0.5 if task == "motion_blur" else 3.0
    kwargs = {key.replace(".", "_"): val for key, val in values.items()}
    return ExperimentConfig(**kwargs, source=source)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config_text(text, str(path))

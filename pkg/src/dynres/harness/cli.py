"""``restore`` command line.

stdout carries only the path of the file a subcommand produced; diagnostics
go to stderr. Exit codes: 0 success, 1 configuration error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from ..metrics import pixel_step_ledger, report
from ..operators import OperatorError, degrade, observation_image
from ..samplers import NumericalAbort
from ..schedule import make_resolution_plan, make_time_grid
from .config import ConfigError, parse_config, parse_seeds
from .experiment import build_operator, build_prior, build_schedule, run_experiment
from .imageio import ImageFormatError, read_image, write_image
from .rng import stream

OUT_ENV = "RESTORE_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2

log = logging.getLogger("restore")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUT_ENV) or cfg.run_output)


def _load(args):
    cfg = parse_config(args.config)
    overrides = {}
    if getattr(args, "seeds", None):
        try:
            overrides["run_seeds"] = parse_seeds(args.seeds)
        except ValueError as exc:
            raise ConfigError(f"--seeds: {exc}") from None
    if getattr(args, "sampler", None):
        overrides["sampler_name"] = args.sampler
    if getattr(args, "stages", None) is not None:
        overrides["plan_stages"] = args.stages
    if getattr(args, "tau", None) is not None:
        overrides["sampler_tau"] = args.tau
    if getattr(args, "corrector", None) is not None:
        overrides["sampler_corrector"] = args.corrector
    try:
        return cfg.with_overrides(**overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def cmd_run(args) -> Path:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    run_experiment(cfg, out)
    return out / "report.csv"


def cmd_degrade(args) -> Path:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    prior, op = build_prior(cfg), build_operator(cfg)
    truth = (read_image(cfg.input_image) if cfg.input_image
             else prior.sample(stream(cfg.run_master_seed, args.seed, "ground_truth")))
    obs = degrade(op, truth, cfg.noise_sigma, stream(cfg.run_master_seed, args.seed, "noise"))
    stem = f"{cfg.task_kind}_s{args.seed}"
    write_image(out / f"{stem}_truth.drir", truth)
    write_image(out / f"{stem}_y.drir", obs.y)
    return write_image(out / f"{stem}_observed.{args.format}", observation_image(obs))


def cmd_metrics(args) -> Path:
    m = report(read_image(args.image), read_image(args.reference))
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("image", "reference", "psnr", "ssim", "mse"))
        writer.writerow((args.image, args.reference, repr(m.psnr), repr(m.ssim), repr(m.mse)))
    return path


def cmd_ledger(args) -> Path:
    cfg = _load(args)
    schedule = build_schedule(cfg)
    grid = make_time_grid(schedule, cfg.plan_N, cfg.schedule_spacing or None)
    plan = make_resolution_plan(grid, cfg.base_dims, cfg.plan_stages)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("i", "height", "width", "channels", "pixels"))
        for i in range(plan.N, 0, -1):
            writer.writerow((i, *plan.dims[i], plan.pixels(i)))
        writer.writerow(("total", "", "", "", pixel_step_ledger(plan, grid)))
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restore", description="Dynamic-resolution posterior sampling for image restoration.")
    parser.add_argument("-v", "--verbose", action="store_true", help="per-seed progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write report.csv")
    run.add_argument("config")
    run.add_argument("--seeds", help="inclusive range a..b or comma list")
    run.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and run.output)")
    run.add_argument("--sampler", choices=("subdps", "subdaps", "subdapspp", "subdaps_fpp"))
    run.add_argument("--stages", type=int)
    run.add_argument("--tau", type=float)
    run.add_argument("--corrector", type=_on_off, metavar="on|off")
    run.set_defaults(func=cmd_run)

    deg = sub.add_parser("degrade", help="write ground truth and observation for one seed")
    deg.add_argument("config")
    deg.add_argument("--seed", type=int, default=0)
    deg.add_argument("--out")
    deg.add_argument("--format", choices=("ppm", "drir"), default="ppm")
    deg.set_defaults(func=cmd_degrade)

    met = sub.add_parser("metrics", help="PSNR/SSIM/MSE of an image against a reference")
    met.add_argument("image")
    met.add_argument("reference")
    met.add_argument("--out", default="metrics.csv")
    met.set_defaults(func=cmd_metrics)

    led = sub.add_parser("ledger", help="per-step pixel counts of the resolution plan")
    led.add_argument("config")
    led.add_argument("--stages", type=int)
    led.add_argument("--out", default="ledger.csv")
    led.set_defaults(func=cmd_ledger)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        path = args.func(args)
    except (ConfigError, ImageFormatError, OperatorError, FileNotFoundError) as exc:
        print(f"restore: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"restore: numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

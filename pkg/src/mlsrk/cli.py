"""Command-line entry points for data generation and benchmark runs.

Subcommands:
    generate-data   synthesize an observation record for a preset model
    rates           strong/weak error-rate experiment, CSV output
    cost-mse        repeated multilevel runs over an MSE-target grid
    ml-run          one multilevel estimate, JSON output
    single-run      one single-level parameter chain, CSV output

Validation problems exit with status 1 and a message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .discretize import make_scheme
from .errors import MlsrkError
from .mcmc import ProposalKernel, pmmh_single
from .models import PRESET_NAMES, make_preset, save_dataset
from .paths import RngStream

logger = logging.getLogger(__name__)


def _parse_float_list(text):
    return tuple(float(tok) for tok in text.split(",") if tok)


def _parse_int_list(text):
    return tuple(int(tok) for tok in text.split(",") if tok)


def _parse_name_list(text):
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


def _load_config_file(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ValueError("config file must hold a JSON object")
    return payload


def _merged_config(cls, args, overrides: dict):
    """Build a config dataclass from file values overlaid with CLI flags."""
    values = dict(_load_config_file(args.config)) if args.config else {}
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    for key in ("schemes", "levels", "eps2_grid"):
        if key in values and isinstance(values[key], list):
            values[key] = tuple(values[key])
    return cls(**values)


def _cmd_generate_data(args) -> int:
    preset = make_preset(args.model)
    seed = args.seed
    if seed is None:
        seed = experiments.DATA_SEEDS[args.model]
    dataset = experiments.ensure_dataset(args.model, seed=seed,
                                         n_obs=args.n_obs)
    save_dataset(dataset, args.out)
    print(f"wrote {args.n_obs} observations for {preset.name} to {args.out}")
    return 0


def _cmd_rates(args) -> int:
    overrides = {
        "model": args.model,
        "schemes": args.schemes,
        "levels": args.levels,
        "ref_level": args.ref_level,
        "n_samples": args.samples,
        "master_seed": args.seed,
    }
    config = _merged_config(experiments.RateConfig, args, overrides)
    _, slopes = experiments.run_rate_experiment(config, args.out)
    for entry in slopes:
        print(f"{entry['scheme']}: strong slope {entry['strong_slope']:.3f}, "
              f"weak slope {entry['weak_slope']:.3f}")
    return 0


def _cmd_cost_mse(args) -> int:
    overrides = {
        "model": args.model,
        "schemes": args.schemes,
        "eps2_grid": args.eps2,
        "reps": args.reps,
        "n_particles": args.particles,
        "n_burn": args.burn,
        "l0": args.l0,
        "eps2_ref": args.eps2_ref,
        "proposal_step": args.step,
        "master_seed": args.seed,
        "engine": args.engine,
    }
    config = _merged_config(experiments.CostMseConfig, args, overrides)
    _, slopes = experiments.run_cost_mse_experiment(
        config, args.out, data_path=args.data, workers=args.workers)
    for entry in slopes:
        print(f"{entry['scheme']}: cost-vs-mse slope {entry['slope']:.3f}")
    return 0


def _cmd_ml_run(args) -> int:
    preset = make_preset(args.model)
    dataset = experiments.ensure_dataset(args.model, args.data)
    step = args.step if args.step is not None else \
        experiments.PROPOSAL_STEPS[args.model]
    result = experiments.run_ml_once(
        preset, args.scheme, args.eps2, args.burn, args.particles, args.l0,
        step, dataset, args.seed, engine=args.engine)
    Path(args.out).write_text(result.to_json())
    print(f"estimate {result.estimate!r} cost {result.cost} "
          f"wall {result.wall_s:.1f}s")
    return 0


def _cmd_single_run(args) -> int:
    preset = make_preset(args.model)
    dataset = experiments.ensure_dataset(args.model, args.data)
    step = args.step if args.step is not None else \
        experiments.PROPOSAL_STEPS[args.model]
    beta = experiments.scheme_beta(args.model, args.scheme)
    scheme = make_scheme(args.scheme, beta=beta)
    stream = RngStream(args.seed).child("single", args.level)
    chain = pmmh_single(args.level, scheme, preset.sde, preset.obs,
                        preset.prior, ProposalKernel(step=step),
                        args.particles, args.iters, dataset, stream,
                        n_burn=args.burn, engine=args.engine)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iteration", "theta", "log_nc", "accepted"))
        for it in range(chain.n_iters + 1):
            writer.writerow((it, repr(float(chain.thetas[it])),
                             repr(float(chain.log_ncs[it])),
                             int(chain.accepted[it])))
    burn = min(args.burn, chain.n_iters)
    mean = float(np.mean(chain.thetas[burn + 1:]))
    print(f"acceptance rate {chain.acceptance_rate:.3f}, "
          f"post-burn mean {mean:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlsrk",
        description="Multilevel particle MCMC benchmarks for diffusions.")
    parser.add_argument("--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_data=True):
        p.add_argument("--model", required=True, choices=sorted(PRESET_NAMES))
        p.add_argument("--out", required=True, help="output file path")
        if with_data:
            p.add_argument("--data", default=None,
                           help="observation CSV; synthesized if omitted")

    p = sub.add_parser("generate-data", help="write a synthetic dataset")
    add_common(p, with_data=False)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-obs", type=int, default=120)
    p.set_defaults(func=_cmd_generate_data)

    p = sub.add_parser("rates", help="strong/weak error-rate experiment")
    add_common(p, with_data=False)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--schemes", type=_parse_name_list, default=None,
                   help="comma-separated scheme names")
    p.add_argument("--levels", type=_parse_int_list, default=None)
    p.add_argument("--ref-level", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_rates)

    p = sub.add_parser("cost-mse", help="cost versus MSE experiment")
    add_common(p)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--schemes", type=_parse_name_list, default=None)
    p.add_argument("--eps2", type=_parse_float_list, default=None,
                   help="comma-separated MSE targets, decreasing")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--particles", type=int, default=None)
    p.add_argument("--burn", type=int, default=None)
    p.add_argument("--l0", type=int, default=None)
    p.add_argument("--eps2-ref", type=float, default=None)
    p.add_argument("--step", type=float, default=None,
                   help="proposal standard deviation")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--engine", default=None, choices=("auto", "generic", "fast"))
    p.add_argument("--workers", type=int, default=None,
                   help="parallel replicate runs (default MLSRK_WORKERS or 1)")
    p.set_defaults(func=_cmd_cost_mse)

    p = sub.add_parser("ml-run", help="one multilevel estimate")
    add_common(p)
    p.add_argument("--scheme", required=True,
                   choices=("milstein", "heun", "rk4"))
    p.add_argument("--eps2", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn", type=int, default=300)
    p.add_argument("--particles", type=int, default=120)
    p.add_argument("--l0", type=int, default=1)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--engine", default="auto",
                   choices=("auto", "generic", "fast"))
    p.set_defaults(func=_cmd_ml_run)

    p = sub.add_parser("single-run", help="one single-level parameter chain")
    add_common(p)
    p.add_argument("--scheme", required=True,
                   choices=("em", "milstein", "heun", "rk4"))
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn", type=int, default=0)
    p.add_argument("--particles", type=int, default=120)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--engine", default="auto",
                   choices=("auto", "generic", "fast"))
    p.set_defaults(func=_cmd_single_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (MlsrkError, ValueError, TypeError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

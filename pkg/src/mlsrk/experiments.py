"""Benchmark experiments: discretization error rates and cost versus MSE.

Two experiment families are provided.  ``run_rate_experiment`` measures
strong and weak errors of the time-stepping schemes against a common
high-resolution reference path on a single unit interval.
``run_cost_mse_experiment`` runs repeated multilevel estimates over a grid
of MSE targets and records the empirical MSE against a stored high-accuracy
reference value, together with the deterministic cost of each run.

Both runners write plain CSV files with trailing ``config_hash`` and
``seed`` provenance columns, plus a ``*_slopes.csv`` sidecar containing
least-squares slope fits.  All floats are serialized with ``repr`` so the
outputs are byte-stable for a fixed configuration and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .discretize import DEFAULT_BETA, Scheme, batch_interval, make_scheme
from .errors import ConfigError
from .models import (
    ModelPreset,
    PRESET_NAMES,
    SdeModel,
    generate_data,
    load_dataset,
    make_preset,
)
from .mcmc import ProposalKernel
from .multilevel import MlResult, allocate, cost, ml_estimate, phi_theta
from .paths import RngStream, derive_seed

logger = logging.getLogger(__name__)

# Default seeds for the synthetic observation records of each model.
DATA_SEEDS = {"gbm1d": 1001, "gbm3d": 1002, "nonlinear2d": 1003}

# Level and scheme used to synthesize observation data.
DATA_LEVEL = 12
DATA_SCHEME = "rk4"

# Random-walk proposal standard deviations, tuned per model by pilot
# chains.  With 120 particles the multivariate models are limited by the
# likelihood-estimate variance, so the steps minimize the autocorrelation
# time rather than targeting a fixed acceptance rate.
PROPOSAL_STEPS = {"gbm1d": 0.4, "gbm3d": 0.3, "nonlinear2d": 0.4}

# Models whose weight functions decay too fast for the nominal strong
# order to carry over to the particle-filter coupling; the allocation
# order is capped at 2 for these.
BETA_CAPS = {"nonlinear2d": 2}

RATE_CSV_FIELDS = ("scheme", "level", "strong_err", "weak_err", "n",
                   "config_hash", "seed")
RATE_SLOPE_FIELDS = ("scheme", "strong_slope", "weak_slope", "n", "wall_s",
                     "config_hash", "seed")
COST_CSV_FIELDS = ("scheme", "eps2", "mse", "cost", "wall_s", "n_reps",
                   "config_hash", "seed")
COST_SLOPE_FIELDS = ("scheme", "slope", "n_points", "config_hash", "seed")
REP_CSV_FIELDS = ("scheme", "eps2", "rep", "estimate", "wall_s", "seed")


def stable_hash(payload) -> str:
    """Short hash of a JSON-serializable payload, for provenance columns."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _fmt(value) -> str:
    """Format a cell for CSV output; floats use repr for byte stability."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_fmt(row[name]) for name in fields])


def scheme_beta(model_name: str, scheme_name: str) -> int:
    """Allocation order for a scheme, with per-model caps applied."""
    beta = DEFAULT_BETA[scheme_name]
    cap = BETA_CAPS.get(model_name)
    if cap is not None:
        beta = min(beta, cap)
    return beta


def ensure_dataset(model_name: str, data_path=None, seed: Optional[int] = None,
                   n_obs: int = 120):
    """Load a dataset from ``data_path`` or synthesize the default one."""
    if data_path is not None:
        return load_dataset(data_path)
    preset = make_preset(model_name)
    if seed is None:
        seed = DATA_SEEDS[model_name]
    return generate_data(preset.sde, preset.obs, preset.theta_star, n_obs,
                         gen_level=DATA_LEVEL, seed=seed,
                         scheme_name=DATA_SCHEME)


# ---------------------------------------------------------------------------
# Error-rate experiment


@dataclass(frozen=True)
class RateConfig:
    """Settings for the strong/weak error-rate experiment.

    Attributes:
        model: Preset model name.
        schemes: Scheme names to measure.
        levels: Discretization levels to compare against the reference.
        ref_level: Level of the common reference path.
        n_samples: Number of independent Brownian paths.
        master_seed: Seed for the path draws.
        batch: Paths simulated per vectorized batch.
    """

    model: str
    schemes: tuple = ("em", "milstein", "heun", "rk4")
    levels: tuple = (3, 4, 5, 6, 7, 8)
    ref_level: int = 12
    n_samples: int = 10000
    master_seed: int = 0
    batch: int = 500

    def __post_init__(self):
        if self.model not in PRESET_NAMES:
            raise ConfigError(f"unknown model {self.model!r}")
        for name in self.schemes:
            if name not in DEFAULT_BETA:
                raise ConfigError(f"unknown scheme {name!r}")
        if "milstein" in self.schemes and make_preset(self.model).sde.dim != 1:
            raise ConfigError("milstein requires a one-dimensional model")
        levels = tuple(self.levels)
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("levels must be strictly increasing")
        if levels[-1] >= self.ref_level:
            raise ConfigError("levels must all be below ref_level")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be at least 2")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "schemes": list(self.schemes),
            "levels": list(self.levels),
            "ref_level": self.ref_level,
            "n_samples": self.n_samples,
            "master_seed": self.master_seed,
        }


def measure_rates(model: SdeModel, theta, schemes: Sequence[Scheme],
                  stream: RngStream, levels: Sequence[int] = (3, 4, 5, 6, 7, 8),
                  ref_level: int = 12, n_samples: int = 10000,
                  batch: int = 500, ref_scheme: Optional[Scheme] = None):
    """Measure strong and weak errors of schemes on a unit time interval.

    All schemes and levels share Brownian paths: increments are drawn at
    ``ref_level`` and pairwise-summed down to each coarser level.  The
    reference trajectory uses ``ref_scheme`` (fourth-order by default) at
    ``ref_level``, which leaves its own discretization error negligible
    next to the levels under test.

    Returns:
        (rows, slopes): lists of per-(scheme, level) dicts with mean squared
        error ``strong_err`` and mean-difference norm ``weak_err``, and
        per-scheme least-squares slope fits of log2 error against level.
    """
    if ref_scheme is None:
        ref_scheme = make_scheme("rk4")
    levels = sorted(levels)
    names = [s.name for s in schemes]
    d = model.dim
    h_ref = 2.0 ** (-ref_level)
    acc_sq = {(nm, l): 0.0 for nm in names for l in levels}
    acc_diff = {(nm, l): np.zeros(d) for nm in names for l in levels}

    rng = stream.generator()
    done = 0
    while done < n_samples:
        nb = min(batch, n_samples - done)
        x0 = np.broadcast_to(model.x0, (nb, d))
        dws = rng.standard_normal((2 ** ref_level, nb, d)) * np.sqrt(h_ref)
        x_ref = batch_interval(ref_scheme, model, theta, x0, dws, h_ref)
        coarse = {}
        c = dws
        for l in range(ref_level - 1, levels[0] - 1, -1):
            c = c[0::2] + c[1::2]
            if l in levels:
                coarse[l] = c
        if ref_level in levels:
            coarse[ref_level] = dws
        for scheme in schemes:
            for l in levels:
                x_l = batch_interval(scheme, model, theta, x0, coarse[l],
                                     2.0 ** (-l))
                diff = x_l - x_ref
                acc_sq[(scheme.name, l)] += float(np.sum(diff * diff))
                acc_diff[(scheme.name, l)] += diff.sum(axis=0)
        done += nb

    rows = []
    for nm in names:
        for l in levels:
            rows.append({
                "scheme": nm,
                "level": l,
                "strong_err": acc_sq[(nm, l)] / n_samples,
                "weak_err": float(np.linalg.norm(acc_diff[(nm, l)] / n_samples)),
                "n": n_samples,
            })
    slopes = []
    arr_levels = np.asarray(levels, dtype=float)
    for nm in names:
        strong = np.array([acc_sq[(nm, l)] / n_samples for l in levels])
        weak = np.array([np.linalg.norm(acc_diff[(nm, l)] / n_samples)
                         for l in levels])
        entry = {"scheme": nm, "n": n_samples}
        for label, err in (("strong_slope", strong), ("weak_slope", weak)):
            if np.all(err > 0.0):
                entry[label] = float(-np.polyfit(arr_levels, np.log2(err), 1)[0])
            else:
                entry[label] = float("nan")
        slopes.append(entry)
    return rows, slopes


def run_rate_experiment(config: RateConfig, out_path):
    """Run the error-rate experiment and write its CSV outputs.

    Writes ``out_path`` with one row per (scheme, level) and a sidecar
    ``<stem>_slopes.csv`` with per-scheme slope fits.

    Returns:
        (rows, slopes) as produced by ``measure_rates``.
    """
    out_path = Path(out_path)
    preset = make_preset(config.model)
    schemes = [make_scheme(nm) for nm in config.schemes]
    stream = RngStream(config.master_seed).child("rates", config.model)
    t0 = time.perf_counter()
    rows, slopes = measure_rates(preset.sde, preset.theta_star, schemes,
                                 stream, levels=config.levels,
                                 ref_level=config.ref_level,
                                 n_samples=config.n_samples,
                                 batch=config.batch)
    elapsed = time.perf_counter() - t0
    tag = stable_hash(config.to_dict())
    for row in rows + slopes:
        row["config_hash"] = tag
        row["seed"] = config.master_seed
    for entry in slopes:
        entry["wall_s"] = elapsed
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out_path, RATE_CSV_FIELDS, rows)
    slope_path = out_path.with_name(out_path.stem + "_slopes.csv")
    _write_csv(slope_path, RATE_SLOPE_FIELDS, slopes)
    return rows, slopes


# ---------------------------------------------------------------------------
# Cost versus MSE experiment


@dataclass(frozen=True)
class CostMseConfig:
    """Settings for the repeated multilevel cost-versus-MSE experiment.

    Attributes:
        model: Preset model name.
        schemes: Scheme names to sweep (allocation requires order >= 2,
            so "em" is not accepted here).
        eps2_grid: Target mean squared errors, strictly decreasing.
        reps: Independent replicate runs per grid point.
        n_particles: Particles per filter.
        n_burn: Discarded burn-in records per chain.
        l0: Coarsest discretization level.
        eps2_ref: Target for the stored reference estimate.
        proposal_step: Random-walk proposal scale; model default if None.
        master_seed: Root seed; every replicate derives its own seed.
        engine: Filter engine selector passed through to the runs.
    """

    model: str
    schemes: tuple = ("heun", "rk4")
    eps2_grid: tuple = (2e-2, 2e-3, 2e-4, 2e-5)
    reps: int = 20
    n_particles: int = 120
    n_burn: int = 300
    l0: int = 1
    eps2_ref: float = 5e-6
    proposal_step: Optional[float] = None
    master_seed: int = 0
    engine: str = "auto"

    def __post_init__(self):
        if self.model not in PRESET_NAMES:
            raise ConfigError(f"unknown model {self.model!r}")
        dim = make_preset(self.model).sde.dim
        for name in self.schemes:
            if name not in DEFAULT_BETA:
                raise ConfigError(f"unknown scheme {name!r}")
            if scheme_beta(self.model, name) < 2:
                raise ConfigError(
                    f"scheme {name!r} has allocation order below 2 and "
                    "cannot be used in the cost experiment")
            if name == "milstein" and dim != 1:
                raise ConfigError("milstein requires a one-dimensional model")
        grid = tuple(float(e) for e in self.eps2_grid)
        if any(e <= 0.0 for e in grid):
            raise ConfigError("eps2_grid entries must be positive")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("eps2_grid must be strictly decreasing")
        if self.eps2_ref >= grid[-1]:
            raise ConfigError("eps2_ref must be below the smallest target")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")

    @property
    def step(self) -> float:
        if self.proposal_step is not None:
            return self.proposal_step
        return PROPOSAL_STEPS[self.model]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "schemes": list(self.schemes),
            "eps2_grid": [float(e) for e in self.eps2_grid],
            "reps": self.reps,
            "n_particles": self.n_particles,
            "n_burn": self.n_burn,
            "l0": self.l0,
            "eps2_ref": self.eps2_ref,
            "proposal_step": self.step,
            "master_seed": self.master_seed,
        }


def run_ml_once(preset: ModelPreset, scheme_name: str, eps2: float,
                n_burn: int, n_particles: int, l0: int, step: float,
                dataset, seed: int, engine: str = "auto") -> MlResult:
    """One multilevel estimate of the posterior drift-parameter mean."""
    beta = scheme_beta(preset.name, scheme_name)
    config = allocate(np.sqrt(eps2), beta, l0=l0, n_burn=n_burn,
                      n_particles=n_particles, master_seed=seed)
    scheme = make_scheme(scheme_name, beta=beta)
    proposal = ProposalKernel(step=step)
    return ml_estimate(config, scheme, preset.sde, preset.obs, preset.prior,
                       proposal, dataset, phi_theta, engine=engine,
                       preset_name=preset.name)


def _cost_rep_task(args):
    """Single replicate run, picklable for process pools."""
    (model_name, scheme_name, eps2, n_burn, n_particles, l0, step,
     dataset, seed, engine) = args
    preset = make_preset(model_name)
    result = run_ml_once(preset, scheme_name, eps2, n_burn, n_particles,
                         l0, step, dataset, seed, engine=engine)
    return result.estimate, result.wall_s


def _reference_estimate(config: CostMseConfig, scheme_name: str, dataset,
                        ref_dir: Path) -> float:
    """Load or compute the stored high-accuracy reference estimate."""
    ref_dir.mkdir(parents=True, exist_ok=True)
    path = ref_dir / f"reference_{config.model}_{scheme_name}.json"
    if path.exists():
        return MlResult.from_json(path.read_text()).estimate
    logger.info("computing reference for %s/%s at eps2=%g",
                config.model, scheme_name, config.eps2_ref)
    preset = make_preset(config.model)
    seed = derive_seed(config.master_seed, "reference", scheme_name)
    result = run_ml_once(preset, scheme_name, config.eps2_ref, config.n_burn,
                         config.n_particles, config.l0, config.step, dataset,
                         seed, engine=config.engine)
    path.write_text(result.to_json())
    return result.estimate


def run_cost_mse_experiment(config: CostMseConfig, out_path, data_path=None,
                            workers: Optional[int] = None):
    """Sweep MSE targets, writing cost/MSE rows as each cell completes.

    For each scheme a reference estimate is computed once at a much
    smaller target and cached as JSON under ``references/`` next to the
    output file; replicate estimates at every grid point are then scored
    against it.  ``out_path`` gains one row per (scheme, eps2) cell, a
    ``<stem>_slopes.csv`` sidecar holds the fitted log-cost versus
    log-MSE slope per scheme, and ``<stem>_reps.csv`` records every
    replicate estimate.

    Replicates are independent runs with seeds derived from the master
    seed, so results do not depend on ``workers``.
    """
    if workers is None:
        workers = int(os.environ.get("MLSRK_WORKERS", "1"))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    dataset = ensure_dataset(config.model, data_path)
    tag = stable_hash({**config.to_dict(), "data_seed": dataset.seed})

    rows = []
    rep_rows = []
    slope_rows = []
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COST_CSV_FIELDS)
        fh.flush()
        for scheme_name in config.schemes:
            ref_est = _reference_estimate(config, scheme_name, dataset,
                                          out_path.parent / "references")
            cell_mses = []
            cell_costs = []
            for i, eps2 in enumerate(config.eps2_grid):
                beta = scheme_beta(config.model, scheme_name)
                run_cost = cost(allocate(np.sqrt(eps2), beta, l0=config.l0,
                                         n_burn=config.n_burn,
                                         n_particles=config.n_particles))
                seeds = [derive_seed(config.master_seed, "cell", scheme_name,
                                     i, r) for r in range(config.reps)]
                tasks = [(config.model, scheme_name, eps2, config.n_burn,
                          config.n_particles, config.l0, config.step,
                          dataset, s, config.engine) for s in seeds]
                t0 = time.perf_counter()
                if workers > 1:
                    with ProcessPoolExecutor(max_workers=workers) as pool:
                        outcomes = list(pool.map(_cost_rep_task, tasks))
                else:
                    outcomes = [_cost_rep_task(t) for t in tasks]
                elapsed = time.perf_counter() - t0
                estimates = np.array([est for est, _ in outcomes])
                mse = float(np.mean((estimates - ref_est) ** 2))
                row = {"scheme": scheme_name, "eps2": eps2, "mse": mse,
                       "cost": run_cost,
                       "wall_s": elapsed / config.reps,
                       "n_reps": config.reps, "config_hash": tag,
                       "seed": config.master_seed}
                rows.append(row)
                writer.writerow([_fmt(row[name]) for name in COST_CSV_FIELDS])
                fh.flush()
                logger.info("%s/%s eps2=%g mse=%.3e cost=%d",
                            config.model, scheme_name, eps2, mse, run_cost)
                for r, ((est, wall), s) in enumerate(zip(outcomes, seeds)):
                    rep_rows.append({"scheme": scheme_name, "eps2": eps2,
                                     "rep": r, "estimate": est,
                                     "wall_s": wall, "seed": s})
                cell_mses.append(mse)
                cell_costs.append(run_cost)
            fit = np.polyfit(np.log(cell_mses), np.log(cell_costs), 1)
            slope_rows.append({"scheme": scheme_name, "slope": float(fit[0]),
                               "n_points": len(cell_mses),
                               "config_hash": tag,
                               "seed": config.master_seed})
    _write_csv(out_path.with_name(out_path.stem + "_reps.csv"),
               REP_CSV_FIELDS, rep_rows)
    _write_csv(out_path.with_name(out_path.stem + "_slopes.csv"),
               COST_SLOPE_FIELDS, slope_rows)
    return rows, slope_rows

"""Multilevel estimator: importance weights, increments, allocation, cost.

The posterior expectation at the finest level L is decomposed into a base
term at the coarsest level l0 plus a telescoping sum of level increments.
The base term is a single-level PMMH average; each increment comes from a
coupled PMMH chain via the self-normalized difference

    sum phi(fine) H1 / sum H1  -  sum phi(coarse) H2 / sum H2

over post-burn-in records, where H1 = prod_k g(y_k | fine_k) / g_check_k and
H2 is the coarse analog.  Both weights live in (0, 1] because g_check is the
pairwise max.

Allocation follows the rate-based rule: L = ceil(2 |log2 eps| / beta) and
N_l = ceil(2 eps^-2 K_L Delta_l^((beta+1)/2)) + N_burn with Delta_l = 2^-l
and K_L = sum_l Delta_l^((beta-1)/2); cost = sum (N_l - N_burn) Delta_l^-1.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .discretize import Scheme
from .errors import EpsilonTooLargeError
from .filters import log_g_trajectory
from .mcmc import ChainOutput, ProposalKernel, pmmh_coupled, pmmh_single
from .models import Dataset, ObservationModel, Prior, SdeModel
from .paths import RngStream


@dataclass(frozen=True)
class MlConfig:
    """Full allocation for one multilevel run."""

    eps: float
    beta: int
    l0: int
    level_max: int
    n_per_level: dict
    n_particles: int
    n_burn: int
    k_const: float
    master_seed: int

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.l0 > self.level_max:
            raise ValueError("l0 must not exceed the finest level")
        for l in range(self.l0, self.level_max + 1):
            if l not in self.n_per_level:
                raise ValueError(f"missing sample count for level {l}")
            if self.n_per_level[l] <= self.n_burn:
                raise ValueError(f"N_{l} must exceed the burn-in")

    def to_dict(self):
        return {"eps": self.eps, "beta": self.beta, "l0": self.l0,
                "level_max": self.level_max,
                "n_per_level": {str(l): int(n) for l, n in self.n_per_level.items()},
                "n_particles": self.n_particles, "n_burn": self.n_burn,
                "k_const": self.k_const, "master_seed": self.master_seed}


@dataclass
class MlResult:
    """Outcome of one multilevel run."""

    estimate: float
    base_estimate: float
    increments: dict
    cost: float
    wall_s: float
    config: MlConfig
    acceptance_rates: dict = field(default_factory=dict)

    def to_json(self):
        payload = {"estimate": self.estimate, "base_estimate": self.base_estimate,
                   "increments": {str(l): v for l, v in self.increments.items()},
                   "cost": self.cost, "wall_s": self.wall_s,
                   "acceptance_rates": {str(l): v for l, v in
                                        self.acceptance_rates.items()},
                   "config": self.config.to_dict()}
        return json.dumps(payload, indent=2)

    @staticmethod
    def from_json(text):
        obj = json.loads(text)
        cfg = obj["config"]
        config = MlConfig(eps=cfg["eps"], beta=cfg["beta"], l0=cfg["l0"],
                          level_max=cfg["level_max"],
                          n_per_level={int(l): n for l, n in
                                       cfg["n_per_level"].items()},
                          n_particles=cfg["n_particles"], n_burn=cfg["n_burn"],
                          k_const=cfg["k_const"], master_seed=cfg["master_seed"])
        return MlResult(estimate=obj["estimate"],
                        base_estimate=obj["base_estimate"],
                        increments={int(l): v for l, v in obj["increments"].items()},
                        cost=obj["cost"], wall_s=obj["wall_s"], config=config,
                        acceptance_rates={int(l): v for l, v in
                                          obj["acceptance_rates"].items()})


def h_weights(coupled_trajectory, theta, obs_model: ObservationModel,
              dataset: Dataset):
    """Importance weights (H1, H2) of one coupled trajectory.

    Args:
        coupled_trajectory: (fine, coarse) pair of (K, d) state arrays.

    Returns:
        (H1, H2), each in (0, 1], computed in log space; at every
        observation at least one of the per-step factors equals 1.
    """
    traj_f, traj_c = coupled_trajectory
    lg_f = log_g_trajectory(obs_model, theta, traj_f, dataset)
    lg_c = log_g_trajectory(obs_model, theta, traj_c, dataset)
    lg_max = np.maximum(lg_f, lg_c)
    return float(np.exp(np.sum(lg_f - lg_max))), float(np.exp(np.sum(lg_c - lg_max)))


def increment_estimate(chain: ChainOutput, phi: Callable) -> float:
    """Self-normalized level increment from one coupled chain.

    Args:
        chain: coupled ChainOutput with stored H1/H2 weights.
        phi: function (trajectory (K, d), theta) -> float.

    Returns:
        The H1-weighted fine average minus the H2-weighted coarse average
        over records n_burn+1 .. N.
    """
    if not chain.coupled:
        raise ValueError("increment_estimate requires a coupled chain")
    lo = chain.n_burn + 1
    if lo > chain.n_iters:
        raise ValueError("no records remain after burn-in")
    sel = slice(lo, chain.n_iters + 1)
    h1 = chain.h1[sel]
    h2 = chain.h2[sel]
    phi_f = np.array([phi(traj[0], th) for traj, th in
                      zip(chain.trajectories[sel], chain.thetas[sel])])
    phi_c = np.array([phi(traj[1], th) for traj, th in
                      zip(chain.trajectories[sel], chain.thetas[sel])])
    return float(np.sum(phi_f * h1) / np.sum(h1)
                 - np.sum(phi_c * h2) / np.sum(h2))


def allocate(eps, beta, l0=1, n_burn=0, n_particles=120, master_seed=0) -> MlConfig:
    """Level range and per-level sample counts for a target accuracy.

    Args:
        eps: target root MSE, in (0, 1).
        beta: strong rate of the scheme, >= 2.
        l0: coarsest level.
        n_burn: per-level burn-in added on top of the allocated samples.

    Returns:
        MlConfig with L = ceil(2 |log2 eps| / beta) and the rate-based N_l.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if beta < 2:
        raise ValueError("allocation requires beta >= 2")
    level_max = int(np.ceil(2.0 * abs(np.log2(eps)) / beta))
    if level_max < l0:
        raise EpsilonTooLargeError(
            f"target eps = {eps} gives finest level {level_max} below l0 = {l0}")
    levels = range(l0, level_max + 1)
    k_const = float(sum((2.0 ** -l) ** ((beta - 1) / 2.0) for l in levels))
    n_per_level = {
        l: int(np.ceil(2.0 * eps**-2 * k_const * (2.0 ** -l) ** ((beta + 1) / 2.0)))
        + n_burn
        for l in levels
    }
    return MlConfig(eps=float(eps), beta=int(beta), l0=l0, level_max=level_max,
                    n_per_level=n_per_level, n_particles=n_particles,
                    n_burn=n_burn, k_const=k_const, master_seed=master_seed)


def cost(config: MlConfig) -> float:
    """Theoretical cost sum_l (N_l - N_burn) Delta_l^-1."""
    return float(sum((config.n_per_level[l] - config.n_burn) * 2.0 ** l
                     for l in range(config.l0, config.level_max + 1)))


def _base_estimate(chain: ChainOutput, phi):
    sel = slice(chain.n_burn + 1, chain.n_iters + 1)
    vals = [phi(traj, th) for traj, th in
            zip(chain.trajectories[sel], chain.thetas[sel])]
    return float(np.mean(vals))


def _run_base_level(config, scheme, model, obs_model, prior, proposal, dataset,
                    phi, engine):
    stream = RngStream(config.master_seed).child("level", config.l0)
    chain = pmmh_single(config.l0, scheme, model, obs_model, prior, proposal,
                        config.n_particles, config.n_per_level[config.l0],
                        dataset, stream, n_burn=config.n_burn, engine=engine)
    return _base_estimate(chain, phi), chain.acceptance_rate


def _run_increment_level(level, config, scheme, model, obs_model, prior,
                         proposal, dataset, phi, engine):
    stream = RngStream(config.master_seed).child("level", level)
    chain = pmmh_coupled(level, scheme, model, obs_model, prior, proposal,
                         config.n_particles, config.n_per_level[level],
                         dataset, stream, n_burn=config.n_burn, engine=engine)
    return increment_estimate(chain, phi), chain.acceptance_rate


def _level_task(args):
    from .models import make_preset
    (level, is_base, config, scheme_name, beta, preset_name, dataset, phi_name,
     proposal_step, engine) = args
    from .discretize import make_scheme
    preset = make_preset(preset_name)
    scheme = make_scheme(scheme_name, beta=beta)
    proposal = ProposalKernel(proposal_step)
    phi = NAMED_PHIS[phi_name]
    if is_base:
        return level, _run_base_level(config, scheme, preset.sde, preset.obs,
                                      preset.prior, proposal, dataset, phi, engine)
    return level, _run_increment_level(level, config, scheme, preset.sde,
                                       preset.obs, preset.prior, proposal,
                                       dataset, phi, engine)


def phi_theta(trajectory, theta):
    """The benchmark functional phi(x, theta) = theta."""
    return theta


NAMED_PHIS = {"theta": phi_theta}


def ml_estimate(config: MlConfig, scheme: Scheme, model: SdeModel,
                obs_model: ObservationModel, prior: Prior,
                proposal: ProposalKernel, dataset: Dataset, phi: Callable,
                engine="auto", workers: Optional[int] = None,
                preset_name: Optional[str] = None) -> MlResult:
    """Run the full multilevel estimator for one allocation.

    Runs a single-level chain at l0 and an independent coupled chain per
    level l0+1..L, each with its own derived stream, then combines the base
    average with the telescoping increments.  Levels are independent; with
    workers > 1 and a named preset model they run in separate processes
    (results are identical for any worker count by construction of the
    streams).

    Returns:
        MlResult with the estimate, per-level increments, the exact
        theoretical cost, and wall time.
    """
    start = time.perf_counter()
    if workers is None:
        workers = int(os.environ.get("MLSRK_WORKERS", "1"))
    levels = list(range(config.l0, config.level_max + 1))

    phi_name = getattr(phi, "__name__", None)
    parallel_ok = (workers > 1 and preset_name is not None
                   and phi_name in NAMED_PHIS)
    increments = {}
    acc_rates = {}
    if parallel_ok:
        from concurrent.futures import ProcessPoolExecutor
        tasks = [(l, l == config.l0, config, scheme.name, scheme.beta,
                  preset_name, dataset, phi_name, proposal.step, engine)
                 for l in levels]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_level_task, tasks))
        base, base_acc = results[config.l0]
        acc_rates[config.l0] = base_acc
        for l in levels[1:]:
            increments[l], acc_rates[l] = results[l]
    else:
        base, acc_rates[config.l0] = _run_base_level(
            config, scheme, model, obs_model, prior, proposal, dataset, phi,
            engine)
        for l in levels[1:]:
            increments[l], acc_rates[l] = _run_increment_level(
                l, config, scheme, model, obs_model, prior, proposal, dataset,
                phi, engine)

    estimate = base + sum(increments.values())
    wall = time.perf_counter() - start
    return MlResult(estimate=estimate, base_estimate=base,
                    increments=increments, cost=cost(config), wall_s=wall,
                    config=config, acceptance_rates=acc_rates)

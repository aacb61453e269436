"""Particle-marginal Metropolis-Hastings at a single level and for coupled pairs.

Each proposal runs a fresh particle filter whose unbiased normalizing
constant replaces an intractable likelihood in the Metropolis ratio

    R = log pi(theta') - log pi(theta) + log_nc' - log_nc

(the Gaussian random walk proposal is symmetric, so no proposal correction).
On acceptance the parameter, the selected trajectory and the normalizing
constant are all replaced; on rejection all three are retained.

The coupled variant runs the delta particle filter and additionally records
the per-iteration importance weights H1, H2 of the selected coupled
trajectory, which the multilevel increment estimator consumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .discretize import Scheme
from .errors import FilterCollapseError
from .filters import delta_particle_filter, log_g_trajectory, particle_filter
from .models import Dataset, ObservationModel, Prior, SdeModel
from .paths import RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProposalKernel:
    """Symmetric Gaussian random walk on theta.

    step = 0 is allowed as a degenerate diagnostic mode (the chain never
    moves); any negative value is rejected.
    """

    step: float

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("proposal step must be >= 0")

    def propose(self, theta, rng):
        return theta + self.step * rng.standard_normal()


@dataclass
class ChainOutput:
    """Record arrays of one PMMH chain, iterations 0..N.

    trajectories has shape (N+1, K, d) for single-level chains and
    (N+1, 2, K, d) for coupled chains (fine leg first).  h1/h2 are the
    per-record importance weights of coupled chains, None otherwise.
    """

    level: int
    thetas: np.ndarray
    log_ncs: np.ndarray
    trajectories: np.ndarray
    accepted: np.ndarray
    n_iters: int
    n_burn: int = 0
    coupled: bool = False
    h1: Optional[np.ndarray] = None
    h2: Optional[np.ndarray] = None

    @property
    def acceptance_count(self):
        return int(np.sum(self.accepted))

    @property
    def acceptance_rate(self):
        return self.acceptance_count / max(self.n_iters, 1)


def _h_pair(obs_model, theta, traj_fine, traj_coarse, dataset):
    lg_f = log_g_trajectory(obs_model, theta, traj_fine, dataset)
    lg_c = log_g_trajectory(obs_model, theta, traj_coarse, dataset)
    lg_max = np.maximum(lg_f, lg_c)
    return float(np.exp(np.sum(lg_f - lg_max))), float(np.exp(np.sum(lg_c - lg_max)))


def _run_chain(prior, proposal, n_iters, stream, estimator, pack):
    """Shared Metropolis loop; estimator(theta, iteration) -> (payload, log_nc)."""
    chain_rng = stream.child("chain").generator()
    thetas = np.empty(n_iters + 1)
    log_ncs = np.empty(n_iters + 1)
    accepted = np.zeros(n_iters + 1, dtype=bool)

    theta = prior.sample(chain_rng)
    payload, log_nc = estimator(theta, 0)
    thetas[0] = theta
    log_ncs[0] = log_nc
    first = np.asarray(pack(payload))
    trajectories = np.empty((n_iters + 1,) + first.shape)
    trajectories[0] = first

    for it in range(1, n_iters + 1):
        theta_prop = proposal.propose(theta, chain_rng)
        try:
            payload_prop, log_nc_prop = estimator(theta_prop, it)
        except FilterCollapseError as err:
            logger.warning("filter collapse at iteration %d (%s); proposal rejected",
                           it, err)
            thetas[it] = theta
            log_ncs[it] = log_nc
            trajectories[it] = trajectories[it - 1]
            continue
        ratio = (prior.log_pdf(theta_prop) - prior.log_pdf(theta)
                 + log_nc_prop - log_nc)
        if np.log(chain_rng.random()) < ratio:
            theta = theta_prop
            log_nc = log_nc_prop
            payload = payload_prop
            accepted[it] = True
            trajectories[it] = pack(payload)
        else:
            trajectories[it] = trajectories[it - 1]
        thetas[it] = theta
        log_ncs[it] = log_nc
    return thetas, log_ncs, trajectories, accepted


def pmmh_single(level, scheme: Scheme, model: SdeModel,
                obs_model: ObservationModel, prior: Prior,
                proposal: ProposalKernel, n_particles, n_iters,
                dataset: Dataset, stream: RngStream, n_burn=0,
                nc_estimator: Optional[Callable] = None,
                engine="auto") -> ChainOutput:
    """PMMH chain targeting the level-l posterior.

    Args:
        level: discretization level of the particle filter.
        n_iters: number of Metropolis iterations N (the chain has N+1 records).
        stream: stream key; sub-keys "chain" and ("pf", iteration) are derived.
        n_burn: stored on the output for downstream estimators.
        nc_estimator: optional override (theta, iteration) -> (trajectory,
            log_nc), used by tests with exact likelihood stubs.

    Returns:
        ChainOutput with per-iteration theta, trajectory and log_nc.
    """
    if nc_estimator is None:
        def nc_estimator(theta, iteration):
            return particle_filter(scheme, model, obs_model, theta, level,
                                   n_particles, dataset,
                                   stream.child("pf", iteration), engine=engine)

    thetas, log_ncs, trajs, accepted = _run_chain(
        prior, proposal, n_iters, stream, nc_estimator, lambda p: np.asarray(p))
    return ChainOutput(level=level, thetas=thetas, log_ncs=log_ncs,
                       trajectories=trajs, accepted=accepted,
                       n_iters=n_iters, n_burn=n_burn, coupled=False)


def pmmh_coupled(level, scheme: Scheme, model: SdeModel,
                 obs_model: ObservationModel, prior: Prior,
                 proposal: ProposalKernel, n_particles, n_iters,
                 dataset: Dataset, stream: RngStream, n_burn=0,
                 nc_estimator: Optional[Callable] = None,
                 engine="auto") -> ChainOutput:
    """PMMH chain targeting the coupled level-(l, l-1) posterior.

    Same contract as pmmh_single with the delta particle filter supplying the
    normalizing constant; records both trajectory legs and their H1/H2
    weights.
    """
    if level < 1:
        raise ValueError("coupled chain requires level >= 1")
    if nc_estimator is None:
        def nc_estimator(theta, iteration):
            return delta_particle_filter(scheme, model, obs_model, theta, level,
                                         n_particles, dataset,
                                         stream.child("pf", iteration),
                                         engine=engine)

    h_values = {}

    def estimator_with_h(theta, iteration):
        (traj_f, traj_c), log_nc = nc_estimator(theta, iteration)
        h_values[iteration] = _h_pair(obs_model, theta, traj_f, traj_c, dataset)
        return np.stack([np.asarray(traj_f), np.asarray(traj_c)]), log_nc

    thetas, log_ncs, trajs, accepted = _run_chain(
        prior, proposal, n_iters, stream, estimator_with_h, lambda p: p)

    h1 = np.empty(n_iters + 1)
    h2 = np.empty(n_iters + 1)
    current = h_values[0]
    h1[0], h2[0] = current
    for it in range(1, n_iters + 1):
        if accepted[it]:
            current = h_values[it]
        h1[it], h2[it] = current
    return ChainOutput(level=level, thetas=thetas, log_ncs=log_ncs,
                       trajectories=trajs, accepted=accepted,
                       n_iters=n_iters, n_burn=n_burn, coupled=True,
                       h1=h1, h2=h2)

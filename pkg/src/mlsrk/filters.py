"""Particle filter and coupled (delta) particle filter.

Both filters follow the same control flow: propagate every particle through
one observation interval, weight by the observation likelihood, update the
running log normalizing constant with log of the mean weight, resample
multinomially after every observation except the last, and finally select a
single ancestry-consistent trajectory using the last normalized weights.

The coupled filter propagates fine/coarse state pairs on a shared Brownian
path and weights by g_check = max(g_fine, g_coarse).

Randomness protocol (shared with the compiled fast path, see fast.py): from
one generator, draw all Brownian normals of shape (K, 2^level, M, d) first,
then the (K-1, M) resampling uniforms, then one selection uniform.  Fixing
the draw order makes the two implementations interchangeable and every run
reproducible from its stream key.
"""

from __future__ import annotations

import numpy as np

from .discretize import Scheme, batch_interval
from .errors import DegenerateWeightsError, FilterCollapseError
from .models import Dataset, ObservationModel, SdeModel
from .paths import RngStream

__all__ = ["check_g", "resample_multinomial", "particle_filter",
           "delta_particle_filter", "log_g_trajectory"]


def check_g(obs_model: ObservationModel, theta, y, x_fine, x_coarse):
    """max of the two observation likelihoods, the coupled filter's weight."""
    lg_f = obs_model.log_density(theta, y, np.asarray(x_fine, dtype=np.float64))
    lg_c = obs_model.log_density(theta, y, np.asarray(x_coarse, dtype=np.float64))
    return np.exp(np.maximum(lg_f, lg_c))


def _resample_indices(weights, uniforms):
    """Multinomial ancestor indices from pre-drawn uniforms."""
    total = np.cumsum(weights)[-1]
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError("weights sum to zero or are non-finite")
    cdf = np.cumsum(weights) / total
    idx = np.searchsorted(cdf, uniforms, side="left")
    return np.minimum(idx, len(weights) - 1)


def resample_multinomial(weights, items, rng):
    """Draw len(weights) items with replacement proportionally to the weights.

    Args:
        weights: nonnegative array, not all zero.
        items: array whose first axis matches weights.
        rng: numpy Generator.

    Returns:
        Resampled items, same shape as items.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise DegenerateWeightsError("negative weight")
    items = np.asarray(items)
    idx = _resample_indices(weights, rng.random(len(weights)))
    return items[idx]


def log_g_trajectory(obs_model: ObservationModel, theta, traj, dataset: Dataset):
    """Per-observation log likelihood values of one trajectory, shape (K,)."""
    return obs_model.log_density(theta, dataset.ys, np.asarray(traj, dtype=np.float64))


def _normalized_weights(log_g, step):
    """Stable weights from log likelihoods; returns (weights, log mean weight)."""
    mx = np.max(log_g)
    if not np.isfinite(mx):
        raise FilterCollapseError(f"all particles lost likelihood at step {step}",
                                  step=step)
    w = np.exp(log_g - mx)
    total = np.cumsum(w)[-1]
    if total <= 0.0 or not np.isfinite(total):
        raise FilterCollapseError(f"weights degenerated at step {step}", step=step)
    return w, mx + np.log(total / len(w))


def _select_trajectory(states, ancestors, weights, u_sel):
    """Backtrack the ancestry of one particle drawn by the final weights."""
    cdf = np.cumsum(weights) / np.cumsum(weights)[-1]
    i = min(int(np.searchsorted(cdf, u_sel, side="left")), len(weights) - 1)
    n_obs = states.shape[0]
    out = np.empty(states.shape[:1] + states.shape[2:], dtype=np.float64)
    out[n_obs - 1] = states[n_obs - 1, i]
    for k in range(n_obs - 2, -1, -1):
        i = ancestors[k, i]
        out[k] = states[k, i]
    return out


def _draw_protocol(stream: RngStream, n_obs, n_steps, n_particles, dim, h):
    g = stream.generator()
    dws = g.standard_normal((n_obs, n_steps, n_particles, dim)) * np.sqrt(h)
    us = g.random((n_obs - 1, n_particles))
    u_sel = g.random()
    return dws, us, u_sel


def particle_filter(scheme: Scheme, model: SdeModel, obs_model: ObservationModel,
                    theta, level, n_particles, dataset: Dataset,
                    stream: RngStream, engine="auto"):
    """Run the particle filter at one discretization level.

    Args:
        scheme: discretization scheme.
        model, obs_model: the state space model.
        theta: parameter value.
        level: dyadic level l, 2^l steps per observation interval.
        n_particles: M >= 2.
        dataset: observations.
        stream: RNG stream key for this invocation.
        engine: "auto" picks the compiled kernel for preset models, "generic"
            forces the numpy path, "fast" requires the kernel.

    Returns:
        (trajectory, log_nc): selected states at the K observation times,
        shape (K, d), and the log normalizing constant estimate.
    """
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    from . import fast
    if engine != "generic" and fast.supports(scheme, model, obs_model):
        return fast.particle_filter_fast(scheme, model, obs_model, theta, level,
                                         n_particles, dataset, stream)
    if engine == "fast":
        raise ValueError(f"no compiled kernel for model {model.name!r}")

    n_obs = dataset.n_obs
    n_steps = 2 ** level
    h = dataset.delta * 2.0 ** (-level)
    d = model.dim
    dws, us, u_sel = _draw_protocol(stream, n_obs, n_steps, n_particles, d, h)

    x = np.tile(np.asarray(model.x0, dtype=np.float64), (n_particles, 1))
    states = np.empty((n_obs, n_particles, d))
    ancestors = np.empty((n_obs - 1, n_particles), dtype=np.int64)
    log_nc = 0.0
    weights = None
    for k in range(n_obs):
        x = batch_interval(scheme, model, theta, x, dws[k], h)
        states[k] = x
        lg = obs_model.log_density(theta, dataset.ys[k], x)
        weights, log_mean = _normalized_weights(lg, k)
        log_nc += log_mean
        if k < n_obs - 1:
            idx = _resample_indices(weights, us[k])
            ancestors[k] = idx
            x = x[idx]
    traj = _select_trajectory(states, ancestors, weights, u_sel)
    return traj, log_nc


def delta_particle_filter(scheme: Scheme, model: SdeModel,
                          obs_model: ObservationModel, theta, level,
                          n_particles, dataset: Dataset, stream: RngStream,
                          engine="auto"):
    """Run the coupled filter at levels (l, l-1) on a shared Brownian path.

    Same contract as particle_filter, but every particle is a fine/coarse
    pair, weights use max(g_fine, g_coarse), and the result carries both
    legs of the selected trajectory.

    Returns:
        ((fine_trajectory, coarse_trajectory), log_nc_check).
    """
    if level < 1:
        raise ValueError("coupled filter requires level >= 1")
    if n_particles < 2:
        raise ValueError("need at least 2 particles")
    from . import fast
    if engine != "generic" and fast.supports(scheme, model, obs_model):
        return fast.delta_particle_filter_fast(scheme, model, obs_model, theta,
                                               level, n_particles, dataset, stream)
    if engine == "fast":
        raise ValueError(f"no compiled kernel for model {model.name!r}")

    n_obs = dataset.n_obs
    n_steps = 2 ** level
    h = dataset.delta * 2.0 ** (-level)
    d = model.dim
    dws, us, u_sel = _draw_protocol(stream, n_obs, n_steps, n_particles, d, h)

    xf = np.tile(np.asarray(model.x0, dtype=np.float64), (n_particles, 1))
    xc = xf.copy()
    states = np.empty((n_obs, n_particles, 2, d))
    ancestors = np.empty((n_obs - 1, n_particles), dtype=np.int64)
    log_nc = 0.0
    weights = None
    for k in range(n_obs):
        xf = batch_interval(scheme, model, theta, xf, dws[k], h)
        coarse_dws = dws[k, 0::2] + dws[k, 1::2]
        xc = batch_interval(scheme, model, theta, xc, coarse_dws, 2.0 * h)
        states[k, :, 0] = xf
        states[k, :, 1] = xc
        lg_f = obs_model.log_density(theta, dataset.ys[k], xf)
        lg_c = obs_model.log_density(theta, dataset.ys[k], xc)
        weights, log_mean = _normalized_weights(np.maximum(lg_f, lg_c), k)
        log_nc += log_mean
        if k < n_obs - 1:
            idx = _resample_indices(weights, us[k])
            ancestors[k] = idx
            xf = xf[idx]
            xc = xc[idx]
    pair = _select_trajectory(states, ancestors, weights, u_sel)
    return (pair[:, 0], pair[:, 1]), log_nc

"""Compiled particle-filter kernels for the preset models.

These kernels replay exactly the computation of the generic numpy filters in
filters.py: same pre-drawn randomness protocol, same weight normalization
(max subtraction, sequential summation), same cdf inversion for multinomial
resampling, same ancestry backtracking.  They exist only because the
benchmark sweeps run billions of particle steps on a single core; all
contract behavior lives in the generic path, and equivalence of the two is
covered by tests.

Supported: the three preset models with em/milstein/heun/rk4 (milstein on
the 1D model only).  Everything else falls back to the generic path.
"""

from __future__ import annotations

import numpy as np

from .filters import _draw_protocol
from .models import (GBM_SIGMA, NL_SIGMA, STATE_FLOOR, _identity_obs_map,
                     _log_obs_map)

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


_MODEL_IDS = {"gbm1d": 0, "gbm3d": 0, "nonlinear2d": 1}
_SCHEME_IDS = {"em": 0, "milstein": 1, "heun": 2, "rk4": 3}

_W1 = 1.0 / 6.0
_W2 = 2.0 / 6.0


def supports(scheme, model, obs_model) -> bool:
    """Whether a compiled kernel exists for this scheme/model/observation triple."""
    if not HAVE_NUMBA:
        return False
    if model.name not in _MODEL_IDS:
        return False
    if scheme.name not in _SCHEME_IDS:
        return False
    if scheme.name == "milstein" and model.dim != 1:
        return False
    expected = _log_obs_map if _MODEL_IDS[model.name] == 0 else _identity_obs_map
    return obs_model.obs_map is expected


@njit(cache=True, inline="always")
def _mubar(model_id, dc, lamc2, u):
    # model 0: corrected drift dc*u with dc folded by the wrapper
    # model 1: -theta u + lam sigma^2 u / (1+u^2)^2
    if model_id == 0:
        return dc * u
    q = 1.0 / (1.0 + u * u)
    return -dc * u + lamc2 * u * q * q


@njit(cache=True, inline="always")
def _sigf(model_id, sc, u):
    if model_id == 0:
        return sc * u
    return sc / np.sqrt(1.0 + u * u)


@njit(cache=True, inline="always")
def _step(model_id, scheme_id, dc, sc, lamc2, u, h, dw):
    if scheme_id == 0:
        return u + h * _mubar(model_id, dc, lamc2, u) + _sigf(model_id, sc, u) * dw
    if scheme_id == 1:
        mu = dc * u
        sig = sc * u
        return u + h * mu + sig * dw + 0.5 * sig * sc * (dw * dw - h)
    if scheme_id == 2:
        m1 = _mubar(model_id, dc, lamc2, u)
        s1 = _sigf(model_id, sc, u)
        v2 = u + (h * 1.0) * m1 + (1.0 * s1) * dw
        m2 = _mubar(model_id, dc, lamc2, v2)
        s2 = _sigf(model_id, sc, v2)
        return u + h * (0.5 * m1 + 0.5 * m2) + (0.5 * s1 + 0.5 * s2) * dw
    m1 = _mubar(model_id, dc, lamc2, u)
    s1 = _sigf(model_id, sc, u)
    v2 = u + (h * 0.5) * m1 + (0.5 * s1) * dw
    m2 = _mubar(model_id, dc, lamc2, v2)
    s2 = _sigf(model_id, sc, v2)
    v3 = u + (h * 0.5) * m2 + (0.5 * s2) * dw
    m3 = _mubar(model_id, dc, lamc2, v3)
    s3 = _sigf(model_id, sc, v3)
    v4 = u + (h * 1.0) * m3 + (1.0 * s3) * dw
    m4 = _mubar(model_id, dc, lamc2, v4)
    s4 = _sigf(model_id, sc, v4)
    macc = _W1 * m1 + _W2 * m2 + _W2 * m3 + _W1 * m4
    sacc = _W1 * s1 + _W2 * s2 + _W2 * s3 + _W1 * s4
    return u + h * macc + sacc * dw


@njit(cache=True, inline="always")
def _obs_log_g(model_id, ys, k, x, i, d, tau2, obs_const):
    lg = 0.0
    for c in range(d):
        m = x[i, c]
        if model_id == 0:
            if m < STATE_FLOOR:
                m = STATE_FLOOR
            m = np.log(m)
        diff = ys[k, c] - m
        lg += diff * diff
    return -0.5 * lg / tau2 - obs_const


@njit(cache=True, inline="always")
def _searchsorted_left(cdf, u):
    lo = 0
    hi = cdf.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] < u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cdf.shape[0]:
        lo = cdf.shape[0] - 1
    return lo


@njit(cache=True)
def _pf_single(model_id, scheme_id, dc, sc, lamc2, x0, h, n_steps, tau2, ys,
               dws, us, u_sel):
    n_obs = ys.shape[0]
    n_part = dws.shape[2]
    d = x0.shape[0]
    obs_const = 0.5 * d * np.log(2.0 * np.pi * tau2)

    x = np.empty((n_part, d))
    for i in range(n_part):
        for c in range(d):
            x[i, c] = x0[c]
    states = np.empty((n_obs, n_part, d))
    ancestors = np.empty((n_obs - 1, n_part), dtype=np.int64)
    w = np.empty(n_part)
    cdf = np.empty(n_part)
    xtmp = np.empty((n_part, d))
    log_nc = 0.0

    for k in range(n_obs):
        for j in range(n_steps):
            for i in range(n_part):
                for c in range(d):
                    x[i, c] = _step(model_id, scheme_id, dc, sc, lamc2,
                                    x[i, c], h, dws[k, j, i, c])
        mx = -np.inf
        for i in range(n_part):
            for c in range(d):
                states[k, i, c] = x[i, c]
            lg = _obs_log_g(model_id, ys, k, x, i, d, tau2, obs_const)
            w[i] = lg
            if lg > mx:
                mx = lg
        total = 0.0
        for i in range(n_part):
            w[i] = np.exp(w[i] - mx)
            total += w[i]
        log_nc += mx + np.log(total / n_part)
        if k < n_obs - 1:
            acc = 0.0
            for i in range(n_part):
                acc += w[i]
                cdf[i] = acc / total
            for i in range(n_part):
                idx = _searchsorted_left(cdf, us[k, i])
                ancestors[k, i] = idx
                for c in range(d):
                    xtmp[i, c] = x[idx, c]
            for i in range(n_part):
                for c in range(d):
                    x[i, c] = xtmp[i, c]

    acc = 0.0
    for i in range(n_part):
        acc += w[i]
        cdf[i] = acc / total
    sel = _searchsorted_left(cdf, u_sel)
    traj = np.empty((n_obs, d))
    for c in range(d):
        traj[n_obs - 1, c] = states[n_obs - 1, sel, c]
    for k in range(n_obs - 2, -1, -1):
        sel = ancestors[k, sel]
        for c in range(d):
            traj[k, c] = states[k, sel, c]
    return traj, log_nc


@njit(cache=True)
def _pf_coupled(model_id, scheme_id, dc, sc, lamc2, x0, h, n_steps, tau2, ys,
                dws, us, u_sel):
    n_obs = ys.shape[0]
    n_part = dws.shape[2]
    d = x0.shape[0]
    n_coarse = n_steps // 2
    hc = 2.0 * h
    obs_const = 0.5 * d * np.log(2.0 * np.pi * tau2)

    xf = np.empty((n_part, d))
    xc = np.empty((n_part, d))
    for i in range(n_part):
        for c in range(d):
            xf[i, c] = x0[c]
            xc[i, c] = x0[c]
    states_f = np.empty((n_obs, n_part, d))
    states_c = np.empty((n_obs, n_part, d))
    ancestors = np.empty((n_obs - 1, n_part), dtype=np.int64)
    w = np.empty(n_part)
    cdf = np.empty(n_part)
    xtmp = np.empty((n_part, d))
    log_nc = 0.0

    for k in range(n_obs):
        for j in range(n_steps):
            for i in range(n_part):
                for c in range(d):
                    xf[i, c] = _step(model_id, scheme_id, dc, sc, lamc2,
                                     xf[i, c], h, dws[k, j, i, c])
        for j in range(n_coarse):
            for i in range(n_part):
                for c in range(d):
                    dwc = dws[k, 2 * j, i, c] + dws[k, 2 * j + 1, i, c]
                    xc[i, c] = _step(model_id, scheme_id, dc, sc, lamc2,
                                     xc[i, c], hc, dwc)
        mx = -np.inf
        for i in range(n_part):
            for c in range(d):
                states_f[k, i, c] = xf[i, c]
                states_c[k, i, c] = xc[i, c]
            lg_f = _obs_log_g(model_id, ys, k, xf, i, d, tau2, obs_const)
            lg_c = _obs_log_g(model_id, ys, k, xc, i, d, tau2, obs_const)
            lg = lg_f if lg_f > lg_c else lg_c
            w[i] = lg
            if lg > mx:
                mx = lg
        total = 0.0
        for i in range(n_part):
            w[i] = np.exp(w[i] - mx)
            total += w[i]
        log_nc += mx + np.log(total / n_part)
        if k < n_obs - 1:
            acc = 0.0
            for i in range(n_part):
                acc += w[i]
                cdf[i] = acc / total
            for i in range(n_part):
                idx = _searchsorted_left(cdf, us[k, i])
                ancestors[k, i] = idx
                for c in range(d):
                    xtmp[i, c] = xf[idx, c]
            for i in range(n_part):
                for c in range(d):
                    xf[i, c] = xtmp[i, c]
            for i in range(n_part):
                for c in range(d):
                    xtmp[i, c] = xc[ancestors[k, i], c]
            for i in range(n_part):
                for c in range(d):
                    xc[i, c] = xtmp[i, c]

    acc = 0.0
    for i in range(n_part):
        acc += w[i]
        cdf[i] = acc / total
    sel = _searchsorted_left(cdf, u_sel)
    traj_f = np.empty((n_obs, d))
    traj_c = np.empty((n_obs, d))
    for c in range(d):
        traj_f[n_obs - 1, c] = states_f[n_obs - 1, sel, c]
        traj_c[n_obs - 1, c] = states_c[n_obs - 1, sel, c]
    for k in range(n_obs - 2, -1, -1):
        sel = ancestors[k, sel]
        for c in range(d):
            traj_f[k, c] = states_f[k, sel, c]
            traj_c[k, c] = states_c[k, sel, c]
    return traj_f, traj_c, log_nc


def _kernel_constants(scheme, model, theta):
    model_id = _MODEL_IDS[model.name]
    scheme_id = _SCHEME_IDS[scheme.name]
    if model_id == 0:
        sc = GBM_SIGMA
        a = float(np.exp(theta))
        if scheme.kind == "srk":
            dc = a - scheme.tableau.lam * sc * sc
        else:
            dc = a
        lamc2 = 0.0
    else:
        sc = NL_SIGMA
        dc = float(theta)
        lamc2 = scheme.tableau.lam * sc * sc if scheme.kind == "srk" else 0.0
    return model_id, scheme_id, float(dc), float(sc), float(lamc2)


def particle_filter_fast(scheme, model, obs_model, theta, level, n_particles,
                         dataset, stream):
    """Compiled counterpart of filters.particle_filter, same draw protocol."""
    n_steps = 2 ** level
    h = dataset.delta * 2.0 ** (-level)
    dws, us, u_sel = _draw_protocol(stream, dataset.n_obs, n_steps,
                                    n_particles, model.dim, h)
    model_id, scheme_id, dc, sc, lamc2 = _kernel_constants(scheme, model, theta)
    traj, log_nc = _pf_single(model_id, scheme_id, dc, sc, lamc2,
                              np.asarray(model.x0, dtype=np.float64), h,
                              n_steps, float(obs_model.noise_variance),
                              dataset.ys, dws, us, float(u_sel))
    return traj, float(log_nc)


def delta_particle_filter_fast(scheme, model, obs_model, theta, level,
                               n_particles, dataset, stream):
    """Compiled counterpart of filters.delta_particle_filter."""
    n_steps = 2 ** level
    h = dataset.delta * 2.0 ** (-level)
    dws, us, u_sel = _draw_protocol(stream, dataset.n_obs, n_steps,
                                    n_particles, model.dim, h)
    model_id, scheme_id, dc, sc, lamc2 = _kernel_constants(scheme, model, theta)
    traj_f, traj_c, log_nc = _pf_coupled(model_id, scheme_id, dc, sc, lamc2,
                                         np.asarray(model.x0, dtype=np.float64),
                                         h, n_steps,
                                         float(obs_model.noise_variance),
                                         dataset.ys, dws, us, float(u_sel))
    return (traj_f, traj_c), float(log_nc)

"""Explicit s-stage stochastic Runge-Kutta stepping and the level coupling.

A tableau (A, B, alpha, gamma) with strictly lower triangular A, B defines
the one-step map

    V_j  = x + h sum_p a_{jp} mu_bar(V_p) + (sum_p b_{jp} sigma(V_p)) dW
    x'   = x + h sum_p alpha_p mu_bar(V_p) + (sum_p gamma_p sigma(V_p)) dW

where mu_bar is the drift corrected by lam = gamma^T B 1 times the
sigma_bar vector.  Presets: the two-stage Stochastic Heun scheme and the
four-stage classic scheme, plus Milstein (d = 1) and Euler-Maruyama which
use the raw drift.

All step functions broadcast over leading axes of x and dW, so a whole
particle population advances in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericalDomainError, UnsupportedDimensionError
from .models import SdeModel, corrected_drift
from .paths import BrownianIncrements, coarsen

DEFAULT_BETA = {"em": 1, "milstein": 2, "heun": 3, "rk4": 4}
SCHEME_NAMES = tuple(DEFAULT_BETA)


@dataclass(frozen=True)
class SrkTableau:
    """Coefficients of an explicit s-stage scheme.

    lam is derived as gamma^T B 1 and stored; construction rejects tableaux
    that are not strictly lower triangular or whose weights do not sum to 1.
    """

    a: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    stages: int = field(init=False)
    lam: float = field(init=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        alpha = np.asarray(self.alpha, dtype=np.float64)
        gamma = np.asarray(self.gamma, dtype=np.float64)
        s = len(alpha)
        if a.shape != (s, s) or b.shape != (s, s) or gamma.shape != (s,):
            raise ValueError("inconsistent tableau dimensions")
        for m, label in ((a, "A"), (b, "B")):
            if np.any(np.triu(m) != 0.0):
                raise ValueError(f"{label} must be strictly lower triangular")
        if abs(alpha.sum() - 1.0) > 1e-14 or abs(gamma.sum() - 1.0) > 1e-14:
            raise ValueError("stage weights must sum to 1")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "stages", s)
        object.__setattr__(self, "lam", float(gamma @ b @ np.ones(s)))


def make_tableau(name: str) -> SrkTableau:
    """Tableau presets: 'heun' (s = 2) and 'rk4' (s = 4), both with lam = 1/2."""
    if name == "heun":
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        return SrkTableau(a=a, b=a.copy(), alpha=np.array([0.5, 0.5]),
                          gamma=np.array([0.5, 0.5]))
    if name == "rk4":
        a = np.zeros((4, 4))
        a[1, 0] = a[2, 1] = 0.5
        a[3, 2] = 1.0
        w = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0
        return SrkTableau(a=a, b=a.copy(), alpha=w, gamma=w.copy())
    raise ValueError(f"unknown tableau: {name!r}")


@dataclass(frozen=True)
class Scheme:
    """A discretization scheme tag plus the strong rate used for allocation."""

    name: str
    kind: str
    beta: int
    tableau: Optional[SrkTableau] = None

    def __post_init__(self):
        if self.beta not in (1, 2, 3, 4):
            raise ValueError("beta must be in {1, 2, 3, 4}")


def make_scheme(name: str, beta=None) -> Scheme:
    """Build a scheme by name with an optional strong-rate override."""
    if name not in DEFAULT_BETA:
        raise ValueError(f"unknown scheme: {name!r}")
    beta = DEFAULT_BETA[name] if beta is None else int(beta)
    if name in ("heun", "rk4"):
        return Scheme(name=name, kind="srk", beta=beta, tableau=make_tableau(name))
    return Scheme(name=name, kind=name, beta=beta)


def _check_finite(arr, stage):
    if not np.all(np.isfinite(arr)):
        raise NumericalDomainError(f"non-finite value at stage {stage}", stage=stage)


def srk_step(tableau: SrkTableau, model: SdeModel, theta, x, h, dw):
    """One explicit SRK step of size h driven by the increment dw.

    Args:
        tableau: scheme coefficients.
        model: SDE coefficients.
        theta: parameter value.
        x: state, shape (..., d).
        h: step size, > 0.
        dw: Brownian increment, shape (..., d).

    Returns:
        Next state, same shape as x.
    """
    x = np.asarray(x, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    lam = tableau.lam
    mus = []
    sigs = []
    for j in range(tableau.stages):
        v = x
        for p in range(j):
            if tableau.a[j, p] != 0.0:
                v = v + (h * tableau.a[j, p]) * mus[p]
        sig_acc = None
        for p in range(j):
            if tableau.b[j, p] != 0.0:
                term = tableau.b[j, p] * sigs[p]
                sig_acc = term if sig_acc is None else sig_acc + term
        if sig_acc is not None:
            v = v + np.einsum("...ij,...j->...i", sig_acc, dw)
        _check_finite(v, j)
        mus.append(corrected_drift(model, theta, v, lam))
        sigs.append(model.diffusion(theta, v))
    drift_acc = tableau.alpha[0] * mus[0]
    diff_acc = tableau.gamma[0] * sigs[0]
    for p in range(1, tableau.stages):
        drift_acc = drift_acc + tableau.alpha[p] * mus[p]
        diff_acc = diff_acc + tableau.gamma[p] * sigs[p]
    out = x + h * drift_acc + np.einsum("...ij,...j->...i", diff_acc, dw)
    _check_finite(out, tableau.stages)
    return out


def em_step(model: SdeModel, theta, x, h, dw):
    """Euler-Maruyama step with the raw (uncorrected) drift."""
    x = np.asarray(x, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    sig = model.diffusion(theta, x)
    out = x + h * model.drift(theta, x) + np.einsum("...ij,...j->...i", sig, dw)
    _check_finite(out, 1)
    return out


def milstein_step(model: SdeModel, theta, x, h, dw):
    """Milstein step x + mu h + sigma dW + 0.5 sigma sigma' (dW^2 - h), d = 1 only."""
    if model.dim != 1:
        raise UnsupportedDimensionError("Milstein requires a one-dimensional model")
    x = np.asarray(x, dtype=np.float64)
    dw = np.asarray(dw, dtype=np.float64)
    mu = model.drift(theta, x)[..., 0]
    sig = model.diffusion(theta, x)[..., 0, 0]
    sig_p = model.diffusion_jacobian(theta, x, 0)[..., 0, 0]
    u = x[..., 0]
    w = dw[..., 0]
    out = u + h * mu + sig * w + 0.5 * sig * sig_p * (w * w - h)
    _check_finite(out, 1)
    return out[..., None]


def scheme_step(scheme: Scheme, model: SdeModel, theta, x, h, dw):
    """Dispatch one step of the given scheme."""
    if scheme.kind == "srk":
        return srk_step(scheme.tableau, model, theta, x, h, dw)
    if scheme.kind == "milstein":
        return milstein_step(model, theta, x, h, dw)
    return em_step(model, theta, x, h, dw)


def simulate_interval(scheme: Scheme, model: SdeModel, theta, x_start,
                      increments: BrownianIncrements):
    """Advance the state through one observation interval.

    Applies 2^level steps of size delta 2^-level, one per increment row.
    Broadcasts over leading axes of x_start if the increments carry matching
    leading axes (see simulate_interval_batch for the population version).
    """
    h = increments.step_size
    x = np.asarray(x_start, dtype=np.float64)
    for j in range(increments.increments.shape[0]):
        x = scheme_step(scheme, model, theta, x, h, increments.increments[j])
    return x


def batch_interval(scheme: Scheme, model: SdeModel, theta, x_start, dws, h):
    """Advance a population through one interval.

    Args:
        x_start: states, shape (..., d).
        dws: increments, shape (n_steps, ..., d) matching x_start's leading axes.
        h: step size.
    """
    x = np.asarray(x_start, dtype=np.float64)
    for j in range(dws.shape[0]):
        x = scheme_step(scheme, model, theta, x, h, dws[j])
    return x


def coupled_simulate_interval(scheme: Scheme, model: SdeModel, theta,
                              x_start_fine, x_start_coarse,
                              fine_increments: BrownianIncrements):
    """Advance a fine/coarse pair through one interval on a shared Brownian path.

    The fine leg runs at the increments' level; the coarse leg runs one level
    down, driven by the pairwise sums of the same increments.  The fine output
    is bitwise identical to a standalone fine simulation with the same
    increments, and likewise for the coarse leg driven by the coarsened path.

    Returns:
        (fine_state, coarse_state).
    """
    if fine_increments.level < 1:
        raise ValueError("coupling requires level >= 1")
    fine = simulate_interval(scheme, model, theta, x_start_fine, fine_increments)
    coarse = simulate_interval(scheme, model, theta, x_start_coarse,
                               coarsen(fine_increments))
    return fine, coarse

"""Diffusion models, observation densities, priors, presets, and data generation.

A model is the triple (SdeModel, ObservationModel, Prior) plus the true
parameter used for data generation.  Three presets are provided:

    gbm1d        dX = e^theta X dt + 0.66 X dW            (1D, log-Gaussian obs)
    gbm3d        three independent copies of gbm1d        (3D, log-Gaussian obs)
    nonlinear2d  dX_i = -theta X_i dt + (1+X_i^2)^-1/2 dW_i  (2D, Gaussian obs)

All coefficient callables broadcast over leading axes: x of shape (..., d)
gives drift (..., d), diffusion (..., d, d), jacobian (..., d, d).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NumericalDomainError, UnsupportedDimensionError
from .paths import RngStream

STATE_FLOOR = 1e-12

GBM_SIGMA = 0.66
GBM_X0 = 0.7
GBM_TAU2 = 0.1
GBM_THETA_STAR = -1.8971

NL_SIGMA = 1.0
NL_X0 = (-1.0, -2.0)
NL_TAU2 = 4.0
NL_THETA_STAR = 1.0

OBS_COUNT = 120
PRESET_NAMES = ("gbm1d", "gbm3d", "nonlinear2d")


@dataclass(frozen=True)
class SdeModel:
    """Coefficients of the diffusion dX = mu_theta(X) dt + sigma_theta(X) dW.

    Attributes:
        dim: state dimension d.
        drift: (theta, x) -> mu, shape (..., d).
        diffusion: (theta, x) -> sigma, shape (..., d, d).
        diffusion_jacobian: (theta, x, j) -> gradient of the j-th diffusion
            column, entry [i, k] = d sigma^{i j} / d x_k, shape (..., d, d).
        x0: initial state, shape (d,).
        name: preset name, or a label for custom models.
    """

    dim: int
    drift: Callable
    diffusion: Callable
    diffusion_jacobian: Callable
    x0: np.ndarray
    name: str = "custom"


@dataclass(frozen=True)
class ObservationModel:
    """Gaussian observation density y_k ~ N(obs_map(x), tau2 I).

    obs_map sends the state to the observation mean (elementwise log for the
    GBM presets, identity for the nonlinear one).  States are floored at
    STATE_FLOOR before a log map so discretized paths that cross zero keep a
    finite, very small likelihood.
    """

    obs_dim: int
    noise_variance: float
    obs_map: Callable

    def log_density(self, theta, y, x):
        """log g_theta(y | x), broadcasting over leading axes of x."""
        m = self.obs_map(x)
        tau2 = self.noise_variance
        quad = np.sum((np.asarray(y) - m) ** 2, axis=-1)
        return -0.5 * quad / tau2 - 0.5 * self.obs_dim * np.log(2.0 * np.pi * tau2)


@dataclass(frozen=True)
class Prior:
    """Gaussian prior on the scalar parameter theta."""

    mean: float
    variance: float

    def log_pdf(self, theta):
        v = self.variance
        return -0.5 * (theta - self.mean) ** 2 / v - 0.5 * np.log(2.0 * np.pi * v)

    def sample(self, rng):
        return self.mean + np.sqrt(self.variance) * rng.standard_normal()


@dataclass
class Dataset:
    """Observations on the regular grid t_k = k delta, k = 1..K."""

    times: np.ndarray
    ys: np.ndarray
    theta_star: float
    seed: int
    level: int
    model_name: str = "custom"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.ys = np.atleast_2d(np.asarray(self.ys, dtype=np.float64))
        if self.times.ndim != 1 or len(self.times) != len(self.ys):
            raise ValueError("times and observations must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("observation times must be strictly increasing")

    @property
    def n_obs(self):
        return len(self.times)

    @property
    def delta(self):
        return float(self.times[0])


@dataclass(frozen=True)
class ModelPreset:
    name: str
    sde: SdeModel
    obs: ObservationModel
    prior: Prior
    theta_star: float


def _finite_or_raise(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalDomainError(f"{what} evaluated to a non-finite value")
    return arr


def sigma_bar(model: SdeModel, theta, x):
    """The drift-correction vector with components sum_{p,j} dsigma^{ip}/dx_j sigma^{jp}."""
    x = np.asarray(x, dtype=np.float64)
    sig = _finite_or_raise(model.diffusion(theta, x), "diffusion")
    out = np.zeros(x.shape, dtype=np.float64)
    for p in range(model.dim):
        jac_p = _finite_or_raise(model.diffusion_jacobian(theta, x, p),
                                 "diffusion_jacobian")
        out += np.einsum("...ik,...k->...i", jac_p, sig[..., :, p])
    return out


def corrected_drift(model: SdeModel, theta, x, lam):
    """mu_theta(x) - lam * sigma_bar_theta(x), the drift used by the SRK stages."""
    x = np.asarray(x, dtype=np.float64)
    mu = _finite_or_raise(model.drift(theta, x), "drift")
    if lam == 0.0:
        return mu
    return mu - lam * sigma_bar(model, theta, x)


def check_commutativity(model: SdeModel, theta, sample_points, tol=1e-10):
    """Whether grad(sigma^{.,j}) sigma^{.,i} is symmetric in (i, j) at every point."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=np.float64))
    d = model.dim
    for x in pts:
        sig = model.diffusion(theta, x)
        jacs = [model.diffusion_jacobian(theta, x, j) for j in range(d)]
        for i in range(d):
            for j in range(i + 1, d):
                lhs = jacs[j] @ sig[:, i]
                rhs = jacs[i] @ sig[:, j]
                if np.max(np.abs(lhs - rhs)) > tol:
                    return False
    return True


def check_rk4_condition(model: SdeModel, theta, sample_points, tol=1e-8):
    """Whether sigma mu' - mu sigma' - 0.5 sigma^2 sigma'' vanishes (d = 1 only).

    mu' and sigma'' are taken by central differences; sigma' comes from the
    model's exact jacobian.
    """
    if model.dim != 1:
        raise UnsupportedDimensionError("the condition is defined for d = 1 models")
    pts = np.atleast_1d(np.asarray(sample_points, dtype=np.float64)).reshape(-1)
    eps = 1e-5
    for u in pts:
        x = np.array([u])
        xp = np.array([u + eps])
        xm = np.array([u - eps])
        mu = model.drift(theta, x)[0]
        mu_p = (model.drift(theta, xp)[0] - model.drift(theta, xm)[0]) / (2 * eps)
        sig = model.diffusion(theta, x)[0, 0]
        sig_p = model.diffusion_jacobian(theta, x, 0)[0, 0]
        sig_pp = (model.diffusion_jacobian(theta, xp, 0)[0, 0]
                  - model.diffusion_jacobian(theta, xm, 0)[0, 0]) / (2 * eps)
        val = sig * mu_p - mu * sig_p - 0.5 * sig**2 * sig_pp
        if abs(val) > tol:
            return False
    return True


def _gbm_model(dim):
    x0 = np.full(dim, GBM_X0)
    c = GBM_SIGMA

    def drift(theta, x):
        return np.exp(theta) * np.asarray(x, dtype=np.float64)

    def diffusion(theta, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape + (dim,), dtype=np.float64)
        idx = np.arange(dim)
        out[..., idx, idx] = c * x
        return out

    def diffusion_jacobian(theta, x, j):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape + (dim,), dtype=np.float64)
        out[..., j, j] = c
        return out

    return SdeModel(dim=dim, drift=drift, diffusion=diffusion,
                    diffusion_jacobian=diffusion_jacobian, x0=x0,
                    name="gbm1d" if dim == 1 else "gbm3d")


def _log_obs_map(x):
    return np.log(np.maximum(x, STATE_FLOOR))


def _identity_obs_map(x):
    return np.asarray(x, dtype=np.float64)


def _nonlinear_model():
    x0 = np.array(NL_X0)
    c = NL_SIGMA

    def drift(theta, x):
        return -theta * np.asarray(x, dtype=np.float64)

    def diffusion(theta, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape + (2,), dtype=np.float64)
        idx = np.arange(2)
        out[..., idx, idx] = c / np.sqrt(1.0 + x**2)
        return out

    def diffusion_jacobian(theta, x, j):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape + (2,), dtype=np.float64)
        out[..., j, j] = -c * x[..., j] * (1.0 + x[..., j] ** 2) ** -1.5
        return out

    return SdeModel(dim=2, drift=drift, diffusion=diffusion,
                    diffusion_jacobian=diffusion_jacobian, x0=x0,
                    name="nonlinear2d")


def make_preset(name: str) -> ModelPreset:
    """Build one of the three benchmark models with its observation model and prior."""
    if name == "gbm1d":
        return ModelPreset(name, _gbm_model(1),
                           ObservationModel(1, GBM_TAU2, _log_obs_map),
                           Prior(-1.4, 0.2), GBM_THETA_STAR)
    if name == "gbm3d":
        return ModelPreset(name, _gbm_model(3),
                           ObservationModel(3, GBM_TAU2, _log_obs_map),
                           Prior(-1.4, 0.04), GBM_THETA_STAR)
    if name == "nonlinear2d":
        return ModelPreset(name, _nonlinear_model(),
                           ObservationModel(2, NL_TAU2, _identity_obs_map),
                           Prior(-1.2, 0.1), NL_THETA_STAR)
    raise ValueError(f"unknown model preset: {name!r}")


def generate_data(model: SdeModel, obs_model: ObservationModel, theta_star,
                  n_obs, gen_level=12, seed=0, scheme_name="rk4") -> Dataset:
    """Simulate the diffusion at a high level and draw noisy observations.

    The state is advanced through n_obs observation intervals of length
    1/n_obs at 2^gen_level steps per interval, and y_k is drawn from the
    Gaussian observation density at each grid time.  Deterministic for a
    fixed seed.
    """
    from .discretize import make_scheme, simulate_interval
    from .paths import sample_increments

    if gen_level < 1:
        raise ValueError("gen_level must be >= 1")
    scheme = make_scheme(scheme_name)
    delta = 1.0 / n_obs
    rng = RngStream(seed).child("data").generator()
    x = np.asarray(model.x0, dtype=np.float64)
    states = np.empty((n_obs, model.dim))
    for k in range(n_obs):
        incs = sample_increments(gen_level, delta, model.dim, rng, interval_index=k)
        x = simulate_interval(scheme, model, theta_star, x, incs)
        if not np.all(np.isfinite(x)):
            raise NumericalDomainError(f"state left the admissible region at t={k * delta}")
        states[k] = x
    means = obs_model.obs_map(states)
    noise = rng.standard_normal((n_obs, obs_model.obs_dim))
    ys = means + np.sqrt(obs_model.noise_variance) * noise
    times = delta * np.arange(1, n_obs + 1)
    return Dataset(times=times, ys=ys, theta_star=theta_star, seed=seed,
                   level=gen_level, model_name=model.name)


def save_dataset(dataset: Dataset, csv_path):
    """Write observations as CSV (t, y1, ..., yd) with a JSON metadata sidecar."""
    csv_path = Path(csv_path)
    d = dataset.ys.shape[1]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"y{i + 1}" for i in range(d)])
        for t, y in zip(dataset.times, dataset.ys):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in y])
    meta = {"theta_star": dataset.theta_star, "seed": dataset.seed,
            "n_obs": dataset.n_obs, "level": dataset.level,
            "model": dataset.model_name}
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_dataset(csv_path) -> Dataset:
    """Read a dataset written by save_dataset."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in row] for row in rows[1:]])
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    return Dataset(times=body[:, 0], ys=body[:, 1:],
                   theta_star=meta["theta_star"], seed=meta["seed"],
                   level=meta["level"], model_name=meta["model"])

"""Multilevel combination: allocation, cost, increments, telescoping."""

import numpy as np
import pytest

from mlsrk.discretize import make_scheme
from mlsrk.errors import EpsilonTooLargeError
from mlsrk.mcmc import ChainOutput, ProposalKernel
from mlsrk.models import Dataset, Prior, SdeModel, make_preset
from mlsrk.multilevel import (
    MlConfig,
    MlResult,
    allocate,
    cost,
    h_weights,
    increment_estimate,
    ml_estimate,
    phi_theta,
)
from mlsrk.paths import RngStream

from _oracles import make_identity_obs


def _coupled_chain(h1, h2, thetas, n_burn=0):
    n = len(thetas) - 1
    trajs = np.zeros((n + 1, 2, 3, 1))
    return ChainOutput(level=2, thetas=np.asarray(thetas, dtype=np.float64),
                       log_ncs=np.zeros(n + 1), trajectories=trajs,
                       accepted=np.zeros(n + 1, dtype=bool), n_iters=n,
                       n_burn=n_burn, coupled=True,
                       h1=np.asarray(h1, dtype=np.float64),
                       h2=np.asarray(h2, dtype=np.float64))


def test_allocate_reference_values():
    cfg = allocate(2.0 ** -6, 3, l0=1, n_burn=0)
    assert cfg.level_max == 4
    np.testing.assert_allclose(cfg.k_const, 0.9375, rtol=0, atol=0)
    assert cfg.n_per_level[1] == 1920
    np.testing.assert_allclose(cost(cfg), 7200.0, rtol=0, atol=0)


def test_allocate_level_count_beta4():
    cfg = allocate(np.sqrt(2e-3), 4, l0=1, n_burn=0)
    assert cfg.level_max == 3


def test_allocate_adds_burn_in_without_changing_cost():
    a = allocate(0.05, 3, l0=1, n_burn=0)
    b = allocate(0.05, 3, l0=1, n_burn=40)
    for l in range(a.l0, a.level_max + 1):
        assert b.n_per_level[l] == a.n_per_level[l] + 40
    np.testing.assert_allclose(cost(a), cost(b))


def test_allocate_validation():
    with pytest.raises(ValueError):
        allocate(0.0, 3)
    with pytest.raises(ValueError):
        allocate(1.5, 3)
    with pytest.raises(ValueError):
        allocate(0.1, 1)
    with pytest.raises(EpsilonTooLargeError):
        allocate(0.9, 4, l0=2)


def test_allocation_counts_decrease_with_level():
    cfg = allocate(np.sqrt(2e-4), 3, l0=1, n_burn=0)
    ns = [cfg.n_per_level[l] for l in range(1, cfg.level_max + 1)]
    assert all(b <= a for a, b in zip(ns, ns[1:]))


def test_cost_decreases_with_eps():
    costs = [cost(allocate(e, 3, l0=1)) for e in (0.2, 0.1, 0.05, 0.025)]
    assert all(b > a for a, b in zip(costs, costs[1:]))


def test_ml_config_validation():
    with pytest.raises(ValueError):
        MlConfig(eps=0.1, beta=3, l0=3, level_max=2, n_per_level={},
                 n_particles=10, n_burn=0, k_const=1.0, master_seed=0)
    with pytest.raises(ValueError):
        MlConfig(eps=0.1, beta=3, l0=1, level_max=1, n_per_level={1: 5},
                 n_particles=10, n_burn=5, k_const=1.0, master_seed=0)


def test_ml_result_json_roundtrip():
    cfg = allocate(0.05, 3, l0=1, n_burn=10, master_seed=3)
    res = MlResult(estimate=-1.25, base_estimate=-1.3,
                   increments={2: 0.03, 3: 0.02}, cost=cost(cfg), wall_s=1.5,
                   config=cfg, acceptance_rates={1: 0.3, 2: 0.4, 3: 0.5})
    back = MlResult.from_json(res.to_json())
    assert back.estimate == res.estimate
    assert back.increments == res.increments
    assert back.acceptance_rates == res.acceptance_rates
    assert back.config == res.config


def test_h_weights_unit_interval_and_identity_case():
    obs = make_identity_obs(0.4)
    rng = RngStream(41).child("h").generator()
    ds = Dataset(times=0.1 * np.arange(1, 7),
                 ys=rng.standard_normal((6, 1)), theta_star=0.0, seed=0,
                 level=0)
    fine = rng.standard_normal((6, 1))
    coarse = fine + 0.2 * rng.standard_normal((6, 1))
    h1, h2 = h_weights((fine, coarse), 0.0, obs, ds)
    assert 0.0 < h1 <= 1.0
    assert 0.0 < h2 <= 1.0
    assert max(h1, h2) == 1.0 or (h1 < 1.0 and h2 < 1.0)
    same1, same2 = h_weights((fine, fine), 0.0, obs, ds)
    assert same1 == 1.0
    assert same2 == 1.0


def test_increment_estimate_hand_case():
    # N = 3, burn 0: records 1..3 with phi = theta
    chain = _coupled_chain(h1=[1.0, 0.5, 1.0, 0.25],
                           h2=[1.0, 1.0, 0.5, 0.75],
                           thetas=[0.0, 2.0, -1.0, 4.0])
    want = ((2.0 * 0.5 + -1.0 * 1.0 + 4.0 * 0.25) / (0.5 + 1.0 + 0.25)
            - (2.0 * 1.0 + -1.0 * 0.5 + 4.0 * 0.75) / (1.0 + 0.5 + 0.75))
    np.testing.assert_allclose(increment_estimate(chain, phi_theta), want,
                               rtol=1e-15)


def test_increment_estimate_burn_in_slicing():
    chain = _coupled_chain(h1=[1.0, 1.0, 1.0, 0.5], h2=[1.0, 1.0, 1.0, 1.0],
                           thetas=[9.0, 9.0, 1.0, 3.0], n_burn=1)
    # records 2..3 only
    want = (1.0 * 1.0 + 3.0 * 0.5) / 1.5 - (1.0 + 3.0) / 2.0
    np.testing.assert_allclose(increment_estimate(chain, phi_theta), want,
                               rtol=1e-15)


def test_increment_estimate_constant_phi_is_exactly_zero():
    rng = RngStream(42).child("h").generator()
    h1 = rng.random(41) + 0.1
    h2 = rng.random(41) + 0.1
    chain = _coupled_chain(h1=h1, h2=h2, thetas=rng.standard_normal(41))
    for const in (1.0, 2.0, 0.5):
        inc = increment_estimate(chain, lambda traj, th: const)
        assert inc == 0.0


def test_increment_estimate_rejects_single_chains():
    single = ChainOutput(level=1, thetas=np.zeros(4), log_ncs=np.zeros(4),
                         trajectories=np.zeros((4, 3, 1)),
                         accepted=np.zeros(4, dtype=bool), n_iters=3,
                         coupled=False)
    with pytest.raises(ValueError):
        increment_estimate(single, phi_theta)
    exhausted = _coupled_chain(h1=np.ones(3), h2=np.ones(3),
                               thetas=np.zeros(3), n_burn=2)
    with pytest.raises(ValueError):
        increment_estimate(exhausted, phi_theta)


def _constant_model():
    return SdeModel(dim=1, drift=lambda t, x: np.zeros_like(x),
                    diffusion=lambda t, x: np.zeros(x.shape + (1,)),
                    diffusion_jacobian=lambda t, x, j: np.zeros(x.shape + (1,)),
                    x0=np.array([0.4]), name="const")


def test_ml_estimate_telescopes_exactly_for_degenerate_model():
    # constant state: every level increment is exactly zero, so the
    # multilevel estimate equals the base chain average
    model = _constant_model()
    obs = make_identity_obs(0.5)
    rng = RngStream(43).child("y").generator()
    ds = Dataset(times=0.125 * np.arange(1, 9),
                 ys=0.4 + 0.3 * rng.standard_normal((8, 1)), theta_star=0.0,
                 seed=0, level=0)
    prior = Prior(mean=0.0, variance=1.0)
    cfg = allocate(0.2, 2, l0=1, n_burn=5, n_particles=10, master_seed=21)
    assert cfg.level_max >= 2
    res = ml_estimate(cfg, make_scheme("heun", beta=2), model, obs, prior,
                      ProposalKernel(0.8), ds, phi_theta, engine="generic")
    assert set(res.increments) == set(range(2, cfg.level_max + 1))
    for inc in res.increments.values():
        assert inc == 0.0
    assert res.estimate == res.base_estimate
    np.testing.assert_allclose(res.cost, cost(cfg))
    assert set(res.acceptance_rates) == set(range(1, cfg.level_max + 1))


def test_ml_estimate_worker_count_invariance():
    p = make_preset("gbm1d")
    from mlsrk.models import generate_data
    ds = generate_data(p.sde, p.obs, p.theta_star, 30, gen_level=5, seed=88)
    cfg = allocate(0.15, 3, l0=1, n_burn=5, n_particles=20, master_seed=31)
    run = lambda w: ml_estimate(cfg, make_scheme("heun"), p.sde, p.obs,
                                p.prior, ProposalKernel(0.4), ds, phi_theta,
                                workers=w, preset_name="gbm1d")
    serial = run(1)
    pooled = run(2)
    assert serial.estimate == pooled.estimate
    assert serial.base_estimate == pooled.base_estimate
    assert serial.increments == pooled.increments
    assert serial.acceptance_rates == pooled.acceptance_rates

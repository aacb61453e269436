"""Parameter chains: proposal kernel, accept/reject logic, exact targets."""

import numpy as np
import pytest

from mlsrk.errors import FilterCollapseError
from mlsrk.mcmc import ChainOutput, ProposalKernel, pmmh_coupled, pmmh_single
from mlsrk.models import Dataset, Prior
from mlsrk.paths import RngStream

from _oracles import batch_means_se, make_identity_obs


def _flat_dataset(n_obs=6):
    return Dataset(times=0.1 * np.arange(1, n_obs + 1),
                   ys=np.zeros((n_obs, 1)), theta_star=0.0, seed=0, level=0)


def _const_estimator(value=0.0, traj_shape=(1,)):
    def estimator(theta, iteration):
        return np.zeros(traj_shape), value

    return estimator


def test_proposal_kernel_validation_and_shift():
    with pytest.raises(ValueError):
        ProposalKernel(step=-0.1)
    rng = RngStream(1).child("p").generator()
    kern = ProposalKernel(step=0.5)
    draws = np.array([kern.propose(2.0, rng) for _ in range(2000)])
    np.testing.assert_allclose(np.mean(draws), 2.0, atol=0.05)
    np.testing.assert_allclose(np.std(draws), 0.5, rtol=0.1)
    assert ProposalKernel(step=0.0).propose(1.3, rng) == 1.3


def test_chain_output_counts():
    acc = np.array([False, True, False, True, True])
    out = ChainOutput(level=1, thetas=np.zeros(5), log_ncs=np.zeros(5),
                      trajectories=np.zeros((5, 1)), accepted=acc, n_iters=4)
    assert out.acceptance_count == 3
    np.testing.assert_allclose(out.acceptance_rate, 0.75)


def test_single_chain_shapes_and_initial_record():
    prior = Prior(mean=-1.0, variance=0.25)
    chain = pmmh_single(2, None, None, None, prior, ProposalKernel(0.3),
                        10, 50, _flat_dataset(), RngStream(5).child("c"),
                        n_burn=10, nc_estimator=_const_estimator(-3.0, (4, 1)))
    assert chain.thetas.shape == (51,)
    assert chain.log_ncs.shape == (51,)
    assert chain.trajectories.shape == (51, 4, 1)
    assert chain.n_burn == 10
    assert not chain.coupled
    assert not chain.accepted[0]
    np.testing.assert_array_equal(chain.log_ncs, -3.0)


def test_single_chain_deterministic_given_stream():
    prior = Prior(mean=0.0, variance=1.0)
    make = lambda: pmmh_single(1, None, None, None, prior, ProposalKernel(0.5),
                               10, 200, _flat_dataset(),
                               RngStream(6).child("c"),
                               nc_estimator=_const_estimator())
    a, b = make(), make()
    np.testing.assert_array_equal(a.thetas, b.thetas)
    np.testing.assert_array_equal(a.accepted, b.accepted)


def test_rejected_iterations_repeat_the_previous_record():
    prior = Prior(mean=0.0, variance=1.0)

    def estimator(theta, iteration):
        # strongly favors theta near zero so rejections occur often
        return np.array([theta]), -50.0 * theta ** 2

    chain = pmmh_single(1, None, None, None, prior, ProposalKernel(1.0),
                        10, 300, _flat_dataset(), RngStream(7).child("c"),
                        nc_estimator=estimator)
    rejected = np.where(~chain.accepted[1:])[0] + 1
    assert len(rejected) > 0
    for it in rejected[:40]:
        assert chain.thetas[it] == chain.thetas[it - 1]
        np.testing.assert_array_equal(chain.trajectories[it],
                                      chain.trajectories[it - 1])


def test_chain_with_constant_likelihood_samples_the_prior():
    prior = Prior(mean=-1.4, variance=0.2)
    chain = pmmh_single(1, None, None, None, prior, ProposalKernel(1.0),
                        10, 20000, _flat_dataset(), RngStream(8).child("c"),
                        nc_estimator=_const_estimator())
    th = chain.thetas[1000:]
    se = batch_means_se(th)
    assert abs(np.mean(th) - prior.mean) < 4.0 * se
    np.testing.assert_allclose(np.var(th), prior.variance, rtol=0.15)
    assert 0.2 < chain.acceptance_rate < 0.8


def test_two_region_posterior_occupation():
    # likelihood 2 for theta >= 0 and 1 otherwise, prior N(0, 1):
    # exact posterior mass of the positive half line is 2/3
    prior = Prior(mean=0.0, variance=1.0)

    def estimator(theta, iteration):
        return np.zeros(1), np.log(2.0) if theta >= 0 else 0.0

    chain = pmmh_single(1, None, None, None, prior, ProposalKernel(2.0),
                        10, 20000, _flat_dataset(), RngStream(9).child("c"),
                        nc_estimator=estimator)
    occ = (chain.thetas[500:] >= 0.0).astype(np.float64)
    se = batch_means_se(occ)
    assert abs(np.mean(occ) - 2.0 / 3.0) < 4.0 * se, (np.mean(occ), se)


def test_collapse_rejects_proposal_and_continues():
    prior = Prior(mean=0.0, variance=1.0)
    calls = []

    def estimator(theta, iteration):
        calls.append(iteration)
        if iteration in (3, 4):
            raise FilterCollapseError("boom", step=0)
        return np.zeros(1), 0.0

    chain = pmmh_single(1, None, None, None, prior, ProposalKernel(0.5),
                        10, 20, _flat_dataset(), RngStream(10).child("c"),
                        nc_estimator=estimator)
    assert not chain.accepted[3]
    assert not chain.accepted[4]
    assert chain.thetas[3] == chain.thetas[2]
    assert chain.thetas[4] == chain.thetas[2]
    assert len(chain.thetas) == 21
    assert calls == list(range(21))


def test_coupled_chain_requires_level_one():
    prior = Prior(mean=0.0, variance=1.0)
    with pytest.raises(ValueError):
        pmmh_coupled(0, None, None, None, prior, ProposalKernel(0.5), 10, 5,
                     _flat_dataset(), RngStream(11).child("c"),
                     nc_estimator=lambda t, i: ((np.zeros((6, 1)),
                                                 np.zeros((6, 1))), 0.0))


def test_coupled_chain_h_weights_in_unit_interval():
    obs = make_identity_obs(0.5)
    ds = _flat_dataset(6)
    prior = Prior(mean=0.0, variance=1.0)
    rng = RngStream(12).child("legs").generator()

    def estimator(theta, iteration):
        base = 0.2 * rng.standard_normal((6, 1))
        return (base, base + 0.05 * rng.standard_normal((6, 1))), 0.0

    chain = pmmh_coupled(2, None, None, obs, prior, ProposalKernel(0.5),
                         10, 150, ds, RngStream(13).child("c"),
                         nc_estimator=estimator)
    assert chain.coupled
    assert chain.trajectories.shape == (151, 2, 6, 1)
    assert np.all(chain.h1 > 0.0) and np.all(chain.h1 <= 1.0)
    assert np.all(chain.h2 > 0.0) and np.all(chain.h2 <= 1.0)


def test_coupled_identical_legs_give_unit_h():
    obs = make_identity_obs(0.5)
    ds = _flat_dataset(5)
    prior = Prior(mean=0.0, variance=1.0)

    def estimator(theta, iteration):
        leg = np.full((5, 1), 0.3)
        return (leg, leg), 0.0

    chain = pmmh_coupled(1, None, None, obs, prior, ProposalKernel(0.5),
                         10, 40, ds, RngStream(14).child("c"),
                         nc_estimator=estimator)
    np.testing.assert_array_equal(chain.h1, np.ones(41))
    np.testing.assert_array_equal(chain.h2, np.ones(41))


def test_coupled_h_repeats_on_rejection():
    obs = make_identity_obs(0.5)
    ds = _flat_dataset(4)
    prior = Prior(mean=0.0, variance=1.0)
    rng = RngStream(15).child("legs").generator()

    def estimator(theta, iteration):
        f = 0.3 * rng.standard_normal((4, 1))
        c = f + 0.1 * rng.standard_normal((4, 1))
        return (f, c), -30.0 * theta ** 2

    chain = pmmh_coupled(1, None, None, obs, prior, ProposalKernel(1.5),
                         10, 200, ds, RngStream(16).child("c"),
                         nc_estimator=estimator)
    rejected = np.where(~chain.accepted[1:])[0] + 1
    assert len(rejected) > 0
    for it in rejected:
        assert chain.h1[it] == chain.h1[it - 1]
        assert chain.h2[it] == chain.h2[it - 1]

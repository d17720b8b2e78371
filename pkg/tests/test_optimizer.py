"""Alternating minimisation and scans of F(lambda)."""
from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from support import random_profile

from pbmin.bounds import complexity, f_derivatives, pac_bayes_lambda_bound
from pbmin.certify import (
    make_nonconvex_example, make_two_minima_example, search_certificate)
from pbmin.core import (
    BoundConfig, DomainError, LossProfile, PosteriorWeights, gibbs_loss)
from pbmin.optimizer import (
    alternate_minimize, gibbs_posterior, local_minima, optimal_lambda,
    scan_lambda)


def certified_profiles(rng, count: int):
    """Generate random profiles for which F is known to be quasiconvex."""
    made = 0
    while made < count:
        profile, cfg = random_profile(rng)
        if search_certificate(profile, cfg).certified:
            made += 1
            yield profile, cfg


def test_gibbs_posterior_examples():
    """Equal losses and lambda = 0 leave the prior unchanged."""
    profile = LossProfile.from_losses([0.3, 0.3, 0.3], 50)
    assert gibbs_posterior(profile, 0.7).masses == pytest.approx([1 / 3] * 3)
    profile = LossProfile.from_losses([0.1, 0.9], 50)
    assert gibbs_posterior(profile, 0.0).masses == pytest.approx([0.5, 0.5])

    profile = LossProfile.from_losses([0.0, 0.1], 100)
    rho = gibbs_posterior(profile, 0.1)
    assert rho.masses == pytest.approx([0.731059, 0.268941], abs=1e-6)
    assert rho.masses[0] == pytest.approx(1 / (1 + math.exp(-1)))


def test_gibbs_posterior_rejects_negative_lambda():
    """Lambda must not be negative."""
    with pytest.raises(DomainError):
        gibbs_posterior(LossProfile.from_losses([0.1], 10), -0.1)


def test_gibbs_posterior_minimises_the_bound(rng):
    """No perturbed posterior does better for the same lambda."""
    for _ in range(100):
        profile, cfg = random_profile(rng, m_max=10)
        for lam in (0.1, 0.5, 1.0):
            rho = gibbs_posterior(profile, lam)
            best = pac_bayes_lambda_bound(profile, rho, lam, cfg).value
            for _ in range(100):
                noisy = rho.masses * np.exp(rng.normal(0, 0.5, len(profile)))
                noisy = noisy + 1e-6
                other = PosteriorWeights(noisy / noisy.sum())
                value = pac_bayes_lambda_bound(profile, other, lam, cfg).value
                assert best <= value + 1e-12


def test_optimal_lambda_examples():
    """Hand evaluations of the closed form lambda update."""
    assert optimal_lambda(0.0, 3.0, 100) == 1.0
    assert optimal_lambda(0.2, 5.0, 100) == pytest.approx(0.5)
    assert optimal_lambda(0.5, math.log(800), 400) == pytest.approx(
        0.2273, abs=1e-4)


def test_optimal_lambda_matches_grid_minimum():
    """The closed form agrees with a fine grid search of the bound."""
    n, mean, c = 400, 0.5, math.log(800)
    grid = np.arange(1, 100_000) / 50_000.0
    values = (mean + c / (n * grid)) / (1 - grid / 2)
    best = grid[np.argmin(values)]
    assert optimal_lambda(mean, c, n) == pytest.approx(best, abs=2e-5)


def test_optimal_lambda_domain():
    """The complexity must be positive and the loss a probability."""
    with pytest.raises(DomainError):
        optimal_lambda(0.1, 0.0, 10)
    with pytest.raises(DomainError):
        optimal_lambda(1.5, 1.0, 10)


def test_single_hypothesis_converges_quickly():
    """With no freedom in rho, two rounds are enough."""
    profile = LossProfile.from_losses([0.2], 100)
    cfg = BoundConfig(100, 0.05)
    trace = alternate_minimize(profile, cfg)
    assert trace.converged
    assert len(trace.iterations) <= 2
    assert trace.final_lambda == pytest.approx(
        optimal_lambda(0.2, cfg.confidence_term, 100))
    assert trace.final_posterior.masses.tolist() == [1.0]


def test_equal_losses_keep_the_prior():
    """Symmetric losses keep rho equal to pi."""
    profile = LossProfile.from_losses([0.25] * 5, 80)
    cfg = BoundConfig(80, 0.1)
    trace = alternate_minimize(profile, cfg)
    for step in trace.iterations:
        assert step.kl == pytest.approx(0.0, abs=1e-12)
        assert step.lam == trace.iterations[0].lam
    assert trace.final_posterior.masses == pytest.approx([0.2] * 5)


def test_trace_is_monotone(rng):
    """The bound never increases and lambda stays within (0, 1)."""
    for _ in range(100):
        profile, cfg = random_profile(rng)
        trace = alternate_minimize(profile, cfg)
        bounds = [step.bound for step in trace.iterations]
        for before, after in zip(bounds, bounds[1:]):
            assert after <= before + 1e-12
        for step in trace.iterations:
            assert 0.0 < step.lam <= 1.0
        if cfg.n_eff >= 4:
            assert trace.final_lambda >= 1.0 / math.sqrt(cfg.n_eff)


def test_iteration_cap(caplog):
    """Hitting the iteration cap is logged and reported."""
    profile = LossProfile.from_losses([0.0, 0.3, 0.6], 100)
    cfg = BoundConfig(100, 0.05, max_iters=1)
    with caplog.at_level(logging.WARNING):
        trace = alternate_minimize(profile, cfg)
    assert not trace.converged
    assert len(trace.iterations) == 1
    assert 'without converging' in caplog.text


@pytest.mark.slow
def test_reaches_the_global_minimum(rng):
    """For quasiconvex instances the result matches a fine grid search."""
    for profile, cfg in certified_profiles(rng, 100):
        trace = alternate_minimize(profile, cfg)
        scan = scan_lambda(profile, cfg, 10_000)
        assert trace.final_bound <= scan.values.min() + 1e-6


def test_stationary_point_identity(rng):
    """At convergence 2(1 - lambda) c = lambda^2 n E under rho_lambda."""
    for profile, cfg in certified_profiles(rng, 100):
        tight = replace(cfg, tol_bound=1e-13, max_iters=10_000)
        trace = alternate_minimize(profile, tight)
        lam, rho, n = trace.final_lambda, trace.final_posterior, cfg.n_eff
        c = complexity(profile, rho, cfg)
        residual = 2 * (1 - lam) * c - lam * lam * n * gibbs_loss(profile, rho)
        assert abs(residual) <= 1e-6 * n


@pytest.mark.parametrize('values, expect', [
    ([3, 2, 1], [2]),
    ([1, 2, 3], [0]),
    ([2, 1, 2, 1, 2], [1, 3]),
    ([2, 1, 1, 2], [1]),
    ([1, 1, 1], [0]),
    ([3, 1, 2, 2, 1, 3], [1, 4]),
])
def test_local_minima(values, expect):
    """Plateaus coalesce and the sequence ends count as larger."""
    assert local_minima(values) == expect


def test_scan_single_zero_loss_hypothesis():
    """F is minimised at lambda = 1 for a single zero-loss hypothesis."""
    profile = LossProfile.from_losses([0.0], 100)
    cfg = BoundConfig(100, 0.05)
    scan = scan_lambda(profile, cfg, 1000)
    assert len(scan.grid) == 1000
    assert scan.grid[0] == pytest.approx(0.001)
    assert scan.grid[-1] == 1.0
    assert scan.local_minima == [999]

    scan = scan_lambda(profile, cfg, 1500, lambda_max=1.5)
    assert len(scan.local_minima) == 1
    assert scan.grid[scan.local_minima[0]] == pytest.approx(1.0)


def test_scan_equal_losses():
    """The minimum sits at the closed form lambda."""
    profile = LossProfile.from_losses([0.3] * 4, 200)
    cfg = BoundConfig(200, 0.05)
    scan = scan_lambda(profile, cfg, 1000)
    expect = optimal_lambda(0.3, cfg.confidence_term, 200)
    assert len(scan.local_minima) == 1
    assert scan.grid[scan.argmin] == pytest.approx(expect, abs=1e-3)


def test_scan_two_minima_example():
    """The constructed counterexample has two local minima."""
    profile, cfg = make_two_minima_example()
    scan = scan_lambda(profile, cfg, 2000)
    assert len(scan.local_minima) == 2


def test_scan_nonconvex_example():
    """F is not convex but still has a single minimum."""
    profile, cfg = make_nonconvex_example()
    scan = scan_lambda(profile, cfg, 1000)
    assert len(scan.local_minima) == 1
    seconds = [
        f_derivatives(profile, float(lam), cfg).second for lam in scan.grid]
    assert min(seconds) < 0.0


def test_scan_domain():
    """The grid needs three points and lambda_max must lie in (0, 2)."""
    profile = LossProfile.from_losses([0.1], 10)
    cfg = BoundConfig(10, 0.1)
    with pytest.raises(DomainError):
        scan_lambda(profile, cfg, 2)
    with pytest.raises(DomainError):
        scan_lambda(profile, cfg, 10, lambda_max=2.0)


def test_scan_does_not_depend_on_threads(rng):
    """Splitting the grid over threads gives identical values."""
    profile, cfg = random_profile(rng, m_max=200)
    single = scan_lambda(profile, cfg, 500, threads=1)
    multi = scan_lambda(profile, cfg, 500, threads=4)
    assert np.array_equal(single.values, multi.values)
    assert single.local_minima == multi.local_minima

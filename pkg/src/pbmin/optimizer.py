"""Alternating minimisation of the PAC-Bayes-lambda bound.

For a fixed lambda the bound is minimised over rho by the Gibbs posterior
and for a fixed rho it is minimised over lambda in closed form. Alternating
the two updates never increases the bound.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import tasks
from .bounds import complexity, f_of_lambda, pac_bayes_lambda_bound
from .core import (
    BoundConfig, DomainError, LossProfile, PosteriorWeights, gibbs_loss,
    gibbs_weights, kl_posterior_prior)

log = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 1000


class TraceStep(NamedTuple):
    """The state after one (lambda update, rho update) round."""

    lam: float
    bound: float
    gibbs_loss: float
    kl: float


@dataclass
class OptimizationTrace:
    """The history of an alternating minimisation run.

    @iterations:      One `TraceStep` per round, in order.
    @converged:       False if the iteration cap was reached.
    @final_posterior: The posterior after the last round.
    """

    iterations: list[TraceStep]
    converged: bool
    final_posterior: PosteriorWeights

    @property
    def final_lambda(self) -> float:
        """The value of lambda after the last round."""
        return self.iterations[-1].lam

    @property
    def final_bound(self) -> float:
        """The bound value after the last round."""
        return self.iterations[-1].bound


@dataclass
class LambdaScan:
    """F(lambda) evaluated over a grid.

    @grid:         Strictly increasing lambda values.
    @values:       F at each grid point.
    @local_minima: Indices of the discrete local minima.
    """

    grid: np.ndarray
    values: np.ndarray
    local_minima: list[int] = field(default_factory=list)

    @property
    def argmin(self) -> int:
        """Index of the smallest value (the first one, on ties)."""
        return int(np.argmin(self.values))


def gibbs_posterior(profile: LossProfile, lam: float) -> PosteriorWeights:
    """The posterior proportional to pi(h) exp(-lambda n L(h)).

    For a fixed lambda this minimises the PAC-Bayes-lambda bound over rho.
    """
    if not lam >= 0.0:
        raise DomainError(f'lambda must be >= 0, not {lam!r}')
    return gibbs_weights(profile, lam * profile.n_eff)


def optimal_lambda(gibbs_loss: float, complexity: float, n_eff: int) -> float:
    """The lambda minimising the PAC-Bayes-lambda bound for a fixed rho.

    :gibbs_loss: The value E_rho[L].
    :complexity: The value KL(rho || pi) + ln(2 sqrt(n)/delta).
    """
    # pylint: disable=redefined-outer-name
    if not complexity > 0.0:
        raise DomainError(
            f'The complexity term must be positive, not {complexity!r}')
    if not 0.0 <= gibbs_loss <= 1.0:
        raise DomainError(f'The Gibbs loss must lie in [0, 1], not '
                          f'{gibbs_loss!r}')
    ratio = 2.0 * n_eff * gibbs_loss / complexity
    return 2.0 / (math.sqrt(ratio + 1.0) + 1.0)


def alternate_minimize(
        profile: LossProfile, cfg: BoundConfig) -> OptimizationTrace:
    """Minimise the PAC-Bayes-lambda bound by alternating updates.

    Starting from rho = pi, each round performs a lambda update and then a
    rho update. Iteration stops when the bound decreases by less than
    cfg.tol_bound or after cfg.max_iters rounds.
    """
    cfg.check(profile)
    rho = PosteriorWeights.prior_of(profile)
    steps: list[TraceStep] = []
    previous = math.inf
    converged = False
    for _ in range(cfg.max_iters):
        lam = optimal_lambda(
            gibbs_loss(profile, rho), complexity(profile, rho, cfg),
            cfg.n_eff)
        rho = gibbs_posterior(profile, lam)
        bound = pac_bayes_lambda_bound(profile, rho, lam, cfg).value
        steps.append(TraceStep(
            lam, bound, gibbs_loss(profile, rho),
            kl_posterior_prior(profile, rho)))
        log.debug('Round %d: lambda=%.12g bound=%.12g', len(steps), lam, bound)
        if previous - bound < cfg.tol_bound:
            converged = True
            break
        previous = bound

    if not converged:
        log.warning(
            'Alternating minimisation stopped after %d rounds without'
            ' converging', cfg.max_iters)
    return OptimizationTrace(steps, converged, rho)


def local_minima(values) -> list[int]:
    """Find the discrete local minima of a sequence.

    Runs of equal values are coalesced and a run is a minimum when both of
    its neighbours are larger. The ends of the sequence count as larger
    neighbours. The first index of each minimal run is reported.
    """
    values = np.asarray(values, dtype=float)
    runs: list[tuple[int, float]] = []
    for i, v in enumerate(values):
        if not runs or v != runs[-1][1]:
            runs.append((i, float(v)))

    minima = []
    for j, (start, v) in enumerate(runs):
        left = runs[j - 1][1] if j > 0 else math.inf
        right = runs[j + 1][1] if j + 1 < len(runs) else math.inf
        if left > v and right > v:
            minima.append(start)
    return minima


def scan_lambda(
        profile: LossProfile,
        cfg: BoundConfig,
        grid_size: int = DEFAULT_GRID_SIZE,
        lambda_max: float = 1.0,
        *,
        threads: int | None = 1,
    ) -> LambdaScan:
    """Evaluate F(lambda) on the grid lambda_max * k / grid_size, k=1..size.

    The grid is split into contiguous chunks, which may be evaluated in
    parallel.
    """
    if grid_size < 3:
        raise DomainError(f'The grid needs at least 3 points, not {grid_size}')
    if not 0.0 < lambda_max < 2.0:
        raise DomainError(
            f'lambda_max must lie in (0, 2), not {lambda_max!r}')
    cfg.check(profile)
    grid = lambda_max * np.arange(1, grid_size + 1) / grid_size

    def evaluate(chunk):
        return [f_of_lambda(profile, float(lam), cfg) for lam in chunk]

    n_chunks = min(tasks.thread_limit(threads), grid_size)
    chunks = np.array_split(grid, n_chunks)
    values = np.array([
        v for part in tasks.map_ordered(evaluate, chunks, threads=threads)
        for v in part])
    return LambdaScan(grid, values, local_minima(values))

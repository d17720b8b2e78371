"""The training pipeline and the experiment harnesses built on it.

run_pipeline
    Subsample, train, validate and minimise the PAC-Bayes-lambda bound.
heatmap
    Test losses of the rho-weighted majority vote over a grid of (m, r).
m_sweep
    Majority vote test loss, PAC-Bayes-kl bound and training time as m
    grows with r fixed.
validity
    Repeated runs on a known distribution, counting how often the bound
    fails to cover the true risk of the randomized classifier.
predictor_compare
    Test losses of all prediction modes for one trained ensemble.

Trials and grid cells are independent and each uses a seed derived from the
caller's seed and its own position (m sweep points share the caller's
seed), so results do not depend on the number of threads.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import predict, tasks
from .bounds import pac_bayes_kl_bound
from .core import BoundConfig, DomainError, LossProfile, PosteriorWeights
from .ensemble import (
    Dataset, HypothesisEnsemble, build_ensemble, draw_subsamples,
    ensemble_profile)
from .learners import LearnerSpec
from .optimizer import OptimizationTrace, alternate_minimize
from .synthetic import DEFAULT_PROBE_SIZE, randomized_risk

if TYPE_CHECKING:
    from .synthetic import Distribution

log = logging.getLogger(__name__)

DEFAULT_DELTA = 0.05
HEATMAP_STEPS = 20


@dataclass
class PipelineResult:
    """Everything produced by one training run.

    @ensemble:    The trained hypotheses.
    @profile:     The validation loss profile, with n_eff = n - r.
    @cfg:         The matching bound configuration.
    @trace:       The alternating minimisation history.
    @pb_kl_bound: The PAC-Bayes-kl bound at the final posterior.
    """

    ensemble: HypothesisEnsemble
    profile: LossProfile
    cfg: BoundConfig
    trace: OptimizationTrace
    pb_kl_bound: float

    @property
    def posterior(self) -> PosteriorWeights:
        """The final posterior."""
        return self.trace.final_posterior

    @property
    def lam(self) -> float:
        """The final value of lambda."""
        return self.trace.final_lambda

    @property
    def bound(self) -> float:
        """The final PAC-Bayes-lambda bound."""
        return self.trace.final_bound

    def summary(self) -> dict:
        """The bound details stored in a model file."""
        ens = self.ensemble
        return {
            'lambda': self.lam,
            'bound': self.bound,
            'pb_kl_bound': self.pb_kl_bound,
            'delta': self.cfg.delta,
            'n': ens.n,
            'r': ens.r,
            'm': ens.m,
            'n_eff': self.cfg.n_eff,
            'iterations': len(self.trace.iterations),
            'converged': self.trace.converged,
        }


def auto_subset_size(n: int, d: int) -> int:
    """The default r: d + 1, or round(sqrt(n)) for low dimensional data."""
    r = d + 1 if d > 3 else round(math.sqrt(n))
    return max(1, min(r, n - 1))


def derived_seed(seed: int, *position: int) -> int:
    """A seed for one trial or grid cell."""
    state = np.random.SeedSequence([int(seed), *position]).generate_state(1)
    return int(state[0])


def run_pipeline(
        data: Dataset,
        m: int,
        r: int,
        delta: float = DEFAULT_DELTA,
        seed: int = 0,
        spec: LearnerSpec | None = None,
        *,
        prior=None,
        threads: int | None = None,
    ) -> PipelineResult:
    """Train an ensemble and minimise its PAC-Bayes-lambda bound."""
    spec = spec or LearnerSpec()
    if len(data.classes) < 2:
        raise DomainError('The training data contains a single class')
    BoundConfig(max(1, data.n - r), delta)          # Validate delta early.
    plan = draw_subsamples(data.n, m, r, seed)
    ens = build_ensemble(data, plan, spec, threads=threads)
    profile, cfg = ensemble_profile(ens, delta, prior)
    trace = alternate_minimize(profile, cfg)
    pb_kl = pac_bayes_kl_bound(profile, trace.final_posterior, cfg)
    log.info('m=%d r=%d: lambda=%.6g bound=%.6g kl bound=%.6g',
             m, r, trace.final_lambda, trace.final_bound, pb_kl)
    return PipelineResult(ens, profile, cfg, trace, pb_kl)


def axis_values(
        low: int, high: int, count: int = HEATMAP_STEPS,
        spacing: str = 'linear') -> list[int]:
    """Distinct integers spread over [low, high]."""
    if high < low:
        raise DomainError(f'Empty range [{low}, {high}]')
    if spacing == 'linear':
        raw = np.linspace(low, high, count)
    elif spacing == 'geometric':
        raw = np.geomspace(low, high, count)
    else:
        raise DomainError(f'Unknown spacing {spacing!r}')
    return sorted({int(v) for v in np.round(raw)})


@dataclass
class HeatmapResult:
    """Majority vote test losses over a grid of (m, r).

    @losses:   A len(m_values) by len(r_values) array.
    @baseline: A reference loss to subtract, if any.
    """

    m_values: list[int]
    r_values: list[int]
    losses: np.ndarray
    baseline: float | None = None

    def rows(self):
        """Generate (m, r, loss[, loss - baseline]) rows."""
        for i, m in enumerate(self.m_values):
            for j, r in enumerate(self.r_values):
                loss = float(self.losses[i, j])
                if self.baseline is None:
                    yield m, r, loss
                else:
                    yield m, r, loss, loss - self.baseline


def heatmap(
        train: Dataset,
        test: Dataset,
        m_values,
        r_values,
        delta: float = DEFAULT_DELTA,
        seed: int = 0,
        spec: LearnerSpec | None = None,
        *,
        baseline: float | None = None,
        threads: int | None = None,
    ) -> HeatmapResult:
    """Find the majority vote test loss for every (m, r) cell."""
    m_values = [int(m) for m in m_values]
    r_values = [int(r) for r in r_values]
    cells = [(i, j) for i in range(len(m_values))
             for j in range(len(r_values))]

    def run_cell(cell: tuple[int, int]) -> float:
        i, j = cell
        result = run_pipeline(
            train, m_values[i], r_values[j], delta,
            derived_seed(seed, i, j), spec, threads=1)
        return predict.test_loss(
            result.ensemble, result.posterior,
            predict.PredictionMode('majority'), test)

    losses = tasks.map_ordered(run_cell, cells, threads=threads)
    matrix = np.array(losses).reshape(len(m_values), len(r_values))
    return HeatmapResult(m_values, r_values, matrix, baseline)


@dataclass
class SweepRow:
    """One point of an m sweep.

    @m:           The number of hypotheses.
    @test_loss:   The majority vote test loss.
    @pb_kl_bound: The PAC-Bayes-kl bound at the minimising posterior.
    @bound:       The PAC-Bayes-lambda bound at the same posterior.
    @seconds:     Wall clock time for training and minimisation.
    """

    m: int
    test_loss: float
    pb_kl_bound: float
    bound: float
    seconds: float


def m_sweep(
        train: Dataset,
        test: Dataset,
        m_values,
        r: int,
        delta: float = DEFAULT_DELTA,
        seed: int = 0,
        spec: LearnerSpec | None = None,
        *,
        threads: int | None = None,
    ) -> list[SweepRow]:
    """Follow the test loss, bound and training time as m grows.

    Every point uses the same seed. Subsets are keyed by hypothesis index,
    so the ensemble for a smaller m is a prefix of the one for a larger m.
    """
    m_values = [int(m) for m in m_values]
    if not m_values:
        raise DomainError('An m sweep needs at least one value of m')

    def run_point(m: int) -> SweepRow:
        start = time.perf_counter()
        result = run_pipeline(train, m, r, delta, seed, spec, threads=1)
        seconds = time.perf_counter() - start
        loss = predict.test_loss(
            result.ensemble, result.posterior,
            predict.PredictionMode('majority'), test)
        return SweepRow(m, loss, result.pb_kl_bound, result.bound, seconds)

    return tasks.map_ordered(run_point, m_values, threads=threads)


@dataclass
class ValidityReport:
    """How often the bound failed to cover the true randomized risk.

    @trials:     The number of independent runs.
    @violations: Runs where the true risk exceeded the bound.
    @mean_gap:   The mean of bound minus true risk.
    @delta:      The confidence parameter used.
    @gaps:       The gap for each run.
    """

    trials: int
    violations: int
    mean_gap: float
    delta: float
    gaps: list[float] = field(default_factory=list)

    @property
    def violation_rate(self) -> float:
        """The fraction of runs that violated the bound."""
        return self.violations / self.trials


def validity(
        dist: Distribution,
        trials: int,
        n: int,
        m: int,
        r: int,
        delta: float = DEFAULT_DELTA,
        seed: int = 0,
        spec: LearnerSpec | None = None,
        *,
        probe_size: int = DEFAULT_PROBE_SIZE,
        threads: int | None = None,
    ) -> ValidityReport:
    """Check the final bound against the true risk over many samples."""
    if trials < 1:
        raise DomainError(f'trials must be at least 1, not {trials}')
    spec = spec or LearnerSpec('stump')

    def run_trial(t: int) -> tuple[float, float]:
        data = dist.sample(n, [int(seed), t])
        result = run_pipeline(
            data, m, r, delta, derived_seed(seed, t), spec, threads=1)
        risk = randomized_risk(
            dist, result.ensemble, result.posterior, probe_size,
            derived_seed(seed, t, 1))
        return result.bound, risk

    outcomes = tasks.map_ordered(run_trial, range(trials), threads=threads)
    gaps = [bound - risk for bound, risk in outcomes]
    violations = sum(1 for bound, risk in outcomes if risk > bound)
    return ValidityReport(
        trials, violations, float(np.mean(gaps)), delta, gaps)


@dataclass
class CompareReport:
    """Test losses of each prediction mode for one ensemble.

    @losses:             Test loss by mode name.
    @expected_randomized: The exact expected randomized test loss.
    @mass50:             Hypotheses making up half of the posterior mass.
    """

    losses: dict[str, float]
    expected_randomized: float
    mass50: int
    bound: float
    pb_kl_bound: float


def predictor_compare(
        train: Dataset,
        test: Dataset,
        m: int,
        r: int,
        delta: float = DEFAULT_DELTA,
        seed: int = 0,
        spec: LearnerSpec | None = None,
        *,
        threads: int | None = None,
    ) -> CompareReport:
    """Compare the prediction modes on a test set."""
    result = run_pipeline(train, m, r, delta, seed, spec, threads=threads)
    ens, rho = result.ensemble, result.posterior
    losses = {
        kind: predict.test_loss(
            ens, rho, predict.PredictionMode(kind, seed), test)
        for kind in predict.MODES}
    return CompareReport(
        losses, predict.expected_randomized_loss(ens, rho, test),
        predict.mass_fraction_count(rho), result.bound, result.pb_kl_bound)

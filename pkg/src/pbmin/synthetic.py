"""Binary classification tasks drawn from known distributions.

Because the distribution is known, the true risk of a hypothesis can be
found exactly (where the geometry allows) or estimated from a large probe
sample. This makes it possible to check whether a bound really holds.

Labels are always -1 and +1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np
from scipy.special import ndtr

from .core import DomainError, PosteriorWeights
from .ensemble import Dataset

if TYPE_CHECKING:
    from .ensemble import HypothesisEnsemble
    from .learners import TrainedClassifier

DEFAULT_PROBE_SIZE = 20_000


class Distribution(Protocol):
    """A source of labelled data with a computable risk."""

    def sample(self, n: int, seed) -> Dataset:
        """Draw n labelled points."""

    def risk(self, clf: TrainedClassifier,
             probe_size: int = DEFAULT_PROBE_SIZE, seed=0) -> float:
        """The zero-one risk of a classifier on this distribution."""


def _check_size(n: int) -> None:
    if n < 1:
        raise DomainError(f'Sample size must be at least 1, not {n}')


@dataclass(frozen=True)
class NoisyThreshold:
    """Points uniform on [0, 1]^d labelled by sign(x_0 - 1/2).

    Each label is flipped with probability eta. For a classifier h the risk
    is eta + (1 - 2 eta) P(h(X) != f(X)), where f is the noise free rule.
    """

    d: int = 2
    eta: float = 0.1

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f'd must be at least 1, not {self.d}')
        if not 0.0 <= self.eta < 0.5:
            raise DomainError(f'eta must lie in [0, 0.5), not {self.eta!r}')

    @property
    def bayes_risk(self) -> float:
        """The smallest achievable risk."""
        return self.eta

    def target(self, points) -> np.ndarray:
        """The noise free labels."""
        return np.where(np.asarray(points)[:, 0] > 0.5, 1, -1)

    def sample(self, n: int, seed) -> Dataset:
        """Draw n labelled points."""
        _check_size(n)
        rng = np.random.default_rng(seed)
        points = rng.random((n, self.d))
        flip = rng.random(n) < self.eta
        labels = np.where(flip, -self.target(points), self.target(points))
        return Dataset(points, labels)

    def disagreement(self, clf: TrainedClassifier) -> float | None:
        """The exact P(h(X) != f(X)), or None if it cannot be found."""
        if clf.kind == 'constant':
            return 0.5 if clf.fallback_label in (-1, 1) else 1.0
        if clf.kind != 'stump':
            return None
        assert clf.threshold is not None
        t = min(1.0, max(0.0, clf.threshold))
        if clf.feature != 0:
            # Independent of x_0, so each side disagrees half the time.
            return (
                t * (0.5 if clf.left_label in (-1, 1) else 1.0)
                + (1.0 - t) * (0.5 if clf.right_label in (-1, 1) else 1.0))
        edges = sorted({0.0, t, 0.5, 1.0})
        total = 0.0
        for lo, hi in zip(edges, edges[1:]):
            mid = 0.5 * (lo + hi)
            predicted = clf.left_label if mid <= t else clf.right_label
            if predicted != (1 if mid > 0.5 else -1):
                total += hi - lo
        return total

    def risk(self, clf: TrainedClassifier,
             probe_size: int = DEFAULT_PROBE_SIZE, seed=0) -> float:
        """The zero-one risk; exact for stumps and constants."""
        dis = self.disagreement(clf)
        if dis is None:
            rng = np.random.default_rng(seed)
            probe = rng.random((probe_size, self.d))
            dis = float(np.mean(
                clf.predict_many(probe) != self.target(probe)))
        return self.eta + (1.0 - 2.0 * self.eta) * dis


@dataclass(frozen=True)
class TwoGaussians:
    """Two unit-variance Gaussian classes centred on -mu(1..1) and +mu(1..1).

    Both classes are equally likely.
    """

    d: int = 10
    mu: float = 0.5

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f'd must be at least 1, not {self.d}')
        if not self.mu > 0.0:
            raise DomainError(f'mu must be positive, not {self.mu!r}')

    @property
    def bayes_risk(self) -> float:
        """The risk of the optimal linear rule."""
        return float(ndtr(-self.mu * math.sqrt(self.d)))

    def sample(self, n: int, seed) -> Dataset:
        """Draw n labelled points."""
        _check_size(n)
        rng = np.random.default_rng(seed)
        labels = np.where(rng.random(n) < 0.5, -1, 1)
        points = rng.standard_normal((n, self.d)) + self.mu * labels[:, None]
        return Dataset(points, labels)

    def risk(self, clf: TrainedClassifier,
             probe_size: int = DEFAULT_PROBE_SIZE, seed=0) -> float:
        """The zero-one risk, estimated on a probe sample."""
        if clf.kind == 'constant':
            return 0.5 if clf.fallback_label in (-1, 1) else 1.0
        probe = self.sample(probe_size, seed)
        return float(np.mean(clf.predict_many(probe.points) != probe.labels))


def randomized_risk(
        dist: Distribution,
        ens: HypothesisEnsemble,
        rho: PosteriorWeights,
        probe_size: int = DEFAULT_PROBE_SIZE,
        seed=0,
    ) -> float:
    """The true risk of the randomized classifier defined by rho."""
    masses = rho.masses
    return float(sum(
        mass * dist.risk(clf, probe_size, seed)
        for mass, clf in zip(masses, ens.hypotheses) if mass > 0.0))


DISTRIBUTIONS = {
    'noisy_threshold': NoisyThreshold,
    'two_gaussians': TwoGaussians,
}

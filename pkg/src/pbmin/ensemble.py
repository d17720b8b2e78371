"""Hypothesis spaces built by training on subsamples.

Each of m hypotheses is trained on r points drawn from the sample and
validated on the remaining n - r points. The validation losses form a
`LossProfile` with n_eff = n - r, to which every bound, optimiser and
certificate applies unchanged.

Index selection never looks at labels. Each subset, and each learner's
random choices, use their own child stream of the seed, so hypotheses can be
trained in any order or in parallel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tasks
from .core import BoundConfig, DomainError, LossProfile
from .learners import (
    Label, LearnerSpec, TrainedClassifier, constant_classifier, fit,
    jaakkola_grid, py_label)

log = logging.getLogger(__name__)

#: The last element of a child stream key; selects what the stream is for.
SUBSET_STREAM = 0
LEARNER_STREAM = 1


@dataclass(frozen=True, eq=False)
class Dataset:
    """A labelled sample.

    @points: An (n, d) array of features.
    @labels: The n labels.
    """

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        labels = np.asarray(self.labels)
        if points.ndim != 2:
            raise DomainError('Points must form a 2D array')
        if len(points) != len(labels):
            raise DomainError(
                f'{len(points)} points but {len(labels)} labels')
        if not np.all(np.isfinite(points)):
            raise DomainError('Features must be finite')
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'labels', labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n(self) -> int:
        """The number of points."""
        return len(self.labels)

    @property
    def d(self) -> int:
        """The number of features."""
        return self.points.shape[1]

    @property
    def classes(self) -> list[Label]:
        """The distinct labels in ascending order."""
        return [py_label(c) for c in np.unique(self.labels)]

    def subset(self, indices) -> Dataset:
        """Create a dataset from the given rows."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.points[indices], self.labels[indices])

    def complement(self, indices) -> np.ndarray:
        """The sorted indices that are not in the given set."""
        mask = np.ones(self.n, dtype=bool)
        mask[np.asarray(indices, dtype=np.int64)] = False
        return np.nonzero(mask)[0]


@dataclass(frozen=True, eq=False)
class SubsamplePlan:
    """The training subsets of an ensemble.

    @subsets: m sorted arrays of r distinct indices into [0, n).
    @seed:    The seed the subsets were drawn with.
    @n:       The sample size.
    @r:       The subset size.
    """

    subsets: tuple[np.ndarray, ...]
    seed: int
    n: int
    r: int

    def __post_init__(self):
        if not 1 <= self.r < self.n:
            raise DomainError(
                f'Need 1 <= r < n, not r={self.r}, n={self.n}; the bound needs'
                ' at least one validation point')
        subsets = []
        for subset in self.subsets:
            arr = np.asarray(subset, dtype=np.int64)
            if (len(arr) != self.r or len(np.unique(arr)) != self.r
                    or np.any((arr < 0) | (arr >= self.n))):
                raise DomainError(
                    f'Each subset needs {self.r} distinct indices in'
                    f' [0, {self.n})')
            arr = np.sort(arr)
            arr.setflags(write=False)
            subsets.append(arr)
        if not subsets:
            raise DomainError('A subsample plan needs at least one subset')
        object.__setattr__(self, 'subsets', tuple(subsets))

    @property
    def m(self) -> int:
        """The number of subsets."""
        return len(self.subsets)

    def validation_indices(self, h: int) -> np.ndarray:
        """The sorted indices not used to train hypothesis h."""
        mask = np.ones(self.n, dtype=bool)
        mask[self.subsets[h]] = False
        return np.nonzero(mask)[0]


@dataclass(eq=False)
class HypothesisEnsemble:
    """Trained hypotheses with their validation losses.

    @hypotheses:        One classifier per subset.
    @plan:              The subsets the classifiers were trained on.
    @validation_losses: The zero-one loss of each hypothesis on the points
                        outside its subset.
    @spec:              The learner specification used.
    """

    hypotheses: list[TrainedClassifier]
    plan: SubsamplePlan
    validation_losses: np.ndarray
    spec: LearnerSpec = field(default_factory=LearnerSpec)

    @property
    def m(self) -> int:
        """The number of hypotheses."""
        return len(self.hypotheses)

    @property
    def n(self) -> int:
        """The size of the sample the ensemble was built from."""
        return self.plan.n

    @property
    def r(self) -> int:
        """The training subset size."""
        return self.plan.r

    @property
    def n_eff(self) -> int:
        """The number of validation points behind every loss."""
        return self.plan.n - self.plan.r


def child_stream(seed: int, h: int, purpose: int) -> list[int]:
    """The seed key of the random stream for hypothesis h."""
    return [int(seed), int(h), int(purpose)]


def draw_subsamples(n: int, m: int, r: int, seed: int) -> SubsamplePlan:
    """Draw m subsets of r distinct indices from range(n)."""
    if m < 1:
        raise DomainError(f'm must be at least 1, not {m}')
    if not 1 <= r < n:
        raise DomainError(
            f'Need 1 <= r < n, not r={r}, n={n}; the bound needs at least'
            ' one validation point')
    subsets = tuple(
        np.sort(np.random.default_rng(
            child_stream(seed, h, SUBSET_STREAM)).choice(
                n, size=r, replace=False))
        for h in range(m))
    return SubsamplePlan(subsets, seed, n, r)


def zero_one_loss(predicted, labels) -> float:
    """The fraction of predictions that differ from the labels."""
    return float(np.mean(np.asarray(predicted) != np.asarray(labels)))


def build_ensemble(
        data: Dataset,
        plan: SubsamplePlan,
        spec: LearnerSpec,
        *,
        threads: int | None = None,
    ) -> HypothesisEnsemble:
    """Train one hypothesis per subset and record its validation loss.

    If the learner needs a bandwidth grid and none is given, the Jaakkola
    grid of the whole sample is used.
    """
    if plan.n != data.n:
        raise DomainError(
            f'The plan is for n={plan.n} but the dataset has {data.n} points')
    if spec.kind == 'kernel_perceptron' and len(data.classes) > 2:
        raise DomainError(
            f'The kernel perceptron is binary, but the data has'
            f' {len(data.classes)} classes')
    if spec.needs_grid:
        spec = spec.with_grid(jaakkola_grid(data.points, data.labels))
        log.debug('Using gamma grid %s', spec.gamma_grid)

    def train(h: int) -> tuple[TrainedClassifier, float]:
        subset = plan.subsets[h]
        labels = data.labels[subset]
        try:
            clf = fit(
                spec, data.points[subset], labels,
                child_stream(plan.seed, h, LEARNER_STREAM))
        except DomainError as exc:
            log.debug('Hypothesis %d falls back to a constant: %s', h, exc)
            values, counts = np.unique(labels, return_counts=True)
            clf = constant_classifier(
                py_label(values[int(np.argmax(counts))]), data.d)
        val = plan.validation_indices(h)
        loss = zero_one_loss(clf.predict_many(data.points[val]),
                             data.labels[val])
        return clf, loss

    results = tasks.map_ordered(train, range(plan.m), threads=threads)
    log.info('Trained %d hypotheses on subsets of size %d', plan.m, plan.r)
    return HypothesisEnsemble(
        [clf for clf, _ in results], plan,
        np.array([loss for _, loss in results]), spec)


def ensemble_profile(
        ens: HypothesisEnsemble,
        delta: float,
        prior=None,
    ) -> tuple[LossProfile, BoundConfig]:
    """Create the loss profile and bound configuration for an ensemble.

    :prior: Explicit per-hypothesis prior masses, or None for uniform.
    """
    n_eff = ens.n_eff
    profile = LossProfile.from_losses(ens.validation_losses, n_eff, prior)
    return profile, BoundConfig(n_eff, delta)

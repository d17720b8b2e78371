"""Weak learners used to populate a hypothesis space.

Three kinds of learner are built in.

kernel_perceptron
    A dual (kernel) perceptron using the RBF kernel exp(-gamma |x - x'|^2).
    Binary labels only.
stump
    An exhaustive search over (feature, threshold) decision stumps.
constant
    Always predicts the majority training label.

A `TrainedClassifier` is self-contained. It holds everything needed for
prediction, so it never refers back to the data it was trained on.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Union

import numpy as np
from scipy.spatial.distance import cdist

from .core import DomainError

log = logging.getLogger(__name__)

LearnerKind = Literal['kernel_perceptron', 'stump', 'constant']
Label = Union[int, float, str]

KINDS: tuple[str, ...] = ('kernel_perceptron', 'stump', 'constant')
DEFAULT_EPOCHS = 50

#: Powers of ten applied to the Jaakkola bandwidth to form a grid.
GRID_EXPONENTS = (-4, -2, 0, 2, 4)


def py_label(value) -> Label:
    """Convert a numpy scalar label into a plain Python value."""
    return value.item() if isinstance(value, np.generic) else value


@dataclass(frozen=True)
class LearnerSpec:
    """How each hypothesis of an ensemble is trained.

    @kind:       The learner to use.
    @gamma:      A fixed RBF bandwidth, or None.
    @gamma_grid: When gamma is None, a bandwidth is drawn from this grid for
                 each training subset.
    @epochs:     The maximum number of perceptron passes.
    """

    kind: LearnerKind = 'kernel_perceptron'
    gamma: float | None = None
    gamma_grid: tuple[float, ...] | None = None
    epochs: int = DEFAULT_EPOCHS

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f'Unknown learner kind {self.kind!r}')
        if self.gamma is not None and not self.gamma > 0.0:
            raise DomainError(f'gamma must be positive, not {self.gamma!r}')
        if self.gamma_grid is not None:
            grid = tuple(float(g) for g in self.gamma_grid)
            if not grid or any(not g > 0.0 for g in grid):
                raise DomainError('A gamma grid needs positive values')
            object.__setattr__(self, 'gamma_grid', grid)
        if self.epochs < 1:
            raise DomainError(f'epochs must be >= 1, not {self.epochs}')

    @property
    def needs_grid(self) -> bool:
        """True if a gamma grid must be supplied before fitting."""
        return (
            self.kind == 'kernel_perceptron'
            and self.gamma is None and self.gamma_grid is None)

    def with_grid(self, grid) -> LearnerSpec:
        """Create a copy that draws gamma from the given grid."""
        return replace(self, gamma_grid=tuple(grid))


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    """A trained hypothesis.

    Which fields are used depends on the kind. A constant classifier only
    uses fallback_label.
    """

    kind: LearnerKind
    dim: int
    classes: tuple[Label, ...] = ()
    fallback_label: Label | None = None
    gamma: float | None = None
    points: np.ndarray | None = None
    signs: np.ndarray | None = None
    coefs: np.ndarray | None = None
    feature: int | None = None
    threshold: float | None = None
    left_label: Label | None = None
    right_label: Label | None = None

    def predict(self, point) -> Label:
        """Predict the label of a single point."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.dim,):
            raise DomainError(
                f'Expected a point with {self.dim} features, got shape'
                f' {point.shape}')
        return py_label(self.predict_many(point.reshape(1, -1))[0])

    def predict_many(self, points) -> np.ndarray:
        """Predict the labels of each row of a 2D array of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise DomainError(
                f'Expected points with {self.dim} features, got shape'
                f' {points.shape}')
        count = points.shape[0]
        if self.kind == 'constant':
            return np.array([self.fallback_label] * count)
        if self.kind == 'stump':
            assert self.feature is not None and self.threshold is not None
            left = points[:, self.feature] <= self.threshold
            return np.where(
                left, np.array(self.left_label), np.array(self.right_label))

        assert self.points is not None and self.gamma is not None
        gram = rbf_kernel(self.points, points, self.gamma)
        scores = (self.coefs * self.signs) @ gram
        return np.where(
            scores > 0.0, np.array(self.classes[1]),
            np.array(self.classes[0]))


def rbf_kernel(a, b, gamma: float) -> np.ndarray:
    """The matrix exp(-gamma |a_i - b_j|^2)."""
    return np.exp(-gamma * cdist(a, b, 'sqeuclidean'))


def _majority(labels: np.ndarray, classes: np.ndarray) -> Label:
    counts = np.array([np.sum(labels == c) for c in classes])
    return py_label(classes[int(np.argmax(counts))])


def _as_training_set(points, labels) -> tuple[np.ndarray, np.ndarray]:
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if len(points) == 0:
        raise DomainError('Cannot train on an empty set of points')
    if len(points) != len(labels):
        raise DomainError('Points and labels differ in length')
    return points, labels


def constant_classifier(label: Label, dim: int) -> TrainedClassifier:
    """Create a classifier that always predicts one label."""
    return TrainedClassifier('constant', dim, (label,), fallback_label=label)


def _fit_perceptron(
        points: np.ndarray, labels: np.ndarray, classes: np.ndarray,
        gamma: float, epochs: int) -> TrainedClassifier:
    signs = np.where(labels == classes[1], 1.0, -1.0)
    gram = rbf_kernel(points, points, gamma)
    coefs = np.zeros(len(points))
    for _ in range(epochs):
        mistakes = 0
        for i in range(len(points)):
            score = float(np.dot(coefs * signs, gram[:, i]))
            if signs[i] * score <= 0.0:
                coefs[i] += 1.0
                mistakes += 1
        if mistakes == 0:
            break
    return TrainedClassifier(
        'kernel_perceptron', points.shape[1],
        classes=tuple(py_label(c) for c in classes),
        fallback_label=py_label(classes[0]),
        gamma=float(gamma), points=points, signs=signs, coefs=coefs)


def _fit_stump(
        points: np.ndarray, labels: np.ndarray, classes: np.ndarray,
    ) -> TrainedClassifier:
    n, dim = points.shape
    onehot = (labels[:, None] == classes[None, :]).astype(np.int64)
    totals = onehot.sum(axis=0)
    best: tuple[int, int, float, int, int] | None = None
    for feature in range(dim):
        order = np.argsort(points[:, feature], kind='stable')
        xs = points[order, feature]
        splits = np.nonzero(xs[:-1] < xs[1:])[0]
        if len(splits) == 0:
            continue
        left = np.cumsum(onehot[order], axis=0)[splits]
        right = totals - left
        errors = (splits + 1 - left.max(axis=1)) + (
            n - splits - 1 - right.max(axis=1))
        k = int(np.argmin(errors))
        if best is None or errors[k] < best[0]:
            i = splits[k]
            best = (
                int(errors[k]), feature, 0.5 * (xs[i] + xs[i + 1]),
                int(np.argmax(left[k])), int(np.argmax(right[k])))

    if best is None:
        log.debug('All training points coincide; using a constant classifier')
        return constant_classifier(_majority(labels, classes), dim)
    _, feature, threshold, left_class, right_class = best
    return TrainedClassifier(
        'stump', dim, classes=tuple(py_label(c) for c in classes),
        fallback_label=_majority(labels, classes),
        feature=feature, threshold=float(threshold),
        left_label=py_label(classes[left_class]),
        right_label=py_label(classes[right_class]))


def choose_gamma(spec: LearnerSpec, stream_seed) -> float:
    """Work out the RBF bandwidth to use for one training subset."""
    if spec.gamma is not None:
        return spec.gamma
    if spec.gamma_grid is None:
        raise DomainError(
            'The kernel perceptron needs either a fixed gamma or a gamma grid')
    rng = np.random.default_rng(stream_seed)
    return spec.gamma_grid[int(rng.integers(len(spec.gamma_grid)))]


def fit(spec: LearnerSpec, points, labels, stream_seed=0) -> TrainedClassifier:
    """Train a classifier.

    A training set with only one class always produces a constant
    classifier.

    :stream_seed: Seeds the random choice of gamma from a grid.
    """
    points, labels = _as_training_set(points, labels)
    classes = np.unique(labels)
    dim = points.shape[1]
    if spec.kind == 'constant' or len(classes) == 1:
        if spec.kind != 'constant':
            log.debug('Single class training set; using a constant classifier')
        return constant_classifier(_majority(labels, classes), dim)
    if spec.kind == 'stump':
        return _fit_stump(points, labels, classes)

    if len(classes) > 2:
        raise DomainError(
            f'The kernel perceptron is binary, but {len(classes)} classes'
            ' were supplied')
    return _fit_perceptron(
        points, labels, classes, choose_gamma(spec, stream_seed), spec.epochs)


def predict(clf: TrainedClassifier, point) -> Label:
    """Predict the label of a single point."""
    return clf.predict(point)


def jaakkola_grid(points, labels) -> list[float]:
    """Create a geometric grid of RBF bandwidths around the Jaakkola value.

    For each point, G is the distance to the nearest point with a different
    label and gamma_J = 1 / (2 median(G)^2). The grid is gamma_J times 10^k
    for k in (-4, -2, 0, 2, 4), in ascending order.
    """
    points, labels = _as_training_set(points, labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise DomainError('The Jaakkola heuristic needs at least two classes')

    dist = cdist(points, points)
    other = labels[:, None] != labels[None, :]
    nearest = np.where(other, dist, np.inf).min(axis=1)
    median = float(np.median(nearest))
    if median == 0.0:
        raise DomainError(
            'The median distance between differently labelled points is zero'
            ' (duplicated points with conflicting labels?); remove the'
            ' duplicates or give an explicit --gamma')
    gamma_j = 1.0 / (2.0 * median * median)
    return [gamma_j * math.pow(10.0, k) for k in GRID_EXPONENTS]

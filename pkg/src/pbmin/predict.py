"""Prediction with a weighted ensemble.

Four modes are supported.

randomized
    For each query point draw a hypothesis from rho and apply it.
majority
    The rho-weighted majority vote.
uniform
    The unweighted majority vote.
best_h
    The hypothesis with the smallest validation loss.

Vote ties are always resolved in favour of the smallest label.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal

import numpy as np

from .core import AlignmentError, DomainError, PosteriorWeights
from .learners import Label, py_label

if TYPE_CHECKING:
    from .ensemble import Dataset, HypothesisEnsemble

ModeKind = Literal['randomized', 'majority', 'uniform', 'best_h']
MODES: tuple[str, ...] = ('majority', 'uniform', 'best_h', 'randomized')


@dataclass(frozen=True)
class PredictionMode:
    """A prediction mode; the seed is only used by randomized prediction."""

    kind: ModeKind = 'majority'
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODES:
            raise DomainError(f'Unknown prediction mode {self.kind!r}')


def _masses(ens: HypothesisEnsemble, rho: PosteriorWeights) -> np.ndarray:
    if len(rho) != ens.m or np.any(rho.multiplicities != 1):
        raise AlignmentError(
            f'A posterior with {len(rho)} entries does not match an ensemble'
            f' of {ens.m} hypotheses')
    return rho.masses


def _as_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return points.reshape(1, -1) if points.ndim == 1 else points


def uniform_posterior(ens: HypothesisEnsemble) -> PosteriorWeights:
    """The posterior giving every hypothesis the same weight."""
    return PosteriorWeights(np.full(ens.m, 1.0 / ens.m))


def prediction_matrix(ens: HypothesisEnsemble, points) -> np.ndarray:
    """The (m, N) array of each hypothesis' prediction for each point."""
    points = _as_points(points)
    return np.stack([h.predict_many(points) for h in ens.hypotheses])


def vote(predictions: np.ndarray, masses) -> np.ndarray:
    """Weighted votes over the columns of a prediction matrix.

    For each column, the label with the largest total mass wins. Ties go to
    the smallest label.
    """
    masses = np.asarray(masses, dtype=float)
    labels = np.unique(predictions)
    totals = np.zeros((len(labels), predictions.shape[1]))
    for h in range(predictions.shape[0]):
        totals += masses[h] * (predictions[h][None, :] == labels[:, None])
    return labels[np.argmax(totals, axis=0)]


def majority_votes(
        ens: HypothesisEnsemble, rho: PosteriorWeights, points) -> np.ndarray:
    """The rho-weighted majority vote for each of several points."""
    masses = _masses(ens, rho)
    return vote(prediction_matrix(ens, points), masses)


def majority_vote(
        ens: HypothesisEnsemble, rho: PosteriorWeights, point) -> Label:
    """The label with the largest rho-weighted vote for a single point."""
    return py_label(majority_votes(ens, rho, _as_points(point))[0])


def draw_hypothesis(masses: np.ndarray, stream: np.random.Generator) -> int:
    """Draw a hypothesis index from the given masses, by inverse CDF."""
    cdf = np.cumsum(masses)
    index = int(np.searchsorted(cdf, stream.random() * cdf[-1], side='right'))
    return min(index, int(np.flatnonzero(masses)[-1]))


def randomized_predict(
        ens: HypothesisEnsemble,
        rho: PosteriorWeights,
        point,
        stream: np.random.Generator,
    ) -> Label:
    """Predict by drawing a hypothesis from rho and applying it."""
    h = draw_hypothesis(_masses(ens, rho), stream)
    return ens.hypotheses[h].predict(np.asarray(point, dtype=float))


def randomized_predictions(
        ens: HypothesisEnsemble,
        rho: PosteriorWeights,
        points,
        seed: int,
    ) -> np.ndarray:
    """Randomized predictions with a fresh draw for each point.

    The draw for point j uses its own stream, keyed by (seed, j).
    """
    masses = _masses(ens, rho)
    points = _as_points(points)
    chosen = [
        draw_hypothesis(masses, np.random.default_rng([int(seed), j]))
        for j in range(len(points))]
    preds = prediction_matrix(ens, points)
    return preds[chosen, np.arange(len(points))]


def best_h(ens: HypothesisEnsemble) -> int:
    """The index of the smallest validation loss; the lowest on ties."""
    return int(np.argmin(ens.validation_losses))


def predict_labels(
        ens: HypothesisEnsemble,
        rho: PosteriorWeights,
        mode: PredictionMode,
        points,
    ) -> np.ndarray:
    """Predict the label of each point using the given mode."""
    points = _as_points(points)
    if mode.kind == 'majority':
        return majority_votes(ens, rho, points)
    if mode.kind == 'uniform':
        return majority_votes(ens, uniform_posterior(ens), points)
    if mode.kind == 'best_h':
        return ens.hypotheses[best_h(ens)].predict_many(points)
    return randomized_predictions(ens, rho, points, mode.seed)


def _check_test_set(test_data: Dataset) -> None:
    if test_data.n == 0:
        raise DomainError('The test set is empty')


def test_loss(
        ens: HypothesisEnsemble,
        rho: PosteriorWeights,
        mode: PredictionMode,
        test_data: Dataset,
    ) -> float:
    """The zero-one loss of a prediction mode over a test set."""
    _check_test_set(test_data)
    predicted = predict_labels(ens, rho, mode, test_data.points)
    return float(np.mean(predicted != test_data.labels))


def hypothesis_test_losses(
        ens: HypothesisEnsemble, test_data: Dataset) -> np.ndarray:
    """The zero-one test loss of every hypothesis."""
    _check_test_set(test_data)
    preds = prediction_matrix(ens, test_data.points)
    return np.mean(preds != test_data.labels[None, :], axis=1)


def expected_randomized_loss(
        ens: HypothesisEnsemble,
        rho: PosteriorWeights,
        test_data: Dataset,
    ) -> float:
    """The exact expected test loss of randomized prediction."""
    masses = _masses(ens, rho)
    return float(np.dot(masses, hypothesis_test_losses(ens, test_data)))


def mass_fraction_count(rho: PosteriorWeights, fraction: float = 0.5) -> int:
    """The fewest hypotheses that together carry the given share of rho.

    Hypotheses are taken in descending order of weight.
    """
    if not 0.0 < fraction <= 1.0:
        raise DomainError(f'fraction must lie in (0, 1], not {fraction!r}')
    weights = np.sort(rho.per_hypothesis())[::-1]
    reached = np.cumsum(weights) >= fraction - 1e-12
    return int(np.argmax(reached)) + 1

"""Shared domain types and the Gibbs expectation primitives.

A `LossProfile` is a compressed multiset of hypotheses. Each entry holds one
empirical loss, the prior mass of *each* hypothesis in the entry and the
number of hypotheses (the multiplicity) that share that loss and mass. A
`PosteriorWeights` instance is aligned with a profile's entries and, like the
prior, stores per-hypothesis weights.

All types are immutable; the numpy arrays they hold are marked read-only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np
from scipy.special import logsumexp, rel_entr

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

log = logging.getLogger(__name__)

#: Total probability mass must be 1 within this tolerance.
MASS_TOL = 1e-12

#: Masses within this distance of 1 are silently renormalised.
RENORM_TOL = 1e-9


class DomainError(ValueError):
    """A numeric argument lies outside its permitted domain."""


class AlignmentError(DomainError):
    """A posterior does not line up with the profile it is used with."""


class SupportError(DomainError):
    """A posterior puts mass on a hypothesis that the prior excludes."""


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _renormalised(masses: np.ndarray, counts: np.ndarray, what: str):
    total = float(np.dot(masses, counts))
    if not math.isfinite(total) or abs(total - 1.0) > RENORM_TOL:
        msg = f'{what} has total mass {total!r}; it must sum to 1'
        raise DomainError(msg)
    if abs(total - 1.0) > MASS_TOL:
        masses = masses / total
    return masses


@dataclass(frozen=True, eq=False)
class LossProfile:
    """Empirical losses of a finite hypothesis space, with prior masses.

    @losses:
        The distinct-entry losses, each in [0, 1].
    @prior_masses:
        The prior mass of a single hypothesis in each entry.
    @multiplicities:
        The number of hypotheses in each entry.
    @n_eff:
        The number of i.i.d. evaluation points behind every loss.
    """

    losses: np.ndarray
    prior_masses: np.ndarray
    multiplicities: np.ndarray
    n_eff: int

    def __post_init__(self):
        losses = np.array(self.losses, dtype=float).reshape(-1)
        masses = np.array(self.prior_masses, dtype=float).reshape(-1)
        raw_counts = np.array(self.multiplicities).reshape(-1)
        if not (len(losses) == len(masses) == len(raw_counts)):
            raise AlignmentError(
                'losses, prior masses and multiplicities differ in length')
        if len(losses) == 0:
            raise DomainError('A loss profile needs at least one hypothesis')
        if not np.all(np.isfinite(losses)) or np.any(
                (losses < 0.0) | (losses > 1.0)):
            raise DomainError('Every loss must lie in [0, 1]')
        if not np.all(np.isfinite(masses)) or np.any(
                (masses <= 0.0) | (masses > 1.0)):
            raise DomainError('Every prior mass must lie in (0, 1]')
        counts = raw_counts.astype(np.int64)
        if np.any(counts != raw_counts) or np.any(counts < 1):
            raise DomainError('Multiplicities must be positive integers')
        if int(self.n_eff) != self.n_eff or self.n_eff < 1:
            raise DomainError(f'n_eff must be a positive integer, not '
                              f'{self.n_eff!r}')
        masses = _renormalised(masses, counts, 'The prior')
        object.__setattr__(self, 'losses', _readonly(losses))
        object.__setattr__(self, 'prior_masses', _readonly(masses))
        object.__setattr__(self, 'multiplicities', _readonly(counts, np.int64))
        object.__setattr__(self, 'n_eff', int(self.n_eff))

    @classmethod
    def from_losses(
            cls,
            losses: Iterable[float],
            n_eff: int,
            prior: Sequence[float] | np.ndarray | None = None,
        ) -> LossProfile:
        """Create a profile with one entry per hypothesis.

        :prior: Explicit prior masses. A uniform prior is used if omitted.
        """
        losses = np.asarray(list(losses), dtype=float)
        m = len(losses)
        if prior is None:
            prior = np.full(m, 1.0 / max(m, 1))
        return cls(losses, np.asarray(prior, dtype=float), np.ones(m), n_eff)

    @classmethod
    def uniform(
            cls,
            losses: Sequence[float],
            multiplicities: Sequence[int],
            n_eff: int,
        ) -> LossProfile:
        """Create a compressed profile with a uniform prior."""
        counts = np.asarray(multiplicities)
        m = int(np.sum(counts))
        masses = np.full(len(counts), 1.0 / max(m, 1))
        return cls(np.asarray(losses, dtype=float), masses, counts, n_eff)

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def entries(self) -> list[tuple[float, float, int]]:
        """The (loss, prior_mass, multiplicity) triples."""
        return [
            (float(loss), float(mass), int(count))
            for loss, mass, count in zip(
                self.losses, self.prior_masses, self.multiplicities)]

    @property
    def hypothesis_count(self) -> int:
        """The number of hypotheses, m, represented by this profile."""
        return int(np.sum(self.multiplicities))

    @property
    def min_loss(self) -> float:
        """The smallest empirical loss."""
        return float(np.min(self.losses))

    def is_uniform_prior(self, rel_tol: float = 1e-9) -> bool:
        """Test whether every hypothesis carries the same prior mass."""
        masses = self.prior_masses
        return bool(np.ptp(masses) <= rel_tol * np.max(masses))

    def with_n_eff(self, n_eff: int) -> LossProfile:
        """Create a copy that uses a different evaluation sample size."""
        return replace(self, n_eff=n_eff)

    def expand(self) -> LossProfile:
        """Split every entry into multiplicity-one entries."""
        counts = self.multiplicities
        return LossProfile(
            np.repeat(self.losses, counts),
            np.repeat(self.prior_masses, counts),
            np.ones(int(np.sum(counts)), dtype=np.int64),
            self.n_eff)

    def compress(self) -> LossProfile:
        """Merge entries that share both their loss and their prior mass.

        The merged entries are ordered by (loss, prior mass).
        """
        keys = np.stack([self.losses, self.prior_masses], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        counts = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(counts, inverse.reshape(-1), self.multiplicities)
        return LossProfile(uniq[:, 0], uniq[:, 1], counts, self.n_eff)


@dataclass(frozen=True, eq=False)
class PosteriorWeights:
    """A distribution, rho, over the hypotheses of a `LossProfile`.

    @weights:
        The per-hypothesis weight for each profile entry.
    @multiplicities:
        The entry multiplicities; an entry's total mass is weight times
        multiplicity.
    """

    weights: np.ndarray
    multiplicities: np.ndarray = field(default=None)   # type: ignore[assignment]

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if self.multiplicities is None:
            counts = np.ones(len(weights), dtype=np.int64)
        else:
            counts = np.array(self.multiplicities, dtype=np.int64).reshape(-1)
        if len(counts) != len(weights):
            raise AlignmentError('Weights and multiplicities differ in length')
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise DomainError('Posterior weights must be finite and >= 0')
        weights = _renormalised(weights, counts, 'The posterior')
        object.__setattr__(self, 'weights', _readonly(weights))
        object.__setattr__(self, 'multiplicities', _readonly(counts, np.int64))

    @classmethod
    def for_profile(cls, profile: LossProfile, weights) -> PosteriorWeights:
        """Create weights aligned with a profile."""
        return cls(np.asarray(weights, dtype=float), profile.multiplicities)

    @classmethod
    def prior_of(cls, profile: LossProfile) -> PosteriorWeights:
        """The posterior that equals the profile's prior."""
        return cls(profile.prior_masses, profile.multiplicities)

    @classmethod
    def point_mass(cls, profile: LossProfile, index: int) -> PosteriorWeights:
        """Put all the mass on one entry of a profile."""
        weights = np.zeros(len(profile))
        weights[index] = 1.0 / profile.multiplicities[index]
        return cls(weights, profile.multiplicities)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def masses(self) -> np.ndarray:
        """The total mass of each entry."""
        return self.weights * self.multiplicities

    def per_hypothesis(self) -> np.ndarray:
        """The weights expanded to one value per hypothesis."""
        return np.repeat(self.weights, self.multiplicities)


@dataclass(frozen=True)
class BoundConfig:
    """The confidence parameters and tolerances of bound evaluations.

    @n_eff:     Number of i.i.d. evaluation points (n, or n - r).
    @delta:     The confidence parameter, in (0, 1).
    @tol_mass:  Tolerance on probability masses.
    @tol_bound: Alternating minimisation stops when the bound decreases by
                less than this.
    @max_iters: Iteration cap for alternating minimisation.
    @tol_kl:    Absolute tolerance of kl inversion.
    """

    n_eff: int
    delta: float
    tol_mass: float = MASS_TOL
    tol_bound: float = 1e-9
    max_iters: int = 1000
    tol_kl: float = 1e-12

    def __post_init__(self):
        if int(self.n_eff) != self.n_eff or self.n_eff < 1:
            raise DomainError(
                f'n_eff must be a positive integer, not {self.n_eff!r}')
        if not 0.0 < self.delta < 1.0:
            raise DomainError(f'delta must lie in (0, 1), not {self.delta!r}')
        if self.max_iters < 1:
            raise DomainError('max_iters must be at least 1')
        if self.tol_kl <= 0.0:
            raise DomainError('tol_kl must be positive')

    @property
    def confidence_term(self) -> float:
        """The value ln(2 sqrt(n) / delta)."""
        return math.log(2.0 * math.sqrt(self.n_eff) / self.delta)

    def check(self, profile: LossProfile) -> None:
        """Verify that a profile was evaluated on this configuration's n."""
        if profile.n_eff != self.n_eff:
            msg = (
                f'Profile n_eff={profile.n_eff} does not match the bound'
                f' configuration n_eff={self.n_eff}')
            raise DomainError(msg)


def check_aligned(profile: LossProfile, rho: PosteriorWeights) -> None:
    """Raise AlignmentError unless rho lines up with the profile."""
    if len(rho) != len(profile) or not np.array_equal(
            rho.multiplicities, profile.multiplicities):
        msg = (
            f'Posterior with {len(rho)} entries does not match a profile'
            f' with {len(profile)} entries')
        raise AlignmentError(msg)


def gibbs_loss(profile: LossProfile, rho: PosteriorWeights) -> float:
    """The expected empirical loss, E_rho[L], of the randomized classifier."""
    check_aligned(profile, rho)
    value = float(np.dot(rho.masses, profile.losses))
    return min(1.0, max(0.0, value))


def gibbs_variance(profile: LossProfile, rho: PosteriorWeights) -> float:
    """The variance, under rho, of the empirical losses."""
    check_aligned(profile, rho)
    masses = rho.masses
    mean = float(np.dot(masses, profile.losses))
    dev = profile.losses - mean
    return max(0.0, float(np.dot(masses, dev * dev)))


def kl_posterior_prior(profile: LossProfile, rho: PosteriorWeights) -> float:
    """The divergence KL(rho || pi), using 0 ln 0 = 0."""
    check_aligned(profile, rho)
    terms = rel_entr(rho.weights, profile.prior_masses)
    if not np.all(np.isfinite(terms)):
        raise SupportError('The posterior puts mass outside the prior support')
    return max(0.0, float(np.dot(profile.multiplicities, terms)))


def log_partition(profile: LossProfile, scale: float) -> float:
    """The value ln E_pi[exp(-scale * L)], computed in the log domain."""
    log_terms = np.log(profile.prior_masses) - scale * profile.losses
    return float(logsumexp(log_terms, b=profile.multiplicities))


def gibbs_weights(profile: LossProfile, scale: float) -> PosteriorWeights:
    """The posterior proportional to pi(h) exp(-scale * L(h))."""
    log_terms = np.log(profile.prior_masses) - scale * profile.losses
    log_z = logsumexp(log_terms, b=profile.multiplicities)
    return PosteriorWeights(
        np.exp(log_terms - log_z), profile.multiplicities)

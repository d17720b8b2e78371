"""Certificates of strong quasiconvexity for F(lambda).

Two kinds of evidence are provided.

Runtime conditions
    At each lambda of a grid, check that either 2 KL + ln(4n/delta^2) >
    lambda^2 n^2 Var or E > (1 - lambda) n Var holds under the Gibbs
    posterior. If one holds over the whole lambda range every stationary point
    of F is a minimum.

Counting certificates
    With a uniform prior, split hypotheses by their excess loss
    x_h = L(h) - min L into good (x_h <= a), mediocre (a < x_h < b) and bad
    (x_h >= b). F is strongly quasiconvex if there are at most K mediocre
    hypotheses. The interval ends and K may be traded against each other
    with two parameters (alpha, beta), and b may be refined.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .bounds import lambda_range_floor
from .core import (
    BoundConfig, DomainError, LossProfile, gibbs_loss, gibbs_variance,
    kl_posterior_prior)
from .optimizer import gibbs_posterior

log = logging.getLogger(__name__)

Verdict = Literal['certified', 'not_certified']
Method = Literal['thm4_base', 'tuned_alpha_beta', 'refined_b', 'combined']

#: The base certificate splits contributions equally between intervals.
THIRD = 1.0 / 3.0

#: Counting certificates need n of at least this size.
MIN_N = 7

DEFAULT_GRID_STEPS = 21
DEFAULT_CONDITION_POINTS = 1000


class CertificatePreconditionError(DomainError):
    """A counting certificate cannot be applied to this profile."""


@dataclass(frozen=True)
class Certificate:
    """The outcome of a counting certificate.

    @verdict:        'certified' or 'not_certified'.
    @method:         Which relaxation produced the witness.
    @a:              Upper end of the 'good' excess losses.
    @b:              Lower end of the 'bad' excess losses (may be inf).
    @k:              The permitted number of mediocre hypotheses.
    @mediocre_count: The number of hypotheses with a < x_h < b.
    @alpha:          The alpha parameter used.
    @beta:           The beta parameter used.
    """

    verdict: Verdict
    method: Method
    a: float
    b: float
    k: float
    mediocre_count: int
    alpha: float
    beta: float

    @property
    def certified(self) -> bool:
        """True if quasiconvexity is guaranteed."""
        return self.verdict == 'certified'

    @property
    def b_vacuous(self) -> bool:
        """True when b exceeds 1, so no hypothesis can be 'bad'."""
        return self.b > 1.0

    def ratio(self) -> float:
        """How far the count is from the limit; <= 1 when certified."""
        if self.mediocre_count == 0:
            return 0.0
        return self.mediocre_count / self.k if self.k > 0 else math.inf


class ConditionPoint(NamedTuple):
    """The two runtime conditions evaluated at one lambda."""

    lam: float
    cond9: bool
    cond10: bool


@dataclass
class ConditionReport:
    """Runtime condition results over a lambda grid.

    @points:       One `ConditionPoint` per grid lambda.
    @lambda_floor: Grid points below this are outside the checked range.
    """

    points: list[ConditionPoint]
    lambda_floor: float

    @property
    def checked(self) -> list[ConditionPoint]:
        """The points that lie within the checked range."""
        return [p for p in self.points if p.lam >= self.lambda_floor]

    @property
    def certified(self) -> bool:
        """True if a condition holds at every point of the checked range.

        A report with no checked points is never certified.
        """
        checked = self.checked
        return bool(checked) and all(p.cond9 or p.cond10 for p in checked)


def _log4n(n: int, delta: float) -> float:
    return math.log(4.0 * n / (delta * delta))


def _log2n(n: int, delta: float) -> float:
    return math.log(2.0 * math.sqrt(n) / delta)


def k_zero_zero(n: int, delta: float) -> float:
    """The value K(0, 0) = (e^2 / 4) ln(4n / delta^2).

    F is always quasiconvex for m <= K(0, 0) + 1.
    """
    return math.e ** 2 / 4.0 * _log4n(n, delta)


def interval_a(alpha: float, n: int, delta: float) -> float:
    """The upper end of the 'good' interval for a given alpha."""
    return math.sqrt(alpha * _log4n(n, delta)) / n


def interval_b(
        beta: float, m: int, n: int, delta: float,
        *, refine: bool = False) -> float | None:
    """The lower end of the 'bad' interval for a given beta.

    With refine set, the refined form is used. None is returned when its side
    conditions fail. A zero beta gives an infinite b.
    """
    if beta <= 0.0:
        return math.inf
    scale = math.sqrt(n * _log2n(n, delta))
    if not refine:
        return math.log(m * n * n / beta) / scale
    mn_beta = m * n / beta
    if mn_beta < 0.5 or n < 5:
        return None
    arg = (4.0 * mn_beta * math.log(mn_beta) ** 2
           / (_log2n(n, delta) * _log4n(n, delta)))
    if arg <= 0.0 or math.log(arg) < 2.0:
        return None
    return math.log(arg) / scale


def k_bound(alpha: float, beta: float, n: int, delta: float) -> float:
    """The permitted number of mediocre hypotheses, K(alpha, beta)."""
    return math.e ** 2 * (1.0 - alpha - beta) / 4.0 * _log4n(n, delta)


def excess_losses(profile: LossProfile) -> np.ndarray:
    """The excess loss of each entry, x_h = L(h) - min L.

    The result is aligned with the profile's entries, so compressed entries
    stay compressed.
    """
    return profile.losses - profile.min_loss


def _check_counting(profile: LossProfile, cfg: BoundConfig) -> None:
    cfg.check(profile)
    if not profile.is_uniform_prior():
        raise CertificatePreconditionError(
            'Counting certificates require a uniform prior')
    if cfg.n_eff < MIN_N:
        raise CertificatePreconditionError(
            f'Counting certificates require n >= {MIN_N}; use the runtime'
            ' conditions instead')


def _method(alpha: float, beta: float, refined: bool) -> Method:
    tuned = not (alpha == THIRD and beta == THIRD)
    if refined:
        return 'combined' if tuned else 'refined_b'
    return 'tuned_alpha_beta' if tuned else 'thm4_base'


def tuned_certificate(
        profile: LossProfile,
        cfg: BoundConfig,
        alpha: float,
        beta: float,
        refine_b: bool = False,
    ) -> Certificate:
    """Apply the counting certificate for a given (alpha, beta).

    If refine_b is set but the refined b's side conditions fail, the
    unrefined b is used.
    """
    if alpha < 0.0 or beta < 0.0 or alpha + beta > 1.0 + 1e-12:
        raise DomainError(
            f'Need alpha, beta >= 0 and alpha + beta <= 1, not'
            f' ({alpha!r}, {beta!r})')
    _check_counting(profile, cfg)
    n, delta = cfg.n_eff, cfg.delta
    m = profile.hypothesis_count

    a = interval_a(alpha, n, delta)
    b = interval_b(beta, m, n, delta, refine=True) if refine_b else None
    refined = b is not None
    if b is None:
        b = interval_b(beta, m, n, delta)
    assert b is not None
    k = k_bound(alpha, beta, n, delta)

    x = excess_losses(profile)
    mediocre = (x > a) & (x < b)
    count = int(np.sum(profile.multiplicities[mediocre]))
    verdict: Verdict = 'certified' if count <= k else 'not_certified'
    return Certificate(
        verdict, _method(alpha, beta, refined), a, b, k, count, alpha, beta)


def thm4_certificate(profile: LossProfile, cfg: BoundConfig) -> Certificate:
    """Apply the base counting certificate (alpha = beta = 1/3)."""
    return tuned_certificate(profile, cfg, THIRD, THIRD, refine_b=False)


def search_certificate(
        profile: LossProfile,
        cfg: BoundConfig,
        grid_steps: int = DEFAULT_GRID_STEPS,
    ) -> Certificate:
    """Search (alpha, beta) for a certifying witness.

    The base certificate is tried first, then every cell of a simplex grid
    with spacing 1/(grid_steps - 1), in order of alpha and then beta, each
    without and then with the refined b. The first certifying witness is
    returned. Otherwise the witness with the lowest count/K ratio is.
    """
    if grid_steps < 2:
        raise DomainError(f'grid_steps must be at least 2, not {grid_steps}')
    best = thm4_certificate(profile, cfg)
    if best.certified:
        return best

    step = 1.0 / (grid_steps - 1)
    for i in range(grid_steps):
        for j in range(grid_steps - i):
            alpha, beta = i * step, j * step
            for refine in (False, True):
                cert = tuned_certificate(profile, cfg, alpha, beta, refine)
                if cert.certified:
                    return cert
                if cert.ratio() < best.ratio():
                    best = cert
    return best


def runtime_conditions(
        profile: LossProfile,
        cfg: BoundConfig,
        lambda_grid=None,
    ) -> ConditionReport:
    """Evaluate the two stationary-point conditions over a lambda grid.

    The default grid has 1000 evenly spaced points covering the checked
    range [sqrt(ln(2 sqrt(n)/delta)/n), 1]. That floor only applies for
    n >= 7 and when it is at most 1. Otherwise the whole of (0, 1] is
    checked.
    """
    cfg.check(profile)
    n, delta = cfg.n_eff, cfg.delta
    floor = lambda_range_floor(n, delta)
    if n < MIN_N or floor > 1.0:
        floor = 0.0
    if lambda_grid is None:
        start = floor if floor > 0.0 else 1.0 / DEFAULT_CONDITION_POINTS
        lambda_grid = np.linspace(start, 1.0, DEFAULT_CONDITION_POINTS)
    grid = np.asarray(lambda_grid, dtype=float)
    if np.any((grid <= 0.0) | (grid > 1.0)):
        raise DomainError('Runtime condition grids must lie within (0, 1]')

    log4n = _log4n(n, delta)
    points = []
    for lam in grid:
        rho = gibbs_posterior(profile, float(lam))
        var = gibbs_variance(profile, rho)
        kl = kl_posterior_prior(profile, rho)
        mean = gibbs_loss(profile, rho)
        points.append(ConditionPoint(
            float(lam),
            2.0 * kl + log4n > lam * lam * n * n * var,
            mean > (1.0 - lam) * n * var))
    return ConditionReport(points, floor)


def max_certified_m(
        losses, n: int, delta: float, *, step: int = 10,
        grid_steps: int = DEFAULT_GRID_STEPS) -> int:
    """Find the largest m for which a uniform-prior profile certifies.

    Profiles are built from the first m of the given losses, with m growing
    in steps of `step` until certification fails. The result is never below
    floor(K(0, 0)) + 1, for which quasiconvexity always holds.
    """
    losses = np.asarray(losses, dtype=float)
    cfg = BoundConfig(n, delta)
    best = 0
    for m in range(step, len(losses) + 1, step):
        profile = LossProfile.from_losses(losses[:m], n)
        if not search_certificate(profile, cfg, grid_steps).certified:
            break
        best = m
    return max(best, int(math.floor(k_zero_zero(n, delta))) + 1)


def make_nonconvex_example() -> tuple[LossProfile, BoundConfig]:
    """Two hypotheses with losses 0 and 0.5, n=100, delta=0.01.

    F(lambda) is not convex for this profile, but it is quasiconvex.
    """
    return LossProfile.from_losses([0.0, 0.5], 100), BoundConfig(100, 0.01)


def make_two_minima_example() -> tuple[LossProfile, BoundConfig]:
    """A profile whose F(lambda) has two local minima.

    One hypothesis has loss 0 and m - 1 have loss 0.1, with n=200,
    delta=0.25 and m = round(exp(0.74 n 0.1)) + 1.
    """
    n, delta, gap = 200, 0.25, 0.1
    m = round(math.exp(0.74 * n * gap)) + 1
    profile = LossProfile.uniform([0.0, gap], [1, m - 1], n)
    return profile, BoundConfig(n, delta)

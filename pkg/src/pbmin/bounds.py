"""PAC-Bayesian bounds for finite hypothesis spaces.

This provides the binary kl divergence and its upper inverse, the
PAC-Bayes-kl bound, the PAC-Bayes-lambda bound (together with its square-root
relaxation) and the one dimensional function F(lambda), which is the
lambda bound evaluated at the Gibbs posterior for lambda.

Bounds are never clipped to 1. A vacuous bound is reported as such.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from scipy.special import rel_entr

from .core import (
    BoundConfig, DomainError, LossProfile, PosteriorWeights, gibbs_loss,
    gibbs_variance, gibbs_weights, kl_posterior_prior, log_partition)

#: The upper end of the bisection interval for kl inversion.
Q_MAX = 1.0 - 1e-15

#: Iteration cap for kl inversion.
KL_INV_ITERS = 200

#: How far below the budget kl(p_hat || q) may be left by kl inversion.
KL_INV_SLACK = 1e-10


@dataclass(frozen=True)
class BoundValue:
    """The right hand side of the PAC-Bayes-lambda inequality.

    @gibbs_loss_term: E_rho[L] / (1 - lambda/2).
    @complexity_term: (KL + ln(2 sqrt(n)/delta)) / (lambda (1 - lambda/2) n).
    """

    gibbs_loss_term: float
    complexity_term: float

    @property
    def value(self) -> float:
        """The bound on the expected loss of the randomized classifier."""
        return self.gibbs_loss_term + self.complexity_term


class Derivatives(NamedTuple):
    """F(lambda) with its first and second derivatives."""

    value: float
    first: float
    second: float


def _check_unit(x: float, name: str) -> None:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f'{name} must lie in [0, 1], not {x!r}')


def _check_lambda(lam: float) -> None:
    if not 0.0 < lam < 2.0:
        raise DomainError(f'lambda must lie in (0, 2), not {lam!r}')


def binary_kl(p: float, q: float) -> float:
    """The kl divergence between Bernoulli(p) and Bernoulli(q).

    The result is +inf when q is 0 or 1 and differs from p.
    """
    _check_unit(p, 'p')
    _check_unit(q, 'q')
    return float(rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q))


def kl_inverse_upper(p_hat: float, eps: float, tol: float = 1e-12) -> float:
    """Find the largest q >= p_hat for which kl(p_hat || q) <= eps.

    Bisection is used. The returned value always satisfies the kl constraint,
    being the lower end of the final bracket. The bracket is only accepted
    once it is narrower than tol and kl(p_hat || q) is within KL_INV_SLACK
    of eps, or once it cannot be split any further. When the constraint
    still holds arbitrarily close to 1, the result is exactly 1.
    """
    _check_unit(p_hat, 'p_hat')
    if not math.isfinite(eps) or eps < 0.0:
        raise DomainError(f'The kl budget must be finite and >= 0, not {eps!r}')
    if tol <= 0.0:
        raise DomainError('The kl inversion tolerance must be positive')
    if eps == 0.0 or p_hat >= 1.0:
        return p_hat
    if binary_kl(p_hat, Q_MAX) <= eps:
        return 1.0

    lo, hi = p_hat, Q_MAX
    for _ in range(KL_INV_ITERS):
        if hi - lo <= tol and eps - binary_kl(p_hat, lo) <= KL_INV_SLACK:
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if binary_kl(p_hat, mid) <= eps:
            lo = mid
        else:
            hi = mid
    return lo


def complexity(profile: LossProfile, rho: PosteriorWeights, cfg: BoundConfig):
    """The value KL(rho || pi) + ln(2 sqrt(n)/delta)."""
    return kl_posterior_prior(profile, rho) + cfg.confidence_term


def pac_bayes_kl_bound(
        profile: LossProfile, rho: PosteriorWeights, cfg: BoundConfig,
    ) -> float:
    """The PAC-Bayes-kl bound on E_rho[L(h)].

    For an ensemble built from subsamples, the profile and configuration
    carry n_eff = n - r.
    """
    cfg.check(profile)
    eps = complexity(profile, rho, cfg) / cfg.n_eff
    return kl_inverse_upper(gibbs_loss(profile, rho), eps, cfg.tol_kl)


def pac_bayes_lambda_bound(
        profile: LossProfile,
        rho: PosteriorWeights,
        lam: float,
        cfg: BoundConfig,
    ) -> BoundValue:
    """The PAC-Bayes-lambda bound on E_rho[L(h)], for lambda in (0, 2)."""
    _check_lambda(lam)
    cfg.check(profile)
    shrink = 1.0 - lam / 2.0
    return BoundValue(
        gibbs_loss_term=gibbs_loss(profile, rho) / shrink,
        complexity_term=(
            complexity(profile, rho, cfg) / (lam * shrink * cfg.n_eff)))


def pinsker_sqrt_bound(
        profile: LossProfile, rho: PosteriorWeights, cfg: BoundConfig,
    ) -> float:
    """The bound implied by E[L] - E[L_hat] <= sqrt(2 E[L] eps).

    This is solved as a quadratic in sqrt(E[L]). The result is also the
    minimum over lambda of the PAC-Bayes-lambda bound at fixed rho.
    """
    cfg.check(profile)
    p_hat = gibbs_loss(profile, rho)
    eps = complexity(profile, rho, cfg) / cfg.n_eff
    return p_hat + eps + math.sqrt(eps * eps + 2.0 * eps * p_hat)


def lambda_range_floor(n: int, delta: float) -> float:
    """The lower end of the lambda range covered by quasiconvexity checks."""
    return math.sqrt(math.log(2.0 * math.sqrt(n) / delta) / n)


def f_of_lambda(profile: LossProfile, lam: float, cfg: BoundConfig) -> float:
    """The lambda bound at the Gibbs posterior for lambda, as F(lambda).

    The value is (-ln E_pi[exp(-n lambda L)] + ln(2 sqrt(n)/delta)) divided
    by n lambda (1 - lambda/2).
    """
    _check_lambda(lam)
    cfg.check(profile)
    n = cfg.n_eff
    numerator = cfg.confidence_term - log_partition(profile, n * lam)
    return numerator / (n * lam * (1.0 - lam / 2.0))


def f_derivatives(
        profile: LossProfile, lam: float, cfg: BoundConfig) -> Derivatives:
    """Evaluate F(lambda), F'(lambda) and F''(lambda) analytically.

    F is decomposed as f(lambda) g(lambda) with g = 1/(lambda (1 -
    lambda/2)). The factor f uses the identity f = lambda E[L] + (KL +
    ln(2 sqrt(n)/delta))/n, where expectations and KL are under the Gibbs
    posterior. Then f' = E[L] and f'' = -n Var[L].
    """
    _check_lambda(lam)
    cfg.check(profile)
    n = cfg.n_eff
    rho = gibbs_weights(profile, n * lam)
    mean = gibbs_loss(profile, rho)
    var = gibbs_variance(profile, rho)

    shrink = 1.0 - lam / 2.0
    f = lam * mean + complexity(profile, rho, cfg) / n
    f1 = mean
    f2 = -n * var
    g = 1.0 / (lam * shrink)
    g1 = (lam - 1.0) / (lam * lam * shrink * shrink)
    g2 = (3.0 * (lam - 1.0) ** 2 + 1.0) / (2.0 * lam ** 3 * shrink ** 3)
    return Derivatives(
        value=f * g,
        first=f1 * g + g1 * f,
        second=f2 * g + 2.0 * f1 * g1 + g2 * f)

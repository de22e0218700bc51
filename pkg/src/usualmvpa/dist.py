"""Probability kernels for bout counts and excess MET-minutes.

The Generalized Poisson (GP) is parameterized by its mean ``mu`` and the
dispersion ``lam`` in ``[0, 1)``; the natural parameter is
``theta = mu * (1 - lam)``.  All functions broadcast over numpy arrays.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GenPoissonParams:
    """Mean/dispersion parameterization of the Generalized Poisson."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 0.0 <= self.lam < 1.0:
            raise ValueError(f"lam must lie in [0, 1), got {self.lam}")

    @property
    def theta(self):
        return self.mu * (1.0 - self.lam)

    @property
    def variance(self):
        return self.mu / (1.0 - self.lam) ** 2


@dataclass(frozen=True)
class LogNormalParams:
    mu_log: float
    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be finite and positive, got {self.sigma2}")

    @property
    def mean(self):
        return np.exp(self.mu_log + 0.5 * self.sigma2)


def genpois_logpmf(x, mu, lam):
    """Log pmf of the Generalized Poisson at ``x`` given mean and dispersion.

    Parameters
    ----------
    x : int or array_like of int
        Nonnegative counts.
    mu : float or array_like
        Mean, ``mu > 0``.
    lam : float or array_like
        Dispersion in ``[0, 1)``; ``lam = 0`` reduces to the Poisson.

    Returns
    -------
    ndarray or float
        ``log theta + (x - 1) log(theta + x lam) - theta - x lam - log x!``
        with ``theta = mu (1 - lam)``.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(mu, dtype=float) * (1.0 - np.asarray(lam, dtype=float))
    rate = theta + x * lam
    return np.log(theta) + xlogy(x - 1.0, rate) - rate - gammaln(x + 1.0)


def genpois_p_zero(mu, lam):
    """Probability of a zero count, ``exp(-mu (1 - lam))``."""
    return np.exp(-np.asarray(mu, dtype=float) * (1.0 - np.asarray(lam, dtype=float)))


def genpois_sample(mu, lam, rng, size=None):
    """Exact Generalized Poisson draws via the branching representation.

    A root generation of ``Poisson(theta)`` individuals each spawns
    ``Poisson(lam)`` offspring; the total progeny is GP(theta, lam).  The
    process dies out almost surely for ``lam < 1``.
    """
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(lam >= 1):
        raise ValueError("lam must lie in [0, 1)")
    shape = np.broadcast(mu, lam).shape if size is None else tuple(np.atleast_1d(size))
    flat_lam = np.broadcast_to(lam, shape).reshape(-1)
    current = np.asarray(rng.poisson(np.broadcast_to(mu * (1.0 - lam), shape))).reshape(-1)
    total = current.copy()
    alive = np.flatnonzero(current)
    while alive.size:
        offspring = rng.poisson(flat_lam[alive] * current[alive])
        current[alive] = offspring
        total[alive] += offspring
        alive = alive[offspring > 0]
    if not shape:
        return int(total[0])
    return total.reshape(shape)


def genpois_sample_inversion(mu, lam, rng, size, tol=1e-14):
    """Inverse-cdf sampler over an adaptively truncated support.

    Kept as an independent check on :func:`genpois_sample`; scalar
    parameters only.
    """
    p = GenPoissonParams(float(mu), float(lam))
    xmax = int(p.mu + 40 * np.sqrt(p.variance) + 50)
    while True:
        support = np.arange(xmax + 1)
        cdf = np.cumsum(np.exp(genpois_logpmf(support, p.mu, p.lam)))
        if 1.0 - cdf[-1] < tol:
            break
        xmax *= 2
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), xmax)


def negbin_logpmf(x, mu, kappa):
    """Negative Binomial log pmf with mean ``mu`` and variance ``mu (1 + mu / kappa)``."""
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return (
        gammaln(x + kappa) - gammaln(kappa) - gammaln(x + 1.0)
        + kappa * np.log(kappa / (kappa + mu))
        + xlogy(x, mu / (kappa + mu))
    )


def negbin_p_zero(mu, kappa):
    return np.exp(kappa * np.log(kappa / (kappa + np.asarray(mu, dtype=float))))


def negbin_sample(mu, kappa, rng, size=None):
    mu = np.asarray(mu, dtype=float)
    rate = rng.gamma(kappa, 1.0, size=size if size is not None else mu.shape) * mu / kappa
    return rng.poisson(rate)


def lognormal_logpdf(y, mu_log, sigma2):
    y = np.asarray(y, dtype=float)
    logy = np.log(y)
    return -logy - 0.5 * (LOG_2PI + np.log(sigma2)) - 0.5 * (logy - mu_log) ** 2 / sigma2


def two_part_logdensity(y2, pi, mu_log, sigma2):
    """Log density of the zero / lognormal two-part law.

    ``log(1 - pi)`` at ``y2 == 0``, otherwise ``log(pi)`` plus the lognormal
    log density.  ``y2 > 0`` with ``pi == 0`` gives ``-inf``.
    """
    y2 = np.asarray(y2, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if np.any(y2 < 0):
        raise ValueError("y2 must be nonnegative")
    if np.any((pi < 0) | (pi > 1)):
        raise ValueError("pi must lie in [0, 1]")
    pos = y2 > 0
    safe = np.where(pos, y2, 1.0)
    with np.errstate(divide="ignore"):
        out = np.where(
            pos,
            np.log(pi) + lognormal_logpdf(safe, mu_log, sigma2),
            np.log1p(-pi),
        )
    return out[()] if out.ndim == 0 else out

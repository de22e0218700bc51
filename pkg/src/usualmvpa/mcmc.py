"""Metropolis-within-Gibbs sampler for the two-part bout model.

Model, for person ``i`` and day ``j``::

    y1_ij ~ GenPoisson(mu1_i, lam),          log mu1_i = Z_i'gamma + b1_i
    log y2_ij | y1_ij > 0 ~ N(Z_i'beta + b2_i, sigma2_y),   y2_ij = 0 iff y1_ij = 0
    (b1_i, b2_i) ~ N(0, Sigma_b)

with priors gamma, beta ~ N(m0, V0), lam ~ Uniform(lo, hi),
sigma2_y ~ InvGamma(a0, b0) and Sigma_b ~ InvWishart(d0, D0).  The count
kernel is pluggable so the same machinery fits a Negative Binomial variant.
"""

import copy
import hashlib
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import dist

logger = logging.getLogger(__name__)


class NumericError(RuntimeError):
    """A log density evaluated to a non-finite value."""


# --------------------------------------------------------------------------
# data


class PanelData:
    """Per-person panel of day outcomes plus the design matrix.

    Parameters
    ----------
    y1 : array_like of int, shape (n, J)
    y2 : array_like of float, shape (n, J)
        Zero exactly where ``y1`` is zero.
    Z : array_like, shape (n, p)
    person_ids : sequence, optional
    weekend : array_like of bool, shape (n, J), optional
    """

    def __init__(self, y1, y2, Z, person_ids=None, weekend=None):
        y1 = np.asarray(y1)
        y2 = np.asarray(y2, dtype=float)
        Z = np.asarray(Z, dtype=float)
        if y1.ndim != 2 or y1.shape != y2.shape:
            raise ValueError("y1 and y2 must be 2-d arrays of equal shape (persons, days)")
        if Z.ndim != 2 or Z.shape[0] != y1.shape[0]:
            raise ValueError("Z must have one row per person")
        if np.any(y1 < 0) or np.any(y1 != np.round(y1)):
            raise ValueError("y1 must hold nonnegative integers")
        if np.any(~np.isfinite(y2)) or np.any(y2 < 0):
            raise ValueError("y2 must be finite and nonnegative")
        bad = np.flatnonzero(np.any((y1 > 0) != (y2 > 0), axis=1))
        if bad.size:
            raise ValueError(f"y2 > 0 must coincide with y1 > 0 (persons at rows {bad[:5].tolist()})")
        if not np.all(np.isfinite(Z)):
            raise ValueError("Z must be finite")
        self.y1 = y1.astype(np.int64)
        self.y2 = y2
        self.Z = Z
        self.n, self.J = y1.shape
        self.p = Z.shape[1]
        self.person_ids = tuple(person_ids) if person_ids is not None else tuple(range(self.n))
        self.weekend = None if weekend is None else np.asarray(weekend, dtype=bool)

        self.pos = y2 > 0
        self.logy2 = np.log(np.where(self.pos, y2, 1.0))
        self.n_pos = self.pos.sum(axis=1)
        self.n_pos_total = int(self.n_pos.sum())
        self.sum_logy2 = np.where(self.pos, self.logy2, 0.0).sum(axis=1)
        self.sum_logy2_sq = np.where(self.pos, self.logy2**2, 0.0).sum(axis=1)
        # each positive day contributes one row of Z to the lognormal regression
        self.ZtZ_pos = (self.Z * self.n_pos[:, None]).T @ self.Z
        self.ZtZ = self.Z.T @ self.Z
        self.y1f = self.y1.astype(float)
        self.y1m1 = self.y1f - 1.0
        # only days with y1 >= 2 need a log term in the GP likelihood
        self.n_zero_days = (self.y1 == 0).sum(axis=1)
        rows, cols = np.nonzero(self.y1 >= 2)
        self.multi_rows = rows
        self.multi_y = self.y1f[rows, cols]
        self.y1_sum = self.y1f.sum(axis=1)
        self.log_ybar = np.log(self.y1_sum / self.J + 0.5)
        self.lgamma_y1 = gammaln(self.y1f + 1.0)

    def digest(self):
        h = hashlib.sha256()
        for a in (self.y1, self.y2, self.Z):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def subset(self, rows):
        rows = np.asarray(rows)
        return PanelData(
            self.y1[rows], self.y2[rows], self.Z[rows],
            [self.person_ids[i] for i in rows],
            None if self.weekend is None else self.weekend[rows],
        )


def panel_from_days(days, design):
    """Assemble a :class:`PanelData` from day observations and a design matrix.

    Persons are ordered as in ``design``; every person needs the same number
    of days and days are ordered by ``day_index``.
    """
    by_person = {}
    for d in days:
        by_person.setdefault(d.person_id, []).append(d)
    missing = [pid for pid in design.person_ids if pid not in by_person]
    if missing:
        raise ValueError(f"no day observations for persons {missing[:5]}")
    rows = [sorted(by_person[pid], key=lambda d: d.day_index) for pid in design.person_ids]
    J = {len(r) for r in rows}
    if len(J) != 1:
        raise ValueError("every person needs the same number of days")
    y1 = [[d.y1 for d in r] for r in rows]
    y2 = [[d.y2 for d in r] for r in rows]
    weekend = [[d.weekend for d in r] for r in rows]
    return PanelData(y1, y2, design.Z, design.person_ids, weekend)


# --------------------------------------------------------------------------
# parameters and configuration


@dataclass
class ParamState:
    """One state of the chain.

    ``lam`` is the GP dispersion; ``kappa`` is used instead by the Negative
    Binomial variant.  ``b`` has one row ``(b1_i, b2_i)`` per person.
    """

    gamma: np.ndarray
    beta: np.ndarray
    lam: float
    sigma2_y: float
    Sigma_b: np.ndarray
    b: np.ndarray
    kappa: float = np.nan

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.Sigma_b = np.asarray(self.Sigma_b, dtype=float)
        self.b = np.asarray(self.b, dtype=float)

    def copy(self):
        return replace(
            self, gamma=self.gamma.copy(), beta=self.beta.copy(),
            Sigma_b=self.Sigma_b.copy(), b=self.b.copy(),
        )

    def validate(self):
        if not np.all(np.linalg.eigvalsh(self.Sigma_b) > 0):
            raise ValueError("Sigma_b must be positive definite")
        if not self.sigma2_y > 0:
            raise ValueError("sigma2_y must be positive")
        if np.isnan(self.kappa) and not 0 < self.lam < 1:
            raise ValueError("lam must lie in (0, 1)")
        return self


def _as_mean(value, p):
    m = np.asarray(value, dtype=float)
    return np.full(p, float(m)) if m.ndim == 0 else m


def _as_cov(value, p):
    v = np.asarray(value, dtype=float)
    return np.eye(p) * float(v) if v.ndim == 0 else v


@dataclass
class PriorConfig:
    """Prior hyperparameters; scalars broadcast to ``m * 1`` and ``v * I``."""

    gamma_mean: object = 0.0
    gamma_cov: object = 100.0
    beta_mean: object = 0.0
    beta_cov: object = 100.0
    iw_df: float = 3.0
    iw_scale: object = 1.0
    ig_shape: float = 0.01
    ig_rate: float = 0.01
    lam_bounds: tuple = (0.0, 1.0)
    kappa_shape: float = 1.0
    kappa_rate: float = 0.1

    def __post_init__(self):
        if self.ig_shape <= 0 or self.ig_rate <= 0:
            raise ValueError("inverse-gamma hyperparameters must be positive")
        if self.iw_df <= 1:
            raise ValueError("inverse-Wishart degrees of freedom must exceed dimension - 1")
        lo, hi = self.lam_bounds
        if not 0 <= lo < hi <= 1:
            raise ValueError("lam_bounds must satisfy 0 <= lo < hi <= 1")
        if np.any(np.linalg.eigvalsh(self.scale_matrix()) <= 0):
            raise ValueError("inverse-Wishart scale must be positive definite")

    def gamma_prior(self, p):
        return _as_mean(self.gamma_mean, p), _as_cov(self.gamma_cov, p)

    def beta_prior(self, p):
        return _as_mean(self.beta_mean, p), _as_cov(self.beta_cov, p)

    def scale_matrix(self):
        return _as_cov(self.iw_scale, 2)

    def precisions(self, p):
        """Cached ``(m_gamma, Vg^-1, m_beta, Vb^-1)`` for dimension ``p``."""
        cache = self.__dict__.setdefault("_precision_cache", {})
        if p not in cache:
            mg, Vg = self.gamma_prior(p)
            mb, Vb = self.beta_prior(p)
            cache[p] = (mg, np.linalg.inv(Vg), mb, np.linalg.inv(Vb))
        return cache[p]

    def check(self, p):
        for m, V in (self.gamma_prior(p), self.beta_prior(p)):
            if m.shape != (p,) or V.shape != (p, p):
                raise ValueError(f"prior mean/covariance do not match p={p}")
            if np.any(np.linalg.eigvalsh(V) <= 0):
                raise ValueError("prior covariances must be positive definite")
        return self


PRIOR_PRESETS = {
    "paper": PriorConfig(),
    "set2": PriorConfig(gamma_cov=1000.0, beta_cov=1000.0, iw_df=8.0, iw_scale=5.0,
                        ig_shape=5.0, ig_rate=5.0),
    "set3": PriorConfig(gamma_cov=1.0, beta_cov=1.0, iw_df=4.0, iw_scale=0.1,
                        ig_shape=0.1, ig_rate=0.1),
    "set4": PriorConfig(gamma_mean=5.0, beta_mean=5.0, iw_df=4.0, iw_scale=1.0,
                        ig_shape=0.1, ig_rate=0.1),
}


@dataclass
class ChainConfig:
    """Run-length, proposal and adaptation settings.

    ``adapt_window`` is how often (in iterations) the proposal shapes are
    re-derived during burn-in.  Nothing adapts after ``n_burnin``.
    """

    n_chains: int = 3
    n_iter: int = 20000
    n_burnin: int = 5000
    thin: int = 5
    seed: int = 0
    gamma_scale: float = 1.0
    lam_scale: float = 0.5
    re_scale: float = 1.5
    adapt_window: int = 100
    target_block: float = 0.35
    target_scalar: float = 0.44
    gamma_update: str = "block"
    interweave: bool = True
    gibbs_b2: bool = True
    b2_transport: bool = True
    b1_transport: bool = True
    re_steps: int = 1
    n_jobs: int = 1

    def __post_init__(self):
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if self.thin < 1 or self.n_chains < 1 or self.re_steps < 1:
            raise ValueError("thin and n_chains must be at least 1")
        if self.gamma_update not in ("block", "coordinate"):
            raise ValueError("gamma_update must be 'block' or 'coordinate'")

    @property
    def n_keep(self):
        return (self.n_iter - self.n_burnin) // self.thin


# --------------------------------------------------------------------------
# count kernels


class GenPoissonKernel:
    name = "genpois"
    param = "lam"
    label = "lambda"

    def __init__(self, prior):
        self.lo, self.hi = prior.lam_bounds

    def person_loglik(self, data, eta1, lam):
        """Sum over days of the GP log pmf, without the ``log y!`` constant.

        Days with ``y = 1`` add only ``-lam`` and days with ``y = 0`` add
        ``-log theta``, so logs of ``theta + y lam`` are taken only where
        ``y >= 2``.
        """
        log_theta = eta1 + np.log1p(-lam)
        theta = np.exp(log_theta)
        r, x = data.multi_rows, data.multi_y
        multi = np.bincount(r, (x - 1.0) * np.log(theta[r] + x * lam), minlength=data.n)
        return (data.J - data.n_zero_days) * log_theta - data.J * theta - lam * data.y1_sum + multi

    def score_info(self, data, eta1, lam):
        """Derivative of :meth:`person_loglik` in ``eta1`` and the expected information."""
        theta = np.exp(eta1) * (1.0 - lam)
        r, x = data.multi_rows, data.multi_y
        t = theta[r]
        multi = np.bincount(r, (x - 1.0) * t / (t + x * lam), minlength=data.n)
        return data.J * (1.0 - theta) - data.n_zero_days + multi, data.J * (1.0 - lam) * theta

    def fisher(self, eta1, lam):
        return np.exp(eta1) * (1.0 - lam) ** 2

    def to_free(self, lam):
        s = (lam - self.lo) / (self.hi - self.lo)
        return np.log(s) - np.log1p(-s)

    def from_free(self, u):
        return self.lo + (self.hi - self.lo) / (1.0 + np.exp(-u))

    def log_prior_free(self, u):
        # uniform prior; log-Jacobian of the logistic map (constant dropped)
        return -np.logaddexp(0.0, u) - np.logaddexp(0.0, -u)

    def initial(self, chain):
        return self.lo + (self.hi - self.lo) * (0.1, 0.5, 0.9)[chain % 3]

    def p_zero(self, mu, lam):
        return dist.genpois_p_zero(mu, lam)

    def logpmf(self, y, mu, lam):
        return dist.genpois_logpmf(y, mu, lam)

    def sample(self, mu, lam, rng):
        return dist.genpois_sample(mu, lam, rng)


class NegBinKernel:
    name = "negbin"
    param = "kappa"
    label = "kappa"

    def __init__(self, prior):
        self.shape = prior.kappa_shape
        self.rate = prior.kappa_rate

    def person_loglik(self, data, eta1, kappa):
        mu = np.exp(eta1)
        log_k_mu = np.log(kappa + mu)
        return (
            (gammaln(data.y1f + kappa) - gammaln(kappa)).sum(axis=1)
            + data.J * kappa * (np.log(kappa) - log_k_mu)
            + data.y1_sum * (eta1 - log_k_mu)
        )

    def score_info(self, data, eta1, kappa):
        mu = np.exp(eta1)
        frac = mu / (kappa + mu)
        return data.y1_sum - (data.y1_sum + data.J * kappa) * frac, data.J * kappa * frac

    def fisher(self, eta1, kappa):
        mu = np.exp(eta1)
        return mu * kappa / (kappa + mu)

    def to_free(self, kappa):
        return np.log(kappa)

    def from_free(self, u):
        return np.exp(u)

    def log_prior_free(self, u):
        return self.shape * u - self.rate * np.exp(u)

    def initial(self, chain):
        return (0.5, 2.0, 8.0)[chain % 3]

    def p_zero(self, mu, kappa):
        return dist.negbin_p_zero(mu, kappa)

    def logpmf(self, y, mu, kappa):
        return dist.negbin_logpmf(y, mu, kappa)

    def sample(self, mu, kappa, rng):
        return dist.negbin_sample(mu, kappa, rng)


COUNT_KERNELS = {"genpois": GenPoissonKernel, "negbin": NegBinKernel}


def make_kernel(count_model, prior):
    try:
        return COUNT_KERNELS[count_model](prior)
    except KeyError:
        raise ValueError(f"unknown count model {count_model!r}") from None


# --------------------------------------------------------------------------
# densities


def _bvn_logpdf(b, Sigma):
    Q = np.linalg.inv(Sigma)
    quad = np.einsum("ij,jk,ik->i", b, Q, b)
    return -np.log(2 * np.pi) - 0.5 * np.linalg.slogdet(Sigma)[1] - 0.5 * quad


def person_loglik(state, data, count_model="genpois"):
    """Per-person log likelihood including the random-effect density."""
    kernel = make_kernel(count_model, PriorConfig())
    disp = getattr(state, kernel.param)
    eta1 = data.Z @ state.gamma + state.b[:, 0]
    eta2 = data.Z @ state.beta + state.b[:, 1]
    y1_part = kernel.person_loglik(data, eta1, disp) - data.lgamma_y1.sum(axis=1)
    resid2 = data.sum_logy2_sq - 2 * eta2 * data.sum_logy2 + data.n_pos * eta2**2
    y2_part = (
        -data.sum_logy2
        - 0.5 * data.n_pos * (dist.LOG_2PI + np.log(state.sigma2_y))
        - 0.5 * resid2 / state.sigma2_y
    )
    return y1_part + y2_part + _bvn_logpdf(state.b, state.Sigma_b)


def joint_loglik(state, data, count_model="genpois"):
    """Complete-data log likelihood: counts, positive ``y2`` and random effects.

    The zero/positive indicator of ``y2`` is fixed by ``y1``, so the
    participation probability enters only through the count's zero mass.
    """
    per = person_loglik(state, data, count_model)
    bad = np.flatnonzero(~np.isfinite(per))
    if bad.size:
        raise NumericError(f"non-finite log likelihood for person {data.person_ids[bad[0]]!r}")
    return float(per.sum())


def log_prior(state, prior, count_model="genpois"):
    p = state.gamma.size
    out = 0.0
    for x, (m, V) in ((state.gamma, prior.gamma_prior(p)), (state.beta, prior.beta_prior(p))):
        r = x - m
        out += -0.5 * r @ np.linalg.solve(V, r) - 0.5 * np.linalg.slogdet(2 * np.pi * V)[1]
    a, r = prior.ig_shape, prior.ig_rate
    s = state.sigma2_y
    out += a * np.log(r) - gammaln(a) - (a + 1) * np.log(s) - r / s
    D0, d0 = prior.scale_matrix(), prior.iw_df
    out += (
        0.5 * d0 * np.linalg.slogdet(D0)[1] - d0 * np.log(2) - _multigammaln2(d0 / 2)
        - 0.5 * (d0 + 3) * np.linalg.slogdet(state.Sigma_b)[1]
        - 0.5 * np.trace(D0 @ np.linalg.inv(state.Sigma_b))
    )
    if count_model == "genpois":
        lo, hi = prior.lam_bounds
        out += -np.log(hi - lo) if lo <= state.lam <= hi else -np.inf
    else:
        k, a, r = state.kappa, prior.kappa_shape, prior.kappa_rate
        out += a * np.log(r) - gammaln(a) + (a - 1) * np.log(k) - r * k
    return float(out)


def _multigammaln2(a):
    return 0.5 * np.log(np.pi) + gammaln(a) + gammaln(a - 0.5)


# --------------------------------------------------------------------------
# samplers for standard distributions


def sample_mvn_precision(h, P, rng):
    """Draw from N(P^{-1} h, P^{-1}) using a Cholesky factor of the precision."""
    L = np.linalg.cholesky(P)
    mean = np.linalg.solve(L.T, np.linalg.solve(L, h))
    return mean + np.linalg.solve(L.T, rng.standard_normal(h.size))


def sample_inv_wishart(df, scale, rng):
    """Inverse-Wishart draw by inverting a Bartlett-decomposed Wishart draw."""
    k = scale.shape[0]
    L = np.linalg.cholesky(np.linalg.inv(scale))
    A = np.zeros((k, k))
    for i in range(k):
        A[i, i] = np.sqrt(rng.chisquare(df - i))
        A[i, :i] = rng.standard_normal(i)
    LA = L @ A
    return np.linalg.inv(LA @ LA.T)


# --------------------------------------------------------------------------
# Gibbs / Metropolis updates


def update_beta(state, data, prior, rng):
    """Conjugate draw of ``beta`` from the positive-``y2`` days."""
    if data.n_pos_total == 0:
        raise ValueError("no positive y2 observations to update beta")
    _, _, m0, V0inv = prior.precisions(data.p)
    resid = data.sum_logy2 - data.n_pos * state.b[:, 1]
    P = V0inv + data.ZtZ_pos / state.sigma2_y
    h = V0inv @ m0 + data.Z.T @ resid / state.sigma2_y
    try:
        state.beta = sample_mvn_precision(h, P, rng)
    except np.linalg.LinAlgError:
        raise NumericError("beta posterior covariance is singular") from None
    return state


def lognormal_sse(state, data):
    eta2 = data.Z @ state.beta + state.b[:, 1]
    return float(np.sum(data.sum_logy2_sq - 2 * eta2 * data.sum_logy2 + data.n_pos * eta2**2))


def update_sigma2_y(state, data, prior, rng):
    """Conjugate inverse-gamma draw of the lognormal variance."""
    shape = 0.5 * data.n_pos_total + prior.ig_shape
    rate = prior.ig_rate + 0.5 * lognormal_sse(state, data)
    state.sigma2_y = rate / rng.gamma(shape)
    return state


def update_Sigma_b(state, prior, rng):
    """Conjugate inverse-Wishart draw of the random-effect covariance."""
    S = state.b.T @ state.b + prior.scale_matrix()
    if np.any(np.linalg.eigvalsh(S) <= 0):
        raise NumericError("inverse-Wishart scale is not positive definite")
    state.Sigma_b = sample_inv_wishart(state.b.shape[0] + prior.iw_df, S, rng)
    return state


def interweave_regression(state, data, prior, rng):
    """Redraw ``(gamma, beta)`` with the linear predictors held fixed.

    With ``eta_i = (Z_i'gamma + b1_i, Z_i'beta + b2_i)`` fixed, the
    likelihood is constant and ``(gamma, beta)`` has a Gaussian full
    conditional from the random-effect density; ``b`` is then recomputed.
    This is a Gibbs step in the centered parameterization.
    """
    Z, p = data.Z, data.p
    eta = np.column_stack([Z @ state.gamma, Z @ state.beta]) + state.b
    Q = np.linalg.inv(state.Sigma_b)
    mg, Vg_inv, mb, Vb_inv = prior.precisions(p)
    P = np.kron(Q, data.ZtZ)
    P[:p, :p] += Vg_inv
    P[p:, p:] += Vb_inv
    ZtEQ = Z.T @ (eta @ Q)
    h = np.concatenate([ZtEQ[:, 0] + Vg_inv @ mg, ZtEQ[:, 1] + Vb_inv @ mb])
    coef = sample_mvn_precision(h, P, rng)
    state.gamma, state.beta = coef[:p], coef[p:]
    state.b = eta - np.column_stack([Z @ state.gamma, Z @ state.beta])
    return state


@dataclass
class ProposalState:
    """Adaptive proposal settings for the Metropolis blocks of one chain."""

    gamma_chol: np.ndarray
    gamma_log_scale: float
    disp_log_scale: float
    re_chol: np.ndarray
    re_log_scale: np.ndarray
    b2_log_scale: np.ndarray = field(default_factory=lambda: np.log([0.05, 0.05, 0.1]))
    b1_log_scale: np.ndarray = field(default_factory=lambda: np.log([0.5, 0.05, 0.05]))
    accepted: dict = field(default_factory=dict)
    proposed: dict = field(default_factory=dict)

    def record(self, block, n_acc, n_prop):
        self.accepted[block] = self.accepted.get(block, 0) + int(n_acc)
        self.proposed[block] = self.proposed.get(block, 0) + int(n_prop)

    def rates(self):
        return {k: self.accepted[k] / max(self.proposed[k], 1) for k in self.proposed}

    def snapshot(self):
        return dict(
            gamma_chol=self.gamma_chol.copy(), gamma_log_scale=self.gamma_log_scale,
            disp_log_scale=self.disp_log_scale, re_chol=self.re_chol.copy(),
            re_log_scale=self.re_log_scale.copy(), b2_log_scale=self.b2_log_scale.copy(),
            b1_log_scale=self.b1_log_scale.copy(),
        )


def _chol2(C):
    """Lower Cholesky factors of stacked 2x2 matrices as (n, 3): l11, l21, l22."""
    l11 = np.sqrt(C[:, 0, 0])
    l21 = C[:, 1, 0] / l11
    l22 = np.sqrt(C[:, 1, 1] - l21**2)
    return np.column_stack([l11, l21, l22])


def laplace_shapes(state, data, prior, kernel):
    """Proposal shapes from approximate conditional precisions at ``state``."""
    disp = getattr(state, kernel.param)
    eta1 = data.Z @ state.gamma + state.b[:, 0]
    w = data.J * kernel.fisher(eta1, disp)
    H = (data.Z * w[:, None]).T @ data.Z + prior.precisions(data.p)[1]
    gamma_chol = np.linalg.cholesky(np.linalg.inv(H))
    Q = np.linalg.inv(state.Sigma_b)
    prec = np.empty((data.n, 2, 2))
    prec[:, 0, 0] = w + Q[0, 0]
    prec[:, 1, 1] = data.n_pos / state.sigma2_y + Q[1, 1]
    prec[:, 0, 1] = prec[:, 1, 0] = Q[0, 1]
    return gamma_chol, _chol2(np.linalg.inv(prec))


def _re_loglik(kernel, data, state, b, eta1_fixed, eta2_fixed, Q, disp):
    eta1 = eta1_fixed + b[:, 0]
    eta2 = eta2_fixed + b[:, 1]
    ll1 = kernel.person_loglik(data, eta1, disp)
    ll2 = -0.5 * (data.n_pos * eta2**2 - 2 * eta2 * data.sum_logy2) / state.sigma2_y
    prior = -0.5 * (Q[0, 0] * b[:, 0] ** 2 + 2 * Q[0, 1] * b[:, 0] * b[:, 1] + Q[1, 1] * b[:, 1] ** 2)
    return ll1 + ll2 + prior, ll1


def update_random_effects(state, data, kernel, proposal, rng, adapt_step=None, target=0.35):
    """Per-person bivariate random-walk Metropolis on ``(b1_i, b2_i)``.

    Persons are conditionally independent, so all of them are proposed and
    accepted at once.  ``adapt_step`` (burn-in only) moves each person's
    log proposal scale toward ``target`` acceptance.
    """
    disp = getattr(state, kernel.param)
    Q = np.linalg.inv(state.Sigma_b)
    eta1_fixed = data.Z @ state.gamma
    eta2_fixed = data.Z @ state.beta
    eps = rng.standard_normal((data.n, 2))
    L = proposal.re_chol
    s = np.exp(proposal.re_log_scale)
    step = np.column_stack([L[:, 0] * eps[:, 0], L[:, 1] * eps[:, 0] + L[:, 2] * eps[:, 1]])
    b_new = state.b + s[:, None] * step
    cur, _ = _re_loglik(kernel, data, state, state.b, eta1_fixed, eta2_fixed, Q, disp)
    new, _ = _re_loglik(kernel, data, state, b_new, eta1_fixed, eta2_fixed, Q, disp)
    log_ratio = np.nan_to_num(new - cur, nan=-np.inf)
    accept = np.log(rng.random(data.n)) < log_ratio
    state.b[accept] = b_new[accept]
    proposal.record("random_effects", accept.sum(), data.n)
    if adapt_step is not None:
        alpha = np.exp(np.minimum(log_ratio, 0.0))
        proposal.re_log_scale += adapt_step * (alpha - target)
    return state, accept


def update_b2_given_b1(state, data, rng):
    """Exact Gaussian draw of every ``b2_i`` given ``b1_i`` and the rest."""
    Q = np.linalg.inv(state.Sigma_b)
    eta2_fixed = data.Z @ state.beta
    prec = Q[1, 1] + data.n_pos / state.sigma2_y
    h = -Q[0, 1] * state.b[:, 0] + (data.sum_logy2 - data.n_pos * eta2_fixed) / state.sigma2_y
    state.b[:, 1] = h / prec + rng.standard_normal(data.n) / np.sqrt(prec)
    return state


def _det2(S):
    return S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]


def _iw_logkernel(Sigma, prior):
    D = prior.scale_matrix()
    det = _det2(Sigma)
    # trace(D Sigma^{-1}) for 2x2 matrices
    tr = (D[0, 0] * Sigma[1, 1] + D[1, 1] * Sigma[0, 0] - 2 * D[0, 1] * Sigma[0, 1]) / det
    return -0.5 * (prior.iw_df + 3) * np.log(det) - 0.5 * tr


def _bvn_total(s11, s12, s22, n, S):
    """Sum of bivariate normal log densities from the cross-product sums of ``b``."""
    det = _det2(S)
    quad = (S[1, 1] * s11 - 2 * S[0, 1] * s12 + S[0, 0] * s22) / det
    return -n * np.log(2 * np.pi) - 0.5 * n * np.log(det) - 0.5 * quad


B2_MOVES = ("sigma2_y", "scale_b2", "shear_b2")


def _b2_conditional(data, eta2_fixed, b1, S, sigma2_y):
    """Exact Gaussian mean and sd of each ``b2_i`` given ``b1_i`` and the rest."""
    det = _det2(S)
    q12, q22 = -S[0, 1] / det, S[0, 0] / det
    prec = q22 + data.n_pos / sigma2_y
    mean = (-q12 * b1 + (data.sum_logy2 - data.n_pos * eta2_fixed) / sigma2_y) / prec
    return mean, 1.0 / np.sqrt(prec)


def _lognormal_total(data, eta2, sigma2_y):
    resid2 = data.sum_logy2_sq - 2 * eta2 * data.sum_logy2 + data.n_pos * eta2**2
    return -0.5 * data.n_pos_total * np.log(sigma2_y) - 0.5 * resid2.sum() / sigma2_y


def update_b2_moves(state, data, prior, proposal, rng, adapt_step=None, target=0.44):
    """Moves of ``sigma2_y`` and ``Sigma_b`` that carry every ``b2_i`` along.

    The proposals are a log-scale step of ``sigma2_y``, a rescaling of the
    second row and column of ``Sigma_b``, and the shear
    ``Sigma_b -> A Sigma_b A'`` with ``A = [[1, 0], [d, 1]]``.  Each ``b2_i``
    keeps its standardized position in its exact Gaussian conditional,
    ``b2' = m' + (s'/s) (b2 - m)``, so these act like updates with ``b2``
    integrated out.
    """
    eta2_fixed = data.Z @ state.beta
    b1 = state.b[:, 0]
    s11 = b1 @ b1
    m, sd = _b2_conditional(data, eta2_fixed, b1, state.Sigma_b, state.sigma2_y)
    b2 = state.b[:, 1]
    a0, r0 = prior.ig_shape, prior.ig_rate

    def total(b2, S, s2):
        out = (_lognormal_total(data, eta2_fixed + b2, s2)
               + _bvn_total(s11, b1 @ b2, b2 @ b2, data.n, S)
               + _iw_logkernel(S, prior))
        # inverse-gamma prior plus the log-scale Jacobian
        return out - a0 * np.log(s2) - r0 / s2

    cur = total(b2, state.Sigma_b, state.sigma2_y)
    scales = np.exp(proposal.b2_log_scale)
    for k, name in enumerate(B2_MOVES):
        e = scales[k] * rng.standard_normal()
        S, s2, log_jac = state.Sigma_b, state.sigma2_y, 0.0
        if name == "sigma2_y":
            s2 = s2 * np.exp(e)
        elif name == "scale_b2":
            A = np.diag([1.0, np.exp(e)])
            S = A @ S @ A
            log_jac = 3.0 * e
        else:
            A = np.array([[1.0, 0.0], [e, 1.0]])
            S = A @ S @ A.T
        m_new, sd_new = _b2_conditional(data, eta2_fixed, b1, S, s2)
        b2_new = m_new + sd_new / sd * (b2 - m)
        new = total(b2_new, S, s2)
        log_ratio = new - cur + log_jac + np.sum(np.log(sd_new / sd))
        if not np.isfinite(log_ratio):
            log_ratio = -np.inf
        ok = np.log(rng.random()) < log_ratio
        if ok:
            state.b = np.column_stack([b1, b2_new])
            state.Sigma_b, state.sigma2_y = S, float(s2)
            b2, m, sd, cur = b2_new, m_new, sd_new, new
        proposal.record(f"transport_{name}", ok, 1)
        if adapt_step is not None:
            proposal.b2_log_scale[k] += adapt_step * (np.exp(min(0.0, log_ratio)) - target)
    return state


def _b1_laplace(data, kernel, eta1_fixed, disp, c, v, n_steps=2):
    """Approximate mode and sd of each ``b1_i`` given everything but ``b1``.

    ``c`` and ``v`` are the mean and variance of ``b1_i`` given ``b2_i`` under
    the random-effect law.  A fixed number of Fisher-scoring steps from a
    data-driven start keeps the result a deterministic function of its
    arguments, which is all the transport move needs.
    """
    r = 3 * np.sqrt(v)
    m = np.clip(data.log_ybar - eta1_fixed, c - r, c + r)
    for _ in range(n_steps):
        score, info = kernel.score_info(data, eta1_fixed + m, disp)
        m = m + (score - (m - c) / v) / (info + 1.0 / v)
    _, info = kernel.score_info(data, eta1_fixed + m, disp)
    return m, 1.0 / np.sqrt(info + 1.0 / v)


def _b1_conditional(S, b2):
    return S[0, 1] / S[1, 1] * b2, S[0, 0] - S[0, 1] ** 2 / S[1, 1]


B1_MOVES = ("dispersion", "scale_b1", "shear_b1")


def update_b1_moves(state, data, prior, kernel, proposal, rng, adapt_step=None,
                           target=0.44):
    """Moves of the dispersion and of ``Sigma_b`` that carry every ``b1_i`` along.

    Three proposals are tried in turn: a random-walk step of the free
    dispersion, a rescaling of the first row and column of ``Sigma_b`` by
    ``exp(e)``, and the shear ``Sigma_b -> A Sigma_b A'`` with
    ``A = [[1, d], [0, 1]]``.  Each ``b1_i`` keeps its standardized position
    relative to a Laplace approximation of its conditional,
    ``b1' = m' + (s'/s) (b1 - m)``, with ``(m, s)`` evaluated before and
    ``(m', s')`` after the move.  The map is a bijection whose inverse swaps
    the roles, so the acceptance ratio adds its Jacobian ``prod(s'/s)`` and
    that of the ``Sigma_b`` map.  Without these moves the dispersion and the
    variance of ``b1`` mix slowly because they are nearly determined by the
    current random effects.
    """
    disp = getattr(state, kernel.param)
    eta1_fixed = data.Z @ state.gamma
    b2 = state.b[:, 1]
    c, v = _b1_conditional(state.Sigma_b, b2)
    m, sd = _b1_laplace(data, kernel, eta1_fixed, disp, c, v)
    ll = kernel.person_loglik(data, eta1_fixed + state.b[:, 0], disp).sum()
    s22 = b2 @ b2
    b1 = state.b[:, 0]
    re = _bvn_total(b1 @ b1, b1 @ b2, s22, data.n, state.Sigma_b)
    scales = np.exp(proposal.b1_log_scale)

    for k, name in enumerate(B1_MOVES):
        e = scales[k] * rng.standard_normal()
        S, d_new, log_q = state.Sigma_b, disp, 0.0
        if name == "dispersion":
            u = kernel.to_free(disp)
            d_new = kernel.from_free(u + e)
            log_q = kernel.log_prior_free(u + e) - kernel.log_prior_free(u)
        elif name == "scale_b1":
            A = np.diag([np.exp(e), 1.0])
            S = A @ S @ A
            log_q = 3.0 * e
        else:
            A = np.array([[1.0, e], [0.0, 1.0]])
            S = A @ S @ A.T
        c_new, v_new = _b1_conditional(S, b2)
        m_new, sd_new = _b1_laplace(data, kernel, eta1_fixed, d_new, c_new, v_new)
        b1_new = m_new + sd_new / sd * (b1 - m)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            ll_new = kernel.person_loglik(data, eta1_fixed + b1_new, d_new).sum()
            re_new = _bvn_total(b1_new @ b1_new, b1_new @ b2, s22, data.n, S)
            log_ratio = ll_new - ll + log_q + np.sum(np.log(sd_new / sd)) + re_new - re
            if name != "dispersion":
                log_ratio += _iw_logkernel(S, prior) - _iw_logkernel(state.Sigma_b, prior)
        if not np.isfinite(log_ratio):
            log_ratio = -np.inf
        ok = np.log(rng.random()) < log_ratio
        if ok:
            setattr(state, kernel.param, float(d_new))
            state.b = np.column_stack([b1_new, b2])
            state.Sigma_b = S
            disp, m, sd, ll, re, b1 = d_new, m_new, sd_new, ll_new, re_new, b1_new
        proposal.record(f"transport_{name}", ok, 1)
        if adapt_step is not None:
            proposal.b1_log_scale[k] += adapt_step * (np.exp(min(0.0, log_ratio)) - target)
    return state


def _gamma_target(state, data, kernel, gamma, disp, mg, Vg_inv):
    eta1 = data.Z @ gamma + state.b[:, 0]
    r = gamma - mg
    return kernel.person_loglik(data, eta1, disp).sum() - 0.5 * r @ Vg_inv @ r


def update_gamma_lambda(state, data, prior, kernel, proposal, rng, adapt_step=None,
                        target_block=0.35, target_scalar=0.44, coordinatewise=False):
    """Random-walk Metropolis for ``gamma`` (block) and the count dispersion.

    The dispersion moves on its unconstrained scale (logit for ``lam``, log
    for ``kappa``) with the Jacobian included.  Only the count likelihood
    and priors enter the targets.
    """
    mg, Vg_inv = prior.precisions(data.p)[:2]
    disp = getattr(state, kernel.param)
    cur = _gamma_target(state, data, kernel, state.gamma, disp, mg, Vg_inv)

    if coordinatewise:
        sd = np.sqrt(np.sum(proposal.gamma_chol**2, axis=1)) * np.exp(proposal.gamma_log_scale)
        for k in range(data.p):
            g_new = state.gamma.copy()
            g_new[k] += sd[k] * rng.standard_normal()
            new = _gamma_target(state, data, kernel, g_new, disp, mg, Vg_inv)
            log_ratio = new - cur if np.isfinite(new) else -np.inf
            ok = np.log(rng.random()) < log_ratio
            if ok:
                state.gamma, cur = g_new, new
            proposal.record("gamma", ok, 1)
            if adapt_step is not None:
                proposal.gamma_log_scale += adapt_step * (np.exp(min(0.0, log_ratio)) - target_scalar) / data.p
    else:
        g_new = state.gamma + np.exp(proposal.gamma_log_scale) * (
            proposal.gamma_chol @ rng.standard_normal(data.p))
        new = _gamma_target(state, data, kernel, g_new, disp, mg, Vg_inv)
        log_ratio = new - cur if np.isfinite(new) else -np.inf
        ok = np.log(rng.random()) < log_ratio
        if ok:
            state.gamma, cur = g_new, new
        proposal.record("gamma", ok, 1)
        if adapt_step is not None:
            proposal.gamma_log_scale += adapt_step * (np.exp(min(0.0, log_ratio)) - target_block)

    u = kernel.to_free(disp)
    u_new = u + np.exp(proposal.disp_log_scale) * rng.standard_normal()
    d_new = kernel.from_free(u_new)
    eta1 = data.Z @ state.gamma + state.b[:, 0]
    new = kernel.person_loglik(data, eta1, d_new).sum() + kernel.log_prior_free(u_new)
    cur = cur + 0.5 * (state.gamma - mg) @ Vg_inv @ (state.gamma - mg) + kernel.log_prior_free(u)
    log_ratio = new - cur if np.isfinite(new) else -np.inf
    ok = np.log(rng.random()) < log_ratio
    if ok:
        setattr(state, kernel.param, float(d_new))
    proposal.record(kernel.label, ok, 1)
    if adapt_step is not None:
        proposal.disp_log_scale += adapt_step * (np.exp(min(0.0, log_ratio)) - target_scalar)
    return state


# --------------------------------------------------------------------------
# initialization and chains


def initial_state(data, prior, kernel, chain, rng):
    """Dispersed starting values for one chain.

    ``gamma`` comes from least squares of ``log(mean y1 + 0.5)`` on ``Z`` and
    ``beta`` from least squares of ``log y2`` on the positive days; both are
    shifted by -2, 0, +2 standard errors across chains.  Variances are
    scaled by 0.1, 1 and 10.
    """
    Z = data.Z
    k = chain % 3
    shift = (-2.0, 0.0, 2.0)[k]
    mult = (0.1, 1.0, 10.0)[k]

    target1 = np.log(data.y1f.mean(axis=1) + 0.5)
    g0, *_ = np.linalg.lstsq(Z, target1, rcond=None)
    r1 = target1 - Z @ g0
    v1 = max(r1.var(), 0.05)
    se_g = np.sqrt(np.diag(np.linalg.pinv(data.ZtZ)) * v1)

    rows = np.repeat(np.arange(data.n), data.n_pos)
    if rows.size > data.p:
        Zp = Z[rows]
        logs = data.logy2[data.pos]
        b0, *_ = np.linalg.lstsq(Zp, logs, rcond=None)
        v2 = max(np.var(logs - Zp @ b0), 0.05)
        se_b = np.sqrt(np.diag(np.linalg.pinv(data.ZtZ_pos)) * v2)
    else:
        b0, v2, se_b = np.zeros(data.p), 1.0, np.zeros(data.p)

    state = ParamState(
        gamma=g0 + shift * se_g,
        beta=b0 + shift * se_b,
        lam=0.5,
        sigma2_y=0.5 * v2 * mult,
        Sigma_b=np.diag([v1, 0.5 * v2]) * mult,
        b=np.zeros((data.n, 2)),
    )
    setattr(state, kernel.param, kernel.initial(chain))
    if kernel.param == "kappa":
        state.lam = np.nan
    return state


@dataclass
class ChainResult:
    gamma: np.ndarray
    beta: np.ndarray
    disp: np.ndarray
    sigma2_y: np.ndarray
    Sigma_b: np.ndarray
    final_state: ParamState
    proposal: ProposalState
    frozen_proposal: dict
    rng_state: dict
    iterations_done: int
    acceptance_burnin: dict
    acceptance: dict


def _check_init(state, data, prior, kernel):
    lp = joint_loglik(state, data, kernel.name) + log_prior(state, prior, kernel.name)
    if not np.isfinite(lp):
        raise NumericError(f"non-finite log posterior at initialization: {state!r}")


def initial_proposal(state, data, prior, kernel, cfg):
    """Proposal shapes from the Laplace curvature at ``state`` and the configured scales."""
    gamma_chol, re_chol = laplace_shapes(state, data, prior, kernel)
    return ProposalState(
        gamma_chol=gamma_chol,
        gamma_log_scale=np.log(cfg.gamma_scale * 2.38 / np.sqrt(data.p)),
        disp_log_scale=np.log(cfg.lam_scale),
        re_chol=re_chol,
        re_log_scale=np.full(data.n, np.log(cfg.re_scale)),
    )


def gibbs_sweep(state, data, prior, kernel, proposal, rng, cfg, step=None):
    """One full sweep of every update, in place; ``step`` is None after burn-in."""
    for _ in range(cfg.re_steps):
        update_random_effects(state, data, kernel, proposal, rng, step, cfg.target_block)
        if cfg.gibbs_b2:
            update_b2_given_b1(state, data, rng)
        update_gamma_lambda(state, data, prior, kernel, proposal, rng, step,
                            cfg.target_block, cfg.target_scalar,
                            coordinatewise=cfg.gamma_update == "coordinate")
    update_beta(state, data, prior, rng)
    update_sigma2_y(state, data, prior, rng)
    if cfg.interweave:
        interweave_regression(state, data, prior, rng)
    update_Sigma_b(state, prior, rng)
    if cfg.b2_transport:
        update_b2_moves(state, data, prior, proposal, rng, step, cfg.target_scalar)
    if cfg.b1_transport:
        update_b1_moves(state, data, prior, kernel, proposal, rng, step, cfg.target_scalar)
    return state


def run_chain(data, prior, cfg, chain, count_model="genpois", resume=None):
    """Run (or continue) one chain; returns a :class:`ChainResult`."""
    kernel = make_kernel(count_model, prior)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    rng = np.random.default_rng(seeds[chain])
    start = 0
    if resume is None:
        state = initial_state(data, prior, kernel, chain, rng)
        _check_init(state, data, prior, kernel)
        proposal = initial_proposal(state, data, prior, kernel, cfg)
        frozen = None
        burn_acc = {}
        kept = {k: [] for k in ("gamma", "beta", "disp", "sigma2_y", "Sigma_b")}
    else:
        state = resume.final_state.copy()
        proposal = copy.deepcopy(resume.proposal)
        rng.bit_generator.state = resume.rng_state
        start = resume.iterations_done
        frozen = copy.deepcopy(resume.frozen_proposal)
        burn_acc = dict(resume.acceptance_burnin)
        kept = dict(gamma=list(resume.gamma), beta=list(resume.beta), disp=list(resume.disp),
                    sigma2_y=list(resume.sigma2_y), Sigma_b=list(resume.Sigma_b))

    for t in range(start, cfg.n_iter):
        burning = t < cfg.n_burnin
        if burning and t > 0 and t % cfg.adapt_window == 0:
            proposal.gamma_chol, proposal.re_chol = laplace_shapes(state, data, prior, kernel)
        step = (1.0 + t / cfg.adapt_window) ** -0.6 if burning else None
        if t == cfg.n_burnin:
            frozen = proposal.snapshot()
            burn_acc = proposal.rates()
            proposal.accepted, proposal.proposed = {}, {}

        gibbs_sweep(state, data, prior, kernel, proposal, rng, cfg, step)

        if not burning and (t + 1 - cfg.n_burnin) % cfg.thin == 0:
            kept["gamma"].append(state.gamma.copy())
            kept["beta"].append(state.beta.copy())
            kept["disp"].append(getattr(state, kernel.param))
            kept["sigma2_y"].append(state.sigma2_y)
            kept["Sigma_b"].append(state.Sigma_b.copy())

    p = data.p
    return ChainResult(
        gamma=np.array(kept["gamma"]).reshape(-1, p),
        beta=np.array(kept["beta"]).reshape(-1, p),
        disp=np.array(kept["disp"], dtype=float),
        sigma2_y=np.array(kept["sigma2_y"], dtype=float),
        Sigma_b=np.array(kept["Sigma_b"]).reshape(-1, 2, 2),
        final_state=state,
        proposal=proposal,
        frozen_proposal=frozen,
        rng_state=rng.bit_generator.state,
        iterations_done=cfg.n_iter,
        acceptance_burnin=burn_acc,
        acceptance=proposal.rates(),
    )


@dataclass
class PosteriorDraws:
    """Thinned draws from all chains, arrays indexed ``[chain, draw, ...]``."""

    gamma: np.ndarray
    beta: np.ndarray
    disp: np.ndarray
    sigma2_y: np.ndarray
    Sigma_b: np.ndarray
    count_model: str = "genpois"
    columns: tuple = ()
    config: ChainConfig = None
    prior: PriorConfig = None
    chains: list = field(default_factory=list, repr=False)

    @property
    def n_chains(self):
        return self.gamma.shape[0]

    @property
    def n_draws(self):
        return self.gamma.shape[1]

    @property
    def disp_name(self):
        return "lambda" if self.count_model == "genpois" else "kappa"

    def scalar_params(self):
        """Mapping of scalar parameter name to a ``(chains, draws)`` array."""
        names = self.columns or tuple(f"z{k}" for k in range(self.gamma.shape[2]))
        out = {}
        for k, c in enumerate(names):
            out[f"gamma[{c}]"] = self.gamma[:, :, k]
        for k, c in enumerate(names):
            out[f"beta[{c}]"] = self.beta[:, :, k]
        S = self.Sigma_b
        out[self.disp_name] = self.disp
        out["sigma2_y"] = self.sigma2_y
        out["sigma2_b1"] = S[:, :, 0, 0]
        out["sigma2_b2"] = S[:, :, 1, 1]
        out["rho_b"] = S[:, :, 0, 1] / np.sqrt(S[:, :, 0, 0] * S[:, :, 1, 1])
        return out

    def pooled(self):
        """Flatten chains: dict of arrays with leading dimension ``chains * draws``."""
        C, S = self.n_chains, self.n_draws
        return dict(
            gamma=self.gamma.reshape(C * S, -1),
            beta=self.beta.reshape(C * S, -1),
            disp=self.disp.reshape(C * S),
            sigma2_y=self.sigma2_y.reshape(C * S),
            Sigma_b=self.Sigma_b.reshape(C * S, 2, 2),
        )

    def acceptance(self):
        return [c.acceptance for c in self.chains]

    def state(self, index):
        """Pooled draw ``index`` (chain-major order) as a :class:`ParamState` without ``b``."""
        c, d = divmod(int(index), self.n_draws)
        disp = float(self.disp[c, d])
        kw = dict(lam=disp) if self.count_model == "genpois" else dict(lam=0.0, kappa=disp)
        return ParamState(
            gamma=self.gamma[c, d], beta=self.beta[c, d], sigma2_y=float(self.sigma2_y[c, d]),
            Sigma_b=self.Sigma_b[c, d], b=np.zeros((0, 2)), **kw,
        )

    def summary(self, level=0.95):
        """Posterior mean and equal-tailed interval per scalar parameter."""
        lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
        rows = []
        for name, x in self.scalar_params().items():
            flat = x.reshape(-1)
            rows.append(dict(param=name, mean=flat.mean(), sd=flat.std(ddof=1),
                             lower=np.quantile(flat, lo), upper=np.quantile(flat, hi)))
        return rows


def _assemble(results, data_columns, count_model, cfg, prior):
    return PosteriorDraws(
        gamma=np.stack([r.gamma for r in results]),
        beta=np.stack([r.beta for r in results]),
        disp=np.stack([r.disp for r in results]),
        sigma2_y=np.stack([r.sigma2_y for r in results]),
        Sigma_b=np.stack([r.Sigma_b for r in results]),
        count_model=count_model,
        columns=tuple(data_columns),
        config=cfg,
        prior=prior,
        chains=list(results),
    )


def run_chains(data, prior=None, cfg=None, count_model="genpois", columns=None, resume=None):
    """Run ``cfg.n_chains`` independent chains.

    Each chain draws from its own stream spawned from ``cfg.seed``, so the
    archive is reproducible whatever ``cfg.n_jobs`` is.  Passing a previous
    :class:`PosteriorDraws` as ``resume`` continues its chains up to
    ``cfg.n_iter`` iterations, giving the same draws as an uninterrupted run.
    """
    prior = (prior or PriorConfig()).check(data.p)
    cfg = cfg or ChainConfig()
    if data.n_pos_total == 0:
        raise ValueError("need at least one positive y2 observation")
    columns = columns if columns is not None else tuple(f"z{k}" for k in range(data.p))
    if resume is not None:
        if resume.n_chains != cfg.n_chains or resume.count_model != count_model:
            raise ValueError("resume archive does not match the chain configuration")
        done = resume.chains[0].iterations_done
        if done > cfg.n_iter or resume.config.n_burnin != cfg.n_burnin or resume.config.thin != cfg.thin:
            raise ValueError("resume needs the same burn-in and thinning and a longer run")
    resumes = resume.chains if resume is not None else [None] * cfg.n_chains
    if cfg.n_jobs == 1 or cfg.n_chains == 1:
        results = [run_chain(data, prior, cfg, c, count_model, resumes[c]) for c in range(cfg.n_chains)]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=cfg.n_jobs)(
            delayed(run_chain)(data, prior, cfg, c, count_model, resumes[c])
            for c in range(cfg.n_chains)
        )
    return _assemble(results, columns, count_model, cfg, prior)

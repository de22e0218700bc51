"""Usual daily MET-minutes in bouts and guideline compliance.

For person ``i`` and posterior draw ``l`` the usual value is

    t3 = 30 mu1 + exp(Z'beta + b2 + sigma2_y / 2) * P(Y1 > 0) * mu1,

with ``mu1 = exp(Z'gamma + b1)`` and fresh ``(b1, b2) ~ N(0, Sigma_b)``:
30 MET-minutes per expected bout plus the expected excess per bout-day.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from . import dist

# 150 MET-weighted minutes at 3 METs per week, per day.
GUIDELINE_MET_MINUTES = 450.0 / 7.0
DEFAULT_GRID = np.arange(0.0, 301.0)

BUILTIN_POPULATIONS = {
    "overall": "index == index",
    "male": "gender == 1",
    "female": "gender == 0",
    "bmi_lt25": "bmi < 25",
    "bmi_25_30": "bmi >= 25 and bmi < 30",
    "bmi_ge30": "bmi >= 30",
    "age_lt40": "age < 40",
    "age_40_60": "age >= 40 and age < 60",
    "age_ge60": "age >= 60",
}


def usual_t3(Z, gamma, beta, disp, sigma2_y, b, count_model="genpois"):
    """Usual daily bout MET-minutes for one parameter value.

    Parameters
    ----------
    Z : array_like, shape (n, p)
    gamma, beta : array_like, shape (p,)
    disp : float
        ``lam`` for the Generalized Poisson, ``kappa`` for the Negative Binomial.
    sigma2_y : float
    b : array_like, shape (n, 2)
    """
    Z = np.asarray(Z, dtype=float)
    b = np.asarray(b, dtype=float)
    mu1 = np.exp(Z @ gamma + b[:, 0])
    if count_model == "genpois":
        p_zero = dist.genpois_p_zero(mu1, disp)
    elif count_model == "negbin":
        p_zero = dist.negbin_p_zero(mu1, disp)
    else:
        raise ValueError(f"unknown count model {count_model!r}")
    excess = np.exp(Z @ beta + b[:, 1] + 0.5 * sigma2_y)
    return 30.0 * mu1 + excess * (1.0 - p_zero) * mu1


@dataclass
class UsualDraws:
    """``L x n`` matrix of usual values with the persons it describes.

    ``covariates`` holds natural-unit covariates (one row per person, in the
    column order of ``t3``) for population predicates.  ``with_replacement``
    flags that more usual draws were requested than posterior draws exist.
    """

    t3: np.ndarray
    person_ids: tuple
    draw_index: np.ndarray
    covariates: pd.DataFrame = None
    weights: np.ndarray = None
    with_replacement: bool = False

    @property
    def L(self):
        return self.t3.shape[0]

    @property
    def n(self):
        return self.t3.shape[1]


def simulate_t3(draws, Z, L=None, rng=None, person_ids=None, covariates=None, weights=None):
    """Usual values for every person at ``L`` posterior draws.

    ``L`` defaults to ``min(2000, stored draws)``; draws are taken without
    replacement unless ``L`` exceeds the archive, in which case they are
    taken with replacement and the result is flagged.
    """
    rng = rng if rng is not None else np.random.default_rng()
    Z = np.asarray(Z, dtype=float)
    total = draws.n_chains * draws.n_draws
    if total == 0:
        raise ValueError("the draw archive is empty")
    L = min(2000, total) if L is None else int(L)
    if L < 1:
        raise ValueError("L must be at least 1")
    with_replacement = L > total
    idx = rng.choice(total, size=L, replace=with_replacement)
    n = Z.shape[0]
    t3 = np.empty((L, n))
    for row, k in enumerate(idx):
        st = draws.state(k)
        b = rng.multivariate_normal(np.zeros(2), st.Sigma_b, size=n, method="cholesky")
        disp = st.lam if draws.count_model == "genpois" else st.kappa
        t3[row] = usual_t3(Z, st.gamma, st.beta, disp, st.sigma2_y, b, draws.count_model)
    ids = tuple(person_ids) if person_ids is not None else tuple(range(n))
    if covariates is not None and len(covariates) != n:
        raise ValueError("covariates need one row per person")
    w = None if weights is None else np.asarray(weights, dtype=float)
    return UsualDraws(t3, ids, idx, covariates, w, with_replacement)


@dataclass(frozen=True)
class Compliance:
    mean: float
    lower: float
    upper: float
    per_draw: np.ndarray = field(repr=False)


def _weighted_compliance(t3, threshold, w):
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative and not all zero")
    p = (t3 >= threshold) @ w / w.sum()
    lo, hi = np.percentile(p, [2.5, 97.5])
    return Compliance(float(p.mean()), float(lo), float(hi), p)


def compliance(usual, threshold=GUIDELINE_MET_MINUTES):
    """Per-draw share of persons at or above ``threshold`` with its mean and 95% interval."""
    return _weighted_compliance(usual.t3, threshold, np.ones(usual.n))


def compliance_weighted(usual, weights=None, threshold=GUIDELINE_MET_MINUTES):
    """Survey-weighted compliance; ``weights`` default to ``usual.weights``."""
    w = usual.weights if weights is None else weights
    if w is None:
        raise ValueError("no weights given")
    w = np.asarray(w, dtype=float)
    if w.shape != (usual.n,):
        raise ValueError("need one weight per person")
    return _weighted_compliance(usual.t3, threshold, w)


def subpopulation(usual, predicate):
    """Restrict ``usual`` to the persons selected by ``predicate``.

    ``predicate`` is a built-in population name (see
    :data:`BUILTIN_POPULATIONS`), a pandas query expression over the
    covariate columns, a callable taking the covariate frame, or a boolean
    mask.
    """
    if isinstance(predicate, str) or callable(predicate):
        cov = usual.covariates
        if cov is None:
            raise ValueError("predicates need covariates attached to the usual draws")
        cov = cov.reset_index(drop=True)
        if isinstance(predicate, str):
            expr = BUILTIN_POPULATIONS.get(predicate, predicate)
            mask = cov.eval(expr) if expr != "index == index" else pd.Series(True, index=cov.index)
        else:
            mask = predicate(cov)
    else:
        mask = predicate
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (usual.n,):
        raise ValueError("predicate must select from every person")
    if not mask.any():
        raise ValueError("predicate selects no persons")
    return replace(
        usual,
        t3=usual.t3[:, mask],
        person_ids=tuple(p for p, keep in zip(usual.person_ids, mask) if keep),
        covariates=None if usual.covariates is None else usual.covariates[mask],
        weights=None if usual.weights is None else usual.weights[mask],
    )


def compliance_table(usual, populations=tuple(BUILTIN_POPULATIONS), threshold=GUIDELINE_MET_MINUTES,
                     weighted=False):
    """Compliance mean and interval for each named population."""
    rows = []
    for name in populations:
        sub = subpopulation(usual, name)
        c = compliance_weighted(sub, threshold=threshold) if weighted else compliance(sub, threshold)
        rows.append(dict(population=name, n=sub.n, compliance=c.mean, lower=c.lower, upper=c.upper))
    return pd.DataFrame(rows)


def _silverman_factor(x):
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) or sd
    # gaussian_kde multiplies the factor by the sample sd
    return 0.9 * spread * x.size ** -0.2 / sd


def density_bands(usual, grid=DEFAULT_GRID):
    """Pointwise mean and 95% band of the per-draw density of ``t3``.

    Each draw's density is a Gaussian kernel estimate with Silverman's
    rule-of-thumb bandwidth ``0.9 min(sd, IQR / 1.34) n^(-1/5)``; the robust
    spread keeps the long right tail of ``t3`` from oversmoothing the bulk.
    Returns columns ``met_minutes, mean, lower, upper`` and a ``reference``
    column holding the guideline value.
    """
    if usual.L < 100:
        raise ValueError("density bands need at least 100 draws")
    grid = np.asarray(grid, dtype=float)
    dens = np.empty((usual.L, grid.size))
    for k, row in enumerate(usual.t3):
        if np.ptp(row) == 0:
            raise ValueError("a draw has identical usual values; its density is degenerate")
        dens[k] = stats.gaussian_kde(row, bw_method=_silverman_factor(row))(grid)
    lo, hi = np.percentile(dens, [2.5, 97.5], axis=0)
    return pd.DataFrame(dict(met_minutes=grid, mean=dens.mean(axis=0), lower=lo, upper=hi,
                             reference=GUIDELINE_MET_MINUTES))

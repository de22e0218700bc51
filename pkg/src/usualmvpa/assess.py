"""Posterior predictive model assessment and the Negative Binomial comparison."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .mcmc import ChainConfig, PriorConfig, run_chains
from .simulate import simulate_panel

# Row order of the published comparison table, as (day 1, day 2) categories.
COMBO_ORDER = ((0, 0), (1, 0), (2, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2))
COMBO_LABELS = tuple(f"{'2+' if a == 2 else a},{'2+' if b == 2 else b}" for a, b in COMBO_ORDER)


@dataclass(frozen=True)
class Replicate:
    """One replicated dataset and the posterior draw that generated it."""

    y1: np.ndarray
    y2: np.ndarray
    draw: int


def replicate_datasets(draws, Z, M, rng, days=2):
    """Simulate ``M`` datasets from the posterior predictive distribution.

    Each replicate takes one posterior draw, fresh random effects from
    ``N(0, Sigma_b)``, counts from the fitted count law and ``y2`` from the
    two-part law.  Draws are picked without replacement when ``M`` does not
    exceed the archive size.  Every replicate has its own random stream
    spawned from ``rng``, so the set is the same however it is computed.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    total = draws.n_chains * draws.n_draws
    if total == 0:
        raise ValueError("the draw archive is empty")
    idx = rng.choice(total, size=M, replace=M > total)
    seeds = np.random.SeedSequence(int(rng.integers(2**63))).spawn(M)
    Z = np.asarray(Z, dtype=float)
    out = []
    for m in range(M):
        sub = np.random.default_rng(seeds[m])
        panel, _ = simulate_panel(draws.state(idx[m]), Z, sub, days, draws.count_model)
        out.append(Replicate(panel.y1, panel.y2, int(idx[m])))
    return out


def bout_combo_table(y1):
    """Person counts over the nine (day 1, day 2) combinations of 0, 1, 2+ bouts.

    Returns a length-9 integer array in :data:`COMBO_ORDER`.
    """
    y1 = np.asarray(y1)
    if y1.ndim != 2 or y1.shape[1] != 2:
        raise ValueError("bout_combo_table needs paired days, shape (n, 2)")
    cat = np.minimum(y1, 2)
    grid = np.zeros((3, 3), dtype=int)
    np.add.at(grid, (cat[:, 0], cat[:, 1]), 1)
    return np.array([grid[a, b] for a, b in COMBO_ORDER])


def chisq_proportions(observed, expected, method="homogeneity"):
    """Chi-square comparison of observed cell counts with mean replicate counts.

    Parameters
    ----------
    observed, expected : array_like of 9 nonnegative numbers
    method : {"homogeneity", "goodness_of_fit"}
        ``"homogeneity"`` is the Pearson statistic of the 2 x 9 table with
        rows ``observed`` and ``expected``; its degrees of freedom are 8.
        ``"goodness_of_fit"`` is ``sum((O - E)^2 / E)`` with ``E`` rescaled
        to the observed total, also referred to 8 degrees of freedom.

    Returns
    -------
    statistic, df, pvalue
    """
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape or o.ndim != 1:
        raise ValueError("observed and expected must be 1-d arrays of equal length")
    if np.any(e <= 0):
        raise ValueError("expected counts must be positive; pool sparse categories first")
    if np.any(o < 0):
        raise ValueError("observed counts must be nonnegative")
    df = o.size - 1
    if method not in ("homogeneity", "goodness_of_fit"):
        raise ValueError(f"unknown method {method!r}")
    if np.array_equal(o, e):
        # exact zero; the fitted-count formula leaves roundoff otherwise
        return 0.0, df, 1.0
    if method == "homogeneity":
        table = np.vstack([o, e])
        col = table.sum(axis=0)
        fit = np.outer(table.sum(axis=1), col) / table.sum()
        stat = float(np.sum((table - fit) ** 2 / fit))
    elif method == "goodness_of_fit":
        e = e * o.sum() / e.sum()
        stat = float(np.sum((o - e) ** 2 / e))
    return stat, df, float(stats.chi2.sf(stat, df))


def within_person_sd(y1):
    """Mean over persons of the sample standard deviation of daily bout counts."""
    return float(np.mean(np.std(np.asarray(y1, dtype=float), axis=1, ddof=1)))


def within_person_range(y1):
    """Mean over persons of the range of daily bout counts."""
    y1 = np.asarray(y1)
    return float(np.mean(y1.max(axis=1) - y1.min(axis=1)))


STATISTICS = {"within_person_sd": within_person_sd, "within_person_range": within_person_range}


def ppp_value(observed, replicated):
    """Fraction of replicated statistics strictly below the observed one."""
    rep = np.asarray(replicated, dtype=float)
    if rep.size == 0:
        raise ValueError("no replicated statistics")
    return float(np.mean(rep < observed))


def ks_y2(observed, replicate):
    """Two-sample Kolmogorov-Smirnov test on nonzero ``y2`` values.

    Returns ``(D, p)`` with the asymptotic p-value.
    """
    a = np.asarray(observed, dtype=float).ravel()
    b = np.asarray(replicate, dtype=float).ravel()
    a, b = a[a > 0], b[b > 0]
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples need at least one nonzero y2 value")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_summary(pvalues):
    """Quartiles and mean of a set of p-values."""
    p = np.asarray(pvalues, dtype=float)
    q1, q2, q3 = np.quantile(p, [0.25, 0.5, 0.75])
    return pd.DataFrame([dict(q1=q1, median=q2, q3=q3, mean=p.mean(), n=p.size)])


def fit_negbin_variant(data, prior=None, cfg=None, columns=None):
    """Fit the same two-part model with a Negative Binomial count law."""
    return run_chains(data, prior or PriorConfig(), cfg or ChainConfig(), "negbin", columns)


@dataclass
class PredictiveCheck:
    """Results of :func:`posterior_predictive_check`."""

    combo: pd.DataFrame
    chisq: tuple
    ppc: pd.DataFrame
    ks_pvalues: np.ndarray

    @property
    def ks(self):
        return ks_summary(self.ks_pvalues)


def posterior_predictive_check(draws, panel, M=1000, rng=None, method="homogeneity"):
    """Run every predictive check of a fit against its data.

    Returns the observed and mean replicated combination counts with the
    chi-square comparison, the ppp values of the built-in statistics, and
    the per-replicate KS p-values for ``y2``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    reps = replicate_datasets(draws, panel.Z, M, rng, days=panel.J)
    observed = bout_combo_table(panel.y1)
    expected = np.mean([bout_combo_table(r.y1) for r in reps], axis=0)
    combo = pd.DataFrame(dict(cell=COMBO_LABELS, observed=observed, expected=expected))
    rows = []
    for name, fn in STATISTICS.items():
        obs = fn(panel.y1)
        rep = np.array([fn(r.y1) for r in reps])
        q = np.quantile(rep, [0.025, 0.5, 0.975])
        rows.append(dict(statistic=name, observed=obs, rep_q025=q[0], rep_median=q[1],
                         rep_q975=q[2], ppp=ppp_value(obs, rep)))
    ks_p = np.array([ks_y2(panel.y2, r.y2)[1] if np.any(r.y2 > 0) else np.nan for r in reps])
    return PredictiveCheck(combo, chisq_proportions(observed, expected, method), pd.DataFrame(rows),
                           ks_p[np.isfinite(ks_p)])

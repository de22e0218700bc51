"""Convergence diagnostics and day-exchangeability checks."""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

RHAT_LIMIT = 1.05
MCSE_RATIO_LIMIT = 0.015


def _as_chains(draws):
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("draws must be shaped (chains, iterations)")
    return x


def gelman_rubin(draws, split=True):
    """Potential scale reduction factor for one parameter.

    Parameters
    ----------
    draws : array_like, shape (n_chains, n_draws)
    split : bool, default=True
        Halve each chain first (split-R-hat).

    Returns
    -------
    float
        1.0 when all chains are constant and identical.
    """
    x = _as_chains(draws)
    if x.shape[0] < 2:
        raise ValueError("Gelman-Rubin needs at least two chains")
    if split:
        half = x.shape[1] // 2
        x = np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)
    m, n = x.shape
    if n < 2:
        raise ValueError("chains are too short")
    chain_means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * chain_means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else np.inf
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def mcse(draws, min_draws=100):
    """Batch-means Monte Carlo standard error of the posterior mean.

    Each chain is cut into batches of ``floor(sqrt(m))`` draws (``m`` the
    per-chain length); batch means from all chains are pooled.
    """
    x = _as_chains(draws)
    m = x.shape[1]
    if x.size < min_draws:
        raise ValueError(f"need at least {min_draws} draws for batch means, got {x.size}")
    size = int(np.floor(np.sqrt(m)))
    n_batches = m // size
    means = x[:, : n_batches * size].reshape(x.shape[0], n_batches, size).mean(axis=2).ravel()
    if means.size < 2:
        raise ValueError("too few batches")
    # centre on the grand mean so chain offsets count as Monte Carlo error
    var_batch = np.sum((means - x.mean()) ** 2) / (means.size - 1)
    return float(np.sqrt(size * var_batch / x.size))


@dataclass
class ConvergenceReport:
    table: pd.DataFrame
    acceptance: list

    @property
    def passed(self):
        return bool(self.table["pass"].all())


def convergence_report(draws, rhat_limit=RHAT_LIMIT, mcse_limit=MCSE_RATIO_LIMIT):
    """R-hat, MCSE and MCSE/posterior-SD per scalar parameter of a draw archive.

    The sample R-hat can dip just below 1 when chains agree closely; the
    report floors it at 1 (:func:`gelman_rubin` returns the raw value).
    """
    rows = []
    for name, x in draws.scalar_params().items():
        sd = x.std(ddof=1)
        se = mcse(x)
        rhat = max(1.0, gelman_rubin(x)) if x.shape[0] > 1 else np.nan
        ratio = se / sd if sd > 0 else 0.0
        rows.append(dict(
            param=name, mean=x.mean(), sd=sd, rhat=rhat, mcse=se, mcse_ratio=ratio,
            ess=(sd / se) ** 2 if se > 0 else float(x.size),
            rhat_ok=bool(rhat < rhat_limit) if np.isfinite(rhat) else True,
            mcse_ok=bool(ratio < mcse_limit),
        ))
    table = pd.DataFrame(rows)
    table["pass"] = table["rhat_ok"] & table["mcse_ok"]
    return ConvergenceReport(table, draws.acceptance())


def autocorrelation(x, max_lag=50):
    """Chain-averaged autocorrelation of one parameter at lags ``0..max_lag``."""
    x = _as_chains(x)
    max_lag = min(max_lag, x.shape[1] - 1)
    d = x - x.mean(axis=1, keepdims=True)
    var = np.mean(d**2, axis=1)
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        cov = np.mean(d[:, : d.shape[1] - k] * d[:, k:], axis=1) * (d.shape[1] - k) / d.shape[1]
        out[k] = np.mean(np.where(var > 0, cov / np.where(var > 0, var, 1.0), 1.0))
    return out


def acf_table(draws, max_lag=50):
    """Long table ``param, lag, acf`` for every scalar parameter."""
    rows = []
    for name, x in draws.scalar_params().items():
        for lag, r in enumerate(autocorrelation(x, max_lag)):
            rows.append(dict(param=name, lag=lag, acf=r))
    return pd.DataFrame(rows)


def contingency_table(y1, cap=10):
    """Square day-1 by day-2 table of bout counts, top category pooled at ``cap``."""
    y1 = np.minimum(np.asarray(y1, dtype=int), cap)
    table = np.zeros((cap + 1, cap + 1), dtype=int)
    np.add.at(table, (y1[:, 0], y1[:, 1]), 1)
    return table


def bowker_test(table, df_rule="nonzero"):
    """Bowker's test of symmetry for a square contingency table.

    Parameters
    ----------
    table : array_like, shape (m, m)
    df_rule : {"nonzero", "full"}
        ``"nonzero"`` counts only off-diagonal pairs with a positive total;
        ``"full"`` uses the textbook ``m (m - 1) / 2``.

    Returns
    -------
    statistic, df, pvalue
    """
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("table must be square")
    iu = np.triu_indices(t.shape[0], k=1)
    upper, lower = t[iu], t.T[iu]
    total = upper + lower
    used = total > 0
    if not used.any():
        raise ValueError("all off-diagonal pairs are empty")
    stat = float(np.sum((upper[used] - lower[used]) ** 2 / total[used]))
    if df_rule == "nonzero":
        df = int(used.sum())
    elif df_rule == "full":
        df = int(iu[0].size)
    else:
        raise ValueError(f"unknown df_rule {df_rule!r}")
    return stat, df, float(stats.chi2.sf(stat, df))


def day_effect_regression(y1, y2, weekend):
    """Regress the day-1 minus day-2 difference of ``y2`` on the ``y1`` and weekend differences.

    Returns a DataFrame with estimate, standard error, t and p for the
    intercept (day effect), the ``y1`` difference and the weekend
    difference.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    wk = np.asarray(weekend, dtype=float)
    dy = y2[:, 0] - y2[:, 1]
    X = np.column_stack([np.ones(len(dy)), y1[:, 0] - y1[:, 1], wk[:, 0] - wk[:, 1]])
    n, k = X.shape
    if n <= k or np.linalg.matrix_rank(X) < k:
        raise ValueError("day-effect regression columns are collinear")
    XtX_inv = np.linalg.inv(X.T @ X)
    coef = XtX_inv @ X.T @ dy
    resid = dy - X @ coef
    s2 = resid @ resid / (n - k)
    se = np.sqrt(np.diag(XtX_inv) * s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, 0.0)
    p = 2 * stats.t.sf(np.abs(t), n - k)
    return pd.DataFrame(
        dict(term=["day", "y1_diff", "weekend_diff"], estimate=coef, se=se, t=t, p=p)
    )


def paired_t_weekend(y1, weekend):
    """Paired t-test of weekday versus weekend bout counts.

    Only persons observed on exactly one weekday and one weekend day enter.
    Returns ``(t, p, n_pairs)``.
    """
    y1 = np.asarray(y1, dtype=float)
    wk = np.asarray(weekend, dtype=bool)
    keep = wk.sum(axis=1) == 1
    if keep.sum() < 2:
        raise ValueError("fewer than two persons with one weekday and one weekend day")
    weekend_val = np.where(wk[keep], y1[keep], 0).sum(axis=1)
    weekday_val = np.where(~wk[keep], y1[keep], 0).sum(axis=1)
    d = weekend_val - weekday_val
    if np.all(d == 0):
        return 0.0, 1.0, int(keep.sum())
    res = stats.ttest_rel(weekend_val, weekday_val)
    return float(res.statistic), float(res.pvalue), int(keep.sum())


def preflight(panel, cap=10, alpha=0.05):
    """Exchangeability checks on a two-day panel as report rows.

    ``pass`` is True when a check does not reject exchangeability at ``alpha``.
    """
    table = contingency_table(panel.y1, cap)
    stat, df, p = bowker_test(table)
    rows = [dict(check="bowker_symmetry", statistic=stat, df=df, p_value=p)]
    if panel.weekend is not None:
        try:
            t, p, n = paired_t_weekend(panel.y1, panel.weekend)
            rows.append(dict(check="weekend_paired_t_y1", statistic=t, df=n - 1, p_value=p))
        except ValueError as exc:
            rows.append(dict(check="weekend_paired_t_y1", note=str(exc)))
        reg = day_effect_regression(panel.y1, panel.y2, panel.weekend)
        for _, r in reg.iterrows():
            rows.append(dict(check=f"y2_regression_{r['term']}", statistic=r["t"],
                             df=panel.n - 3, p_value=r["p"], estimate=r["estimate"]))
    out = pd.DataFrame(rows)
    # the regression slope on the y1 difference is not an exchangeability check
    checked = ~out["check"].eq("y2_regression_y1_diff")
    out["pass"] = [bool(p >= alpha) if c else None for p, c in zip(out["p_value"], checked)]
    return out

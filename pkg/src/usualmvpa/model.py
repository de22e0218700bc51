"""Estimator front end for the two-part bout model."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import usual as usual_mod
from .diagnose import convergence_report
from .mcmc import PRIOR_PRESETS, ChainConfig, PanelData, PriorConfig, run_chains


def check_panel(y1, y2, n=None):
    """Validate paired outcome arrays and return them as ``(int, float)`` arrays.

    Raises ``ValueError`` when the shapes disagree, counts are not
    nonnegative integers, or ``y2 > 0`` does not coincide with ``y1 > 0``.
    """
    y1 = check_array(y1, dtype=None, ensure_min_features=1)
    y2 = check_array(y2, dtype=float)
    if y1.shape != y2.shape:
        raise ValueError(f"y1 {y1.shape} and y2 {y2.shape} differ in shape")
    if n is not None and y1.shape[0] != n:
        raise ValueError(f"expected {n} persons, got {y1.shape[0]}")
    if np.any(y1 < 0) or np.any(y1 != np.round(y1)):
        raise ValueError("y1 must hold nonnegative integers")
    if np.any(y2 < 0):
        raise ValueError("y2 must be nonnegative")
    if np.any((y1 > 0) != (y2 > 0)):
        raise ValueError("y2 must be positive exactly when y1 is positive")
    return y1.astype(np.int64), y2


def resolve_prior(prior):
    if isinstance(prior, PriorConfig):
        return prior
    if prior is None:
        return PRIOR_PRESETS["paper"]
    try:
        return PRIOR_PRESETS[prior]
    except KeyError:
        raise ValueError(f"unknown prior preset {prior!r}; choose from {sorted(PRIOR_PRESETS)}") from None


class TwoPartBoutModel(BaseEstimator):
    """Bayesian two-part model for daily bout counts and excess MET-minutes.

    Parameters
    ----------
    count_model : {"genpois", "negbin"}, default="genpois"
    prior : str or PriorConfig, default="paper"
        A preset name (``paper``, ``set2``, ``set3``, ``set4``) or explicit config.
    n_chains, n_iter, n_burnin, thin : int
        Chain protocol; ``(n_iter - n_burnin) // thin`` draws are kept per chain.
    random_state : int, default=0
    n_jobs : int, default=1
        Chains run in parallel when greater than one; the draws do not depend on it.

    Attributes
    ----------
    draws_ : PosteriorDraws
    convergence_ : ConvergenceReport
    gamma_, beta_ : ndarray of shape (n_features,)
        Posterior means of the regression coefficients.
    n_features_in_ : int

    Examples
    --------
    >>> model = TwoPartBoutModel(n_iter=400, n_burnin=200, n_chains=2)  # doctest: +SKIP
    >>> model.fit(Z, y1, y2).summary()                                    # doctest: +SKIP
    """

    def __init__(self, count_model="genpois", prior="paper", n_chains=3, n_iter=20000,
                 n_burnin=5000, thin=5, random_state=0, n_jobs=1):
        self.count_model = count_model
        self.prior = prior
        self.n_chains = n_chains
        self.n_iter = n_iter
        self.n_burnin = n_burnin
        self.thin = thin
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _chain_config(self):
        return ChainConfig(n_chains=self.n_chains, n_iter=self.n_iter, n_burnin=self.n_burnin,
                           thin=self.thin, seed=int(self.random_state), n_jobs=self.n_jobs)

    def fit(self, X, y1, y2, feature_names=None, weekend=None):
        """Run the sampler.

        Parameters
        ----------
        X : array_like of shape (n_persons, n_features)
            Design matrix, including an intercept column if one is wanted.
        y1 : array_like of shape (n_persons, n_days)
        y2 : array_like of shape (n_persons, n_days)
        """
        X = check_array(X, dtype=float)
        y1, y2 = check_panel(y1, y2, X.shape[0])
        if self.count_model not in ("genpois", "negbin"):
            raise ValueError(f"unknown count model {self.count_model!r}")
        panel = PanelData(y1, y2, X, weekend=weekend)
        names = tuple(feature_names) if feature_names is not None else tuple(f"z{k}" for k in range(X.shape[1]))
        self.draws_ = run_chains(panel, resolve_prior(self.prior), self._chain_config(),
                                 self.count_model, names)
        self.n_features_in_ = X.shape[1]
        self.feature_names_ = names
        self.gamma_ = self.draws_.gamma.mean(axis=(0, 1))
        self.beta_ = self.draws_.beta.mean(axis=(0, 1))
        self.convergence_ = convergence_report(self.draws_) if self.draws_.n_draws >= 100 else None
        return self

    def summary(self):
        """Posterior means and 95% intervals as a list of rows."""
        check_is_fitted(self, "draws_")
        return self.draws_.summary()

    def sample_usual(self, X, L=None, random_state=None, covariates=None, weights=None):
        """Usual daily bout MET-minutes for the persons in ``X`` (an ``L x n`` draw matrix)."""
        check_is_fitted(self, "draws_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}")
        rng = np.random.default_rng(random_state)
        return usual_mod.simulate_t3(self.draws_, X, L, rng, covariates=covariates, weights=weights)

    def predict(self, X, L=None, random_state=None):
        """Posterior predictive mean of each person's usual daily bout MET-minutes."""
        return self.sample_usual(X, L, random_state).t3.mean(axis=0)

    def compliance(self, X, threshold=usual_mod.GUIDELINE_MET_MINUTES, weights=None, L=None,
                   random_state=None):
        """Share of the persons in ``X`` meeting ``threshold``, with a 95% interval."""
        u = self.sample_usual(X, L, random_state)
        if weights is None:
            return usual_mod.compliance(u, threshold)
        return usual_mod.compliance_weighted(u, weights, threshold)

"""Small builders shared by several test modules."""

import numpy as np

from usualmvpa.mcmc import PosteriorDraws


def point_draws(state, n_draws=1, count_model="genpois", n_chains=1):
    """An archive holding ``n_draws`` copies of one parameter value."""
    shape = (n_chains, n_draws)
    disp = state.lam if count_model == "genpois" else state.kappa
    return PosteriorDraws(
        gamma=np.broadcast_to(np.asarray(state.gamma, float), shape + (len(state.gamma),)).copy(),
        beta=np.broadcast_to(np.asarray(state.beta, float), shape + (len(state.beta),)).copy(),
        disp=np.full(shape, float(disp)),
        sigma2_y=np.full(shape, float(state.sigma2_y)),
        Sigma_b=np.broadcast_to(np.asarray(state.Sigma_b, float), shape + (2, 2)).copy(),
        count_model=count_model,
    )


def grid_ks(draws, grid, logdens):
    """KS distance between draws and a density known up to a constant on a grid."""
    from scipy import integrate

    w = np.exp(logdens - logdens.max())
    cdf = integrate.cumulative_trapezoid(w, grid, initial=0.0)
    cdf /= cdf[-1]
    x = np.sort(np.asarray(draws))
    F = np.interp(x, grid, cdf)
    n = x.size
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))


VERDICTS = []


def verdict(number, ok, detail):
    """Record and print one acceptance line, then fail the test if ``ok`` is false."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    assert ok, line

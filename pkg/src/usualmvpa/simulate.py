"""Synthetic covariates, day outcomes and minute traces from known parameters."""

from dataclasses import dataclass

import numpy as np

from . import dist
from .bouts import MODERATE_METS, DayObservation
from .ingest import CovariateRecord, MinuteSeries, MINUTES_PER_DAY
from .mcmc import PanelData, ParamState

# Sample composition used for PAMS-like synthetic cohorts.
N_FEMALE, N_MALE = 630, 427
AGE_BANDS = ((21, 40), (40, 60), (60, 72))
AGE_COUNTS = {0: (106, 331, 193), 1: (129, 187, 111)}
BMI_MOMENTS = {0: (30.87, 6.27), 1: (30.1, 8.09)}
BMI_RANGE = (16.8, 72.9)
RATES = dict(black=84 / 1057, hispanic=36 / 1057, smoker=189 / 1057, college=411 / 1057,
             physical_job=502 / 1057)

# Coefficients on the standardized design (intercept, gender, age, bmi,
# black, hispanic, smoker, college, physical_job).
REFERENCE_GAMMA = np.array([0.55, 0.25, -0.15, -0.20, -0.10, -0.25, -0.15, 0.00, 0.30])
REFERENCE_BETA = np.array([2.85, 0.15, 0.00, -0.10, -0.15, 0.00, -0.10, 0.10, 0.15])


def reference_truth(lam=0.09, sigma2_y=0.47, sigma2_b1=0.82, sigma2_b2=0.28, rho_b=0.41,
                    gamma=None, beta=None):
    """Truth with the published variance components and plausible coefficients."""
    cov = rho_b * np.sqrt(sigma2_b1 * sigma2_b2)
    return ParamState(
        gamma=REFERENCE_GAMMA.copy() if gamma is None else gamma,
        beta=REFERENCE_BETA.copy() if beta is None else beta,
        lam=lam,
        sigma2_y=sigma2_y,
        Sigma_b=np.array([[sigma2_b1, cov], [cov, sigma2_b2]]),
        b=np.zeros((0, 2)),
    )


def simulate_covariates(n, rng, missing_job=0.0, prefix="p"):
    """Independent-marginal covariates matching the PAMS sample composition."""
    male = rng.random(n) < N_MALE / (N_MALE + N_FEMALE)
    records = []
    for i in range(n):
        g = int(male[i])
        band_p = np.array(AGE_COUNTS[g], dtype=float)
        lo, hi = AGE_BANDS[rng.choice(3, p=band_p / band_p.sum())]
        age = rng.uniform(lo, hi)
        m, sd = BMI_MOMENTS[g]
        bmi = float(np.clip(rng.normal(m, sd), *BMI_RANGE))
        flags = {k: int(rng.random() < v) for k, v in RATES.items()}
        if missing_job and rng.random() < missing_job:
            flags["physical_job"] = None
        records.append(CovariateRecord(person_id=f"{prefix}{i:05d}", gender=g, age=age, bmi=bmi,
                                       **flags))
    return records


@dataclass
class HiddenEffects:
    b: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray


def simulate_panel(truth, Z, rng, days=2, count_model="genpois", b=None):
    """Draw a :class:`PanelData` and the random effects behind it.

    ``truth.kappa`` is the Negative Binomial dispersion when
    ``count_model == "negbin"``.
    """
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    if b is None:
        b = rng.multivariate_normal(np.zeros(2), truth.Sigma_b, size=n, method="cholesky")
    mu1 = np.exp(Z @ truth.gamma + b[:, 0])
    mu2 = Z @ truth.beta + b[:, 1]
    mu1_days = np.repeat(mu1[:, None], days, axis=1)
    if count_model == "genpois":
        y1 = dist.genpois_sample(mu1_days, truth.lam, rng)
    elif count_model == "negbin":
        y1 = dist.negbin_sample(mu1_days, truth.kappa, rng)
    else:
        raise ValueError(f"unknown count model {count_model!r}")
    y2 = np.exp(mu2[:, None] + np.sqrt(truth.sigma2_y) * rng.standard_normal((n, days)))
    y2 = np.where(y1 > 0, y2, 0.0)
    weekend = rng.random((n, days)) < 2 / 7
    return PanelData(y1, y2, Z, weekend=weekend), HiddenEffects(b, mu1, mu2)


def simulate_dataset(truth, Z, rng, person_ids=None, days=2, count_model="genpois"):
    """Day observations for ``n`` persons plus the hidden effects.

    Returns ``(list of DayObservation, PanelData, HiddenEffects)``.
    """
    panel, hidden = simulate_panel(truth, Z, rng, days, count_model)
    ids = person_ids if person_ids is not None else tuple(f"p{i:05d}" for i in range(panel.n))
    panel.person_ids = tuple(ids)
    out = []
    for i, pid in enumerate(ids):
        for j in range(days):
            out.append(DayObservation(pid, j + 1, bool(panel.weekend[i, j]),
                                      int(panel.y1[i, j]), float(panel.y2[i, j])))
    return out, panel, hidden


def simulate_minutes(day, rng, gap=3):
    """Build a MET trace in which the bout detector finds exactly ``day.y1`` bouts.

    Each bout is a block of 3-6 MET minutes, sized so its MET-minutes
    roughly match ``day.y2 + 30``, with up to two interior sub-moderate
    minutes.  Background minutes are 0.9-2.9 METs and bouts are separated by
    at least ``gap`` background minutes.
    """
    mets = rng.uniform(0.9, 2.9, MINUTES_PER_DAY)
    if day.y1 == 0:
        return MinuteSeries(day.person_id, day.day_index, day.weekend, mets, "met")
    target = day.y2 + 30.0
    lengths = np.full(day.y1, max(10, int(round(target / 4.5))))
    budget = MINUTES_PER_DAY - gap * (day.y1 + 1)
    if lengths.sum() > budget:
        lengths[:] = budget // day.y1
        if lengths[0] < 10:
            raise ValueError(f"{day.y1} bouts do not fit in one day")
    slack = budget - lengths.sum()
    # spread the spare minutes over the gaps at random
    extra = np.diff(np.sort(rng.integers(0, slack + 1, size=day.y1)), prepend=0)
    pos = gap
    for k, length in enumerate(lengths):
        pos += int(extra[k])
        block = rng.uniform(MODERATE_METS, 6.0, length)
        n_dips = rng.integers(0, 3)
        if n_dips and length >= 6:
            dips = rng.choice(np.arange(1, length - 2), size=n_dips, replace=False)
            block[dips] = rng.uniform(0.9, 2.9, n_dips)
        mets[pos:pos + length] = block
        pos += length + gap
    return MinuteSeries(day.person_id, day.day_index, day.weekend, mets, "met")

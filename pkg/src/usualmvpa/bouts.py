"""Bout detection on minute-epoch MET traces.

A minute is *active* when its MET value is at least the moderate cutoff
(3.0).  A bout is a run of at least 10 minutes in which every 10-minute
window holds no more than 2 inactive minutes and whose last two minutes are
active.  Bouts are taken greedily left to right, each extended as far as the
window rule allows.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

MODERATE_METS = 3.0
BASELINE_MET_MINUTES = 30.0


@dataclass(frozen=True)
class BoutInterval:
    start: int
    end: int
    met_minutes: float

    @property
    def length(self):
        return self.end - self.start + 1


@dataclass
class DayObservation:
    """Bout count ``y1`` and average excess MET-minutes ``y2`` for one person-day."""

    person_id: str
    day_index: int
    weekend: bool
    y1: int
    y2: float
    bouts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.y1 < 0 or self.y2 < 0:
            raise ValueError("y1 and y2 must be nonnegative")
        if (self.y1 == 0) != (self.y2 == 0):
            raise ValueError(
                f"person {self.person_id} day {self.day_index}: y2 must be zero "
                f"exactly when y1 is zero (y1={self.y1}, y2={self.y2})"
            )

    @property
    def total_met_minutes(self):
        if self.bouts:
            return float(sum(b.met_minutes for b in self.bouts))
        return self.y1 * (self.y2 + BASELINE_MET_MINUTES)


def find_bouts(
    mets,
    threshold=MODERATE_METS,
    window=10,
    max_inactive=2,
    min_length=10,
    count_inactive_minutes=True,
):
    """Locate bouts in a MET trace.

    Parameters
    ----------
    mets : array_like of shape (n_minutes,)
        Per-minute MET values.  Any length is accepted.
    threshold : float
        Minutes at or above this value are active.
    window, max_inactive : int
        Every ``window``-minute span inside a bout holds at most
        ``max_inactive`` inactive minutes.
    min_length : int
        Shortest admissible bout, in minutes.
    count_inactive_minutes : bool
        Whether interior sub-moderate minutes contribute their METs to
        ``met_minutes``.

    Returns
    -------
    list of BoutInterval
    """
    mets = np.asarray(mets, dtype=float)
    n = mets.size
    if n < window:
        return []
    active = mets >= threshold
    csum = np.concatenate(([0], np.cumsum(~active)))
    window_ok = (csum[window:] - csum[:-window]) <= max_inactive
    bad_starts = np.flatnonzero(~window_ok)
    candidates = np.flatnonzero(active[: n - window + 1] & window_ok)
    credited = mets if count_inactive_minutes else np.where(active, mets, 0.0)

    bouts = []
    resume = 0
    for s in candidates:
        if s < resume:
            continue
        # the first failing trailing window starting at k ends the bout at k + window - 2
        k = np.searchsorted(bad_starts, s + 1)
        end = bad_starts[k] + window - 2 if k < bad_starts.size else n - 1
        while end > s and not (active[end] and active[end - 1]):
            end -= 1
        if end - s + 1 < min_length:
            continue
        bouts.append(BoutInterval(int(s), int(end), float(credited[s : end + 1].sum())))
        resume = end + 1
    return bouts


def day_outcome(bouts, excess_floor=0.5):
    """Return ``(y1, y2)`` from a list of bouts.

    ``y2`` is the mean bout MET-minutes minus 30, floored at ``excess_floor``
    so that ``y2 > 0`` exactly when ``y1 > 0``.
    """
    y1 = len(bouts)
    if y1 == 0:
        return 0, 0.0
    avg = sum(b.met_minutes for b in bouts) / y1
    return y1, max(excess_floor, avg - BASELINE_MET_MINUTES)


def detect_bouts(series, excess_floor=0.5, **scan_kws):
    """Run the bout scan on a MET-valued :class:`~usualmvpa.ingest.MinuteSeries`."""
    if series.intensity_kind != "met":
        raise ValueError("detect_bouts needs MET intensities; convert counts first")
    bouts = find_bouts(series.epochs, **scan_kws)
    y1, y2 = day_outcome(bouts, excess_floor)
    return DayObservation(
        series.person_id, series.day_index, series.weekend, y1, y2, tuple(bouts)
    )


class BoutDetector(TransformerMixin, BaseEstimator):
    """Map minute-level MET traces to per-day ``(y1, y2)`` pairs.

    Parameters
    ----------
    threshold : float, default=3.0
        Moderate-intensity MET cutoff.
    window : int, default=10
    max_inactive : int, default=2
    min_length : int, default=10
    excess_floor : float, default=0.5
        Lower bound for ``y2`` on days with at least one bout.
    count_inactive_minutes : bool, default=True

    Examples
    --------
    >>> X = np.full((1, 1440), 1.0); X[0, 100:110] = 4.0
    >>> BoutDetector().fit_transform(X)
    array([[ 1., 10.]])
    """

    def __init__(
        self,
        threshold=MODERATE_METS,
        window=10,
        max_inactive=2,
        min_length=10,
        excess_floor=0.5,
        count_inactive_minutes=True,
    ):
        self.threshold = threshold
        self.window = window
        self.max_inactive = max_inactive
        self.min_length = min_length
        self.excess_floor = excess_floor
        self.count_inactive_minutes = count_inactive_minutes

    def fit(self, X, y=None):
        check_array(X)
        if not 0 <= self.max_inactive < self.window <= self.min_length:
            raise ValueError("need 0 <= max_inactive < window <= min_length")
        self.n_features_in_ = np.shape(X)[1]
        return self

    def _scan_kws(self):
        return dict(
            threshold=self.threshold,
            window=self.window,
            max_inactive=self.max_inactive,
            min_length=self.min_length,
            count_inactive_minutes=self.count_inactive_minutes,
        )

    def find(self, mets):
        return find_bouts(mets, **self._scan_kws())

    def transform(self, X):
        X = check_array(X)
        out = np.empty((X.shape[0], 2))
        for i, row in enumerate(X):
            out[i] = day_outcome(self.find(row), self.excess_floor)
        return out

    def detect(self, series):
        return detect_bouts(series, excess_floor=self.excess_floor, **self._scan_kws())


@dataclass
class BoutSummary:
    zero_day_fraction: float
    zero_both_fraction: float
    y1_distribution: pd.Series
    y2_by_y1: pd.DataFrame


def summarize_bout_stats(days):
    """Zero-bout fractions, the y1 distribution, and y2 quartiles by y1."""
    days = list(days)
    if not days:
        raise ValueError("cannot summarize an empty set of days")
    frame = pd.DataFrame(
        {"person_id": [d.person_id for d in days], "y1": [d.y1 for d in days],
         "y2": [d.y2 for d in days]}
    )
    zero = frame["y1"] == 0
    by_person = zero.groupby(frame["person_id"]).all()
    y2_table = (
        frame[frame["y1"] > 0]
        .groupby("y1")["y2"]
        .describe(percentiles=[0.25, 0.5, 0.75])[["count", "25%", "50%", "75%"]]
        .rename(columns={"25%": "q25", "50%": "median", "75%": "q75"})
    )
    return BoutSummary(
        zero_day_fraction=float(zero.mean()),
        zero_both_fraction=float(by_person.mean()),
        y1_distribution=frame["y1"].value_counts().sort_index(),
        y2_by_y1=y2_table,
    )

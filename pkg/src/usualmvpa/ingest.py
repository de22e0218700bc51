"""Loading, validating and preprocessing minute-level data and covariates."""

import csv
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bouts import MODERATE_METS, DayObservation

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 1440
MINUTE_FIELDS = ("person_id", "day_index", "weekend", "minute", "value")
DAY_FIELDS = ("person_id", "day_index", "weekend", "y1", "y2")
BOUT_FIELDS = ("person_id", "day_index", "start", "end", "met_minutes")
COVARIATE_FIELDS = (
    "person_id", "gender", "age", "bmi", "black", "hispanic",
    "smoker", "college", "physical_job", "weight",
)
INDICATORS = ("gender", "black", "hispanic", "smoker", "college", "physical_job")
DEFAULT_COVARIATES = ("gender", "age", "bmi", "black", "hispanic", "smoker", "college", "physical_job")


class IngestError(ValueError):
    """Malformed input file; ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MinuteSeries:
    person_id: str
    day_index: int
    weekend: bool
    epochs: np.ndarray
    intensity_kind: str = "met"

    def __post_init__(self):
        epochs = np.asarray(self.epochs, dtype=float)
        if epochs.shape != (MINUTES_PER_DAY,):
            raise ValueError(f"expected {MINUTES_PER_DAY} epochs, got shape {epochs.shape}")
        if not np.all(np.isfinite(epochs)) or np.any(epochs < 0):
            raise ValueError("epochs must be finite and nonnegative")
        if self.intensity_kind not in ("met", "count"):
            raise ValueError(f"unknown intensity kind {self.intensity_kind!r}")
        object.__setattr__(self, "epochs", epochs)

    def __eq__(self, other):
        if not isinstance(other, MinuteSeries):
            return NotImplemented
        return (
            (self.person_id, self.day_index, self.weekend, self.intensity_kind)
            == (other.person_id, other.day_index, other.weekend, other.intensity_kind)
            and np.array_equal(self.epochs, other.epochs)
        )


@dataclass
class LoadReport:
    rejected: list = field(default_factory=list)
    incomplete_persons: list = field(default_factory=list)

    def rows(self):
        out = [dict(person_id=p, day_index=d, reason=r) for p, d, r in self.rejected]
        out += [dict(person_id=p, day_index="", reason="not_two_days")
                for p in self.incomplete_persons]
        return out


def _parse_bool(text, line):
    t = text.strip().lower()
    if t in ("1", "true", "t", "yes"):
        return True
    if t in ("0", "false", "f", "no"):
        return False
    raise IngestError(f"cannot read {text!r} as a boolean", line)


def load_minutes(path, kind="met", days_per_person=2):
    """Read a minutes CSV into validated :class:`MinuteSeries`.

    Returns
    -------
    series : list of MinuteSeries
        Ordered by first appearance of each person, then by day.
    report : LoadReport
        Person-days rejected for schema violations and persons without
        exactly ``days_per_person`` accepted days.
    """
    if kind not in ("met", "count"):
        raise ConfigError(f"unknown intensity kind {kind!r}")
    cells = {}
    weekend = {}
    order = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MINUTE_FIELDS:
            raise IngestError(f"header must be {','.join(MINUTE_FIELDS)}", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MINUTE_FIELDS):
                raise IngestError(f"expected {len(MINUTE_FIELDS)} fields, got {len(row)}", line)
            pid = row[0].strip()
            try:
                day = int(row[1])
                minute = int(row[3])
                value = float(row[4])
            except ValueError as exc:
                raise IngestError(str(exc), line) from None
            if not pid:
                raise IngestError("empty person_id", line)
            if not 1 <= minute <= MINUTES_PER_DAY:
                raise IngestError(f"minute {minute} outside 1..{MINUTES_PER_DAY}", line)
            if not np.isfinite(value) or value < 0:
                raise IngestError(f"value {row[4]!r} must be finite and nonnegative", line)
            key = (pid, day)
            if key not in cells:
                cells[key] = {}
                weekend[key] = _parse_bool(row[2], line)
                order.append(key)
            elif _parse_bool(row[2], line) != weekend[key]:
                raise IngestError(f"weekend flag changes within person {pid} day {day}", line)
            cells[key].setdefault(minute, []).append(value)

    report = LoadReport()
    person_rank = {}
    for pid, _ in order:
        person_rank.setdefault(pid, len(person_rank))
    series = []
    for key in sorted(order, key=lambda k: (person_rank[k[0]], k[1])):
        minutes = cells[key]
        if any(len(v) > 1 for v in minutes.values()):
            report.rejected.append((*key, "duplicate_minute"))
            continue
        if len(minutes) != MINUTES_PER_DAY:
            report.rejected.append((*key, f"epochs_{len(minutes)}"))
            continue
        epochs = np.array([minutes[m][0] for m in range(1, MINUTES_PER_DAY + 1)])
        series.append(MinuteSeries(key[0], key[1], weekend[key], epochs, kind))
    counts = pd.Series([s.person_id for s in series]).value_counts()
    report.incomplete_persons = sorted(counts.index[counts != days_per_person])
    if report.rejected or report.incomplete_persons:
        logger.info("%d person-days rejected, %d persons without %d days",
                    len(report.rejected), len(report.incomplete_persons), days_per_person)
    return series, report


def write_minutes(series, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MINUTE_FIELDS)
        for s in series:
            wk = int(s.weekend)
            for m, v in enumerate(s.epochs, start=1):
                w.writerow((s.person_id, s.day_index, wk, m, repr(float(v))))


def write_days(days, path):
    """Write day outcomes as ``person_id,day_index,weekend,y1,y2``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DAY_FIELDS)
        for d in days:
            w.writerow((d.person_id, d.day_index, int(d.weekend), d.y1, repr(float(d.y2))))


def write_bouts(days, path):
    """Write detected bout intervals (1-based inclusive minutes) of each day."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BOUT_FIELDS)
        for d in days:
            for b in d.bouts:
                w.writerow((d.person_id, d.day_index, b.start + 1, b.end + 1, repr(float(b.met_minutes))))


def load_days(path):
    """Read a day-outcome CSV written by :func:`write_days`."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DAY_FIELDS:
            raise IngestError(f"header must be {','.join(DAY_FIELDS)}", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DAY_FIELDS):
                raise IngestError(f"expected {len(DAY_FIELDS)} fields, got {len(row)}", line)
            try:
                out.append(DayObservation(row[0].strip(), int(row[1]), _parse_bool(row[2], line),
                                          int(row[3]), float(row[4])))
            except ValueError as exc:
                raise IngestError(str(exc), line) from None
    return out


@dataclass(frozen=True)
class CountConversion:
    """Affine count-to-MET rule ``mets = intercept + slope * counts``."""

    intercept: float
    slope: float


def counts_to_mets(series, conversion, threshold=2020.0, rest_met=1.0, floor=MODERATE_METS):
    """Convert an activity-count day to METs.

    Minutes below ``threshold`` counts/min become ``rest_met``; the rest go
    through ``conversion`` and are clamped below at ``floor`` so every
    threshold-exceeding minute stays bout-eligible.
    """
    if series.intensity_kind != "count":
        raise ValueError("series already holds METs")
    if conversion is None:
        raise ConfigError("count data need count-to-MET conversion coefficients")
    if threshold <= 0:
        raise ConfigError("count threshold must be positive")
    if rest_met >= floor:
        raise ConfigError("rest_met must be below the moderate cutoff")
    counts = series.epochs
    above = counts >= threshold
    mets = np.where(above, np.maximum(conversion.intercept + conversion.slope * counts, floor),
                    rest_met)
    return replace(series, epochs=mets, intensity_kind="met")


def remove_outliers(days, cap=2500.0):
    """Drop every day of any person whose bout MET-minutes exceed ``cap`` on some day.

    Returns the retained days and report rows (one per removed day).
    """
    if cap <= 0:
        raise ConfigError("outlier cap must be positive")
    days = list(days)
    flagged = {d.person_id for d in days if d.total_met_minutes > cap}
    kept = [d for d in days if d.person_id not in flagged]
    report = [
        dict(person_id=d.person_id, day_index=d.day_index,
             total_met_minutes=d.total_met_minutes, reason="over_cap")
        for d in days if d.person_id in flagged
    ]
    return kept, report


@dataclass(frozen=True)
class CovariateRecord:
    person_id: str
    gender: int
    age: float
    bmi: float
    black: int
    hispanic: int
    smoker: int
    college: int
    physical_job: int | None = None
    weight: float = 1.0

    def __post_init__(self):
        for name in INDICATORS:
            v = getattr(self, name)
            if v is None and name == "physical_job":
                continue
            if v not in (0, 1):
                raise ValueError(f"{self.person_id}: {name} must be 0 or 1, got {v!r}")
        if not (np.isfinite(self.age) and self.age > 0 and np.isfinite(self.bmi) and self.bmi > 0):
            raise ValueError(f"{self.person_id}: age and bmi must be finite and positive")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"{self.person_id}: weight must be nonnegative")


def load_covariates(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != COVARIATE_FIELDS:
            raise IngestError(f"header must be {','.join(COVARIATE_FIELDS)}", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COVARIATE_FIELDS):
                raise IngestError(f"expected {len(COVARIATE_FIELDS)} fields, got {len(row)}", line)
            rec = dict(zip(COVARIATE_FIELDS, (c.strip() for c in row)))
            try:
                records.append(CovariateRecord(
                    person_id=rec["person_id"],
                    gender=int(rec["gender"]),
                    age=float(rec["age"]),
                    bmi=float(rec["bmi"]),
                    black=int(rec["black"]),
                    hispanic=int(rec["hispanic"]),
                    smoker=int(rec["smoker"]),
                    college=int(rec["college"]),
                    physical_job=int(rec["physical_job"]) if rec["physical_job"] else None,
                    weight=float(rec["weight"]) if rec["weight"] else 1.0,
                ))
            except ValueError as exc:
                raise IngestError(str(exc), line) from None
    return records


def write_covariates(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COVARIATE_FIELDS)
        for r in records:
            w.writerow([
                r.person_id, r.gender, repr(float(r.age)), repr(float(r.bmi)), r.black,
                r.hispanic, r.smoker, r.college,
                "" if r.physical_job is None else r.physical_job, repr(float(r.weight)),
            ])


def covariate_frame(records):
    """Covariates as a DataFrame indexed by ``person_id`` (natural units)."""
    frame = pd.DataFrame([r.__dict__ for r in records])
    if frame.empty:
        return pd.DataFrame(columns=COVARIATE_FIELDS).set_index("person_id")
    return frame.set_index("person_id")


def fit_logistic_irls(X, y, max_iter=50, tol=1e-8):
    """Logistic regression by iteratively reweighted least squares.

    Returns ``(coef, converged)``.  ``converged`` is False on
    non-convergence or when fitted probabilities saturate, which is how
    (quasi-)separation shows up.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = X @ coef
        p = 1.0 / (1.0 + np.exp(-eta))
        w = np.clip(p * (1 - p), 1e-12, None)
        step = np.linalg.lstsq(X * np.sqrt(w)[:, None], (y - p) / np.sqrt(w), rcond=None)[0]
        coef = coef + step
        if np.max(np.abs(step)) < tol:
            eta = X @ coef
            return coef, bool(np.max(np.abs(eta)) < 30)
    return coef, False


@dataclass
class ImputationResult:
    coef: np.ndarray
    columns: tuple
    n_imputed: int
    fallback: bool


def impute_physical_job(records, max_iter=50, tol=1e-8):
    """Fill missing ``physical_job`` by thresholding a logistic fit at 0.5.

    The logistic model uses an intercept plus the remaining covariates, with
    age and BMI standardized.  Under separation the majority class is used.
    """
    records = list(records)
    missing = [r.physical_job is None for r in records]
    cols = ("gender", "age", "bmi", "black", "hispanic", "smoker", "college")
    if not any(missing):
        return records, ImputationResult(np.zeros(0), cols, 0, False)
    observed = [r for r, m in zip(records, missing) if not m]
    y = np.array([r.physical_job for r in observed], dtype=float)
    if y.size == 0 or y.min() == y.max():
        raise ValueError("physical_job needs at least one observed 0 and one observed 1")
    encoder = DesignEncoder(columns=cols, intercept=True).fit(observed)
    coef, ok = fit_logistic_irls(encoder.transform(observed), y, max_iter, tol)
    todo = [r for r, m in zip(records, missing) if m]
    if ok:
        fill = (encoder.transform(todo) @ coef >= 0.0).astype(int)
    else:
        majority = int(y.mean() >= 0.5)
        warnings.warn(f"logistic fit separated; imputing majority class {majority}")
        fill = np.full(len(todo), majority)
    filled = iter(fill)
    out = [replace(r, physical_job=int(next(filled))) if m else r for r, m in zip(records, missing)]
    return out, ImputationResult(coef, ("intercept",) + cols, len(todo), not ok)


class DesignEncoder(TransformerMixin, BaseEstimator):
    """Build model matrices from covariate records.

    Continuous columns are centered and scaled with statistics learned in
    :meth:`fit`, so a target population is encoded on the training scale.

    Parameters
    ----------
    columns : sequence of str
        Covariate names, in column order.
    intercept : bool, default=True
    standardize : sequence of str, default=("age", "bmi")
    """

    def __init__(self, columns=DEFAULT_COVARIATES, intercept=True, standardize=("age", "bmi")):
        self.columns = columns
        self.intercept = intercept
        self.standardize = standardize

    def _raw(self, records):
        frame = records if isinstance(records, pd.DataFrame) else covariate_frame(records)
        missing = [c for c in self.columns if c not in frame.columns]
        if missing:
            raise ValueError(f"covariates missing columns {missing}")
        raw = frame[list(self.columns)]
        if raw.isna().any().any():
            raise ValueError("covariates contain missing values; impute first")
        return raw.astype(float)

    def fit(self, records, y=None):
        raw = self._raw(records)
        self.center_ = pd.Series(0.0, index=raw.columns)
        self.scale_ = pd.Series(1.0, index=raw.columns)
        for c in self.standardize:
            if c in raw.columns:
                self.center_[c] = raw[c].mean()
                sd = raw[c].std(ddof=1)
                self.scale_[c] = sd if sd > 0 else 1.0
        self.feature_names_out_ = (("intercept",) if self.intercept else ()) + tuple(self.columns)
        return self

    def transform(self, records):
        check_is_fitted(self, "center_")
        raw = self._raw(records)
        Z = ((raw - self.center_) / self.scale_).to_numpy()
        if self.intercept:
            Z = np.column_stack([np.ones(len(Z)), Z])
        return Z

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "center_")
        return np.array(self.feature_names_out_, dtype=object)

    def natural_coefficients(self, coef):
        """Re-express coefficients fitted on the encoded scale in natural units."""
        check_is_fitted(self, "center_")
        coef = np.asarray(coef, dtype=float)
        offset = int(self.intercept)
        slopes = coef[..., offset:] / self.scale_.to_numpy()
        out = coef.copy()
        out[..., offset:] = slopes
        if self.intercept:
            out[..., 0] = coef[..., 0] - slopes @ self.center_.to_numpy()
        return out


@dataclass
class DesignMatrix:
    Z: np.ndarray
    person_ids: tuple
    columns: tuple
    encoder: DesignEncoder
    weights: np.ndarray

    @property
    def n(self):
        return self.Z.shape[0]

    @property
    def p(self):
        return self.Z.shape[1]


def build_design(records, columns=DEFAULT_COVARIATES, intercept=True,
                 standardize=("age", "bmi"), encoder=None):
    """Encode records into a :class:`DesignMatrix`, checking full column rank.

    Pass a fitted ``encoder`` to reuse another sample's standardization.
    """
    records = list(records)
    if encoder is None:
        encoder = DesignEncoder(columns, intercept, standardize).fit(records)
    Z = encoder.transform(records)
    if np.linalg.matrix_rank(Z) < Z.shape[1]:
        raise ValueError("design matrix is not of full column rank")
    return DesignMatrix(
        Z=Z,
        person_ids=tuple(r.person_id for r in records),
        columns=tuple(encoder.feature_names_out_),
        encoder=encoder,
        weights=np.array([r.weight for r in records], dtype=float),
    )

# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Reconstruct the daily series the model is fitted to from the raw public
health records: tests performed (u), cumulative diagnosed (y1), cumulative
removed (y2), new diagnoses (y3), ICU occupancy and cumulative deaths.
"""
from dataclasses import dataclass
import logging
import warnings

import numpy as np
import pandas as pd

from .common import (
    Calendar,
    DivisionDegenerate,
    MissingSeries,
    ParseError,
    SchemaError,
    date_labels,
)
from .schedule import Schedule

logger = logging.getLogger(__name__)

IMPUTED_COLUMNS = ("k", "date", "u", "y1", "y2", "y3", "icu", "deaths")

CUMULATIVE_COLUMNS = ("confirmed", "rec_hosp", "dead_hosp", "dead_ehpad")
ACTIVE_COLUMNS = ("hosp", "icu")
DAILY_COLUMNS = ("tests", "pos_tests", "sidep_tests", "sidep_pos_tests")

# Slack allowed when checking y2 <= y1 and u >= y3 on reloaded files
_ORDER_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class ImputedDataset:
    """
    The aligned daily series for data days k = 1..tau. Day k covers model
    time [k - 1, k).

    :param pandas.DataFrame frame: Columns k, date, u, y1, y2, y3, icu,
        deaths; icu is NaN where not available.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        missing = [c for c in IMPUTED_COLUMNS if c not in self.frame.columns]
        if missing:
            raise SchemaError(f"Imputed dataset lacks columns {missing}")
        if self.frame.empty:
            raise SchemaError("Imputed dataset has no rows")
        frame = self.frame.loc[:, list(IMPUTED_COLUMNS)].reset_index(drop=True)
        for column in ("u", "y1", "y2", "y3"):
            values = frame[column].to_numpy(dtype=float)
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                raise ParseError("Missing value", row=int(bad[0]) + 1, column=column)
        scale = _ORDER_TOLERANCE * max(1.0, float(frame["y1"].abs().max()))
        checks = (
            ("y2", frame["y2"] > frame["y1"] + scale),
            ("y3", frame["y3"] < -scale),
            ("u", frame["u"] < frame["y3"] - scale),
        )
        for column, violated in checks:
            if violated.any():
                row = int(np.flatnonzero(violated.to_numpy())[0]) + 1
                raise ParseError("Series ordering violated", row=row, column=column)
        object.__setattr__(self, "frame", frame)

    @classmethod
    def from_arrays(cls, u, y1, y2, y3, icu=None, deaths=None, calendar=None):
        """
        Build a dataset from per-day arrays starting on the calendar start.

        :rtype: ImputedDataset
        """
        calendar = Calendar() if calendar is None else calendar
        n_days = len(y1)
        nan = np.full(n_days, np.nan)
        frame = pd.DataFrame(
            {
                "k": np.arange(1, n_days + 1),
                "date": date_labels(range(n_days), calendar.start),
                "u": np.asarray(u, dtype=float),
                "y1": np.asarray(y1, dtype=float),
                "y2": np.asarray(y2, dtype=float),
                "y3": np.asarray(y3, dtype=float),
                "icu": nan if icu is None else np.asarray(icu, dtype=float),
                "deaths": nan if deaths is None else np.asarray(deaths, dtype=float),
            }
        )
        return cls(frame)

    def __len__(self):
        return len(self.frame)

    @property
    def tau(self):
        return len(self.frame)

    @property
    def dates(self):
        return list(self.frame["date"])

    @property
    def u_bar(self):
        return self.frame["u"].to_numpy(dtype=float)

    @property
    def y1_bar(self):
        return self.frame["y1"].to_numpy(dtype=float)

    @property
    def y2_bar(self):
        return self.frame["y2"].to_numpy(dtype=float)

    @property
    def y3_bar(self):
        return self.frame["y3"].to_numpy(dtype=float)

    @property
    def b_bar(self):
        return self.frame["icu"].to_numpy(dtype=float)

    @property
    def e_bar(self):
        return self.frame["deaths"].to_numpy(dtype=float)

    @property
    def total_tests(self):
        return float(np.sum(self.u_bar))


def align(raw, calendar=None):
    """
    Re-index the raw records onto the calendar's daily grid and fill gaps.

    Cumulative series are interpolated linearly inside gaps, are zero before
    their first record and hold their last value after it. Active series are
    forward filled inside gaps. Daily counts are interpolated inside gaps.

    :param RawDataset raw: The validated raw records.
    :param Calendar calendar: The data horizon.
    :rtype: pandas.DataFrame
    """
    calendar = Calendar() if calendar is None else calendar
    frame = raw.frame.reindex(calendar.dates())
    for column in CUMULATIVE_COLUMNS:
        series = frame[column].interpolate(method="linear", limit_area="inside")
        first = series.first_valid_index()
        if first is None:
            frame[column] = series
            continue
        series[series.index < first] = 0.0
        frame[column] = series.ffill()
    for column in ACTIVE_COLUMNS:
        series = frame[column]
        frame[column] = series.ffill().where(series.bfill().notna())
    for column in DAILY_COLUMNS:
        if column in frame.columns:
            frame[column] = frame[column].interpolate(
                method="linear", limit_area="inside"
            )
    n_filled = int(raw.frame.reindex(calendar.dates()).isna().sum().sum()
                   - frame.isna().sum().sum())
    if n_filled:
        logger.debug(f"Filled {n_filled} missing values while aligning raw data")
    return frame


def _deaths_total(frame, calendar):
    ehpad = frame["dead_ehpad"].fillna(0.0)
    ehpad[frame.index < pd.Timestamp(calendar.ehpad_start)] = 0.0
    return frame["dead_hosp"].fillna(0.0) + ehpad


def _confirmed(frame):
    y1 = frame["confirmed"]
    if y1.isna().all():
        raise MissingSeries("No confirmed case counts in the data horizon")
    return y1.to_numpy(dtype=float)


def impute_removed(raw, calendar=None):
    """
    Impute the cumulative removed series y2 including people who recovered
    at home, assuming they are removed at the same rate as hospital cases.

    :param RawDataset raw: The validated raw records.
    :param Calendar calendar: The data horizon.
    :returns: y2 for each data day.
    :rtype: numpy.ndarray
    """
    calendar = Calendar() if calendar is None else calendar
    frame = align(raw, calendar)
    y1 = _confirmed(frame)
    removed_hosp = (frame["rec_hosp"].fillna(0.0) + _deaths_total(frame, calendar)).to_numpy()
    hospital = frame["hosp"].to_numpy(dtype=float)
    tracked = removed_hosp + hospital

    y2 = removed_hosp.copy()
    available = np.isfinite(hospital)
    degenerate = available & (tracked == 0) & (y1 > 0)
    if np.any(degenerate):
        dates = date_labels(np.flatnonzero(degenerate), calendar.start)
        msg = f"Hospital totals are zero on {dates}; removed cases left unscaled"
        logger.warning(msg)
        warnings.warn(msg, DivisionDegenerate)
    scale = available & (tracked > 0)
    y2[scale] = removed_hosp[scale] * y1[scale] / tracked[scale]

    clamped = y2 > y1
    if np.any(clamped):
        logger.warning(f"Clamped removed cases to confirmed cases on {int(clamped.sum())} days")
        y2 = np.minimum(y2, y1)
    return y2


def _difference(y1):
    y3 = np.empty_like(y1)
    y3[:-1] = y1[1:] - y1[:-1]
    y3[-1] = y1[-1] - y1[-2] if len(y1) > 1 else 0.0
    return y3


def _testing_block(frame, columns, mask, name):
    values = []
    for column in columns:
        if column not in frame.columns:
            raise MissingSeries(f"No '{column}' column for the {name} testing interval")
        block = frame.loc[mask, column]
        if block.isna().any():
            missing = block.index[block.isna()][0].date().isoformat()
            raise MissingSeries(
                f"'{column}' is missing on {missing} in the {name} testing interval"
            )
        values.append(block.to_numpy(dtype=float))
    return values


def impute_tests(raw, y1_bar, calendar=None):
    """
    Impute tests performed u and new diagnoses y3 over three intervals:

    * before laboratory records, every test is assumed positive, so
      y3 is the daily increase of y1 and u = y3;
    * with laboratory records, u is the laboratory count and y3 the
      daily increase of y1;
    * with per-person records, both series are taken as recorded. Where
      both record kinds overlap the per-person series is used.

    :param RawDataset raw: The validated raw records.
    :param y1_bar: Cumulative diagnosed for every data day.
    :param Calendar calendar: The data horizon.
    :returns: (u, y3) arrays.
    :rtype: tuple
    :raises MissingSeries: If a testing block is absent in its interval.
    """
    calendar = Calendar() if calendar is None else calendar
    frame = align(raw, calendar)
    y1_bar = np.asarray(y1_bar, dtype=float)
    if len(y1_bar) != len(frame) or not np.all(np.isfinite(y1_bar)):
        raise MissingSeries("y1 must be populated on every data day")
    index = frame.index
    first = index < pd.Timestamp(calendar.lab_start)
    third = index >= pd.Timestamp(calendar.sidep_start)
    second = ~first & ~third

    y3 = _difference(y1_bar)
    u = y3.copy()
    if second.any():
        (u[second],) = _testing_block(frame, ("tests",), second, "laboratory")
    if third.any():
        per_person = ("sidep_tests", "sidep_pos_tests")
        if not all(c in frame.columns and frame[c].notna().any() for c in per_person):
            per_person = ("tests", "pos_tests")
        u[third], y3[third] = _testing_block(frame, per_person, third, "per-person")

    negative = y3 < 0
    if np.any(negative):
        logger.warning(f"Clamped negative new diagnoses on {int(negative.sum())} days")
        y3 = np.maximum(y3, 0.0)
    raised = u < y3
    if np.any(raised):
        logger.info(f"Raised tests to positives on {int(raised.sum())} days")
        u = np.maximum(u, y3)
    return u, y3


def impute(raw, calendar=None):
    """
    Run the full imputation pipeline.

    :param RawDataset raw: The validated raw records.
    :param Calendar calendar: The data horizon.
    :rtype: ImputedDataset
    """
    calendar = Calendar() if calendar is None else calendar
    frame = align(raw, calendar)
    y1 = _confirmed(frame)
    if not np.all(np.isfinite(y1)):
        raise MissingSeries("Confirmed case counts do not cover the data horizon")
    y2 = impute_removed(raw, calendar)
    u, y3 = impute_tests(raw, y1, calendar)
    icu = frame["icu"].to_numpy(dtype=float)
    icu[frame.index < pd.Timestamp(calendar.icu_start)] = np.nan
    deaths = _deaths_total(frame, calendar).to_numpy()
    dataset = ImputedDataset.from_arrays(u, y1, y2, y3, icu, deaths, calendar)
    logger.info(
        f"Imputed {dataset.tau} days: {y1[-1]:.0f} diagnosed, "
        f"{dataset.total_tests:.0f} tests"
    )
    return dataset


def build_signals(imputed):
    """
    Zero-order-hold step signals over [0, tau]: day k's value holds on
    [k - 1, k).

    :param ImputedDataset imputed: The imputed series.
    :returns: (u signal, dict of y1, y2, y3 signals).
    :rtype: tuple
    """
    outputs = {
        name: Schedule.from_daily(values)
        for name, values in (
            ("y1", imputed.y1_bar),
            ("y2", imputed.y2_bar),
            ("y3", imputed.y3_bar),
        )
    }
    return Schedule.from_daily(imputed.u_bar), outputs

# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Exceptions, calendar helpers and file utilities shared by the package.
"""
import datetime
import logging
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass

import pandas as pd

logger = logging.getLogger(__name__)

# Day t = 0 of the model time axis
EPOCH = datetime.date(2020, 1, 24)


class EpidemicTestingError(Exception):
    """
    Custom base exception for the epidemic_testing package
    """
    pass


class DataError(EpidemicTestingError):
    """
    Raised for unreadable, malformed or incomplete input data
    """
    pass


class ParseError(DataError):
    """
    A value in an input file could not be parsed or failed validation.
    """

    def __init__(self, msg, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            msg = f"{msg} ({', '.join(location)})"
        super().__init__(msg)
        self.row = row
        self.column = column


class SchemaError(DataError):
    """
    An input file is empty or lacks mandatory columns
    """
    pass


class MissingSeries(DataError):
    """
    A series required for an imputation interval is absent
    """
    pass


class SolverError(EpidemicTestingError):
    """
    Raised when a numerical computation cannot produce a valid result
    """
    pass


class ParameterError(SolverError):
    pass


class DegenerateDetection(SolverError):
    """
    Tests are applied (u > 0) to an empty testable population, so the
    detection term u * x_I / x_T is undefined.
    """
    pass


class NonFiniteState(SolverError):
    pass


class ThetaOne(SolverError):
    pass


class DegenerateData(SolverError):
    pass


class SimulationFailure(SolverError):
    pass


class RankDeficient(SolverError):
    pass


class HorizonExceeded(SolverError):
    pass


class AssumptionViolated(SolverError):
    """
    The testing analysis does not apply: either the parameters do not use
    the (1 - theta) N testable population, or the constant testing rate
    suppresses the epidemic at the origin (R_C <= 1).
    """
    pass


class IllDefinedPeak(SolverError):
    pass


class ExtinctionReached(SolverError):
    """
    The infected population reaches zero before the end of the requested
    infection-time range. The truncated tabulation is kept on the exception.
    """

    def __init__(self, msg, solution=None, xi_extinction=None):
        super().__init__(msg)
        self.solution = solution
        self.xi_extinction = xi_extinction


class BudgetOutlastsEpidemic(SolverError):
    pass


class NewtonDiverged(SolverError):
    pass


class DivisionDegenerate(UserWarning):
    """
    Warning: the hospital-based ratio used to impute removed cases is 0/0.
    """
    pass


class IllConditioned(UserWarning):
    """
    Warning: a least-squares system is numerically ill-conditioned.
    """
    pass


def to_date(value):
    """
    Convert an ISO-8601 string, datetime or date to a date.

    :param value: The date to convert.
    :returns: The converted date.
    :rtype: datetime.date
    :raises ParseError: If the value is not a valid date.
    """
    if isinstance(value, datetime.datetime):
        return value.date()
    if isinstance(value, datetime.date):
        return value
    try:
        return datetime.date.fromisoformat(str(value).strip())
    except ValueError as exc:
        raise ParseError(f"Invalid ISO-8601 date '{value}'") from exc


def day_index(value, epoch=EPOCH):
    """
    Convert a calendar date to model time in days since the epoch.

    :param value: ISO-8601 string or date.
    :param datetime.date epoch: The date of t = 0.
    :returns: Days since the epoch.
    :rtype: int
    """
    return (to_date(value) - to_date(epoch)).days


def date_of_day(day, epoch=EPOCH):
    """
    Convert model time in whole days back to a calendar date.

    :param int day: Days since the epoch.
    :param datetime.date epoch: The date of t = 0.
    :rtype: datetime.date
    """
    return to_date(epoch) + datetime.timedelta(days=int(round(day)))


def date_labels(days, epoch=EPOCH):
    """
    ISO-8601 labels for a sequence of whole-day model times.

    :param days: Sequence of model times.
    :rtype: list
    """
    start = pd.Timestamp(to_date(epoch))
    return [
        (start + pd.Timedelta(days=int(round(day)))).date().isoformat()
        for day in days
    ]


@contextmanager
def atomic_output(path, mode="w"):
    """
    Write to a temporary file beside `path` and move it into place only if
    the block completes, so failures leave no partial output.

    :param str path: The final output path.
    :param str mode: The file mode for the temporary file.
    """
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.exists(directory):
        os.makedirs(directory)
    fd, tmp_path = tempfile.mkstemp(
        prefix=".", suffix=".tmp", dir=directory
    )
    try:
        with os.fdopen(fd, mode, encoding="utf-8", newline="") as fh:
            yield fh
        os.replace(tmp_path, path)
        logger.debug(f"Wrote {path}")
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


@dataclass(frozen=True)
class Calendar:
    """
    The dates that structure the data horizon and the parameter schedules.

    :param start: Day t = 0, the first data day.
    :param end: The last data day.
    :param lockdown: Start of the lockdown (second infection rate).
    :param unlock: End of the lockdown (third infection rate, second
        testing specificity).
    :param lab_start: First day of the laboratory testing series.
    :param sidep_start: First day of the per-person testing series.
    :param ehpad_start: First day of care-home death records.
    :param icu_start: First day of the ICU occupancy series.
    """

    start: datetime.date = EPOCH
    end: datetime.date = datetime.date(2020, 7, 1)
    lockdown: datetime.date = datetime.date(2020, 3, 17)
    unlock: datetime.date = datetime.date(2020, 5, 11)
    lab_start: datetime.date = datetime.date(2020, 3, 10)
    sidep_start: datetime.date = datetime.date(2020, 5, 13)
    ehpad_start: datetime.date = datetime.date(2020, 4, 1)
    icu_start: datetime.date = datetime.date(2020, 3, 17)

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            object.__setattr__(self, name, to_date(getattr(self, name)))
        if self.end < self.start:
            raise ParseError(f"Calendar end {self.end} precedes start {self.start}")

    @property
    def horizon(self):
        """tau: the number of data days, start and end inclusive."""
        return (self.end - self.start).days + 1

    def day(self, value):
        """Model time of a date on this calendar."""
        return day_index(value, self.start)

    def dates(self):
        return pd.date_range(self.start, self.end, freq="D")

    @property
    def lockdown_day(self):
        return self.day(self.lockdown)

    @property
    def unlock_day(self):
        return self.day(self.unlock)

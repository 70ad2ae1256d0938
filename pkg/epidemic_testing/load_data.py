# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .common import ParseError, SchemaError
from .imputation import CUMULATIVE_COLUMNS, IMPUTED_COLUMNS, ImputedDataset

logger = logging.getLogger(__name__)

MANDATORY_COLUMNS = (
    "date",
    "confirmed",
    "hosp",
    "icu",
    "rec_hosp",
    "dead_hosp",
    "dead_ehpad",
    "tests",
    "pos_tests",
)
OPTIONAL_COLUMNS = ("sidep_tests", "sidep_pos_tests")

# Spreadsheet-style row numbers: the header is row 1
_FIRST_DATA_ROW = 2


@dataclass(frozen=True, eq=False)
class RawDataset:
    """
    Validated daily public-health records indexed by date. Absent values
    are NaN.

    Columns: confirmed (cumulative diagnosed), hosp (active hospitalised),
    icu (active in intensive care), rec_hosp (cumulative recovered from
    hospital), dead_hosp and dead_ehpad (cumulative deaths in hospital and in
    care homes), tests and pos_tests (daily laboratory tests and positives),
    and optionally sidep_tests and sidep_pos_tests (daily per-person tests and
    positives).
    """

    frame: pd.DataFrame

    def __len__(self):
        return len(self.frame)

    @property
    def dates(self):
        return self.frame.index

    def column(self, name):
        return self.frame[name].to_numpy(dtype=float)


def _read_table(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Data file does not exist: {path}")
    if not os.path.isfile(path):
        raise SchemaError(f"Data path is not a file: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"Data file is empty: {path}") from exc
    frame.columns = [str(column).strip() for column in frame.columns]
    return frame


def _parse_numeric(text, column):
    text = text.str.strip()
    present = text != ""
    values = pd.to_numeric(text.where(present), errors="coerce")
    bad = np.flatnonzero((values.isna() & present).to_numpy())
    if bad.size:
        row = int(bad[0]) + _FIRST_DATA_ROW
        raise ParseError(f"Malformed number '{text.iloc[bad[0]]}'", row=row, column=column)
    return values.astype(float)


def _day_index(values):
    bad = np.flatnonzero(~(np.isfinite(values) & (values == np.round(values))).to_numpy())
    if bad.size:
        row = int(bad[0]) + _FIRST_DATA_ROW
        raise ParseError(
            f"Day index must be an integer, got {values.iloc[bad[0]]}", row=row, column="k"
        )
    return values.astype(int)


def _parse_dates(text):
    dates = pd.to_datetime(text.str.strip(), format="%Y-%m-%d", errors="coerce")
    bad = np.flatnonzero(dates.isna().to_numpy())
    if bad.size:
        row = int(bad[0]) + _FIRST_DATA_ROW
        raise ParseError(f"Invalid date '{text.iloc[bad[0]]}'", row=row, column="date")
    steps = dates.diff().dt.days.to_numpy()[1:]
    bad = np.flatnonzero(steps != 1)
    if bad.size:
        row = int(bad[0]) + 1 + _FIRST_DATA_ROW
        raise ParseError("Dates must be consecutive days", row=row, column="date")
    return pd.DatetimeIndex(dates, name="date")


def load_raw(path):
    """
    Load the raw daily records from a CSV file.

    Mandatory columns may appear in any order and extra columns are ignored.
    Empty cells are absent values.

    :param str path: The CSV file.
    :returns: The validated records.
    :rtype: RawDataset
    :raises SchemaError: If the file is empty or mandatory columns are missing.
    :raises ParseError: If a value is malformed, negative or a cumulative
        series decreases.
    """
    logger.debug(f"Loading raw data from {path}")
    frame = _read_table(path)
    missing = [column for column in MANDATORY_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f"{path} lacks mandatory columns {missing}")
    if frame.empty:
        raise SchemaError(f"{path} has no data rows")

    index = _parse_dates(frame["date"])
    data = {}
    for column in MANDATORY_COLUMNS[1:] + OPTIONAL_COLUMNS:
        if column not in frame.columns:
            continue
        values = _parse_numeric(frame[column], column)
        negative = np.flatnonzero((values < 0).to_numpy())
        if negative.size:
            raise ParseError(
                "Negative value", row=int(negative[0]) + _FIRST_DATA_ROW, column=column
            )
        if column in CUMULATIVE_COLUMNS:
            present = values.dropna()
            decreasing = np.flatnonzero(present.diff().to_numpy() < 0)
            if decreasing.size:
                position = present.index[decreasing[0]]
                raise ParseError(
                    "Cumulative series decreases",
                    row=int(position) + _FIRST_DATA_ROW,
                    column=column,
                )
        data[column] = values.to_numpy()
    raw = RawDataset(pd.DataFrame(data, index=index))
    logger.info(f"Loaded {len(raw)} days of raw data from {path}")
    return raw


def read_header(path):
    """The column names of a CSV file."""
    return list(_read_table(path).columns)


def is_imputed_file(path):
    """True when `path` already holds an imputed dataset."""
    return set(IMPUTED_COLUMNS) <= set(read_header(path))


def load_imputed(path):
    """
    Load a dataset written by the imputation step.

    :param str path: The imputed CSV file.
    :rtype: ImputedDataset
    :raises SchemaError: If columns are missing.
    :raises ParseError: If values are malformed.
    """
    logger.debug(f"Loading imputed data from {path}")
    frame = _read_table(path)
    missing = [column for column in IMPUTED_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f"{path} lacks imputed columns {missing}")
    if frame.empty:
        raise SchemaError(f"{path} has no data rows")
    parsed = pd.DataFrame({"date": frame["date"].str.strip()})
    _parse_dates(parsed["date"])
    for column in IMPUTED_COLUMNS:
        if column != "date":
            parsed[column] = _parse_numeric(frame[column], column)
    parsed["k"] = _day_index(parsed["k"])
    return ImputedDataset(parsed)

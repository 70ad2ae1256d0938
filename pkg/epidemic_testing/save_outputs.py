# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Writers for the CSV and JSON artifacts. Every file is written through
:func:`atomic_output` so a failed command leaves no partial file behind.
"""
import json
import logging
import os

import numpy as np
import pandas as pd

from .common import EPOCH, ParameterError, atomic_output, date_labels
from .estimation import FitResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"


def _to_builtin(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialise {type(value).__name__}")


def save_json(record, path):
    """Write a dict as indented JSON with sorted keys."""
    with atomic_output(path) as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=_to_builtin)
        fh.write("\n")
    logger.info(f"Saved {path}")


def load_json(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"JSON file does not exist: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_frame(frame, path):
    """Write a table as CSV without the index."""
    with atomic_output(path) as fh:
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Saved {path} ({len(frame)} rows)")


def save_imputed(dataset, path):
    save_frame(dataset.frame, path)


def save_params(fit, path):
    save_json(fit.to_dict(), path)


def load_params(path):
    """
    Read a parameter file written by :func:`save_params`.

    :rtype: FitResult
    :raises ParameterError: If the record is incomplete.
    """
    record = load_json(path)
    if not isinstance(record, dict):
        raise ParameterError(f"{path} does not hold a parameter record")
    return FitResult.from_dict(record)


def save_trace(trace, path):
    frame = pd.DataFrame(
        {"iteration": np.arange(len(trace)), "best_cost": np.asarray(trace, dtype=float)}
    )
    save_frame(frame, path)


def trajectory_frame(traj, epoch=EPOCH):
    """A trajectory table with an ISO date column after t."""
    frame = traj.to_dataframe()
    frame.insert(1, "date", date_labels(traj.sample_times, epoch))
    return frame


def save_trajectory(traj, path, epoch=EPOCH):
    save_frame(trajectory_frame(traj, epoch), path)


def save_fit_curves(traj, dataset, path):
    """
    Data and model outputs side by side on the data days.

    :param Trajectory traj: The fitted model from t = 0.
    :param ImputedDataset dataset: The data fitted.
    """
    n = min(len(traj), dataset.tau)
    frame = pd.DataFrame(
        {
            "k": dataset.frame["k"].to_numpy()[:n],
            "date": dataset.frame["date"].to_numpy()[:n],
            "y1_data": dataset.y1_bar[:n],
            "y1_model": traj.y1[:n],
            "y2_data": dataset.y2_bar[:n],
            "y2_model": traj.y2[:n],
            "y3_data": dataset.y3_bar[:n],
            "y3_model": traj.y3[:n],
            "active_diagnosed_data": (dataset.y1_bar - dataset.y2_bar)[:n],
            "active_diagnosed_model": (traj.y1 - traj.y2)[:n],
        }
    )
    save_frame(frame, path)


def save_sweep(entries, path, epoch=EPOCH):
    frame = pd.DataFrame(entries, columns=["t_star", "c_star", "peak_xI"])
    frame.insert(1, "date", date_labels(frame["t_star"], epoch))
    save_frame(frame, path)


def save_outcomes(
    traj_actual, traj_policy, outcome, directory, epoch=EPOCH, parameter_set=None
):
    """
    Write icu.csv and deaths.csv comparing two scenarios, and
    predict_summary.json with the reductions. The model coefficients go to
    outcome_fit.json, written by the caller.

    :param Trajectory traj_actual: The baseline scenario.
    :param Trajectory traj_policy: The scenario compared with it.
    :param OutcomeFit outcome: Fitted outcome models.
    :param str directory: Output directory.
    :param str parameter_set: Label of the parameter set behind both
        trajectories.
    :returns: The summary record.
    :rtype: dict
    """
    icu_actual, deaths_actual = outcome.predict(traj_actual)
    icu_policy, deaths_policy = outcome.predict(traj_policy)
    n = min(len(traj_actual), len(traj_policy))
    days = traj_actual.sample_times[:n]
    common = {"t": days, "date": date_labels(days, epoch)}
    save_frame(
        pd.DataFrame({**common, "actual": icu_actual[:n], "policy": icu_policy[:n]}),
        os.path.join(directory, "icu.csv"),
    )
    save_frame(
        pd.DataFrame({**common, "actual": deaths_actual[:n], "policy": deaths_policy[:n]}),
        os.path.join(directory, "deaths.csv"),
    )
    summary = outcome.reductions(traj_actual, traj_policy)
    summary["parameter_set"] = parameter_set
    save_json(summary, os.path.join(directory, "predict_summary.json"))
    return summary

# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Delayed regressions from model states to ICU occupancy and cumulative
deaths. Regressors are per-capita (divided by the population) and delays
are whole days on the daily sample grid.
"""
from dataclasses import dataclass
import logging
import warnings

import numpy as np

from .common import IllConditioned, ParameterError, RankDeficient
from .model import derived_outputs

logger = logging.getLogger(__name__)

ICU_DELAY = 17
DEATH_DELAY = 25
DEATH_DEGREE = 10

# Warn when the squared condition number of the scaled design exceeds this
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class IcuModel:
    """B(t) = b1 a(t - delay) + b2 sqrt(a(t - delay)), a = A / N."""

    b1: float
    b2: float
    delay_days: int = ICU_DELAY


@dataclass(frozen=True)
class DeathModel:
    """E(t) = sum_i e_i i(t - delay)^i for i = 1..10, i = I / N."""

    e: tuple
    delay_days: int = DEATH_DELAY

    def __post_init__(self):
        object.__setattr__(self, "e", tuple(float(v) for v in self.e))
        if len(self.e) != DEATH_DEGREE:
            raise ParameterError(
                f"Death model needs {DEATH_DEGREE} coefficients, got {len(self.e)}"
            )


def _whole_days(delay):
    days = int(round(delay))
    if days < 0:
        raise ParameterError(f"Delay must be non-negative, got {delay}")
    return days


def _delayed_pairs(regressor, target, delay):
    """Pairs (regressor[j - delay], target[j]) where the target is known."""
    regressor = np.asarray(regressor, dtype=float)
    target = np.asarray(target, dtype=float)
    n = min(len(regressor) + delay, len(target))
    index = np.arange(delay, n)
    known = np.isfinite(target[index])
    index = index[known]
    return regressor[index - delay], target[index]


def _shift(values, delay):
    """values(t - delay), holding the earliest value before t = delay."""
    values = np.asarray(values, dtype=float)
    shifted = np.full_like(values, values[0])
    if delay >= len(values):
        return shifted
    shifted[delay:] = values[:len(values) - delay]
    return shifted


def _least_squares(design, target):
    scale = np.max(np.abs(design), axis=0)
    scale[scale == 0] = 1.0
    scaled = design / scale
    coefficients, _, rank, singular = np.linalg.lstsq(scaled, target, rcond=None)
    return coefficients / scale, rank, singular


def fit_icu(active, b_bar, delay=ICU_DELAY, population=1.0):
    """
    Least-squares fit of ICU occupancy on delayed per-capita active cases.

    :param active: Active cases A on the daily grid.
    :param b_bar: Observed ICU occupancy on the same grid, NaN if unknown.
    :param delay: Delay in days.
    :param float population: N.
    :rtype: IcuModel
    :raises RankDeficient: If the regressors are collinear.
    """
    delay = _whole_days(delay)
    a, target = _delayed_pairs(np.maximum(active, 0.0) / population, b_bar, delay)
    design = np.column_stack([a, np.sqrt(a)])
    if len(target) < 2:
        raise RankDeficient(f"Only {len(target)} ICU samples after the delay shift")
    coefficients, rank, _ = _least_squares(design, target)
    if rank < 2:
        raise RankDeficient("ICU regressors are collinear (constant active cases)")
    model = IcuModel(float(coefficients[0]), float(coefficients[1]), delay)
    logger.info(f"Fitted ICU model b1={model.b1:.4g}, b2={model.b2:.4g}")
    return model


def predict_icu(model, traj):
    """
    ICU occupancy along a trajectory.

    :param IcuModel model: Fitted model.
    :param Trajectory traj: Simulated path.
    :rtype: numpy.ndarray
    """
    active, _ = derived_outputs(traj)
    a = _shift(active / traj.population, _whole_days(model.delay_days))
    return model.b1 * a + model.b2 * np.sqrt(a)


def fit_deaths(infected, e_bar, delay=DEATH_DELAY, population=1.0):
    """
    Least-squares fit of cumulative deaths on powers 1..10 of delayed
    per-capita cumulative infections. Columns are equilibrated before an
    SVD solve.

    :param infected: Cumulative infections I on the daily grid.
    :param e_bar: Observed cumulative deaths, NaN if unknown.
    :param delay: Delay in days.
    :param float population: N.
    :rtype: DeathModel
    """
    delay = _whole_days(delay)
    i, target = _delayed_pairs(np.maximum(infected, 0.0) / population, e_bar, delay)
    if len(target) == 0:
        raise RankDeficient("No death samples after the delay shift")
    design = np.column_stack([i ** power for power in range(1, DEATH_DEGREE + 1)])
    coefficients, rank, singular = _least_squares(design, target)
    if rank and singular[0] > 0:
        condition = singular[0] / singular[rank - 1]
        if rank < DEATH_DEGREE or condition ** 2 > CONDITION_LIMIT:
            msg = (
                f"Death regression is ill-conditioned "
                f"(rank {rank}, condition number {condition:.3g})"
            )
            logger.warning(msg)
            warnings.warn(msg, IllConditioned)
    model = DeathModel(tuple(coefficients), delay)
    logger.info(f"Fitted death model e={list(model.e)}")
    return model


def predict_deaths(model, traj):
    """
    Cumulative deaths along a trajectory, clamped below at zero.

    :param DeathModel model: Fitted model.
    :param Trajectory traj: Simulated path.
    :rtype: numpy.ndarray
    """
    _, infected = derived_outputs(traj)
    i = _shift(infected / traj.population, _whole_days(model.delay_days))
    deaths = sum(e * i ** power for power, e in enumerate(model.e, start=1))
    return np.maximum(deaths, 0.0)


@dataclass(frozen=True)
class OutcomeFit:
    """The ICU and death models fitted on one trajectory."""

    icu: IcuModel
    deaths: DeathModel
    normalization: str = "per-capita"

    @classmethod
    def fit(cls, traj, dataset, icu_delay=ICU_DELAY, death_delay=DEATH_DELAY):
        """
        Fit both models to a dataset using the states of `traj`, whose
        samples are aligned with the data days.

        :param Trajectory traj: Model trajectory on the data horizon.
        :param ImputedDataset dataset: Observed ICU and deaths.
        :rtype: OutcomeFit
        """
        active, infected = derived_outputs(traj)
        n = min(len(traj), dataset.tau)
        icu = fit_icu(active[:n], dataset.b_bar[:n], icu_delay, traj.population)
        deaths = fit_deaths(infected[:n], dataset.e_bar[:n], death_delay, traj.population)
        return cls(icu, deaths)

    def predict(self, traj):
        """(ICU, deaths) arrays along `traj`."""
        return predict_icu(self.icu, traj), predict_deaths(self.deaths, traj)

    def reductions(self, actual, policy):
        """
        Percentage reductions of the ICU peak and of final deaths from the
        `actual` trajectory to the `policy` trajectory.

        :rtype: dict
        """
        icu_actual, deaths_actual = self.predict(actual)
        icu_policy, deaths_policy = self.predict(policy)
        summary = {
            "icu_peak_actual": float(np.max(icu_actual)),
            "icu_peak_policy": float(np.max(icu_policy)),
            "deaths_final_actual": float(deaths_actual[-1]),
            "deaths_final_policy": float(deaths_policy[-1]),
        }
        summary["icu_peak_reduction_pct"] = _percent_drop(
            summary["icu_peak_actual"], summary["icu_peak_policy"]
        )
        summary["deaths_reduction_pct"] = _percent_drop(
            summary["deaths_final_actual"], summary["deaths_final_policy"]
        )
        return summary

    def to_dict(self):
        return {
            "icu": {"b1": self.icu.b1, "b2": self.icu.b2, "delay": self.icu.delay_days},
            "deaths": {"e": list(self.deaths.e), "delay": self.deaths.delay_days},
            "normalization": self.normalization,
        }


def _percent_drop(before, after):
    if before == 0:
        return 0.0
    return 100.0 * (before - after) / before

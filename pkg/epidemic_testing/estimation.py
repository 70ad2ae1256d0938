# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Parameter estimation: the removal rate by closed-form least squares, then
the infection rates, testing specificities and recovery rate by particle
swarm optimisation of the simulated output error.
"""
from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from .common import Calendar, DegenerateData, ParameterError
from .imputation import ImputedDataset, build_signals
from .model import (
    DEFAULT_POPULATION,
    DEFAULT_STEP,
    ModelParams,
    State,
    TestSupply,
    integrate,
    integrate_batch,
)
from .pso import PsoConfig, run_pso
from .schedule import Schedule

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = 10.0

SEARCH_BOX = {
    "beta": (0.001, 1.5),
    "theta": (0.0, 0.99999),
    "gamma": (0.01, 1.0),
    "kappa": (1.0, 100.0),
}

PARAMETER_NAMES = ("beta1", "beta2", "beta3", "theta1", "theta2", "gamma")


@dataclass(frozen=True)
class ParameterVector:
    """
    The estimated parameters: three infection rates (before, during and
    after lockdown), two testing specificities (before and after unlock),
    the recovery rate and optionally the initial-infected multiplier.
    """

    beta1: float
    beta2: float
    beta3: float
    theta1: float
    theta2: float
    gamma: float
    kappa: Optional[float] = None

    @classmethod
    def from_array(cls, values):
        values = [float(v) for v in values]
        return cls(*values[:6], kappa=values[6] if len(values) > 6 else None)

    def as_array(self, with_kappa=None):
        values = [getattr(self, name) for name in PARAMETER_NAMES]
        if with_kappa or (with_kappa is None and self.kappa is not None):
            values.append(DEFAULT_KAPPA if self.kappa is None else self.kappa)
        return np.array(values)

    def check_box(self, rho=0.0):
        """
        :raises ParameterError: If an entry lies outside the search box.
        """
        lower, upper = search_box(rho, self.kappa is not None)
        values = self.as_array()
        outside = (values < lower) | (values > upper)
        if np.any(outside):
            names = [n for n, o in zip(PARAMETER_NAMES + ("kappa",), outside) if o]
            raise ParameterError(f"Parameters outside the search box: {names}")
        return self

    def to_params(
        self,
        rho,
        calendar=None,
        population=DEFAULT_POPULATION,
        testable_approximation=False,
    ):
        """
        Expand into model parameters with the calendar's switch dates.

        :rtype: ModelParams
        """
        calendar = Calendar() if calendar is None else calendar
        return build_params(
            self.as_array(with_kappa=False),
            rho,
            calendar,
            population,
            testable_approximation,
        )


def search_box(rho=0.0, with_kappa=False):
    """
    Lower and upper corners of the estimation box. The recovery rate is
    bounded below by rho so that every candidate keeps rho <= gamma.
    """
    beta, theta, gamma, kappa = (
        SEARCH_BOX[name] for name in ("beta", "theta", "gamma", "kappa")
    )
    lower = [beta[0]] * 3 + [theta[0]] * 2 + [max(gamma[0], rho)]
    upper = [beta[1]] * 3 + [theta[1]] * 2 + [gamma[1]]
    if with_kappa:
        lower.append(kappa[0])
        upper.append(kappa[1])
    return np.array(lower), np.array(upper)


def build_params(values, rho, calendar, population, testable_approximation):
    """
    Model parameters from an array whose leading axis holds beta1, beta2,
    beta3, theta1, theta2 and gamma; trailing batch axes are kept.
    """
    values = np.asarray(values, dtype=float)
    beta = Schedule(
        (0.0, calendar.lockdown_day, calendar.unlock_day),
        (values[0], values[1], values[2]),
    )
    theta = Schedule((0.0, calendar.unlock_day), (values[3], values[4]))
    return ModelParams(beta, theta, values[5], rho, population, testable_approximation)


def initial_state_from_dataset(dataset, population=DEFAULT_POPULATION, kappa=DEFAULT_KAPPA):
    """
    Initial state at t = 0: diagnosed and removed from the first data day,
    x_I = kappa * y1(1), no unidentified recovered, the rest susceptible.
    `kappa` may be an array, giving one state per entry as an (m, 5) array.

    :param ImputedDataset dataset: The imputed series.
    :param float population: N.
    :param kappa: Initial-infected multiplier.
    :returns: A State, or an array of states for array `kappa`.
    """
    y1 = dataset.y1_bar[0]
    y2 = dataset.y2_bar[0]
    kappa = np.asarray(kappa, dtype=float)
    x_i = kappa * y1
    x_d = y1 - y2
    x_s = population - x_i - x_d - y2
    if np.any(x_s < 0):
        raise ParameterError("Initial infected exceed the population")
    if kappa.ndim == 0:
        return State(float(x_s), float(x_i), float(x_d), 0.0, float(y2), t=0.0)
    zeros = np.zeros_like(x_i)
    return np.stack([x_s, x_i, np.full_like(x_i, x_d), zeros, np.full_like(x_i, y2)], axis=-1)


def estimate_rho(y1_bar, y2_bar):
    """
    Least-squares removal rate from Delta y2(k) = rho (y1(k) - y2(k)),
    clamped to [0, 1].

    :param y1_bar: Cumulative diagnosed.
    :param y2_bar: Cumulative removed.
    :rtype: float
    :raises DegenerateData: If y1 - y2 is identically zero.
    """
    y1_bar = np.asarray(y1_bar, dtype=float)
    y2_bar = np.asarray(y2_bar, dtype=float)
    if len(y1_bar) != len(y2_bar) or len(y1_bar) < 2:
        raise ParameterError("estimate_rho needs two series of equal length >= 2")
    increments = np.diff(y2_bar)
    active = (y1_bar - y2_bar)[:-1]
    denominator = float(np.dot(active, active))
    if denominator == 0:
        raise DegenerateData("No active diagnosed cases to estimate rho from")
    rho = float(np.clip(np.dot(increments, active) / denominator, 0.0, 1.0))
    logger.info(f"Estimated rho = {rho:.4f}")
    return rho


@dataclass(frozen=True)
class FitSettings:
    """Fixed inputs of the output-error cost."""

    calendar: Calendar = field(default_factory=Calendar)
    population: float = DEFAULT_POPULATION
    testable_approximation: bool = False
    kappa: float = DEFAULT_KAPPA
    step: float = DEFAULT_STEP


def batch_costs(positions, dataset, rho, settings=None):
    """
    Output-error costs for a batch of parameter vectors simulated together.

    :param numpy.ndarray positions: Shape (m, 6), or (m, 7) with kappa.
    :param ImputedDataset dataset: The data to fit.
    :param float rho: Removal rate.
    :param FitSettings settings: Calendar, population and model switches.
    :returns: One cost per row; failed simulations cost +inf.
    :rtype: numpy.ndarray
    """
    settings = FitSettings() if settings is None else settings
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    params = build_params(
        positions[:, :6].T,
        rho,
        settings.calendar,
        settings.population,
        settings.testable_approximation,
    )
    kappa = positions[:, 6] if positions.shape[1] > 6 else settings.kappa
    x0 = initial_state_from_dataset(dataset, settings.population, kappa)
    if isinstance(x0, State):
        x0 = x0.as_array()
    u_signal, _ = build_signals(dataset)
    result = integrate_batch(
        x0, 0.0, params, TestSupply(u_signal), dataset.tau - 1, settings.step
    )
    y1 = result.x[..., 2] + result.x[..., 4]
    y2 = result.x[..., 4]
    residual = (
        (y1 - dataset.y1_bar[:, None]) ** 2
        + (y2 - dataset.y2_bar[:, None]) ** 2
        + (result.y3 - dataset.y3_bar[:, None]) ** 2
    )
    costs = residual.sum(axis=0)
    return np.where(np.isfinite(costs), costs, np.inf)


def fit_cost(p, dataset, rho, settings=None):
    """
    Sum over data days of the squared errors of y1, y2 and y3.

    :param ParameterVector p: Candidate parameters.
    :param ImputedDataset dataset: The data to fit.
    :param float rho: Removal rate.
    :param FitSettings settings: Calendar, population and model switches.
    :rtype: float
    """
    return float(batch_costs(p.as_array()[None, :], dataset, rho, settings)[0])


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    An estimated parameter set.

    :param ParameterVector parameters: The best parameters found.
    :param float rho: The removal rate.
    :param float cost: The cost of `parameters`.
    :param numpy.ndarray trace: Social best cost after each PSO iteration.
    :param FitSettings settings: The fixed inputs of the fit.
    :param PsoConfig config: The swarm settings, when fitted by PSO.
    """

    parameters: ParameterVector
    rho: float
    cost: float
    trace: np.ndarray
    settings: FitSettings
    config: Optional[PsoConfig] = None

    @property
    def kappa(self):
        if self.parameters.kappa is not None:
            return self.parameters.kappa
        return self.settings.kappa

    def model_params(self):
        return self.parameters.to_params(
            self.rho,
            self.settings.calendar,
            self.settings.population,
            self.settings.testable_approximation,
        )

    def to_dict(self):
        """JSON-ready record of the estimates."""
        calendar = self.settings.calendar
        record = {name: getattr(self.parameters, name) for name in PARAMETER_NAMES}
        record.update(
            {
                "kappa": self.kappa,
                "kappa_estimated": self.parameters.kappa is not None,
                "rho": self.rho,
                "cost": self.cost,
                "population": self.settings.population,
                "testable_approximation": self.settings.testable_approximation,
                "step": self.settings.step,
                "calendar": {
                    name: getattr(calendar, name).isoformat()
                    for name in calendar.__dataclass_fields__
                },
            }
        )
        if self.config is not None:
            record["pso"] = {
                "swarm_size": self.config.swarm_size,
                "max_iterations": self.config.max_iterations,
                "inertia": self.config.inertia,
                "c1": self.config.c1,
                "c2": self.config.c2,
                "seed": self.config.seed,
            }
        return record

    @classmethod
    def from_dict(cls, record):
        """
        Rebuild a result from :meth:`to_dict` output.

        :raises ParameterError: If a field is missing.
        """
        try:
            kappa = record["kappa"] if record.get("kappa_estimated") else None
            parameters = ParameterVector(
                *(float(record[name]) for name in PARAMETER_NAMES), kappa=kappa
            )
            settings = FitSettings(
                calendar=Calendar(**record.get("calendar", {})),
                population=float(record["population"]),
                testable_approximation=bool(record["testable_approximation"]),
                kappa=float(record["kappa"]),
                step=float(record.get("step", DEFAULT_STEP)),
            )
            return cls(
                parameters,
                float(record["rho"]),
                float(record.get("cost", np.nan)),
                np.array([]),
                settings,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParameterError(f"Invalid parameter record: {exc}") from exc


def fit_model(dataset, config=None, settings=None, fit_kappa=False):
    """
    Estimate rho, then fit the remaining parameters by PSO.

    :param ImputedDataset dataset: The data to fit.
    :param PsoConfig config: Swarm settings; the box is set here.
    :param FitSettings settings: Calendar, population and model switches.
    :param bool fit_kappa: Also estimate the initial-infected multiplier.
    :rtype: FitResult
    """
    config = PsoConfig() if config is None else config
    settings = FitSettings() if settings is None else settings
    rho = estimate_rho(dataset.y1_bar, dataset.y2_bar)
    if rho <= 0:
        raise DegenerateData("Estimated rho is zero; the removed series is flat")
    lower, upper = search_box(rho, fit_kappa)
    config = config.with_box(lower, upper)

    def objective(positions):
        return batch_costs(positions, dataset, rho, settings)

    state, trace = run_pso(objective, config)
    parameters = ParameterVector.from_array(state.social_position)
    logger.info(f"Fitted parameters {parameters} with cost {state.social_cost:.6g}")
    return FitResult(parameters, rho, state.social_cost, trace, settings, config)


def simulate_dataset(params, initial, supply, tau, calendar=None):
    """
    Daily model outputs written as an imputed dataset, sample t = k - 1
    giving data day k.

    :param ModelParams params: Model parameters.
    :param State initial: State at t = 0.
    :param TestSupply supply: Testing capacity.
    :param int tau: Number of data days.
    :rtype: ImputedDataset
    """
    traj = integrate(initial, params, supply, tau - 1)
    return ImputedDataset.from_arrays(
        traj.u_applied, traj.y1, traj.y2, traj.y3, calendar=calendar
    )

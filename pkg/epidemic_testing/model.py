# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
The testing-controlled SIDUR compartment model: susceptible (S),
undiagnosed infected (I), diagnosed infected (D), unidentified recovered (U)
and identified removed (R).

States are handled internally as arrays whose last axis holds the five
compartments in that order, so that one integration can advance a single
state or a whole batch of parameter sets.
"""
from collections import namedtuple
from dataclasses import dataclass
import logging
import math
from typing import Optional

import numpy as np
import pandas as pd

from .common import (
    DegenerateDetection,
    NonFiniteState,
    ParameterError,
    ThetaOne,
)
from .schedule import Schedule

logger = logging.getLogger(__name__)

DEFAULT_POPULATION = 66_990_000.0
DEFAULT_STEP = 0.05

COMPARTMENTS = ("x_s", "x_i", "x_d", "x_u", "x_r")
S, I, D, U, R = range(5)

# Relative tolerance on the conserved total population
CONSERVATION_RTOL = 1e-6

BatchResult = namedtuple("BatchResult", ["t", "x", "u", "y3"])


def _as_value(value):
    return np.asarray(value, dtype=float) if np.ndim(value) else float(value)


@dataclass(frozen=True)
class ModelParams:
    """
    SIDUR parameters.

    :param Schedule beta: Infection rate (1/day), piecewise constant.
    :param Schedule theta: Testing specificity in [0, 1], piecewise constant.
    :param float gamma: Recovery rate of undiagnosed infected (1/day); an
        array of shape (m,) when the parameters are batched.
    :param float rho: Removal rate of diagnosed infected (1/day).
    :param float population: Total population N.
    :param bool testable_approximation: Use x_T = (1 - theta) N instead of
        the full testable population.
    """

    beta: Schedule
    theta: Schedule
    gamma: float
    rho: float
    population: float = DEFAULT_POPULATION
    testable_approximation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "gamma", _as_value(self.gamma))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "population", float(self.population))
        if not self.population > 0:
            raise ParameterError(f"Population must be positive, got {self.population}")
        if not self.beta.min_value() > 0:
            raise ParameterError("All infection rates beta must be positive")
        if self.theta.min_value() < 0 or self.theta.max_value() > 1:
            raise ParameterError("Testing specificity theta must lie in [0, 1]")
        if not self.rho > 0:
            raise ParameterError(f"Removal rate rho must be positive, got {self.rho}")
        if not np.all(self.gamma >= self.rho):
            raise ParameterError(
                f"Recovery rate gamma must be at least rho ({self.rho})"
            )

    @property
    def batch_shape(self):
        shapes = [self.beta.batch_shape, self.theta.batch_shape, np.shape(self.gamma)]
        return max(shapes, key=len)

    def frozen_at(self, t):
        """Copy with beta and theta held at their values at time `t`."""
        return ModelParams(
            self.beta.frozen_at(t),
            self.theta.frozen_at(t),
            self.gamma,
            self.rho,
            self.population,
            self.testable_approximation,
        )

    def with_schedules(self, beta=None, theta=None):
        return ModelParams(
            self.beta if beta is None else beta,
            self.theta if theta is None else theta,
            self.gamma,
            self.rho,
            self.population,
            self.testable_approximation,
        )


@dataclass(frozen=True)
class State:
    """
    The five compartment populations at time `t` (days since the epoch).
    """

    x_s: float
    x_i: float
    x_d: float
    x_u: float
    x_r: float
    t: float = 0.0

    @classmethod
    def from_array(cls, values, t=0.0):
        values = np.asarray(values, dtype=float)
        return cls(*(float(v) for v in values), t=float(t))

    def as_array(self):
        return np.array([self.x_s, self.x_i, self.x_d, self.x_u, self.x_r])

    @property
    def total(self):
        return self.x_s + self.x_i + self.x_d + self.x_u + self.x_r

    def validate(self, population=None):
        """
        Check the compartments are non-negative and sum to the population.

        :param float population: N; defaults to the state's own total.
        :raises ParameterError: If an invariant fails.
        """
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise NonFiniteState(f"Non-finite compartment in {self}")
        if np.any(values < 0):
            raise ParameterError(f"Negative compartment in {self}")
        if population is not None:
            if abs(self.total - population) > CONSERVATION_RTOL * population:
                raise ParameterError(
                    f"Compartments sum to {self.total}, expected {population}"
                )
        return self


@dataclass(frozen=True)
class TestSupply:
    """
    Daily testing capacity c(t) with an optional finite stockpile r_max.

    :param Schedule capacity: Tests per day.
    :param stockpile: Total tests available, None for unlimited.
    :param float consumed: Tests used so far.
    """

    __test__ = False

    capacity: Schedule
    stockpile: Optional[float] = None
    consumed: float = 0.0

    def __post_init__(self):
        if self.capacity.min_value() < 0:
            raise ParameterError("Testing capacity must be non-negative")
        if self.stockpile is not None:
            stockpile = _as_value(self.stockpile)
            if np.any(stockpile < 0):
                raise ParameterError("Stockpile must be non-negative")
            if np.any(self.consumed > stockpile * (1 + 1e-12)):
                raise ParameterError("Consumed tests exceed the stockpile")
            object.__setattr__(self, "stockpile", stockpile)

    @classmethod
    def constant(cls, rate, stockpile=None, start=0.0):
        return cls(Schedule.constant(rate, start=start), stockpile)

    @property
    def remaining(self):
        """r(t): tests left in the stockpile, infinite when unlimited."""
        if self.stockpile is None:
            return math.inf
        return np.maximum(self.stockpile - self.consumed, 0.0)


def _testable(x, theta, population, approximate):
    if approximate:
        return (1.0 - theta) * population * np.ones_like(x[..., I])
    return theta * x[..., I] + (1.0 - theta) * (population - x[..., D] - x[..., R])


def _reproduction(x, beta, theta, gamma, population, u, approximate):
    x_t = _testable(x, theta, population, approximate)
    with np.errstate(divide="ignore", invalid="ignore"):
        detection = np.where(u > 0, u / x_t, 0.0)
        detection = np.where((u > 0) & (x_t <= 0), np.nan, detection)
    return beta / (detection + gamma) * x[..., S] / population


def _derivative(x, beta, theta, gamma, rho, population, u, approximate, cap=True):
    x_t = _testable(x, theta, population, approximate)
    if cap:
        u = np.minimum(u, np.maximum(x_t, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        detection = np.where(u > 0, u * x[..., I] / x_t, 0.0)
    infection = beta * x[..., S] * x[..., I] / population
    recovery = gamma * x[..., I]
    removal = rho * x[..., D]
    return np.stack(
        [
            -infection,
            infection - detection - recovery,
            detection - removal,
            recovery,
            removal,
        ],
        axis=-1,
    )


def testable_population(state, theta, population=None, approximate=False):
    """
    The testable population x_T = theta x_I + (1 - theta)(N - x_D - x_R),
    or (1 - theta) N when `approximate` is set.

    :param State state: The current state.
    :param float theta: Testing specificity.
    :param float population: N; defaults to the state's total.
    :param bool approximate: Use the (1 - theta) N approximation.
    :rtype: float
    """
    population = state.total if population is None else population
    return float(_testable(state.as_array(), theta, population, approximate))


def testing_rate(supply, state, params, t=None):
    """
    Tests performed per day, u = min(c(t), r(t), x_T(t)).

    :param TestSupply supply: Capacity and stockpile.
    :param State state: The current state.
    :param ModelParams params: Model parameters (for theta and N).
    :param float t: Evaluation time; defaults to the state's time.
    :rtype: float
    """
    t = state.t if t is None else t
    x_t = testable_population(
        state,
        params.theta.value_at(t),
        params.population,
        params.testable_approximation,
    )
    rate = min(supply.capacity.value_at(t), supply.remaining, x_t)
    return max(float(rate), 0.0)


def rhs(state, params, u, t=None):
    """
    Time derivatives of (x_S, x_I, x_D, x_U, x_R) for a given testing rate.

    :param State state: The current state.
    :param ModelParams params: Model parameters.
    :param float u: Tests per day.
    :param float t: Time for the beta and theta schedules; defaults to the
        state's time.
    :returns: The five derivatives.
    :rtype: numpy.ndarray
    :raises DegenerateDetection: If u > 0 with no testable population.
    """
    t = state.t if t is None else t
    theta = params.theta.value_at(t)
    x = state.as_array()
    if u > 0 and _testable(x, theta, params.population, params.testable_approximation) <= 0:
        raise DegenerateDetection(
            f"Testing rate {u} applied to an empty testable population at t={t}"
        )
    return _derivative(
        x,
        params.beta.value_at(t),
        theta,
        params.gamma,
        params.rho,
        params.population,
        u,
        params.testable_approximation,
        cap=False,
    )


def _steps_per_day(step):
    steps = int(round(1.0 / step))
    if steps < 1 or abs(steps * step - 1.0) > 1e-9:
        raise ParameterError(f"Step {step} must divide one day into whole steps")
    return steps


def integrate_batch(x0, t0, params, supply, n_days, step=DEFAULT_STEP, strict=False):
    """
    Advance one or many SIDUR states with classical fourth-order Runge-Kutta.

    The testing rate is fixed at the start of each day to min(c, r, x_T) and
    held for that day, capped by the current testable population within the
    day. Stockpile use accrues per step. Parameter and capacity schedules may
    carry batched values, broadcasting against `x0` of shape (m, 5).

    :param numpy.ndarray x0: Initial compartments, shape (5,) or (m, 5).
    :param float t0: Initial time in days.
    :param ModelParams params: Model parameters, possibly batched.
    :param TestSupply supply: Testing capacity and stockpile.
    :param int n_days: Number of days to integrate.
    :param float step: RK4 step in days.
    :param bool strict: Raise NonFiniteState on failure rather than leaving
        NaNs in the failed batch members.
    :returns: Daily samples of time, states, applied rate and new diagnoses.
    :rtype: BatchResult
    """
    steps = _steps_per_day(step)
    population = params.population
    approximate = params.testable_approximation
    batch = np.broadcast_shapes(
        np.shape(x0)[:-1],
        params.batch_shape,
        supply.capacity.batch_shape,
        np.shape(supply.remaining) if supply.stockpile is not None else (),
    )
    x = np.broadcast_to(np.asarray(x0, dtype=float), batch + (5,)).copy()
    remaining = np.broadcast_to(np.asarray(supply.remaining, dtype=float), batch).copy()

    times = t0 + np.arange(n_days + 1, dtype=float)
    xs = np.empty((n_days + 1,) + batch + (5,))
    us = np.empty((n_days + 1,) + batch)
    y3s = np.empty((n_days + 1,) + batch)

    def daily_rate(day_time, state, left):
        theta = params.theta.value_at(day_time)
        x_t = _testable(state, theta, population, approximate)
        rate = np.minimum(np.minimum(supply.capacity.value_at(day_time), left), x_t)
        return np.maximum(rate, 0.0)

    def new_diagnoses(state, rate, day_time):
        theta = params.theta.value_at(day_time)
        x_t = _testable(state, theta, population, approximate)
        applied = np.minimum(rate, np.maximum(x_t, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(applied > 0, applied * state[..., I] / x_t, 0.0)

    for day in range(n_days + 1):
        day_time = times[day]
        rate = daily_rate(day_time, x, remaining)
        xs[day] = x
        us[day] = rate
        y3s[day] = new_diagnoses(x, rate, day_time)
        if day == n_days:
            break
        for j in range(steps):
            t_mid = day_time + (j + 0.5) * step
            beta = params.beta.value_at(t_mid)
            theta = params.theta.value_at(t_mid)

            def f(state):
                return _derivative(
                    state, beta, theta, params.gamma, params.rho,
                    population, rate, approximate,
                )

            x_t = _testable(x, theta, population, approximate)
            remaining = remaining - np.minimum(rate, np.maximum(x_t, 0.0)) * step
            k1 = f(x)
            k2 = f(x + 0.5 * step * k1)
            k3 = f(x + 0.5 * step * k2)
            k4 = f(x + step * k3)
            x = x + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        remaining = np.maximum(remaining, 0.0)
        if not np.all(np.isfinite(x)):
            if strict:
                raise NonFiniteState(
                    f"Non-finite state reached at t={times[day + 1]}"
                )
            x = np.where(np.isfinite(x), x, np.nan)
    return BatchResult(times, xs, us, y3s)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Daily samples of a simulated path.

    :param numpy.ndarray sample_times: Days since the epoch, shape (n,).
    :param numpy.ndarray states: Compartments, shape (n, 5).
    :param numpy.ndarray u_applied: Tests per day in force at each sample.
    :param numpy.ndarray y3: Detection rate at the start of each day, with the
        day's test rate applied to that day's opening state. The daily
        increase y1(k + 1) - y1(k) equals it only as a left Riemann sum.
    :param numpy.ndarray r_t: Effective reproduction number at each sample.
    :param float population: N.
    """

    sample_times: np.ndarray
    states: np.ndarray
    u_applied: np.ndarray
    y3: np.ndarray
    r_t: np.ndarray
    population: float

    def __len__(self):
        return len(self.sample_times)

    @property
    def y1(self):
        return self.states[:, D] + self.states[:, R]

    @property
    def y2(self):
        return self.states[:, R].copy()

    def compartment(self, name):
        return self.states[:, COMPARTMENTS.index(name)].copy()

    def state(self, k):
        return State.from_array(self.states[k], t=self.sample_times[k])

    def index_of(self, t):
        """
        Index of the sample at time `t`.

        :raises IndexError: If `t` is not a sample time.
        """
        matches = np.flatnonzero(np.isclose(self.sample_times, t, atol=1e-9))
        if not matches.size:
            raise IndexError(f"No sample at t={t}")
        return int(matches[0])

    def peak(self, name="x_i"):
        """(time, value) of the largest sample of a compartment."""
        values = self.compartment(name)
        k = int(np.argmax(values))
        return self.sample_times[k], values[k]

    def splice(self, other):
        """
        Samples of `self` before the start of `other`, followed by `other`.

        :param Trajectory other: The continuation.
        :rtype: Trajectory
        """
        keep = self.sample_times < other.sample_times[0] - 1e-9
        return Trajectory(
            np.concatenate([self.sample_times[keep], other.sample_times]),
            np.concatenate([self.states[keep], other.states]),
            np.concatenate([self.u_applied[keep], other.u_applied]),
            np.concatenate([self.y3[keep], other.y3]),
            np.concatenate([self.r_t[keep], other.r_t]),
            self.population,
        )

    def to_dataframe(self):
        """
        One row per day with the compartments, inputs, outputs, active and
        cumulative infections and R_t.

        :rtype: pandas.DataFrame
        """
        active, infected = derived_outputs(self)
        frame = pd.DataFrame({"t": self.sample_times})
        for k, name in enumerate(COMPARTMENTS):
            frame[name] = self.states[:, k]
        frame["u"] = self.u_applied
        frame["y1"] = self.y1
        frame["y2"] = self.y2
        frame["y3"] = self.y3
        frame["A"] = active
        frame["I_cum"] = infected
        frame["R_t"] = self.r_t
        frame["active_diagnosed"] = self.y1 - self.y2
        return frame


def integrate(initial, params, supply, horizon_days, step=DEFAULT_STEP):
    """
    Simulate the model from `initial` for `horizon_days` days.

    :param State initial: The starting state; its time sets the clock.
    :param ModelParams params: Model parameters.
    :param TestSupply supply: Testing capacity and stockpile.
    :param float horizon_days: Length of the simulation in days.
    :param float step: RK4 step in days.
    :rtype: Trajectory
    :raises NonFiniteState: If the solution stops being finite.
    """
    if not horizon_days > 0:
        raise ParameterError(f"Horizon must be positive, got {horizon_days}")
    if params.batch_shape:
        raise ParameterError("integrate expects scalar parameters, use integrate_batch")
    initial.validate(params.population)
    n_days = int(math.ceil(horizon_days - 1e-9))
    logger.debug(
        f"Integrating {n_days} days from t={initial.t} with step {step}"
    )
    result = integrate_batch(
        initial.as_array(), initial.t, params, supply, n_days, step, strict=True
    )
    r_t = reproduction_values(result.t, result.x, result.u, params)
    return Trajectory(
        result.t, result.x, result.u, result.y3, r_t, params.population
    )


def reproduction_values(times, states, rates, params):
    """R_t for arrays of sample times, states and testing rates."""
    values = np.empty(len(times))
    for k, t in enumerate(times):
        values[k] = _reproduction(
            states[k],
            params.beta.value_at(t),
            params.theta.value_at(t),
            params.gamma,
            params.population,
            rates[k],
            params.testable_approximation,
        )
    return values


def effective_reproduction(state, params, u, t=None):
    """
    R_t = beta / (u / x_T + gamma) * x_S / N.

    :param State state: The current state.
    :param ModelParams params: Model parameters.
    :param float u: Tests per day.
    :param float t: Schedule time; defaults to the state's time.
    :rtype: float
    :raises DegenerateDetection: If the testable population is empty.
    """
    t = state.t if t is None else t
    theta = params.theta.value_at(t)
    x_t = testable_population(
        state, theta, params.population, params.testable_approximation
    )
    if x_t <= 0:
        raise DegenerateDetection(f"Empty testable population at t={t}")
    return float(
        params.beta.value_at(t) / (u / x_t + params.gamma)
        * state.x_s / params.population
    )


def basic_reproduction(params, u0=0.0):
    """
    R_0 = beta(0) / (u0 / ((1 - theta(0)) N) + gamma).

    :param ModelParams params: Model parameters.
    :param float u0: Testing rate at the outbreak.
    :rtype: float
    :raises ThetaOne: If theta(0) = 1 with u0 > 0.
    """
    if u0 < 0:
        raise ParameterError(f"Initial testing rate must be non-negative, got {u0}")
    beta = params.beta.value_at(0.0)
    theta = params.theta.value_at(0.0)
    if u0 == 0:
        return float(beta / params.gamma)
    if theta >= 1.0:
        raise ThetaOne("R_0 is undefined for theta(0) = 1 with testing at the outbreak")
    return float(beta / (u0 / ((1.0 - theta) * params.population) + params.gamma))


def derived_outputs(traj):
    """
    Active cases A = x_I + x_D and cumulative infections I = N - x_S.

    :param Trajectory traj: A simulated path.
    :returns: (A, I_cum) arrays.
    :rtype: tuple
    """
    active = traj.states[:, I] + traj.states[:, D]
    infected = traj.population - traj.states[:, S]
    return np.maximum(active, 0.0), np.maximum(infected, 0.0)


def reproduction_series(traj, params):
    """R_t at every sample of `traj` under `params`."""
    return reproduction_values(traj.sample_times, traj.states, traj.u_applied, params)


def phase_average_rt(traj, params, start, end):
    """
    Mean R_t over the samples with ``start <= t < end``.

    :param Trajectory traj: A simulated path.
    :param ModelParams params: Model parameters.
    :param float start: Phase start day.
    :param float end: Phase end day.
    :rtype: float
    :raises ParameterError: If no sample falls in the phase.
    """
    mask = (traj.sample_times >= start - 1e-9) & (traj.sample_times < end - 1e-9)
    if not np.any(mask):
        raise ParameterError(f"No samples between day {start} and day {end}")
    return float(np.mean(reproduction_series(traj, params)[mask]))

# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
The best effort strategy for testing (BEST): the smallest constant testing
rate that stops the growth of the undiagnosed infected population from a
chosen day t* onwards,

    c*(t*) = x_T(t*) max(beta(t*) x_S(t*) / N - gamma, 0).

The rate stays sufficient while beta does not increase and theta does not
decrease; at a breakpoint breaking either condition it is recomputed from
the state reached there.
"""
from collections import namedtuple
from dataclasses import dataclass, field
import logging
from typing import Optional

import numpy as np

from .common import HorizonExceeded, date_of_day
from .model import DEFAULT_STEP, TestSupply, integrate, testable_population

logger = logging.getLogger(__name__)

SweepEntry = namedtuple("SweepEntry", ["t_star", "c_star", "peak_xI"])


@dataclass(frozen=True, eq=False)
class BestSolution:
    """
    The BEST rate from day `t_star` and the trajectory it produces.

    :param float t_star: Day the policy starts.
    :param float c_star: Tests per day from `t_star`.
    :param float peak_xI: Largest x_I along `trajectory`.
    :param Trajectory trajectory: Data-driven path up to `t_star` followed
        by the policy path.
    :param list recomputations: (day, rate) each time the rate was set.
    :param list sweep: Optional SweepEntry records.
    """

    t_star: float
    c_star: float
    peak_xI: float
    trajectory: object
    recomputations: list = field(default_factory=list)
    sweep: Optional[list] = None

    @property
    def peak_time(self):
        return float(self.trajectory.peak("x_i")[0])

    def to_dict(self, epoch=None):
        record = {
            "t_star": self.t_star,
            "c_star": self.c_star,
            "peak_xI": self.peak_xI,
            "peak_time": self.peak_time,
            "recomputations": [[t, c] for t, c in self.recomputations],
        }
        if epoch is not None:
            record["date"] = date_of_day(self.t_star, epoch).isoformat()
        return record


def best_rate(state, params, t=None):
    """
    The BEST testing rate at the state's time.

    :param State state: The state at t*.
    :param ModelParams params: Model parameters.
    :param float t: Schedule time; defaults to the state's time.
    :returns: Tests per day, zero when the epidemic is already receding.
    :rtype: float
    """
    t = state.t if t is None else t
    growth = params.beta.value_at(t) * state.x_s / params.population - params.gamma
    if growth <= 0:
        return 0.0
    x_t = testable_population(
        state, params.theta.value_at(t), params.population, params.testable_approximation
    )
    return float(max(x_t, 0.0) * growth)


def _worsening_breakpoints(params, t0, t1):
    """Breakpoints in (t0, t1) where beta rises or theta falls."""
    days = set()
    for start in params.beta.breakpoints_between(t0, t1):
        if params.beta.value_at(start) > params.beta.value_at(start - 1e-9):
            days.add(start)
    for start in params.theta.breakpoints_between(t0, t1):
        if params.theta.value_at(start) < params.theta.value_at(start - 1e-9):
            days.add(start)
    return sorted(days)


def best_policy(initial_traj, params, t_star, horizon=None, step=DEFAULT_STEP):
    """
    Follow `initial_traj` up to `t_star`, then test at the BEST rate.

    If the rate at `t_star` is zero the policy changes nothing and the
    solution carries `initial_traj` itself.

    :param Trajectory initial_traj: The data-driven path; it fixes the state
        at `t_star`.
    :param ModelParams params: Model parameters.
    :param float t_star: Day the policy starts, a sample time of
        `initial_traj`.
    :param float horizon: Last day simulated; defaults to the end of
        `initial_traj`.
    :param float step: RK4 step in days.
    :rtype: BestSolution
    :raises HorizonExceeded: If `t_star` is not a sample time before the
        horizon.
    """
    end = float(initial_traj.sample_times[-1] if horizon is None else horizon)
    try:
        k = initial_traj.index_of(t_star)
    except IndexError as exc:
        raise HorizonExceeded(f"Day {t_star} is not on the simulated horizon") from exc
    if not t_star < end:
        raise HorizonExceeded(f"Day {t_star} is not before the horizon end {end}")

    state = initial_traj.state(k)
    c_star = best_rate(state, params)
    logger.info(f"BEST rate at day {t_star}: {c_star:.6g} tests/day")
    if c_star == 0:
        _, peak = initial_traj.peak("x_i")
        return BestSolution(float(t_star), 0.0, float(peak), initial_traj, [(float(t_star), 0.0)])

    traj = initial_traj
    rate = c_star
    t_now = float(t_star)
    recomputations = [(t_now, c_star)]
    while t_now < end:
        breakpoints = _worsening_breakpoints(params, t_now, end)
        t_next = breakpoints[0] if breakpoints else end
        segment = integrate(
            state, params, TestSupply.constant(rate, start=t_now), t_next - t_now, step
        )
        traj = traj.splice(segment)
        state = segment.state(len(segment) - 1)
        t_now = float(segment.sample_times[-1])
        if t_now < end:
            rate = best_rate(state, params)
            recomputations.append((t_now, rate))
            logger.info(f"BEST rate recomputed at day {t_now}: {rate:.6g} tests/day")

    _, peak = traj.peak("x_i")
    return BestSolution(float(t_star), c_star, float(peak), traj, recomputations)


def best_sweep(initial_traj, params, t_stars, horizon=None, step=DEFAULT_STEP):
    """
    The BEST rate and resulting peak for each candidate start day.

    :param Trajectory initial_traj: The data-driven path.
    :param ModelParams params: Model parameters.
    :param t_stars: Candidate start days.
    :rtype: list of SweepEntry
    """
    entries = []
    for t_star in np.atleast_1d(t_stars):
        solution = best_policy(initial_traj, params, float(t_star), horizon, step)
        entries.append(SweepEntry(solution.t_star, solution.c_star, solution.peak_xI))
        logger.debug(
            f"Sweep day {solution.t_star}: c*={solution.c_star:.6g}, peak={solution.peak_xI:.6g}"
        )
    return entries

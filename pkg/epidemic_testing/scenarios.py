# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Named scenarios over the data horizon: the actual testing record, the BEST
and COST policies, and the counterfactuals without the lockdown or without
the unlock.
"""
from dataclasses import dataclass
import logging
from typing import Optional

from .best_policy import best_policy
from .common import Calendar, ParameterError
from .cost_policy import solve_cost
from .imputation import build_signals
from .model import DEFAULT_STEP, TestSupply, integrate

logger = logging.getLogger(__name__)

SCENARIOS = ("actual", "best", "cost", "no-lockdown", "no-unlock")


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    """
    :param str name: Scenario name.
    :param ModelParams params: Parameters the trajectory was simulated with.
    :param Trajectory trajectory: Daily samples from the initial state.
    :param policy: BestSolution or CostSolution for the policy scenarios.
    """

    name: str
    params: object
    trajectory: object
    policy: Optional[object] = None


def scenario_params(name, params, calendar=None):
    """
    Parameters of a scenario. The counterfactuals hold the infection rate
    in force before the lockdown (or before the unlock) past that date.

    :rtype: ModelParams
    """
    calendar = Calendar() if calendar is None else calendar
    if name == "no-lockdown":
        return params.with_schedules(beta=params.beta.without_breakpoint(calendar.lockdown_day))
    if name == "no-unlock":
        return params.with_schedules(beta=params.beta.without_breakpoint(calendar.unlock_day))
    if name not in SCENARIOS:
        raise ParameterError(f"Unknown scenario '{name}', expected one of {SCENARIOS}")
    return params


def actual_supply(dataset):
    """The recorded daily tests as a testing capacity."""
    u_signal, _ = build_signals(dataset)
    return TestSupply(u_signal)


def run_scenario(
    name,
    params,
    dataset,
    initial,
    calendar=None,
    horizon_days=None,
    t_star=None,
    r_max=None,
    C0=None,
    step=DEFAULT_STEP,
):
    """
    Simulate one named scenario from `initial`.

    :param str name: One of SCENARIOS.
    :param ModelParams params: Fitted parameters.
    :param ImputedDataset dataset: Supplies the recorded tests.
    :param State initial: State at t = 0.
    :param Calendar calendar: Breakpoint dates.
    :param float horizon_days: Days simulated; defaults to tau - 1.
    :param float t_star: BEST start day.
    :param float r_max: COST stockpile.
    :param float C0: COST Newton starting rate.
    :param float step: RK4 step in days.
    :rtype: ScenarioResult
    """
    calendar = Calendar() if calendar is None else calendar
    horizon_days = dataset.tau - 1 if horizon_days is None else horizon_days
    scenario = scenario_params(name, params, calendar)
    logger.info(f"Running scenario '{name}' over {horizon_days} days")

    if name == "cost":
        if r_max is None:
            raise ParameterError("The cost scenario needs a stockpile r_max")
        solution = solve_cost(scenario, initial, r_max, C0=C0, tau=dataset.tau)
        supply = TestSupply.constant(solution.C, stockpile=r_max, start=initial.t)
        traj = integrate(initial, scenario, supply, horizon_days, step)
        return ScenarioResult(name, scenario, traj, solution)

    actual = integrate(initial, scenario, actual_supply(dataset), horizon_days, step)
    if name == "best":
        if t_star is None:
            raise ParameterError("The best scenario needs a start day t_star")
        solution = best_policy(actual, scenario, t_star, step=step)
        return ScenarioResult(name, scenario, solution.trajectory, solution)
    return ScenarioResult(name, scenario, actual)

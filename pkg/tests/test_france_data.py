# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Headline checks on the France 2020 records. The data are not distributed
with the package: set EPIDEMIC_TESTING_FRANCE_DATA to the raw CSV to run
them.
"""
import os
import unittest

from epidemic_testing.best_policy import best_policy
from epidemic_testing.common import Calendar
from epidemic_testing.cost_policy import solve_cost
from epidemic_testing.estimation import (
    ParameterVector,
    estimate_rho,
    initial_state_from_dataset,
)
from epidemic_testing.imputation import impute
from epidemic_testing.load_data import load_raw
from epidemic_testing.model import integrate, phase_average_rt
from epidemic_testing.outcome_models import OutcomeFit
from epidemic_testing.scenarios import actual_supply, run_scenario

FRANCE_DATA = os.environ.get("EPIDEMIC_TESTING_FRANCE_DATA")

FITTED = ParameterVector(0.3708, 0.0707, 0.3717, 0.9948, 0.9967, 0.1589)
FITTED_APPROXIMATE = ParameterVector(0.2643, 0.0006, 0.0642, 0.9415, 0.7993, 0.0542)
RHO = 0.0499
STOCKPILE = 2_038_037.0


@unittest.skipUnless(FRANCE_DATA, "set EPIDEMIC_TESTING_FRANCE_DATA to run")
class TestFranceHeadlines(unittest.TestCase):
    """Tests the published figures for France"""

    @classmethod
    def setUpClass(cls):
        cls.calendar = Calendar()
        cls.dataset = impute(load_raw(FRANCE_DATA), cls.calendar)

    def test_removal_rate(self):
        rho = estimate_rho(self.dataset.y1_bar, self.dataset.y2_bar)
        self.assertAlmostEqual(rho, RHO, delta=0.001)

    def test_lockdown_reproduction_number(self):
        params = FITTED.to_params(RHO, self.calendar)
        initial = initial_state_from_dataset(self.dataset, params.population)
        traj = integrate(initial, params, actual_supply(self.dataset), self.dataset.tau - 1)
        rt = phase_average_rt(
            traj, params, self.calendar.lockdown_day, self.calendar.unlock_day
        )
        self.assertAlmostEqual(rt, 0.33, delta=0.05)

    def test_best_from_march_first(self):
        params = FITTED.to_params(RHO, self.calendar)
        initial = initial_state_from_dataset(self.dataset, params.population)
        actual = integrate(initial, params, actual_supply(self.dataset), self.dataset.tau - 1)
        solution = best_policy(actual, params, self.calendar.day("2020-03-01"))
        self.assertAlmostEqual(solution.c_star / 147_000, 1.0, delta=0.1)
        self.assertAlmostEqual(solution.peak_xI / 363_169, 1.0, delta=0.1)
        self.assertAlmostEqual(actual.peak("x_i")[1] / 6e6, 1.0, delta=0.15)

    def test_cost_with_total_tests(self):
        params = FITTED_APPROXIMATE.to_params(
            RHO, self.calendar, testable_approximation=True
        )
        initial = initial_state_from_dataset(self.dataset, params.population)
        solution = solve_cost(params, initial, STOCKPILE)
        self.assertAlmostEqual(solution.C / 17_144, 1.0, delta=0.1)
        self.assertAlmostEqual(solution.T, 118, delta=10)
        self.assertLessEqual(solution.iterations, 30)

    def _reductions(self, params, name, **kwargs):
        initial = initial_state_from_dataset(self.dataset, params.population)
        actual = run_scenario("actual", params, self.dataset, initial, self.calendar)
        policy = run_scenario(name, params, self.dataset, initial, self.calendar, **kwargs)
        outcome = OutcomeFit.fit(actual.trajectory, self.dataset)
        return outcome.reductions(actual.trajectory, policy.trajectory)

    def test_best_outcome_reductions(self):
        summary = self._reductions(
            FITTED.to_params(RHO, self.calendar),
            "best",
            t_star=self.calendar.day("2020-03-01"),
        )
        self.assertAlmostEqual(summary["icu_peak_reduction_pct"], 34.71, delta=3)
        self.assertAlmostEqual(summary["deaths_reduction_pct"], 74.45, delta=5)

    def test_cost_outcome_reductions(self):
        summary = self._reductions(
            FITTED_APPROXIMATE.to_params(RHO, self.calendar, testable_approximation=True),
            "cost",
            r_max=STOCKPILE,
        )
        self.assertAlmostEqual(summary["icu_peak_reduction_pct"], 11.12, delta=3)
        self.assertAlmostEqual(summary["deaths_reduction_pct"], 37.52, delta=5)


if __name__ == "__main__":
    unittest.main()

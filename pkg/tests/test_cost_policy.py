# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Tests epidemic_testing.cost_policy on a small constant-parameter epidemic
with the (1 - theta) N testable population.
"""
import math
import unittest

import numpy as np

from epidemic_testing.common import (
    AssumptionViolated,
    BudgetOutlastsEpidemic,
    ExtinctionReached,
    IllDefinedPeak,
    ParameterError,
    ThetaOne,
)
from epidemic_testing.cost_policy import (
    cost_bisection,
    cost_brute_force,
    cost_newton,
    optimal_xi_star,
    peak_positions,
    peak_values,
    printed_peak_values,
    solve_cost,
    xi_solution,
    xi_star_of_C,
    xi_star_sensitivity,
)
from epidemic_testing.model import I, S, ModelParams, State, TestSupply, integrate
from epidemic_testing.schedule import Schedule

N = 1_000_000.0
BETA = 0.3
GAMMA = 0.1
THETA = 0.9
X_I0 = 100.0
X_S0 = N - X_I0
R_MAX = 400_000.0


def _params(theta=THETA, testable_approximation=True):
    return ModelParams(
        Schedule.constant(BETA),
        Schedule.constant(theta),
        GAMMA,
        0.05,
        N,
        testable_approximation=testable_approximation,
    )


def _initial():
    return State(X_S0, X_I0, 0.0, 0.0, 0.0)


def _x_i(xi, C, xi_star=math.inf):
    load = C / ((1 - THETA) * N)
    return X_I0 + X_S0 * (1 - np.exp(-BETA * xi / N)) - load * np.minimum(xi, xi_star) - GAMMA * xi


class TestPeaks(unittest.TestCase):
    """Tests the peak positions and values"""

    def setUp(self):
        self.params = _params()
        self.initial = _initial()

    def test_no_testing_peaks_coincide(self):
        xi_peak1, xi_peak2, r_c, r_w = peak_positions(self.params, self.initial, 0.0)
        self.assertEqual(xi_peak1, xi_peak2)
        self.assertEqual(r_c, r_w)
        peak1, peak2 = peak_values(self.params, self.initial, 0.0, 12345.0)
        self.assertEqual(peak1, peak2)

    def test_peak_gap_is_one_scale(self):
        C = (math.e - 1) * (1 - THETA) * GAMMA * N
        xi_peak1, xi_peak2, r_c, r_w = peak_positions(self.params, self.initial, C)
        self.assertAlmostEqual(r_w / r_c, math.e, places=12)
        self.assertAlmostEqual((xi_peak2 - xi_peak1) / (N / BETA), 1.0, places=10)

    def test_substituted_closed_form(self):
        C = 5000.0
        xi_star = optimal_xi_star(self.params, self.initial, C)
        _, _, r_c, _ = peak_positions(self.params, self.initial, C)
        peak1, _ = peak_values(self.params, self.initial, C, xi_star)
        expected = X_I0 + X_S0 * (1 - 1 / r_c) - X_S0 / r_c * math.log(r_c)
        self.assertAlmostEqual(peak1 / expected, 1.0, places=10)

    def test_printed_closed_form(self):
        C = 5000.0
        xi_star = optimal_xi_star(self.params, self.initial, C)
        _, _, r_c, _ = peak_positions(self.params, self.initial, C)
        printed, _ = printed_peak_values(self.params, self.initial, C, xi_star)
        substituted, _ = peak_values(self.params, self.initial, C, xi_star)
        expected = X_I0 + X_S0 * (1 - 1 / r_c) - X_S0 * r_c * math.log(r_c)
        self.assertAlmostEqual(printed / expected, 1.0, places=12)
        self.assertLess(printed, substituted)

    def test_equal_peaks_at_optimal_stop(self):
        for C in (1000.0, 5000.0, 12000.0):
            xi_star = optimal_xi_star(self.params, self.initial, C)
            peak1, peak2 = peak_values(self.params, self.initial, C, xi_star)
            self.assertAlmostEqual(peak1 / peak2, 1.0, places=9)

    def test_stop_between_peaks(self):
        for C in np.linspace(500.0, 19000.0, 40):
            xi_peak1, xi_peak2, _, _ = peak_positions(self.params, self.initial, C)
            xi_star = optimal_xi_star(self.params, self.initial, C)
            self.assertLessEqual(xi_peak1, xi_star)
            self.assertLessEqual(xi_star, xi_peak2)

    def test_first_peak_falls_with_rate(self):
        peaks = []
        for C in np.linspace(1000.0, 15000.0, 15):
            xi_star = optimal_xi_star(self.params, self.initial, C)
            peaks.append(peak_values(self.params, self.initial, C, xi_star)[0])
        self.assertTrue(np.all(np.diff(peaks) < 0))

    def test_log_bounds(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([[1.0], rng.uniform(1.0, 1e6, 10_000)])
        self.assertTrue(np.all(x - 1 >= np.log(x)))
        self.assertTrue(np.all(np.log(x) >= 1 - 1 / x))
        for C in rng.uniform(100.0, 19_000.0, 20):
            xi_peak1, xi_peak2, _, _ = peak_positions(self.params, self.initial, C)
            xi_star = optimal_xi_star(self.params, self.initial, C)
            self.assertTrue(xi_peak1 <= xi_star <= xi_peak2)

    def test_suppressed_at_origin(self):
        self.assertRaises(AssumptionViolated, peak_positions, self.params, self.initial, 25000.0)

    def test_stop_outside_peaks(self):
        self.assertRaises(IllDefinedPeak, peak_values, self.params, self.initial, 5000.0, 0.0)

    def test_theta_one(self):
        self.assertRaises(ThetaOne, peak_positions, _params(theta=1.0), self.initial, 10.0)

    def test_needs_approximate_testable_population(self):
        params = _params(testable_approximation=False)
        self.assertRaises(AssumptionViolated, peak_positions, params, self.initial, 5000.0)
        self.assertRaises(AssumptionViolated, xi_solution, params, self.initial, 5000.0, 1e6)
        self.assertRaises(AssumptionViolated, solve_cost, params, self.initial, R_MAX)


class TestXiSolution(unittest.TestCase):
    """Tests epidemic_testing.cost_policy.xi_solution"""

    def setUp(self):
        self.params = _params()
        self.initial = _initial()

    def test_no_testing_closed_form(self):
        solution = xi_solution(self.params, self.initial, 0.0, 5e6)
        np.testing.assert_allclose(solution.x_i, _x_i(solution.xi, 0.0), rtol=1e-9, atol=1e-6)
        np.testing.assert_allclose(solution.x_s, X_S0 * np.exp(-BETA * solution.xi / N))
        np.testing.assert_allclose(solution.x_u, GAMMA * solution.xi)
        self.assertEqual(solution.t[0], 0.0)
        self.assertTrue(np.all(np.diff(solution.t) > 0))

    def test_matches_simulation(self):
        C = 3000.0
        solution = xi_solution(self.params, self.initial, C, 5e6)
        traj = integrate(self.initial, self.params, TestSupply.constant(C), 150)
        days = np.arange(1, int(min(solution.t[-1], 150)))
        self.assertGreater(len(days), 50)
        xi = solution.xi_at(days)
        np.testing.assert_allclose(
            X_S0 * np.exp(-BETA * xi / N), traj.states[days, S], rtol=1e-4
        )
        np.testing.assert_allclose(_x_i(xi, C), traj.states[days, I], rtol=1e-3)

    def test_peak_where_growth_stops(self):
        C = 3000.0
        solution = xi_solution(self.params, self.initial, C, 5e6)
        xi_peak1, _, _, _ = peak_positions(self.params, self.initial, C)
        xi, _, _ = solution.peak()
        spacing = np.max(np.diff(solution.xi))
        self.assertLess(abs(xi - xi_peak1), spacing)

    def test_peak_time_matches_simulation(self):
        C = 3000.0
        solution = xi_solution(self.params, self.initial, C, 5e6)
        _, t_peak, _ = solution.peak()
        traj = integrate(self.initial, self.params, TestSupply.constant(C), 150)
        k = int(np.argmax(traj.states[:, I]))
        self.assertLess(k, 150)
        self.assertLessEqual(abs(traj.sample_times[k] - t_peak), 1.0)

    def test_extinction(self):
        with self.assertRaises(ExtinctionReached) as context:
            xi_solution(self.params, self.initial, 3000.0, 1e7)
        exc = context.exception
        self.assertGreater(exc.xi_extinction, 6.5e6)
        self.assertLess(exc.xi_extinction, 6.8e6)
        self.assertLess(exc.solution.xi[-1], exc.xi_extinction)
        self.assertAlmostEqual(exc.solution.x_i[-1], 1.0, places=3)


class TestStopPoint(unittest.TestCase):
    """Tests the stop point of a stockpile spent at a constant rate"""

    def setUp(self):
        self.params = _params()
        self.initial = _initial()

    def test_empty_stockpile(self):
        self.assertEqual(xi_star_of_C(self.params, self.initial, 5000.0, 0.0), 0.0)

    def test_tiny_stockpile(self):
        self.assertLess(xi_star_of_C(self.params, self.initial, 5000.0, 1.0), 1.0)

    def test_matches_simulated_consumption(self):
        C, r_max = 5000.0, 200_000.0
        xi_star = xi_star_of_C(self.params, self.initial, C, r_max)
        solution = xi_solution(self.params, self.initial, C, xi_star)
        self.assertAlmostEqual(solution.t[-1] / (r_max / C), 1.0, places=4)

        supply = TestSupply.constant(C, stockpile=r_max)
        traj = integrate(self.initial, self.params, supply, 60)
        short = np.flatnonzero(traj.u_applied < C)
        self.assertEqual(short[0], 40)
        self.assertAlmostEqual(
            traj.states[40, S] / (X_S0 * math.exp(-BETA * xi_star / N)), 1.0, places=4
        )

    def test_sensitivity(self):
        C, r_max = 5000.0, 200_000.0
        step = 1e-3 * C
        upper = xi_star_of_C(self.params, self.initial, C + step, r_max)
        lower = xi_star_of_C(self.params, self.initial, C - step, r_max)
        finite_difference = (upper - lower) / (2 * step)
        sensitivity = xi_star_sensitivity(self.params, self.initial, C, r_max)
        self.assertAlmostEqual(sensitivity["implicit"] / finite_difference, 1.0, places=3)
        self.assertLess(sensitivity["implicit"], sensitivity["short"])
        self.assertLess(sensitivity["short"], 0.0)

    def test_stop_product_decreases_with_rate(self):
        r_max = 200_000.0
        rates = np.linspace(6000.0, 10_000.0, 9)
        products = [C * xi_star_of_C(self.params, self.initial, C, r_max) for C in rates]
        self.assertTrue(np.all(np.diff(products) < 0))

    def test_budget_outlasts_epidemic(self):
        self.assertRaises(
            BudgetOutlastsEpidemic, xi_star_of_C, self.params, self.initial, 5000.0, 5e6
        )

    def test_non_positive_rate(self):
        self.assertRaises(ParameterError, xi_star_of_C, self.params, self.initial, 0.0, 1e5)


class TestCostSolvers(unittest.TestCase):
    """Tests the COST rate solvers"""

    @classmethod
    def setUpClass(cls):
        cls.params = _params()
        cls.initial = _initial()
        cls.solution = solve_cost(cls.params, cls.initial, R_MAX)

    def test_equal_peaks(self):
        peak1, peak2 = self.solution.peak1, self.solution.peak2
        self.assertLessEqual(abs(peak1 - peak2), 0.01 * max(peak1, peak2))

    def test_stop_between_peaks(self):
        self.assertLessEqual(self.solution.xi_peak1, self.solution.xi_star)
        self.assertLessEqual(self.solution.xi_star, self.solution.xi_peak2)

    def test_stockpile_spent_at_stop(self):
        self.assertAlmostEqual(self.solution.T, R_MAX / self.solution.C)
        table = xi_solution(self.params, self.initial, self.solution.C, self.solution.xi_star)
        self.assertAlmostEqual(table.t[-1] / self.solution.T, 1.0, places=4)

    def test_feasible(self):
        self.assertGreater(self.solution.C, 0.0)
        self.assertLess(self.solution.C, (1 - THETA) * (X_S0 * BETA - GAMMA * N))
        self.assertGreater(self.solution.r_c, 1.0)

    def test_newton_near_solution(self):
        newton = cost_newton(self.params, self.initial, R_MAX, C0=1.1 * self.solution.C)
        self.assertLessEqual(newton.iterations, 30)
        self.assertAlmostEqual(newton.C / self.solution.C, 1.0, places=5)

    def test_bisection_agrees(self):
        bisection = cost_bisection(
            self.params, self.initial, R_MAX, R_MAX / 800, 5 * R_MAX / 160
        )
        self.assertEqual(bisection.method, "bisection")
        self.assertAlmostEqual(bisection.C / self.solution.C, 1.0, places=5)

    def test_brute_force_agrees(self):
        grid = np.geomspace(0.5 * self.solution.C, 2.0 * self.solution.C, 41)
        best, table = cost_brute_force(self.params, self.initial, R_MAX, grid)
        self.assertLess(abs(best - self.solution.C), 0.05 * self.solution.C)
        self.assertEqual(list(table.columns), ["C", "T", "peak_xI"])
        self.assertEqual(len(table), 41)

    def test_to_dict(self):
        record = self.solution.to_dict()
        for key in ("C", "T", "xi_star", "peak1", "peak2", "iterations", "R_C", "R_W"):
            self.assertIn(key, record)
        self.assertEqual(record["iterations"], len(record["newton_trace"]))

    def test_empty_stockpile(self):
        self.assertRaises(ParameterError, cost_newton, self.params, self.initial, 0.0)


if __name__ == "__main__":
    unittest.main()

# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Tests epidemic_testing.model
"""
import unittest

import numpy as np
from scipy.integrate import cumulative_trapezoid

from epidemic_testing import model
from epidemic_testing.common import DegenerateDetection, ParameterError, ThetaOne
from epidemic_testing.model import (
    DEFAULT_STEP,
    D,
    I,
    R,
    S,
    U,
    ModelParams,
    State,
    TestSupply,
    basic_reproduction,
    derived_outputs,
    effective_reproduction,
    integrate,
    integrate_batch,
    phase_average_rt,
    rhs,
)
from epidemic_testing.schedule import Schedule

N = 1_000_000.0


def _params(beta=0.4, theta=0.5, gamma=0.1, rho=0.05, population=1000.0, approximate=False):
    if not isinstance(beta, Schedule):
        beta = Schedule.constant(beta)
    if not isinstance(theta, Schedule):
        theta = Schedule.constant(theta)
    return ModelParams(beta, theta, gamma, rho, population, approximate)


def _epidemic():
    """A three-phase epidemic with limited testing."""
    params = _params(
        beta=Schedule((0, 30, 60), (0.35, 0.1, 0.3)),
        theta=Schedule((0, 60), (0.8, 0.9)),
        gamma=0.15,
        population=N,
    )
    initial = State(N - 1100.0, 1000.0, 80.0, 0.0, 20.0)
    supply = TestSupply.constant(2000.0)
    return params, initial, supply


class TestTestablePopulation(unittest.TestCase):
    """Tests epidemic_testing.model.testable_population"""

    def setUp(self):
        self.state = State(850.0, 100.0, 30.0, 0.0, 20.0)

    def test_hand_value(self):
        self.assertAlmostEqual(model.testable_population(self.state, 0.5, 1000.0), 525.0)

    def test_theta_one(self):
        self.assertAlmostEqual(model.testable_population(self.state, 1.0, 1000.0), 100.0)

    def test_theta_zero(self):
        self.assertAlmostEqual(model.testable_population(self.state, 0.0, 1000.0), 950.0)

    def test_approximation(self):
        value = model.testable_population(self.state, 0.9, 1000.0, approximate=True)
        self.assertAlmostEqual(value, 100.0)


class TestTestingRate(unittest.TestCase):
    """Tests epidemic_testing.model.testing_rate"""

    def setUp(self):
        self.params = _params(population=1e7)
        self.state = State(1e7 - 1e5, 1e5, 0.0, 0.0, 0.0)

    def test_no_capacity(self):
        self.assertEqual(model.testing_rate(TestSupply.constant(0.0), self.state, self.params), 0.0)

    def test_stockpile_limits(self):
        supply = TestSupply.constant(5000.0, stockpile=1000.0)
        supply = TestSupply(supply.capacity, 1000.0, consumed=700.0)
        self.assertAlmostEqual(model.testing_rate(supply, self.state, self.params), 300.0)

    def test_unlimited(self):
        supply = TestSupply.constant(147000.0)
        self.assertAlmostEqual(model.testing_rate(supply, self.state, self.params), 147000.0)

    def test_testable_population_limits(self):
        params = _params(theta=1.0, population=1e7)
        supply = TestSupply.constant(5e5)
        self.assertAlmostEqual(model.testing_rate(supply, self.state, params), 1e5)

    def test_exhausted(self):
        supply = TestSupply(Schedule.constant(5000.0), 1000.0, consumed=1000.0)
        self.assertEqual(model.testing_rate(supply, self.state, self.params), 0.0)

    def test_overdrawn(self):
        self.assertRaises(
            ParameterError, TestSupply, Schedule.constant(1.0), 10.0, consumed=20.0
        )


class TestRhs(unittest.TestCase):
    """Tests epidemic_testing.model.rhs"""

    def test_hand_example(self):
        state = State(900.0, 100.0, 0.0, 0.0, 0.0)
        derivative = rhs(state, _params(), 0.0)
        np.testing.assert_allclose(derivative, [-36.0, 26.0, 0.0, 10.0, 0.0])

    def test_closed_system(self):
        state = State(850.0, 100.0, 30.0, 0.0, 20.0)
        self.assertAlmostEqual(float(np.sum(rhs(state, _params(), 40.0))), 0.0, places=12)

    def test_disease_free(self):
        state = State(1000.0, 0.0, 0.0, 0.0, 0.0)
        np.testing.assert_array_equal(rhs(state, _params(), 0.0), np.zeros(5))

    def test_nothing_to_detect(self):
        state = State(1000.0, 0.0, 0.0, 0.0, 0.0)
        self.assertEqual(rhs(state, _params(), 50.0)[D], 0.0)

    def test_degenerate_detection(self):
        state = State(0.0, 0.0, 500.0, 0.0, 500.0)
        self.assertRaises(DegenerateDetection, rhs, state, _params(theta=0.0), 10.0)


class TestParameters(unittest.TestCase):
    """Tests the ModelParams and State invariants"""

    def test_gamma_below_rho(self):
        self.assertRaises(ParameterError, _params, gamma=0.01, rho=0.05)

    def test_theta_outside_unit_interval(self):
        self.assertRaises(ParameterError, _params, theta=1.2)

    def test_non_positive_beta(self):
        self.assertRaises(ParameterError, _params, beta=0.0)

    def test_negative_compartment(self):
        self.assertRaises(ParameterError, State(1001.0, -1.0, 0, 0, 0).validate)

    def test_population_mismatch(self):
        self.assertRaises(ParameterError, State(900.0, 10.0, 0, 0, 0).validate, 1000.0)

    def test_gamma_is_float(self):
        params = _params(gamma=1, rho=1)
        self.assertIsInstance(params.gamma, float)

    def test_frozen_at(self):
        params, _, _ = _epidemic()
        frozen = params.frozen_at(45)
        self.assertEqual(frozen.beta.value_at(0), 0.1)
        self.assertEqual(frozen.theta.value_at(100), 0.8)


class TestIntegrate(unittest.TestCase):
    """Tests epidemic_testing.model.integrate"""

    def test_equilibrium(self):
        initial = State(N, 0.0, 0.0, 0.0, 0.0)
        traj = integrate(initial, _params(population=N), TestSupply.constant(0.0), 30)
        self.assertEqual(len(traj), 31)
        for k in range(len(traj)):
            np.testing.assert_array_equal(traj.states[k], initial.as_array())

    def test_conservation(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 120)
        totals = traj.states.sum(axis=1)
        self.assertLess(np.max(np.abs(totals - N)), 1e-6 * N)
        self.assertTrue(np.all(traj.states >= 0))

    def test_monotonicity(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 120)
        self.assertTrue(np.all(np.diff(traj.states[:, S]) <= 0))
        self.assertTrue(np.all(np.diff(traj.states[:, U]) >= 0))
        self.assertTrue(np.all(np.diff(traj.states[:, R]) >= 0))

    def test_output_relations(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 120)
        np.testing.assert_array_equal(traj.y1, traj.states[:, D] + traj.states[:, R])
        np.testing.assert_array_equal(traj.y2, traj.states[:, R])
        running = cumulative_trapezoid(traj.y3, traj.sample_times, initial=0.0)
        np.testing.assert_allclose(traj.y1[-1] - traj.y1[0], running[-1], rtol=0.02)

    def test_removal_relation(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 120)
        increments = np.diff(traj.y2)
        active = traj.y1 - traj.y2
        midpoint = 0.05 * 0.5 * (active[1:] + active[:-1])
        np.testing.assert_allclose(increments, midpoint, rtol=0.02)

    def test_step_halving(self):
        params, initial, supply = _epidemic()
        coarse = integrate(initial, params, supply, 120, step=0.05)
        fine = integrate(initial, params, supply, 120, step=0.025)
        self.assertLess(np.max(np.abs(coarse.states - fine.states)), 1e-6 * N)

    def test_fourth_order(self):
        params, initial, supply = _epidemic()
        runs = [integrate(initial, params, supply, 120, step=h).states for h in (0.5, 0.25, 0.125)]
        ratio = np.max(np.abs(runs[0] - runs[1])) / np.max(np.abs(runs[1] - runs[2]))
        self.assertGreater(ratio, 12.0)
        self.assertLess(ratio, 20.0)

    def test_detections_at_start_of_day(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 90)
        x_t = np.array([
            model.testable_population(traj.state(k), params.theta.value_at(t), N)
            for k, t in enumerate(traj.sample_times)
        ])
        expected = traj.u_applied * traj.states[:, I] / x_t
        np.testing.assert_allclose(traj.y3, expected, rtol=1e-10)
        np.testing.assert_allclose(np.diff(traj.y1), traj.y3[:-1], rtol=0.25)

    def test_stockpile_consumed(self):
        params, initial, _ = _epidemic()
        supply = TestSupply.constant(2000.0, stockpile=15000.0)
        traj = integrate(initial, params, supply, 30)
        np.testing.assert_array_equal(traj.u_applied[:7], np.full(7, 2000.0))
        self.assertAlmostEqual(traj.u_applied[7], 1000.0, places=6)
        np.testing.assert_allclose(traj.u_applied[8:], 0.0, atol=1e-6)

    def test_sample_times_follow_initial(self):
        params, initial, supply = _epidemic()
        start = State(*initial.as_array(), t=12.0)
        traj = integrate(start, params, supply, 5)
        np.testing.assert_array_equal(traj.sample_times, np.arange(12.0, 18.0))

    def test_non_positive_horizon(self):
        params, initial, supply = _epidemic()
        self.assertRaises(ParameterError, integrate, initial, params, supply, 0)

    def test_batch_matches_single(self):
        params, initial, _ = _epidemic()
        rates = np.array([0.0, 2000.0, 8000.0])
        batch = integrate_batch(
            initial.as_array(), 0.0, params, TestSupply.constant(rates), 40
        )
        for m, rate in enumerate(rates):
            single = integrate(initial, params, TestSupply.constant(rate), 40)
            np.testing.assert_allclose(batch.x[:, m], single.states, rtol=1e-12)

    def test_testable_population_decreases_with_infected(self):
        params = _params(
            beta=0.05,
            theta=Schedule((0, 20), (0.5, 0.7)),
            gamma=0.15,
            population=N,
        )
        initial = State(N - 10000.0, 10000.0, 0.0, 0.0, 0.0)
        traj = integrate(initial, params, TestSupply.constant(1000.0), 40)
        x_t = np.array([
            model.testable_population(traj.state(k), params.theta.value_at(t), N)
            for k, t in enumerate(traj.sample_times)
        ])
        falling = np.diff(traj.states[:, I]) < 0
        self.assertTrue(np.all(falling))
        self.assertTrue(np.all(np.diff(x_t)[falling] < 0))

    def test_to_dataframe(self):
        params, initial, supply = _epidemic()
        frame = integrate(initial, params, supply, 10).to_dataframe()
        for column in (
            "t", "x_s", "x_i", "x_d", "x_u", "x_r", "u", "y1", "y2", "y3", "A", "I_cum", "R_t"
        ):
            self.assertIn(column, frame.columns)
        self.assertEqual(len(frame), 11)


class TestReproduction(unittest.TestCase):
    """Tests the reproduction numbers"""

    def test_no_testing_limit(self):
        state = State(1000.0, 0.0, 0.0, 0.0, 0.0)
        self.assertAlmostEqual(effective_reproduction(state, _params(), 0.0), 4.0)

    def test_testing_lowers(self):
        state = State(900.0, 100.0, 0.0, 0.0, 0.0)
        # x_T = 0.5 * 100 + 0.5 * 1000 = 550
        expected = 0.4 / (55.0 / 550.0 + 0.1) * 0.9
        self.assertAlmostEqual(effective_reproduction(state, _params(), 55.0), expected)

    def test_basic_reproduction(self):
        params = _params(beta=0.3708, theta=0.9948, gamma=0.1589, rho=0.0499, population=N)
        self.assertAlmostEqual(basic_reproduction(params), 2.334, places=2)

    def test_basic_reproduction_large_testing(self):
        params = _params(population=N)
        self.assertLess(basic_reproduction(params, 1e12), 1e-3)

    def test_theta_one(self):
        self.assertRaises(ThetaOne, basic_reproduction, _params(theta=1.0), 10.0)

    def test_phase_average(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 90)
        before = phase_average_rt(traj, params, 0, 30)
        during = phase_average_rt(traj, params, 30, 60)
        self.assertGreater(before, 1.0)
        self.assertLess(during, 1.0)
        self.assertAlmostEqual(during, float(np.mean(traj.r_t[30:60])))

    def test_phase_without_samples(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 10)
        self.assertRaises(ParameterError, phase_average_rt, traj, params, 50, 60)


class TestDerivedOutputs(unittest.TestCase):
    """Tests epidemic_testing.model.derived_outputs"""

    def test_disease_free(self):
        initial = State(N - 500.0, 0.0, 0.0, 500.0, 0.0)
        traj = integrate(initial, _params(population=N), TestSupply.constant(0.0), 10)
        active, infected = derived_outputs(traj)
        np.testing.assert_array_equal(active, np.zeros(11))
        np.testing.assert_allclose(infected, np.full(11, 500.0))

    def test_cumulative_infections_nondecreasing(self):
        params, initial, supply = _epidemic()
        traj = integrate(initial, params, supply, 120)
        active, infected = derived_outputs(traj)
        self.assertTrue(np.all(np.diff(infected) >= 0))
        np.testing.assert_allclose(active, traj.states[:, I] + traj.states[:, D])


class TestRandomInstances(unittest.TestCase):
    """Tests the integrator invariants on randomly drawn epidemics"""

    N_INSTANCES = 100

    
    def _instance(rng):
        population = rng.uniform(1e5, 1e7)
        theta = np.sort(rng.uniform(0.5, 0.99, 2))
        rho = rng.uniform(0.02, 0.1)
        params = ModelParams(
            Schedule((0, 30), tuple(rng.uniform(0.1, 0.5, 2))),
            Schedule((0, 30), tuple(theta)),
            rng.uniform(rho, 0.3),
            rho,
            population,
        )
        x_i = rng.uniform(10.0, 1e-3 * population)
        x_d, x_r = rng.uniform(0.0, x_i, 2)
        initial = State(population - x_i - x_d - x_r, x_i, x_d, 0.0, x_r)
        supply = TestSupply.constant(rng.uniform(0.0, 1e-2 * population))
        return params, initial, supply

    def test_invariants(self):
        rng = np.random.default_rng(2020)
        for n in range(self.N_INSTANCES):
            params, initial, supply = self._instance(rng)
            population = params.population
            with self.subTest(instance=n):
                traj = integrate(initial, params, supply, 60)
                states = traj.states
                totals = states.sum(axis=1)
                self.assertLess(np.max(np.abs(totals - population)), 1e-6 * population)
                self.assertTrue(np.all(states >= -1e-9 * population))
                self.assertTrue(np.all(np.diff(states[:, S]) <= 0))
                self.assertTrue(np.all(np.diff(states[:, U]) >= 0))
                self.assertTrue(np.all(np.diff(states[:, R]) >= 0))
                self.assertTrue(np.all(np.diff(traj.y1) >= 0))
                self.assertTrue(np.all(traj.y1 >= traj.y2))

                x_t = np.array([
                    model.testable_population(traj.state(k), params.theta.value_at(t), population)
                    for k, t in enumerate(traj.sample_times)
                ])
                falling = np.diff(states[:, I]) < 0
                self.assertTrue(np.all(np.diff(x_t)[falling] < 0))

                fine = integrate(initial, params, supply, 60, step=DEFAULT_STEP / 2)
                self.assertLess(np.max(np.abs(fine.states - states)), 1e-6 * population)


if __name__ == "__main__":
    unittest.main()

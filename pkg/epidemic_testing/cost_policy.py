# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
The constant optimal strategy for testing (COST): spend a finite stockpile
r_max at a constant rate C for T = r_max / C days, choosing C so that the
infection peak during testing equals the peak after testing stops.

The analysis runs in infection time xi, with d(xi) = x_I dt, under the
approximation x_T = (1 - theta) N and with beta and theta frozen at the
initial time. In infection time

    x_S(xi) = x_S(0) exp(-beta xi / N)
    x_U(xi) = x_U(0) + gamma xi
    x_I(xi) = x_I(0) + x_S(0) (1 - exp(-beta xi / N))
              - C min(xi, xi*) / ((1 - theta) N) - gamma xi

and real time is recovered as t(xi) = integral of 1 / x_I. Integrals are
evaluated on a grid uniform in s where xi = xi0 (exp(s) - 1), xi0 being the
infection time over which the initial linear growth doubles x_I(0).
"""
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, quad, trapezoid
from scipy.optimize import bisect, brentq

from .common import (
    AssumptionViolated,
    BudgetOutlastsEpidemic,
    ExtinctionReached,
    IllDefinedPeak,
    NewtonDiverged,
    ParameterError,
    SolverError,
    ThetaOne,
)
from .model import DEFAULT_STEP, I, TestSupply, integrate_batch
from .schedule import Schedule

logger = logging.getLogger(__name__)

DEFAULT_TAU = 160
TABLE_TOLERANCE = 1e-6
NEWTON_TOLERANCE = 1e-8
NEWTON_QUADRATURE_TOLERANCE = 1e-10
MAX_NEWTON_ITERATIONS = 100
BRUTE_FORCE_HORIZON = 730

_INITIAL_INTERVALS = 1024
_MAX_INTERVALS = 2 ** 22


@dataclass(frozen=True)
class _Instance:
    """Constant-parameter problem data taken at the initial state."""

    x_s0: float
    x_i0: float
    x_u0: float
    beta: float
    theta: float
    gamma: float
    population: float

    @classmethod
    def build(cls, params, initial):
        if not params.testable_approximation:
            raise AssumptionViolated(
                "The testing analysis needs parameters fitted with the (1 - theta) N "
                "testable population (fit with --assumption5)"
            )
        t0 = initial.t
        theta = float(params.theta.value_at(t0))
        if theta >= 1.0:
            raise ThetaOne("The testing analysis needs theta < 1")
        if not initial.x_i > 0:
            raise ParameterError("The testing analysis needs x_I(0) > 0")
        return cls(
            x_s0=initial.x_s,
            x_i0=initial.x_i,
            x_u0=initial.x_u,
            beta=float(params.beta.value_at(t0)),
            theta=theta,
            gamma=float(params.gamma),
            population=params.population,
        )

    @property
    def rate(self):
        return self.beta / self.population

    def testing_load(self, C):
        return C / ((1.0 - self.theta) * self.population)

    def r_c(self, C):
        return self.x_s0 * self.beta / (C / (1.0 - self.theta) + self.gamma * self.population)

    @property
    def r_w(self):
        return self.x_s0 * self.beta / (self.gamma * self.population)

    def x_i(self, xi, C, xi_star=math.inf):
        return (
            self.x_i0
            + self.x_s0 * -np.expm1(-self.rate * xi)
            - self.testing_load(C) * np.minimum(xi, xi_star)
            - self.gamma * xi
        )

    def peak_position(self, load):
        """Maximiser of a branch whose linear loss rate is `load` + gamma."""
        ratio = self.x_s0 * self.rate / (load + self.gamma)
        return math.log(ratio) / self.rate if ratio > 1 else 0.0

    def xi_scale(self, C):
        slope = self.x_s0 * self.rate - self.testing_load(C) - self.gamma
        return self.x_i0 / max(abs(slope), 1e-3 * (self.testing_load(C) + self.gamma))

    def crossing(self, C, xi_star=math.inf, level=0.0):
        """
        First xi where x_I falls to `level` after its peak. Both branches
        are concave, so each has at most one descending crossing.
        """
        if self.x_i0 <= level:
            return 0.0

        def branch_one(xi):
            return self.x_i(xi, C) - level

        load = self.testing_load(C)
        left = self.peak_position(load)
        right = left + (self.x_i0 + self.x_s0) / (load + self.gamma) + 1.0
        first = brentq(branch_one, left, right, xtol=1e-9, rtol=1e-14)
        if first <= xi_star:
            return first

        def branch_two(xi):
            return self.x_i(xi, C, xi_star) - level

        left = max(xi_star, self.peak_position(0.0))
        right = left + (self.x_i0 + self.x_s0) / self.gamma + 1.0
        return brentq(branch_two, left, right, xtol=1e-9, rtol=1e-14)


def _s_grid(xi_end, xi0, n):
    s = np.linspace(0.0, math.log1p(xi_end / xi0), n + 1)
    return s, xi0 * np.expm1(s), xi0 * np.exp(s)


def _time_integral(inst, C, xi_star, xi_end, n):
    s, xi, jacobian = _s_grid(xi_end, inst.xi_scale(C), n)
    return s, xi, cumulative_trapezoid(jacobian / inst.x_i(xi, C, xi_star), s, initial=0.0)


def _converged_intervals(inst, C, xi_star, xi_end, tol):
    """Intervals n after which doubling changes t(xi_end) by < tol relative."""
    n = _INITIAL_INTERVALS
    previous = _time_integral(inst, C, xi_star, xi_end, n)[2][-1]
    while n < _MAX_INTERVALS:
        n *= 2
        current = _time_integral(inst, C, xi_star, xi_end, n)[2][-1]
        if abs(current - previous) <= tol * abs(current):
            return n
        previous = current
    logger.warning(f"Infection-time quadrature did not reach tolerance {tol}")
    return n


@dataclass(frozen=True, eq=False)
class XiSolution:
    """
    Tabulated solution on an infection-time grid.

    :param numpy.ndarray xi: Infection times, increasing from 0.
    :param numpy.ndarray x_s: Susceptible population.
    :param numpy.ndarray x_u: Unidentified recovered population.
    :param numpy.ndarray x_i: Undiagnosed infected population.
    :param numpy.ndarray t: Real time since the initial state.
    :param float C: The constant testing rate.
    :param float xi_star: Infection time at which testing stops.
    """

    xi: np.ndarray
    x_s: np.ndarray
    x_u: np.ndarray
    x_i: np.ndarray
    t: np.ndarray
    C: float
    xi_star: float = math.inf

    def time_at(self, xi):
        return np.interp(xi, self.xi, self.t)

    def xi_at(self, t):
        return np.interp(t, self.t, self.xi)

    def peak(self):
        """(xi, t, x_I) at the largest tabulated x_I."""
        k = int(np.argmax(self.x_i))
        return self.xi[k], self.t[k], self.x_i[k]


def xi_solution(params, initial, C, xi_max, xi_star=math.inf, tol=TABLE_TOLERANCE):
    """
    Tabulate the infection-time solution up to `xi_max`.

    :param ModelParams params: Parameters; beta and theta are taken at the
        initial time.
    :param State initial: The initial state.
    :param float C: Constant testing rate while testing.
    :param float xi_max: End of the tabulation.
    :param float xi_star: Infection time at which testing stops.
    :param float tol: Relative grid-doubling tolerance on t(xi_max).
    :rtype: XiSolution
    :raises ExtinctionReached: If x_I reaches zero before `xi_max`; the
        tabulation up to one remaining infected person is attached.
    """
    inst = _Instance.build(params, initial)
    if xi_max <= 0:
        raise ParameterError(f"xi_max must be positive, got {xi_max}")
    extinction = inst.crossing(C, xi_star)
    end = xi_max
    if extinction <= xi_max:
        end = inst.crossing(C, xi_star, level=min(1.0, 0.5 * inst.x_i0))
    n = _converged_intervals(inst, C, xi_star, end, tol)
    _, xi, t = _time_integral(inst, C, xi_star, end, n)
    solution = XiSolution(
        xi=xi,
        x_s=inst.x_s0 * np.exp(-inst.rate * xi),
        x_u=inst.x_u0 + inst.gamma * xi,
        x_i=inst.x_i(xi, C, xi_star),
        t=t,
        C=float(C),
        xi_star=float(xi_star),
    )
    if end < xi_max:
        raise ExtinctionReached(
            f"Infections die out at xi={extinction:.6g} before xi_max={xi_max:.6g}",
            solution=solution,
            xi_extinction=extinction,
        )
    return solution


def peak_positions(params, initial, C):
    """
    Infection-time positions of the peaks during and after testing.

    :returns: (xi_peak1, xi_peak2, R_C, R_W)
    :rtype: tuple
    :raises AssumptionViolated: If R_C <= 1.
    """
    inst = _Instance.build(params, initial)
    r_c = inst.r_c(C)
    r_w = inst.r_w
    if r_c <= 1:
        raise AssumptionViolated(
            f"Testing rate C={C:.6g} suppresses the epidemic at the origin (R_C={r_c:.4g})"
        )
    n_over_beta = 1.0 / inst.rate
    return n_over_beta * math.log(r_c), n_over_beta * math.log(r_w), r_c, r_w


def peak_values(params, initial, C, xi_star):
    """
    Peak values obtained by evaluating x_I(xi) at the peak positions.

    :returns: (peak1, peak2)
    :rtype: tuple
    :raises IllDefinedPeak: Unless xi_peak1 <= xi_star <= xi_peak2.
    """
    inst = _Instance.build(params, initial)
    xi_peak1, xi_peak2, _, _ = peak_positions(params, initial, C)
    slack = 1e-12 * xi_peak2
    if C > 0 and not xi_peak1 - slack <= xi_star <= xi_peak2 + slack:
        raise IllDefinedPeak(
            f"Testing stops at xi={xi_star:.6g} outside the peaks "
            f"[{xi_peak1:.6g}, {xi_peak2:.6g}]"
        )
    return (
        float(inst.x_i(xi_peak1, C)),
        float(inst.x_i(xi_peak2, C, xi_star)),
    )


def printed_peak_values(params, initial, C, xi_star):
    """
    The closed forms with an R ln R loss term,
    x_I(0) + x_S(0)(1 - 1/R) - x_S(0) R ln R, kept for comparison with the
    substituted values of :func:`peak_values`.

    :returns: (peak1, peak2)
    """
    inst = _Instance.build(params, initial)
    _, _, r_c, r_w = peak_positions(params, initial, C)
    peak1 = inst.x_i0 + inst.x_s0 * (1 - 1 / r_c) - inst.x_s0 * r_c * math.log(r_c)
    peak2 = (
        inst.x_i0
        + inst.x_s0 * (1 - 1 / r_w)
        - inst.x_s0 * r_w * math.log(r_w)
        - inst.testing_load(C) * xi_star
    )
    return peak1, peak2


def optimal_xi_star(params, initial, C):
    """
    The stop point that makes both peaks equal:
    xi* = N / beta (1 + ln R_C - R_C / (R_W - R_C) ln(R_W / R_C)).
    """
    xi_peak1, _, r_c, r_w = peak_positions(params, initial, C)
    excess = r_w / r_c - 1.0
    weight = math.log1p(excess) / excess if excess > 1e-12 else 1.0
    inst = _Instance.build(params, initial)
    return xi_peak1 + (1.0 - weight) / inst.rate


def _stop_point(inst, C, r_max, tol):
    if r_max == 0:
        return 0.0
    horizon = r_max / C
    last = inst.crossing(C, level=1.0)
    if last <= 0:
        raise BudgetOutlastsEpidemic("Fewer than one infected person at the start")
    n = _converged_intervals(inst, C, math.inf, last, tol)
    _, xi, t = _time_integral(inst, C, math.inf, last, n)
    if t[-1] < horizon:
        raise BudgetOutlastsEpidemic(
            f"Testing for {horizon:.4g} days outlasts the wave ({t[-1]:.4g} days)"
        )
    xi0 = inst.xi_scale(C)

    def elapsed(x):
        s_end = math.log1p(x / xi0)
        value, _ = quad(
            lambda s: xi0 * math.exp(s) / inst.x_i(xi0 * math.expm1(s), C),
            0.0, s_end, epsabs=0.0, epsrel=1e-12, limit=500,
        )
        return value - horizon

    j = int(np.searchsorted(t, horizon))
    lo, hi = max(j - 1, 0), min(j, len(xi) - 1)
    while lo > 0 and elapsed(xi[lo]) > 0:
        lo -= 1
    while hi < len(xi) - 1 and elapsed(xi[hi]) < 0:
        hi += 1
    if elapsed(xi[hi]) < 0:
        raise BudgetOutlastsEpidemic(
            f"Testing for {horizon:.4g} days outlasts the wave"
        )
    return brentq(elapsed, xi[lo], xi[hi], xtol=1e-9, rtol=1e-13)


def xi_star_of_C(params, initial, C, r_max, tol=TABLE_TOLERANCE):
    """
    The infection time at which a stockpile spent at rate C runs out,
    solving integral_0^xi* dxi / x_I = r_max / C.

    :raises AssumptionViolated: If R_C <= 1.
    :raises BudgetOutlastsEpidemic: If fewer than one infected person is
        left when testing would stop.
    """
    if not C > 0:
        raise ParameterError(f"Testing rate must be positive, got {C}")
    if r_max < 0:
        raise ParameterError(f"Stockpile must be non-negative, got {r_max}")
    peak_positions(params, initial, C)
    inst = _Instance.build(params, initial)
    return _stop_point(inst, C, r_max, tol)


def xi_star_sensitivity(params, initial, C, r_max, tol=TABLE_TOLERANCE):
    """
    Derivative of xi*(C) for a fixed stockpile.

    The short form -r_max x_I(xi*) / C**2 ignores that x_I itself depends
    on C; the implicit form adds the integral of
    xi / ((1 - theta) N x_I**2) up to xi*.

    :returns: dict with "short" and "implicit" values.
    """
    inst = _Instance.build(params, initial)
    xi_star = xi_star_of_C(params, initial, C, r_max, tol)
    x_star = float(inst.x_i(xi_star, C))
    coupling = _coupling_integral(inst, C, xi_star)
    return {
        "xi_star": xi_star,
        "short": -r_max * x_star / C ** 2,
        "implicit": -x_star * (r_max / C ** 2 + coupling),
    }


def _coupling_integral(inst, C, xi_end, n=None):
    """integral_0^xi_end xi / ((1 - theta) N x_I(xi)**2) dxi."""
    if n is None:
        n = _converged_intervals(inst, C, math.inf, xi_end, NEWTON_QUADRATURE_TOLERANCE)
    s, xi, jacobian = _s_grid(xi_end, inst.xi_scale(C), n)
    integrand = xi / ((1.0 - inst.theta) * inst.population * inst.x_i(xi, C) ** 2)
    return trapezoid(integrand * jacobian, s)


@dataclass(frozen=True, eq=False)
class CostSolution:
    """
    A constant testing rate C spending the stockpile over T = r_max / C days.

    :param float C: Tests per day.
    :param float T: Testing duration in days.
    :param float xi_star: Infection time at which testing stops.
    :param float peak1: x_I peak while testing.
    :param float peak2: x_I peak after testing.
    :param list newton_trace: (C, residual) per iteration.
    """

    C: float
    T: float
    xi_star: float
    peak1: float
    peak2: float
    newton_trace: list = field(default_factory=list)
    method: str = "newton"
    xi_peak1: float = math.nan
    xi_peak2: float = math.nan
    r_c: float = math.nan
    r_w: float = math.nan
    printed_peak1: float = math.nan
    printed_peak2: float = math.nan

    @property
    def iterations(self):
        return len(self.newton_trace)

    def to_dict(self):
        return {
            "C": self.C,
            "T": self.T,
            "xi_star": self.xi_star,
            "peak1": self.peak1,
            "peak2": self.peak2,
            "iterations": self.iterations,
            "method": self.method,
            "xi_peak1": self.xi_peak1,
            "xi_peak2": self.xi_peak2,
            "R_C": self.r_c,
            "R_W": self.r_w,
            "printed_peak1": self.printed_peak1,
            "printed_peak2": self.printed_peak2,
            "newton_trace": [[c, f] for c, f in self.newton_trace],
        }


def _residual(inst, params, initial, C, r_max, n):
    """f(C) = r_max / C - t(xi*(C)) with xi* from the equal-peaks condition."""
    xi_star = optimal_xi_star(params, initial, C)
    x_star = inst.x_i(xi_star, C)
    if x_star <= 0:
        raise NewtonDiverged(f"Infections die out before the stop point at C={C:.6g}")
    _, _, t = _time_integral(inst, C, math.inf, xi_star, n)
    return r_max / C - t[-1], xi_star, x_star


def _residual_slope(inst, C, r_max, xi_star, x_star, n):
    n_pop, beta, theta, gamma = inst.population, inst.beta, inst.theta, inst.gamma
    log_term = math.log1p(C / ((1.0 - theta) * gamma * n_pop))
    d_xi_star = (
        -n_pop / (beta * C)
        + (1.0 - theta) * gamma * n_pop ** 2 / (beta * C ** 2) * log_term
    )
    coupling = _coupling_integral(inst, C, xi_star, n)
    return -r_max / C ** 2 - d_xi_star / x_star - coupling


def _solution(params, initial, C, r_max, trace, method):
    xi_star = optimal_xi_star(params, initial, C)
    xi_peak1, xi_peak2, r_c, r_w = peak_positions(params, initial, C)
    peak1, peak2 = peak_values(params, initial, C, xi_star)
    printed1, printed2 = printed_peak_values(params, initial, C, xi_star)
    logger.info(
        f"COST C={C:.6g} tests/day for T={r_max / C:.4g} days, "
        f"peaks {peak1:.6g} and {peak2:.6g} ({method})"
    )
    return CostSolution(
        C=float(C),
        T=float(r_max / C),
        xi_star=float(xi_star),
        peak1=peak1,
        peak2=peak2,
        newton_trace=list(trace),
        method=method,
        xi_peak1=xi_peak1,
        xi_peak2=xi_peak2,
        r_c=r_c,
        r_w=r_w,
        printed_peak1=printed1,
        printed_peak2=printed2,
    )


def _feasible_limit(inst):
    """Largest C with R_C > 1."""
    return (1.0 - inst.theta) * (inst.x_s0 * inst.beta - inst.gamma * inst.population)


def cost_newton(
    params,
    initial,
    r_max,
    C0=None,
    tau=DEFAULT_TAU,
    tol=NEWTON_TOLERANCE,
    max_iterations=MAX_NEWTON_ITERATIONS,
):
    """
    Solve r_max / C = t(xi*(C)) for C by Newton's method, xi*(C) being the
    equal-peaks stop point.

    :param ModelParams params: Parameters with the (1 - theta) N testable
        population.
    :param State initial: State when testing starts.
    :param float r_max: Stockpile of tests.
    :param float C0: Starting rate; defaults to r_max / tau.
    :param int tau: Horizon for the default starting rate.
    :rtype: CostSolution
    :raises NewtonDiverged: After `max_iterations` or on leaving the
        region R_C > 1.
    :raises AssumptionViolated: If R_C(C0) <= 1, or the parameters use
        the exact testable population.
    """
    if not r_max > 0:
        raise ParameterError(f"Stockpile must be positive, got {r_max}")
    inst = _Instance.build(params, initial)
    C = r_max / tau if C0 is None else float(C0)
    peak_positions(params, initial, C)
    n = _converged_intervals(
        inst, C, math.inf, optimal_xi_star(params, initial, C), NEWTON_QUADRATURE_TOLERANCE
    )
    limit = _feasible_limit(inst)
    trace = []
    for iteration in range(1, max_iterations + 1):
        f, xi_star, x_star = _residual(inst, params, initial, C, r_max, n)
        slope = _residual_slope(inst, C, r_max, xi_star, x_star, n)
        step = f / slope
        trace.append((C, f))
        logger.debug(f"Newton iteration {iteration}: C={C:.10g}, f={f:.6g}")
        converged = abs(f) / (r_max / C) < tol and abs(step) / C < tol
        C = C - step
        if not 0 < C < limit:
            raise NewtonDiverged(f"Newton left the feasible region at C={C:.6g}")
        if converged:
            return _solution(params, initial, C, r_max, trace, "newton")
    raise NewtonDiverged(f"Newton did not converge in {max_iterations} iterations")


def cost_bisection(params, initial, r_max, lower, upper, rtol=1e-10):
    """
    Solve the COST equation by bisection on [lower, upper], with the upper
    end clipped to the region R_C > 1.

    :rtype: CostSolution
    :raises SolverError: If the residual does not change sign.
    """
    inst = _Instance.build(params, initial)
    upper = min(upper, _feasible_limit(inst) * (1 - 1e-9))
    if not 0 < lower < upper:
        raise SolverError(f"Empty bisection bracket [{lower:.6g}, {upper:.6g}]")
    evaluations = []

    def residual(C):
        xi_end = optimal_xi_star(params, initial, C)
        if inst.x_i(xi_end, C) <= 0:
            value = -math.inf
        else:
            n = _converged_intervals(inst, C, math.inf, xi_end, NEWTON_QUADRATURE_TOLERANCE)
            value = r_max / C - _time_integral(inst, C, math.inf, xi_end, n)[2][-1]
        evaluations.append((C, value))
        return value

    f_lower, f_upper = residual(lower), residual(upper)
    if np.sign(f_lower) == np.sign(f_upper):
        raise SolverError(
            f"COST residual keeps its sign on [{lower:.6g}, {upper:.6g}]"
        )
    C = bisect(residual, lower, upper, rtol=rtol, xtol=1e-12 * upper)
    return _solution(params, initial, C, r_max, evaluations, "bisection")


def solve_cost(params, initial, r_max, C0=None, tau=DEFAULT_TAU):
    """
    Newton's method, falling back to bisection on
    [r_max / (5 tau), 5 r_max / tau] if it diverges.

    :rtype: CostSolution
    """
    try:
        return cost_newton(params, initial, r_max, C0, tau)
    except NewtonDiverged as exc:
        logger.warning(f"{exc}; falling back to bisection")
        return cost_bisection(params, initial, r_max, r_max / (5 * tau), 5 * r_max / tau)


def cost_brute_force(
    params,
    initial,
    r_max,
    C_grid,
    horizon_days=BRUTE_FORCE_HORIZON,
    step=DEFAULT_STEP,
):
    """
    Simulate every rate on a grid in real time, testing at C until the
    stockpile is spent, and pick the rate with the smallest x_I peak.
    Beta and theta are held at their initial-time values.

    :param C_grid: Candidate rates.
    :returns: (best C, table of C, T and peak x_I per candidate)
    :rtype: tuple
    """
    grid = np.atleast_1d(np.asarray(C_grid, dtype=float))
    if grid.size == 0:
        raise ParameterError("The brute-force grid is empty")
    frozen = params.frozen_at(initial.t)
    supply = TestSupply(Schedule.constant(grid, start=initial.t), stockpile=r_max)
    result = integrate_batch(
        initial.as_array(), initial.t, frozen, supply, horizon_days, step
    )
    peaks = np.nanmax(result.x[..., I], axis=0)
    best = int(np.argmin(peaks))
    logger.info(f"Brute force over {grid.size} rates: best C={grid[best]:.6g}")
    table = pd.DataFrame({"C": grid, "T": r_max / grid, "peak_xI": peaks})
    return float(grid[best]), table

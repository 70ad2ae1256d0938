# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Global-best particle swarm optimisation over a box.

The swarm, personal-best and star-topology social-best bookkeeping come from
the pyswarms backend. The velocity update is done here so that its random
draws come from a seeded generator and can be injected.

Objectives are vectorised: they receive every particle position as an
array of shape (n_particles, n_dims) and return one cost per particle, so a
whole swarm is evaluated in a single call. Non-finite costs count as +inf.
"""
import copy
from dataclasses import dataclass
import functools
import logging

import numpy as np
from pyswarms.backend.generators import create_swarm
from pyswarms.backend.operators import compute_pbest
from pyswarms.backend.swarms import Swarm
from pyswarms.backend.topology import Star

from .common import ParameterError

logger = logging.getLogger(__name__)

# Iterations between progress messages
LOG_INTERVAL = 50


@dataclass(frozen=True)
class PsoConfig:
    """
    Swarm settings.

    :param int swarm_size: Number of particles.
    :param int max_iterations: Number of velocity/position updates.
    :param float inertia: Inertia weight w in (0, 1).
    :param float c1: Cognitive acceleration.
    :param float c2: Social acceleration.
    :param int seed: Seed of the random generator.
    :param tuple lower: Lower corner of the search box.
    :param tuple upper: Upper corner of the search box.
    """

    swarm_size: int = 50
    max_iterations: int = 500
    inertia: float = 0.729
    c1: float = 1.494
    c2: float = 1.494
    seed: int = 0
    lower: tuple = ()
    upper: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if self.swarm_size < 2:
            raise ParameterError(f"Swarm needs at least 2 particles, got {self.swarm_size}")
        if self.max_iterations < 0:
            raise ParameterError("Number of iterations must be non-negative")
        if not 0 < self.inertia < 1:
            raise ParameterError(f"Inertia must lie in (0, 1), got {self.inertia}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ParameterError("Acceleration coefficients must be positive")
        if len(self.lower) != len(self.upper):
            raise ParameterError("Search box corners differ in dimension")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ParameterError(f"Empty search box {self.lower} to {self.upper}")

    @property
    def dimension(self):
        return len(self.lower)

    @property
    def options(self):
        """The coefficients in the form pyswarms swarms carry them."""
        return {"w": self.inertia, "c1": self.c1, "c2": self.c2}

    def with_box(self, lower, upper):
        return PsoConfig(
            self.swarm_size,
            self.max_iterations,
            self.inertia,
            self.c1,
            self.c2,
            self.seed,
            tuple(lower),
            tuple(upper),
        )


@dataclass(frozen=True, eq=False)
class PsoState:
    """
    Swarm state after `iteration` updates.

    :param numpy.ndarray positions: Particle positions (n, d).
    :param numpy.ndarray velocities: Particle velocities (n, d).
    :param numpy.ndarray best_positions: Personal best positions (n, d).
    :param numpy.ndarray best_costs: Personal best costs (n,).
    :param numpy.ndarray social_position: Social best position (d,).
    :param float social_cost: Social best cost.
    :param int iteration: Number of updates performed.
    :param numpy.random.Generator rng: Generator for the next update.
    """

    positions: np.ndarray
    velocities: np.ndarray
    best_positions: np.ndarray
    best_costs: np.ndarray
    social_position: np.ndarray
    social_cost: float
    iteration: int
    rng: np.random.Generator


def _evaluate(objective, positions):
    costs = np.asarray(objective(positions), dtype=float).reshape(len(positions))
    return np.where(np.isfinite(costs), costs, np.inf)


@functools.lru_cache(maxsize=None)
def _topology():
    # pyswarms configures its report logger when a topology is built
    return Star()


def _update_bests(swarm):
    """
    Take a personal best whenever the current cost is no larger than it,
    then let the star topology pick the social best.
    """
    previous = swarm.pbest_cost
    # compute_pbest only replaces on strict improvement
    swarm.pbest_cost = np.nextafter(previous, np.inf)
    swarm.pbest_pos, pbest_cost = compute_pbest(swarm)
    swarm.pbest_cost = np.minimum(pbest_cost, previous)
    swarm.best_pos, swarm.best_cost = _topology().compute_gbest(swarm)


def _state(swarm, iteration, rng):
    social_position = np.asarray(swarm.best_pos, dtype=float)
    if social_position.size == 0:
        # every cost so far is infinite
        social_position = swarm.pbest_pos[int(np.argmin(swarm.pbest_cost))]
    return PsoState(
        positions=swarm.position,
        velocities=swarm.velocity,
        best_positions=swarm.pbest_pos,
        best_costs=swarm.pbest_cost,
        social_position=social_position.copy(),
        social_cost=float(swarm.best_cost),
        iteration=iteration,
        rng=rng,
    )


def pso_initialise(config, objective):
    """
    Scatter the swarm uniformly in the box with zero velocity.

    :param PsoConfig config: Swarm settings.
    :param objective: Vectorised cost function.
    :rtype: PsoState
    """
    if config.dimension == 0:
        raise ParameterError("The search box has no dimensions")
    rng = np.random.default_rng(config.seed)
    lower = np.array(config.lower)
    upper = np.array(config.upper)
    positions = lower + rng.random((config.swarm_size, config.dimension)) * (upper - lower)
    swarm = create_swarm(
        n_particles=config.swarm_size,
        dimensions=config.dimension,
        options=config.options,
        bounds=(lower, upper),
        init_pos=positions,
    )
    swarm.velocity = np.zeros_like(positions)
    swarm.pbest_pos = positions.copy()
    swarm.pbest_cost = np.full(config.swarm_size, np.inf)
    swarm.current_cost = _evaluate(objective, positions)
    _update_bests(swarm)
    return _state(swarm, 0, rng)


def pso_step(state, config, objective, draws=None):
    """
    One swarm update:

        v <- w v + c1 r1 (p_best - p) + c2 r2 (s_best - p)
        p <- p + v

    with r1, r2 uniform on [0, 1], one pair per particle. Positions leaving
    the box are clamped to it and the offending velocity components zeroed.
    A personal best is replaced when the new cost is no larger; the star
    topology moves the social best to the best personal best when that is
    strictly lower.

    :param PsoState state: The current swarm.
    :param PsoConfig config: Swarm settings.
    :param objective: Vectorised cost function.
    :param tuple draws: Optional (r1, r2) arrays of shape (n, 1) replacing
        the random draws.
    :returns: The updated swarm; `state` is left unchanged.
    :rtype: PsoState
    """
    rng = copy.deepcopy(state.rng)
    n_particles = len(state.positions)
    if draws is None:
        r1 = rng.random((n_particles, 1))
        r2 = rng.random((n_particles, 1))
    else:
        r1, r2 = (np.broadcast_to(np.asarray(r, dtype=float).reshape(-1, 1),
                                  (n_particles, 1)) for r in draws)

    velocities = (
        config.inertia * state.velocities
        + config.c1 * r1 * (state.best_positions - state.positions)
        + config.c2 * r2 * (state.social_position - state.positions)
    )
    positions = state.positions + velocities
    lower = np.array(config.lower)
    upper = np.array(config.upper)
    outside = (positions < lower) | (positions > upper)
    positions = np.clip(positions, lower, upper)
    velocities = np.where(outside, 0.0, velocities)

    swarm = Swarm(
        position=positions,
        velocity=velocities,
        options=config.options,
        pbest_pos=state.best_positions.copy(),
        best_pos=state.social_position.copy(),
        pbest_cost=state.best_costs.copy(),
        best_cost=float(state.social_cost),
        current_cost=_evaluate(objective, positions),
    )
    _update_bests(swarm)
    return _state(swarm, state.iteration + 1, rng)


def run_pso(objective, config):
    """
    Run the swarm for the configured number of iterations.

    :param objective: Vectorised cost function.
    :param PsoConfig config: Swarm settings.
    :returns: The final swarm and the social best cost after each iteration,
        starting with the initial swarm.
    :rtype: tuple
    """
    logger.info(
        f"Running PSO: {config.swarm_size} particles, "
        f"{config.max_iterations} iterations, seed {config.seed}"
    )
    state = pso_initialise(config, objective)
    trace = [state.social_cost]
    for _ in range(config.max_iterations):
        state = pso_step(state, config, objective)
        trace.append(state.social_cost)
        if state.iteration % LOG_INTERVAL == 0:
            logger.debug(f"PSO iteration {state.iteration}: best cost {state.social_cost:.6g}")
    logger.info(f"PSO finished with best cost {state.social_cost:.6g}")
    return state, np.array(trace)

# (C) British Crown Copyright 2022, Met Office.
# Please see LICENSE for license details.
"""
Piecewise-constant, right-open signals used for the infection rate, the
testing specificity and the daily testing capacity.
"""
import bisect
import logging
from dataclasses import dataclass

import numpy as np

from .common import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    """
    A signal taking value ``values[i]`` on ``[starts[i], starts[i + 1])``.
    The last interval extends to infinity and times before the first start
    take the first value.

    Values may be scalars or 1-D arrays of equal length, in which case the
    schedule describes a batch of signals evaluated together.

    :param tuple starts: Strictly increasing interval start days.
    :param tuple values: The value on each interval.
    """

    starts: tuple
    values: tuple

    def __post_init__(self):
        starts = tuple(float(start) for start in self.starts)
        values = tuple(
            np.asarray(value, dtype=float) if np.ndim(value) else float(value)
            for value in self.values
        )
        if not starts:
            raise ParameterError("A schedule needs at least one interval")
        if len(starts) != len(values):
            raise ParameterError(
                f"Schedule has {len(starts)} starts but {len(values)} values"
            )
        if any(later <= earlier for earlier, later in zip(starts, starts[1:])):
            raise ParameterError(
                f"Schedule starts must be strictly increasing: {starts}"
            )
        shapes = {np.shape(value) for value in values}
        if len(shapes - {()}) > 1:
            raise ParameterError("Batched schedule values must share one shape")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value, start=0.0):
        return cls((start,), (value,))

    @classmethod
    def from_pairs(cls, pairs):
        """
        Build a schedule from ``(start_day, value)`` pairs.

        :param pairs: Iterable of (start, value).
        :rtype: Schedule
        """
        pairs = list(pairs)
        return cls(
            tuple(start for start, _ in pairs), tuple(value for _, value in pairs)
        )

    @classmethod
    def from_daily(cls, daily_values, start=0.0):
        """
        Zero-order-hold signal holding ``daily_values[k]`` over
        ``[start + k, start + k + 1)``.

        :param daily_values: One value per day.
        :param float start: The start of the first day.
        :rtype: Schedule
        """
        daily_values = np.asarray(daily_values, dtype=float)
        if daily_values.size == 0:
            raise ParameterError("A daily signal needs at least one day")
        starts = start + np.arange(daily_values.size, dtype=float)
        return cls(tuple(starts), tuple(daily_values))

    @property
    def batch_shape(self):
        """The common shape of batched values, () for a scalar schedule."""
        for value in self.values:
            if np.ndim(value):
                return np.shape(value)
        return ()

    def index_at(self, t):
        return max(bisect.bisect_right(self.starts, t) - 1, 0)

    def value_at(self, t):
        """
        Evaluate the schedule at time `t`.

        :param float t: Time in days.
        :returns: The value of the interval containing `t`.
        """
        return self.values[self.index_at(t)]

    def integral(self, t0, t1):
        """
        Integral of the schedule over ``[t0, t1]``.

        :param float t0: Lower limit.
        :param float t1: Upper limit.
        """
        if t1 < t0:
            return -self.integral(t1, t0)
        total = 0.0
        edges = [t0] + [s for s in self.starts if t0 < s < t1] + [t1]
        for lower, upper in zip(edges, edges[1:]):
            total = total + self.value_at(lower) * (upper - lower)
        return total

    def breakpoints_between(self, t0, t1):
        """Interval starts strictly inside ``(t0, t1)``."""
        return [start for start in self.starts if t0 < start < t1]

    def without_breakpoint(self, start):
        """
        Return a copy where the interval beginning at `start` is merged into
        the preceding one, so the earlier value continues past `start`.

        :param float start: The breakpoint to remove.
        :rtype: Schedule
        :raises ParameterError: If `start` is not an interior breakpoint.
        """
        start = float(start)
        if start not in self.starts[1:]:
            raise ParameterError(f"No interior breakpoint at day {start}")
        index = self.starts.index(start)
        logger.debug(f"Removing schedule breakpoint at day {start}")
        return Schedule(
            self.starts[:index] + self.starts[index + 1:],
            self.values[:index] + self.values[index + 1:],
        )

    def frozen_at(self, t):
        """A constant schedule holding the value at time `t`."""
        return Schedule.constant(self.value_at(t), start=self.starts[0])

    def select(self, mask):
        """Restrict a batched schedule to the batch members in `mask`."""
        return Schedule(
            self.starts,
            tuple(value[mask] if np.ndim(value) else value for value in self.values),
        )

    def map_values(self, func):
        return Schedule(self.starts, tuple(func(value) for value in self.values))

    def min_value(self):
        return min(np.min(value) for value in self.values)

    def max_value(self):
        return max(np.max(value) for value in self.values)

    def to_pairs(self):
        """JSON-friendly list of ``[start, value]`` pairs."""
        return [
            [start, value.tolist() if np.ndim(value) else value]
            for start, value in zip(self.starts, self.values)
        ]

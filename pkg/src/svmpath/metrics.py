"""Summaries of traced paths and comparisons between them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .partition import Partition, partition_difference
from .state import PathState
from .tracer import BreakpointRecord, PathProblem, PathResult, Segment


def dual_objective(alpha: np.ndarray, q: np.ndarray) -> float:
    return float(-0.5 * alpha @ q @ alpha + alpha.sum())


def theta_grid(problem: PathProblem, count: int = 100) -> np.ndarray:
    """``count`` values of ``theta`` whose largest ``C`` is geometrically spaced.

    The first and last points are exactly ``0`` and ``theta_max``.
    """
    if count < 2:
        raise InputError("need at least two grid points")
    c_end = problem.c_at(problem.theta_max)
    j = int(np.argmax(c_end))
    lo, hi = problem.c0[j], c_end[j]
    if not (problem.d[j] > 0 and lo > 0):
        return np.linspace(0.0, problem.theta_max, count)
    thetas = (np.geomspace(lo, hi, count) - lo) / problem.d[j]
    thetas = np.clip(thetas, 0.0, problem.theta_max)
    thetas[0], thetas[-1] = 0.0, problem.theta_max
    return np.maximum.accumulate(thetas)


@dataclass
class Sampler:
    """Observer that evaluates the path on a fixed grid as segments are completed.

    Values inside a segment come from the segment's linear formula, which is
    exact on a piecewise-linear path.
    """

    grid: np.ndarray
    q: np.ndarray
    theta: list[float] = field(default_factory=list)
    alpha: list[np.ndarray] = field(default_factory=list)
    alpha0: list[float] = field(default_factory=list)
    labels: list[np.ndarray] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    records: list[BreakpointRecord] = field(default_factory=list)
    _next: int = 0

    def __call__(self, segment: Segment, record: BreakpointRecord, state: PathState | None = None) -> None:
        self.records.append(record)
        while self._next < self.grid.size and self.grid[self._next] <= segment.theta_end:
            th = float(self.grid[self._next])
            st = segment.state_at(max(th, segment.theta_start))
            self.theta.append(th)
            self.alpha.append(st.alpha)
            self.alpha0.append(st.alpha0)
            self.labels.append(segment.labels)
            self.objective.append(dual_objective(st.alpha, self.q))
            self._next += 1

    @property
    def complete(self) -> bool:
        return self._next == self.grid.size


@dataclass(frozen=True)
class PathSummary:
    breakpoints: int
    theta: np.ndarray
    sizes: np.ndarray  # (samples, 3): |O|, |M|, |I|
    alpha: np.ndarray  # (samples, n)
    alpha0: np.ndarray
    objective: np.ndarray
    labels: np.ndarray  # (samples, n)
    delta_theta: np.ndarray
    wall_time: float = 0.0

    def delta_theta_histogram(self, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
        """Counts of ``log10(delta theta)`` over breakpoints with a positive step."""
        steps = self.delta_theta[self.delta_theta > 0]
        if steps.size == 0:
            return np.zeros(bins, dtype=int), np.linspace(0, 1, bins + 1)
        return np.histogram(np.log10(steps), bins=bins)


def summarize(result: PathResult, sampler: Sampler, wall_time: float = 0.0) -> PathSummary:
    if not sampler.complete:
        raise InputError("sampler did not see the whole path")
    labels = np.array(sampler.labels)
    sizes = np.stack([(labels == code).sum(axis=1) for code in range(3)], axis=1)
    return PathSummary(
        result.breakpoints,
        np.array(sampler.theta),
        sizes,
        np.array(sampler.alpha),
        np.array(sampler.alpha0),
        np.array(sampler.objective),
        labels,
        np.array([r.delta_theta for r in result.records]),
        wall_time,
    )


@dataclass(frozen=True)
class PathComparison:
    theta: np.ndarray
    partition_difference: np.ndarray
    alpha_difference: np.ndarray
    breakpoint_ratio: float

    @property
    def max_partition_difference(self) -> float:
        return float(self.partition_difference.max(initial=0.0))


def compare_paths(a: PathSummary, b: PathSummary) -> PathComparison:
    """Per-sample set disagreement and ``|alpha_a - alpha_b|_inf``; ratio is ``b / a`` breakpoints."""
    if a.theta.shape != b.theta.shape or not np.array_equal(a.theta, b.theta):
        raise InputError("paths were sampled on different grids")
    diff = np.array([partition_difference(Partition(la), Partition(lb)) for la, lb in zip(a.labels, b.labels)])
    adiff = np.abs(a.alpha - b.alpha).max(axis=1) if a.alpha.size else np.zeros(0)
    ratio = b.breakpoints / a.breakpoints if a.breakpoints else float("nan")
    return PathComparison(a.theta.copy(), diff, adiff, ratio)

"""Path following in ``theta`` for ``c(theta) = c0 + theta d``.

Each segment keeps a fixed partition, so ``alpha``, ``alpha0`` and the
margins move linearly. A segment ends where the first index would leave the
(relaxed) conditions of its set; there the boundary indices are reassigned by
the partition QP and the margin system is updated in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .degeneracy import (
    BoundarySets,
    cap_boundary_sets,
    collect_boundary_sets,
    noncycling_violation,
    solve_partition_qp,
    split_partition,
    update_partition,
)
from .errors import CyclingError, InputError, NumericalError, PathError, SingularSystemError
from .linsys import MarginSystem, StepDirection, solve_direction
from .partition import INSIDE, MARGIN, OUTSIDE, Partition, Tolerances
from .state import PathState

__all__ = [
    "PathProblem", "PathState", "ThetaCandidates", "BreakpointRecord", "Segment", "PathResult",
    "theta_sets", "advance", "empty_margin_direction", "trace", "CATEGORIES",
]

CATEGORIES = ("theta_O", "theta_Ml", "theta_Mu", "theta_I", "terminal")
TIE_SLACK = 1e-12
YF_REFRESH_EVERY = 32
QD_REFRESH_EVERY = 64


@dataclass(frozen=True)
class PathProblem:
    q: np.ndarray
    y: np.ndarray
    c0: np.ndarray
    d: np.ndarray
    theta_max: float = 1.0

    def __post_init__(self) -> None:
        n = self.y.size
        if self.q.shape != (n, n) or self.c0.shape != (n,) or self.d.shape != (n,):
            raise InputError("Q, y, c0 and d have inconsistent sizes")
        if not self.theta_max > 0:
            raise InputError("theta_max must be positive")
        if np.any(self.c0 <= 0) or np.any(self.c0 + self.theta_max * self.d <= 0):
            raise InputError("c(theta) must stay positive on [0, theta_max]")

    @property
    def n(self) -> int:
        return self.y.size

    def c_at(self, theta: float) -> np.ndarray:
        return self.c0 + theta * self.d

    @classmethod
    def between(cls, q: np.ndarray, y: np.ndarray, c_start: np.ndarray | float,
                c_end: np.ndarray | float) -> PathProblem:
        """Straight path from ``c_start`` (theta=0) to ``c_end`` (theta=1)."""
        n = y.size
        c0 = np.broadcast_to(np.asarray(c_start, dtype=float), (n,)).copy()
        c1 = np.broadcast_to(np.asarray(c_end, dtype=float), (n,)).copy()
        return cls(np.asarray(q), np.asarray(y, dtype=float), c0, c1 - c0, 1.0)


@dataclass(frozen=True)
class ThetaCandidates:
    """Per-index step candidate (``inf`` if the index does not limit) and its category code."""

    value: np.ndarray
    category: np.ndarray

    def minimum(self) -> tuple[float, int]:
        if self.value.size == 0 or not np.isfinite(self.value).any():
            return np.inf, -1
        i = int(np.argmin(self.value))
        return float(self.value[i]), i

    def members(self, code: int) -> np.ndarray:
        return np.flatnonzero(self.category == code)


def theta_sets(state: PathState, direction: StepDirection, partition: Partition, tol: Tolerances,
               d: np.ndarray) -> ThetaCandidates:
    s = direction.signs(d)
    lab = partition.labels
    alpha, c, yf, beta, g = state.alpha, state.c, state.yf, direction.beta, direction.g
    e1, e2 = tol.eps1, tol.eps2
    n = lab.size
    value = np.full(n, np.inf)
    category = np.full(n, -1, dtype=np.int8)

    def offer(mask: np.ndarray, cand: np.ndarray, code: int) -> None:
        cand = np.maximum(cand, 0.0)
        better = mask & (cand < value)
        value[better] = cand[better]
        category[better] = code

    with np.errstate(divide="ignore", invalid="ignore"):
        offer((lab == OUTSIDE) & s.g_neg, (1.0 - e1 - yf) / g, 0)
        offer((lab == MARGIN) & s.beta_neg, -(alpha + e2) / beta, 1)
        offer((lab == MARGIN) & s.beta_over, (c + e2 - alpha) / (beta - d), 2)
        offer((lab == INSIDE) & s.g_pos, (1.0 + e1 - yf) / g, 3)
    return ThetaCandidates(value, category)


def advance(state: PathState, direction: StepDirection, dtheta: float, d: np.ndarray) -> PathState:
    if dtheta < 0:
        raise InputError("step must be nonnegative")
    if dtheta == 0:
        return state.copy()
    return PathState(
        state.theta + dtheta,
        state.alpha0 + dtheta * direction.beta0,
        state.alpha + dtheta * direction.beta,
        state.c + dtheta * d,
        state.yf + dtheta * direction.g,
    )


def _snap(state: PathState, cand: ThetaCandidates, hit: np.ndarray, tol: Tolerances) -> None:
    """Place every index that limits the step exactly on the bound it reached."""
    for i in hit:
        code = cand.category[i]
        if code == 0:
            state.yf[i] = 1.0 - tol.eps1
        elif code == 1:
            state.alpha[i] = -tol.eps2
        elif code == 2:
            state.alpha[i] = state.c[i] + tol.eps2
        elif code == 3:
            state.yf[i] = 1.0 + tol.eps1


def empty_margin_direction(state: PathState, partition: Partition, tol: Tolerances, q: np.ndarray,
                           y: np.ndarray, d: np.ndarray, qd_inside: np.ndarray, room: float,
                           preferred_beta0: float = 0.0) -> tuple[StepDirection, float]:
    """Direction for a segment with no margin points.

    ``alpha`` is pinned (``beta_O = 0``, ``beta_I = d_I``) and only the bias
    rate is free. It is picked to make the segment as long as possible: with
    ``t = dtheta * beta0`` every outside/inside index gives a half-plane in
    ``(dtheta, t)`` and the largest feasible ``dtheta`` is the first crossing
    of a lower and an upper line. Returns the direction and that length.
    """
    inside, outside = partition.inside, partition.outside
    imbalance = float(y[inside] @ d[inside])
    if abs(imbalance) > 1e-9 * (1.0 + np.abs(d).sum()):
        raise NumericalError(f"no margin points but y_I.d_I = {imbalance:.3e}; the equality would break")
    beta = np.zeros(d.size)
    beta[inside] = d[inside]
    rate = qd_inside  # Q beta

    idx = np.r_[outside, inside]
    bound = np.r_[np.full(outside.size, 1.0 - tol.eps1), np.full(inside.size, 1.0 + tol.eps1)]
    yi = y[idx]
    offset = yi * (bound - state.yf[idx])
    slope = -yi * rate[idx]
    is_lower = np.r_[yi[:outside.size] > 0, yi[outside.size:] < 0]
    lo_p, lo_s = offset[is_lower], slope[is_lower]
    up_p, up_s = offset[~is_lower], slope[~is_lower]

    length = room
    if lo_p.size and up_p.size:
        gap = np.maximum(up_p[:, None] - lo_p[None, :], 0.0)
        closing = lo_s[None, :] - up_s[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            meet = np.where(closing > 0, gap / closing, np.inf)
        length = min(room, float(meet.min()))
        gap_floor = 1e-12 * (1.0 + np.abs(offset).max())
        if np.any((gap <= gap_floor) & (closing > 0)):
            length = 0.0

    if length > 0:
        lo = float(np.max(lo_p + lo_s * length)) if lo_p.size else -np.inf
        hi = float(np.min(up_p + up_s * length)) if up_p.size else np.inf
        t_pref = preferred_beta0 * length
        if lo <= t_pref <= hi:
            t = t_pref
        elif np.isfinite(lo) and np.isfinite(hi):
            t = 0.5 * (lo + hi)
        else:
            t = lo if np.isfinite(lo) else hi
        beta0 = t / length
    else:
        beta0 = preferred_beta0
    g = rate + y * beta0
    return StepDirection(float(beta0), beta, g), length


@dataclass(frozen=True)
class BreakpointRecord:
    k: int
    theta: float
    c_max: float
    delta_theta: float
    b_outside: int
    b_inside: int
    truncated: bool
    n_outside: int
    n_margin: int
    n_inside: int
    limiting: str
    qp_objective: float = 0.0
    qp_scale: float = 1.0
    consistency_error: float = 0.0
    noncycling_violation: float = 0.0
    qp_iterations: int = 0


@dataclass(frozen=True)
class Segment:
    """One linear piece: everything needed to evaluate the path on ``[theta_start, theta_end]``."""

    theta_start: float
    theta_end: float
    alpha0: float
    alpha: np.ndarray
    yf: np.ndarray
    c: np.ndarray
    direction: StepDirection
    labels: np.ndarray
    tol: Tolerances
    d: np.ndarray

    @property
    def partition(self) -> Partition:
        return Partition(self.labels)

    def state_at(self, theta: float) -> PathState:
        if not self.theta_start - 1e-15 <= theta <= self.theta_end + 1e-15:
            raise InputError(f"theta {theta} outside segment [{self.theta_start}, {self.theta_end}]")
        dt = theta - self.theta_start
        dr = self.direction
        return PathState(theta, self.alpha0 + dt * dr.beta0, self.alpha + dt * dr.beta,
                         self.c + dt * self.d,
                         self.yf + dt * dr.g)


@dataclass
class PathResult:
    records: list[BreakpointRecord]
    segments: list[Segment]
    final_state: PathState
    final_partition: Partition
    problem: PathProblem

    @property
    def breakpoints(self) -> int:
        """Breakpoints strictly before the end of the path."""
        return sum(1 for r in self.records if r.limiting != "terminal")

    def state_at(self, theta: float) -> PathState:
        for seg in self.segments:
            if theta <= seg.theta_end:
                return seg.state_at(max(theta, seg.theta_start))
        raise InputError(f"theta {theta} beyond the traced range")

    def segment_at(self, theta: float) -> Segment:
        for seg in self.segments:
            if theta <= seg.theta_end:
                return seg
        raise InputError(f"theta {theta} beyond the traced range")


Observer = Callable[[Segment, BreakpointRecord, PathState], None]


def _resolve_tol(tol: Tolerances | float, c: np.ndarray) -> Tolerances:
    if isinstance(tol, Tolerances):
        return tol
    return Tolerances.relative(float(tol), c)


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(a - b).max(initial=0.0) / (1.0 + np.abs(b).max(initial=0.0)))


def trace(problem: PathProblem, state: PathState, partition: Partition, tol: Tolerances | float = 0.0,
          b_cap: int = 10, observer: Observer | None = None, max_breakpoints: int | None = None,
          keep_segments: bool = True) -> PathResult:
    """Follow the path from ``state`` (optimal for ``partition`` at ``state.theta``) to ``theta_max``.

    ``tol`` is either fixed ``Tolerances`` or a relative level ``e`` giving
    ``eps1 = e`` and ``eps2 = e * max(c)`` refreshed at every breakpoint.
    """
    if b_cap < 1:
        raise InputError("b_cap must be at least 1")
    q, y, d = problem.q, problem.y, problem.d
    n = problem.n
    max_breakpoints = max_breakpoints or 50 * n
    state = state.copy()
    records: list[BreakpointRecord] = []
    segments: list[Segment] = []
    k = 0

    def fail(exc: Exception) -> PathError:
        return PathError(str(exc), k, state.theta)

    try:
        system = MarginSystem.build(partition.margin, q, y) if partition.margin.size else None
    except SingularSystemError as exc:
        raise fail(exc) from exc
    inside = partition.inside
    qd_inside = q[:, inside] @ d[inside]
    preferred_beta0 = 0.0
    direction: StepDirection | None = None

    while True:
        seg_tol = _resolve_tol(tol, state.c)
        room = problem.theta_max - state.theta
        try:
            if system is None:
                direction, lp_len = empty_margin_direction(
                    state, partition, seg_tol, q, y, d, qd_inside, room, preferred_beta0)
            elif direction is None:
                direction = solve_direction(system, partition, d, qd_inside)
        except NumericalError as exc:
            raise fail(exc) from exc

        cand = theta_sets(state, direction, partition, seg_tol, d)
        dmin, _ = cand.minimum()
        if dmin >= room:
            step, limiting, hit = room, "terminal", np.empty(0, dtype=np.intp)
        else:
            step = dmin
            hit = np.flatnonzero(cand.value <= dmin + TIE_SLACK)
            limiting = CATEGORIES[cand.category[int(np.argmin(cand.value))]]

        start = state
        state = advance(state, direction, step, d)
        if limiting == "terminal":
            state.theta = problem.theta_max
            state.c = problem.c_at(problem.theta_max)
        _snap(state, cand, hit, seg_tol)
        if keep_segments:
            segments.append(Segment(start.theta, state.theta, start.alpha0, start.alpha, start.yf,
                                    start.c, direction, partition.labels, seg_tol, d))

        k += 1
        if (k % YF_REFRESH_EVERY) == 0:
            full = state.recompute_yf(q, y)
            drift = float(np.abs(full - state.yf).max())
            if drift > 1e-7 * (1.0 + np.abs(full).max()):
                err = NumericalError(f"cached margins drifted by {drift:.3e}")
                raise fail(err) from err

        if limiting == "terminal":
            rec = BreakpointRecord(k, state.theta, float(state.c.max()), step, 0, 0, False,
                                   *partition.sizes(), "terminal")
            records.append(rec)
            if observer is not None and keep_segments:
                observer(segments[-1], rec, state)
            break

        if k > max_breakpoints:
            err = CyclingError(f"more than {max_breakpoints} breakpoints: suspected cycling")
            raise fail(err) from err

        try:
            b = collect_boundary_sets(state, direction, partition, d)
            if b.size == 0:
                raise NumericalError("step limited by an index that is not on a set boundary")
            cap = b_cap
            capped = cap_boundary_sets(b, cand.value, cap)
            if np.setdiff1d(partition.margin, capped.indices).size == 0 and b.size > cap:
                cap = max(b_cap, 2)
                capped = cap_boundary_sets(b, cand.value, cap)
            b = capped
            _, margin_left, _ = split_partition(partition, b)

            leaving = np.intersect1d(partition.margin, b.indices)
            half_system = _rebuild(system, margin_left, leaving, (), q, y)
            sol = solve_partition_qp(state, partition, b, q, y, d, system=half_system, incoming=direction)
            new_partition = update_partition(partition, b, sol, d)
            joining = np.intersect1d(new_partition.margin, b.indices)
            system = _rebuild(half_system, new_partition.margin, (), joining, q, y)
        except NumericalError as exc:
            raise fail(exc) from exc

        qd_inside = _update_inside_term(q, d, partition, new_partition, qd_inside, k)
        if system is not None:
            try:
                direction = solve_direction(system, new_partition, d, qd_inside)
            except NumericalError as exc:
                raise fail(exc) from exc
            consistency = max(_relative_gap(direction.beta, sol.beta), _relative_gap(direction.g, sol.g),
                              abs(direction.beta0 - sol.beta0) / (1.0 + abs(sol.beta0)))
        else:
            consistency = _relative_gap(np.where(new_partition.labels == INSIDE, d, 0.0), sol.beta)
            direction = None
            preferred_beta0 = sol.beta0
        noncyc = noncycling_violation(new_partition, b, sol.direction(), d)

        rec = BreakpointRecord(k, state.theta, float(state.c.max()), step, b.outside.size, b.inside.size,
                               b.truncated, *new_partition.sizes(), limiting, sol.objective, sol.scale,
                               consistency, noncyc, sol.iterations)
        records.append(rec)
        if observer is not None and keep_segments:
            observer(segments[-1], rec, state)
        partition = new_partition

    return PathResult(records, segments, state, partition, problem)


def _rebuild(system: MarginSystem | None, members: np.ndarray, removed, added, q: np.ndarray,
             y: np.ndarray) -> MarginSystem | None:
    """Margin system for ``members``: incremental when possible, fresh as a fallback."""
    if members.size == 0:
        return None
    if system is not None:
        try:
            out = system.update(added=added, removed=removed)
            if np.array_equal(out.members, members):
                return out
        except SingularSystemError:
            pass
    return MarginSystem.build(members, q, y)


def _update_inside_term(q: np.ndarray, d: np.ndarray, old: Partition, new: Partition,
                        qd_inside: np.ndarray, k: int) -> np.ndarray:
    if k % QD_REFRESH_EVERY == 0:
        inside = new.inside
        return q[:, inside] @ d[inside]
    was, now = old.labels == INSIDE, new.labels == INSIDE
    gained = np.flatnonzero(now & ~was)
    lost = np.flatnonzero(was & ~now)
    if gained.size == 0 and lost.size == 0:
        return qd_inside
    return qd_inside + q[:, gained] @ d[gained] - q[:, lost] @ d[lost]

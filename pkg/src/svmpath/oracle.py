"""Reference solvers for the dual at a fixed ``c``.

``solve_dual_reference`` runs maximal-violating-pair coordinate ascent and
then polishes: the approximate solution is thresholded into a partition whose
bordered system is solved exactly, repairing the partition one index at a
time until every optimality condition holds. ``enumerate_partitions_exact``
tries every partition and is the ground truth on tiny problems.

Both deliberately use plain dense solves instead of the incremental margin
system, so they share no numerical code with the path tracer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import OracleError
from .partition import INSIDE, MARGIN, OUTSIDE, Partition, check_exact
from .state import PathState

KKT_TOL = 1e-8


@dataclass(frozen=True)
class OracleSolution:
    alpha: np.ndarray
    alpha0: float
    partition: Partition
    objective: float
    kkt_residual: float
    iterations: int = 0
    c: np.ndarray | None = None


def dual_value(alpha: np.ndarray, q: np.ndarray) -> float:
    return float(-0.5 * alpha @ q @ alpha + alpha.sum())


def _smo(q: np.ndarray, y: np.ndarray, c: np.ndarray, alpha: np.ndarray, tol: float,
         max_iter: int) -> tuple[np.ndarray, float, int]:
    """Maximal-violating-pair SMO on ``min 1/2 a'Qa - 1'a``; returns ``(alpha, bias estimate, iters)``."""
    grad = q @ alpha - 1.0
    diag = np.diag(q)
    pos = y > 0
    for it in range(max_iter):
        score = -y * grad
        up = np.where(pos, alpha < c, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < c)
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        j = int(np.argmin(s_low))
        gap = s_up[i] - s_low[j]
        if gap <= tol:
            return alpha, 0.5 * (s_up[i] + s_low[j]), it
        curv = diag[i] + diag[j] - 2.0 * y[i] * y[j] * q[i, j]
        t = gap / max(curv, 1e-15)
        # alpha_i moves by y_i t, alpha_j by -y_j t; clip to the box
        t = min(t, c[i] - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else c[j] - alpha[j])
        ai = alpha[i] + y[i] * t
        aj = alpha[j] - y[j] * t
        # land exactly on a bound when the clip was active
        ai = min(max(ai, 0.0), c[i])
        aj = min(max(aj, 0.0), c[j])
        di, dj = ai - alpha[i], aj - alpha[j]
        alpha[i], alpha[j] = ai, aj
        grad += di * q[:, i] + dj * q[:, j]
    raise OracleError(f"coordinate ascent did not reach gap {tol:.1e} in {max_iter} iterations")


def _bias_interval(base: np.ndarray, y: np.ndarray, labels: np.ndarray) -> tuple[float, float, int, int]:
    """Interval of ``alpha0`` keeping outside points at ``yf >= 1`` and inside points at ``yf <= 1``.

    ``yf_i = base_i + y_i alpha0``. Also returns the indices defining each end (-1 if unbounded).
    """
    lo, hi, arg_lo, arg_hi = -np.inf, np.inf, -1, -1
    for i in np.flatnonzero(labels != MARGIN):
        bound = (1.0 - base[i]) * y[i]
        lower = (labels[i] == OUTSIDE) == (y[i] > 0)
        if lower and bound > lo:
            lo, arg_lo = bound, int(i)
        elif not lower and bound < hi:
            hi, arg_hi = bound, int(i)
    return lo, hi, arg_lo, arg_hi


def solve_for_partition(q: np.ndarray, y: np.ndarray, c: np.ndarray,
                        labels: np.ndarray) -> tuple[np.ndarray, float] | None:
    """``(alpha, alpha0)`` with ``alpha_O = 0``, ``alpha_I = c_I`` and unit margins on ``M``.

    With an empty margin set ``alpha0`` is the midpoint of its feasible interval.
    Returns ``None`` if the system is singular or the bias interval is empty.
    """
    margin = np.flatnonzero(labels == MARGIN)
    inside = np.flatnonzero(labels == INSIDE)
    alpha = np.zeros(y.size)
    alpha[inside] = c[inside]
    if margin.size == 0:
        if abs(y[inside] @ c[inside]) > 1e-10 * (1.0 + c.sum()):
            return None
        lo, hi, _, _ = _bias_interval(q @ alpha, y, labels)
        if lo > hi + 1e-12:
            return None
        if np.isfinite(lo) and np.isfinite(hi):
            return alpha, 0.5 * (lo + hi)
        return alpha, lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)
    m = margin.size
    a = np.zeros((m + 1, m + 1))
    a[0, 1:] = a[1:, 0] = y[margin]
    a[1:, 1:] = q[np.ix_(margin, margin)]
    rhs = np.r_[-(y[inside] @ c[inside]), 1.0 - q[np.ix_(margin, inside)] @ c[inside]]
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)) or np.linalg.cond(a) > 1e14:
        return None
    alpha[margin] = sol[1:]
    return alpha, float(sol[0])


def kkt_violations(q: np.ndarray, y: np.ndarray, c: np.ndarray, labels: np.ndarray, alpha: np.ndarray,
                   alpha0: float) -> np.ndarray:
    """Per-index violation of the exact optimality conditions (box and margin), unscaled."""
    yf = q @ alpha + y * alpha0
    out = np.zeros(y.size)
    o, m, i = labels == OUTSIDE, labels == MARGIN, labels == INSIDE
    out[o] = np.maximum(1.0 - yf[o], np.abs(alpha[o]))
    out[m] = np.maximum.reduce([np.abs(yf[m] - 1.0), -alpha[m], alpha[m] - c[m]])
    out[i] = np.maximum(yf[i] - 1.0, np.abs(alpha[i] - c[i]))
    return out


def _polish(q: np.ndarray, y: np.ndarray, c: np.ndarray, labels: np.ndarray,
            max_moves: int) -> tuple[np.ndarray, float, np.ndarray] | None:
    labels = labels.copy()
    seen: set[bytes] = set()
    box_tol = 1e-12 * (1.0 + c.max())
    for _ in range(max_moves):
        key = labels.tobytes()
        if key in seen:
            return None
        seen.add(key)
        solved = solve_for_partition(q, y, c, labels)
        if solved is None:
            return None
        alpha, alpha0 = solved
        yf = q @ alpha + y * alpha0
        # score each index by how far it sits outside its set, and move the worst one
        viol = np.zeros(y.size)
        target = labels.copy()
        o, m, i = labels == OUTSIDE, labels == MARGIN, labels == INSIDE
        viol[o] = 1.0 - yf[o]
        viol[i] = yf[i] - 1.0
        target[o | i] = MARGIN
        low, high = m & (alpha < -box_tol), m & (alpha > c + box_tol)
        viol[low] = -alpha[low] / (1.0 + c[low])
        viol[high] = (alpha[high] - c[high]) / (1.0 + c[high])
        target[low] = OUTSIDE
        target[high] = INSIDE
        worst = int(np.argmax(viol))
        if viol[worst] <= KKT_TOL * 0.1:
            alpha[m] = np.clip(alpha[m], 0.0, c[m])
            return alpha, alpha0, labels
        labels[worst] = target[worst]
    return None


def solve_dual_reference(q: np.ndarray, y: np.ndarray, c: np.ndarray, alpha_start: np.ndarray | None = None,
                         max_iter: int = 2_000_000) -> OracleSolution:
    """Exact dual optimum at box ``c``: SMO to a loose gap, then exact polishing."""
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    n = y.size
    if alpha_start is None:
        alpha = np.zeros(n)
    else:
        alpha = np.clip(np.asarray(alpha_start, dtype=float), 0.0, c)
        if abs(y @ alpha) > 1e-12 * (1.0 + alpha.sum()):
            alpha = np.zeros(n)
    scale = 1.0 + c.max()
    tol = 1e-3
    total = 0
    while True:
        alpha, bias, iters = _smo(q, y, c, alpha, tol, max_iter - total)
        total += iters
        yf = q @ alpha + y * bias
        thr = 1e-8 * scale
        labels = np.full(n, MARGIN, dtype=np.int8)
        labels[(alpha <= thr) & (yf > 1.0)] = OUTSIDE
        labels[(alpha >= c - thr) & (yf < 1.0)] = INSIDE
        polished = _polish(q, y, c, labels, 2 * n + 10)
        if polished is not None:
            a, a0, lab = polished
            viol = kkt_violations(q, y, c, lab, a, a0)
            resid = float(max(viol.max(initial=0.0), abs(y @ a) / (1.0 + np.abs(a).sum())))
            if resid <= KKT_TOL:
                return OracleSolution(a, a0, Partition(lab), dual_value(a, q), resid, total, c.copy())
        if tol <= 1e-13:
            raise OracleError("reference solver could not certify an exact optimum")
        tol *= 1e-2


def enumerate_partitions_exact(q: np.ndarray, y: np.ndarray, c: np.ndarray) -> OracleSolution:
    """Search all ``3^n`` partitions for one whose solve satisfies every exact condition.

    Among consistent partitions the one with the most margin points wins
    (they all share ``alpha`` when ``Q`` is positive definite).
    """
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    n = y.size
    if n > 12:
        raise OracleError("exhaustive enumeration is limited to n <= 12")
    best = None
    for combo in itertools.product((OUTSIDE, MARGIN, INSIDE), repeat=n):
        labels = np.array(combo, dtype=np.int8)
        solved = solve_for_partition(q, y, c, labels)
        if solved is None:
            continue
        alpha, alpha0 = solved
        viol = kkt_violations(q, y, c, labels, alpha, alpha0)
        if viol.max() > 1e-9 * (1.0 + c.max()):
            continue
        m = int(np.count_nonzero(labels == MARGIN))
        if best is None or m > best[0]:
            best = (m, labels, alpha, alpha0, float(viol.max()))
    if best is None:
        raise OracleError("no partition satisfies the exact optimality conditions (degenerate instance?)")
    _, labels, alpha, alpha0, resid = best
    return OracleSolution(alpha, alpha0, Partition(labels), dual_value(alpha, q), resid, 3 ** n, c.copy())


def initialize_path(problem, alpha_start: np.ndarray | None = None) -> tuple[PathState, Partition]:
    """Exact optimum and a consistent partition at ``theta = 0``.

    Points at a bound whose margin is exactly one are placed in ``M``. If the
    margin set ends up empty while ``y_I.d_I != 0`` (the equality would break
    at once), the bias is moved to the end of its interval that lets the
    defining point enter ``M``.
    """
    q, y, c, d = problem.q, problem.y, problem.c0, problem.d
    ref = solve_dual_reference(q, y, c, alpha_start)
    thr = 1e-7 * float(c.max())
    alpha, alpha0 = ref.alpha.copy(), ref.alpha0
    yf = q @ alpha + y * alpha0
    labels = np.full(y.size, MARGIN, dtype=np.int8)
    at_low = alpha <= thr
    at_high = alpha >= c - thr
    on_margin = np.abs(yf - 1.0) <= 1e-12 * (1.0 + np.abs(yf).max())
    labels[at_low & ~on_margin] = OUTSIDE
    labels[at_high & ~at_low & ~on_margin] = INSIDE
    if not np.array_equal(labels, ref.partition.labels):
        # the reference partition is self-consistent; only take the thresholded one if it is too
        solved = solve_for_partition(q, y, c, labels)
        if solved is None or kkt_violations(q, y, c, labels, *solved).max() > KKT_TOL:
            labels = ref.partition.labels.copy()
    solved = solve_for_partition(q, y, c, labels)
    if solved is None:
        raise OracleError("initial partition is singular; try a larger jitter")
    alpha, alpha0 = solved
    inside = np.flatnonzero(labels == INSIDE)
    alpha[labels == OUTSIDE] = 0.0
    alpha[inside] = c[inside]

    if not np.any(labels == MARGIN):
        imbalance = float(y[inside] @ d[inside])
        if abs(imbalance) > 1e-9 * (1.0 + np.abs(d).sum()):
            lo, hi, arg_lo, arg_hi = _bias_interval(q @ alpha, y, labels)
            pick, arg = (hi, arg_hi) if imbalance > 0 else (lo, arg_lo)
            if arg < 0:
                raise OracleError("cannot move any point onto the margin; try a larger jitter")
            alpha0 = pick
            labels[arg] = MARGIN

    state = PathState.from_alpha(0.0, alpha0, alpha, c, q, y)
    margin = labels == MARGIN
    state.yf[margin] = np.where(np.abs(state.yf[margin] - 1.0) <= 1e-9, 1.0, state.yf[margin])
    partition = Partition(labels)
    report = check_exact(state, partition, y)
    if not report.passed:
        raise OracleError(f"initial point fails the optimality check (worst {report.worst:.3e}); "
                          "try a larger jitter")
    return state, partition

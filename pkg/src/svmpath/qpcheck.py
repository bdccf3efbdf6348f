"""Independent checks for the path code.

Nothing here calls the margin system, the reduced partition QP or the
tracer's step logic: the unreduced QP is solved by a generic dense
active-set routine, and the conventional path is a separate, deliberately
plain implementation that moves one index per breakpoint and settles ties
by trying every assignment of the tied indices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .degeneracy import BoundarySets, QpSolution, partition_qp_objective
from .errors import QpError, PathError
from .partition import INSIDE, MARGIN, OUTSIDE, Partition
from .state import PathState


# ---------------------------------------------------------------- unreduced QP

def dense_active_set(h: np.ndarray, f: np.ndarray, a_eq: np.ndarray, b_eq: np.ndarray, g_in: np.ndarray,
                     h_in: np.ndarray, max_iter: int = 500) -> np.ndarray:
    """``min 1/2 x'Hx + f'x`` s.t. ``A x = b``, ``G x >= h``; ``H`` convex on the feasible subspace.

    Phase one finds a feasible point with ``linprog``; the working set then
    starts empty and only ever gains constraints that block a step, which
    keeps it linearly independent.
    """
    nvar = f.size
    lp = scipy.optimize.linprog(np.zeros(nvar), A_ub=-g_in, b_ub=-h_in, A_eq=a_eq, b_eq=b_eq,
                                bounds=[(None, None)] * nvar, method="highs")
    if lp.status != 0:
        raise QpError(f"phase one failed: {lp.message}")
    x = lp.x.copy()
    scale = 1.0 + np.abs(x).max()
    working: list[int] = []
    for _ in range(max_iter):
        act = np.vstack([a_eq, g_in[working]]) if working else a_eq
        z = scipy.linalg.null_space(act)
        grad = h @ x + f
        ray = False
        step = np.zeros(nvar)
        if z.shape[1]:
            # the objective may be flat along some feasible directions (the bias, typically)
            lam_red, vec = np.linalg.eigh(z.T @ h @ z)
            flat = lam_red <= 1e-10 * max(1.0, np.abs(lam_red).max())
            rg = z.T @ grad
            kern = vec[:, flat] @ (vec[:, flat].T @ rg)
            if np.abs(kern).max(initial=0.0) > 1e-10 * (1.0 + np.abs(rg).max()):
                step, ray = -z @ kern, True
            else:
                curved = ~flat
                coef = vec[:, curved] @ ((vec[:, curved].T @ rg) / lam_red[curved])
                step = -z @ coef
        if not ray and np.abs(step).max() <= 1e-13 * scale:
            # multipliers: grad = A_eq' mu + G_W' lam, need lam >= 0
            lam = np.linalg.lstsq(act.T, grad, rcond=None)[0][a_eq.shape[0]:]
            if lam.size == 0 or lam.min() >= -1e-10 * (1.0 + np.abs(grad).max()):
                return x
            working.pop(int(np.argmin(lam)))
            continue
        slope = g_in @ step
        room = g_in @ x - h_in
        t, hit = (np.inf if ray else 1.0), -1
        for j in np.flatnonzero(slope < -1e-14 * (1.0 + np.abs(step).max())):
            if j in working:
                continue
            tj = max(room[j], 0.0) / -slope[j]
            if tj < t:
                t, hit = tj, int(j)
        if not np.isfinite(t):
            raise QpError("objective unbounded below along a feasible ray")
        x = x + t * step
        if hit >= 0:
            working.append(hit)
    raise QpError("dense active-set method did not converge")


def solve_partition_qp_unreduced(state: PathState, partition: Partition, b: BoundarySets, q: np.ndarray,
                                 y: np.ndarray, d: np.ndarray) -> QpSolution:
    """The partition QP over all ``2n + 1`` unknowns ``(beta0, beta, g)``.

    ``partition`` is the segment's partition; boundary indices are removed from
    it here. Intended for small ``n`` only.
    """
    n = y.size
    if n > 30:
        raise ValueError("unreduced QP is for n <= 30")
    lab = partition.labels.copy()
    bidx = np.union1d(b.outside, b.inside)
    lab[bidx] = -1
    nvar = 2 * n + 1
    ib0, ibeta, ig = 0, np.arange(1, n + 1), np.arange(n + 1, 2 * n + 1)

    rows, rhs = [], []
    # g = Q beta + y beta0
    for i in range(n):
        r = np.zeros(nvar)
        r[ibeta] = q[i]
        r[ib0] = y[i]
        r[ig[i]] = -1.0
        rows.append(r)
        rhs.append(0.0)
    r = np.zeros(nvar)
    r[ibeta] = y
    rows.append(r)
    rhs.append(0.0)
    for i in range(n):
        if lab[i] == OUTSIDE or lab[i] == INSIDE:
            r = np.zeros(nvar)
            r[ibeta[i]] = 1.0
            rows.append(r)
            rhs.append(d[i] if lab[i] == INSIDE else 0.0)
        elif lab[i] == MARGIN:
            r = np.zeros(nvar)
            r[ig[i]] = 1.0
            rows.append(r)
            rhs.append(0.0)
    a_eq, b_eq = np.array(rows), np.array(rhs)

    g_rows, g_rhs = [], []
    for i in b.outside:
        for col in (ibeta[i], ig[i]):
            r = np.zeros(nvar)
            r[col] = 1.0
            g_rows.append(r)
            g_rhs.append(0.0)
    for i in b.inside:
        r = np.zeros(nvar)
        r[ibeta[i]] = -1.0
        g_rows.append(r)
        g_rhs.append(-d[i])
        r = np.zeros(nvar)
        r[ig[i]] = -1.0
        g_rows.append(r)
        g_rhs.append(0.0)
    g_in = np.array(g_rows).reshape(-1, nvar)
    h_in = np.array(g_rhs)

    h = np.zeros((nvar, nvar))
    f = np.zeros(nvar)
    for i in bidx:
        h[ibeta[i], ig[i]] = h[ig[i], ibeta[i]] = 1.0
    for i in b.inside:
        f[ig[i]] = -d[i]

    x = dense_active_set(h, f, a_eq, b_eq, g_in, h_in)
    beta0, beta, g = float(x[ib0]), x[ibeta].copy(), x[ig].copy()
    objective = partition_qp_objective(beta, g, b, d)
    scale = (1.0 + np.abs(beta[bidx]).max(initial=0.0) + np.abs(d[bidx]).max(initial=0.0)) * \
        (1.0 + np.abs(g[bidx]).max(initial=0.0))
    return QpSolution(beta0, beta, g, objective, scale)


# ---------------------------------------------------------------- linearity

@dataclass(frozen=True)
class LinearityReport:
    alpha_error: np.ndarray  # per segment, relative
    yf_error: np.ndarray  # per segment, relative
    passed: bool


def finite_difference_path_check(result, problem) -> LinearityReport:
    """Midpoint of every segment against the average of its endpoints and a fresh ``Q alpha``."""
    q, y = problem.q, problem.y
    segs = result.segments
    a_err, f_err = [], []
    for k, seg in enumerate(segs):
        span = seg.theta_end - seg.theta_start
        end_alpha = segs[k + 1].alpha if k + 1 < len(segs) else result.final_state.alpha
        mid_alpha = seg.alpha + 0.5 * span * seg.direction.beta
        mid_alpha0 = seg.alpha0 + 0.5 * span * seg.direction.beta0
        mid_yf = seg.yf + 0.5 * span * seg.direction.g
        avg = 0.5 * (seg.alpha + end_alpha)
        a_err.append(float(np.abs(mid_alpha - avg).max() / (1.0 + np.abs(avg).max())))
        fresh = q @ mid_alpha + y * mid_alpha0
        f_err.append(float(np.abs(mid_yf - fresh).max() / (1.0 + np.abs(fresh).max())))
    a_err, f_err = np.array(a_err), np.array(f_err)
    passed = bool(np.all(a_err <= 1e-9) and np.all(f_err <= 1e-7))
    return LinearityReport(a_err, f_err, passed)


# ---------------------------------------------------------------- conventional path

def _direction(q, y, d, labels):
    """``(beta0, beta, g)`` by a dense solve; ``beta0`` is ``None`` when the margin set is empty."""
    m = np.flatnonzero(labels == MARGIN)
    i = np.flatnonzero(labels == INSIDE)
    beta = np.zeros(y.size)
    beta[i] = d[i]
    if m.size == 0:
        return None, beta, q @ beta
    a = np.zeros((m.size + 1, m.size + 1))
    a[0, 1:] = a[1:, 0] = y[m]
    a[1:, 1:] = q[np.ix_(m, m)]
    sol = np.linalg.solve(a, -np.r_[y[i] @ d[i], q[np.ix_(m, i)] @ d[i]])
    beta[m] = sol[1:]
    g = q @ beta + y * sol[0]
    g[m] = 0.0
    return float(sol[0]), beta, g


def _bias_range(yf_base, rate, y, labels, dtheta):
    """Feasible ``alpha0`` shift range after a step ``dtheta`` with zero bias rate."""
    vals = yf_base + dtheta * rate
    lo, hi = -np.inf, np.inf
    for i in np.flatnonzero(labels != MARGIN):
        need_ge = labels[i] == OUTSIDE  # yf >= 1 for outside, <= 1 for inside
        edge = (1.0 - vals[i]) / y[i]
        if need_ge == (y[i] > 0):
            lo = max(lo, edge)
        else:
            hi = min(hi, edge)
    return lo, hi


def conventional_path(problem, state: PathState, partition: Partition,
                      max_breakpoints: int | None = None) -> list[float]:
    """Breakpoint ``theta`` values of the exact path, found one event at a time.

    At each event the indices that reached a bound are tried in every
    combination of stay/move (smallest moves first); the first combination
    whose new direction keeps all of them feasible is taken.
    """
    q, y, d = problem.q, problem.y, problem.d
    n = y.size
    max_breakpoints = max_breakpoints or 50 * n
    theta = state.theta
    alpha, alpha0, c = state.alpha.copy(), state.alpha0, state.c.copy()
    labels = partition.labels.copy()
    out: list[float] = []
    beta0_hint = 0.0

    for _ in range(max_breakpoints):
        beta0, beta, g = _direction(q, y, d, labels)
        yf = q @ alpha + y * alpha0
        room = problem.theta_max - theta
        free_bias = beta0 is None
        if free_bias:
            # bias is free: go as far as the bias interval stays open
            beta0, step = _free_bias_step(yf, g, y, labels, room, beta0_hint)
            g = g + y * beta0
        else:
            step = min((t for t, _ in _events(alpha, c, yf, beta, g, d, labels)), default=np.inf)
        if step >= room:
            break
        theta += step
        alpha = alpha + step * beta
        alpha0 = alpha0 + step * beta0
        c = c + step * d
        out.append(theta)
        yf = q @ alpha + y * alpha0
        if free_bias:
            tied = np.flatnonzero(np.abs(yf - 1.0) <= 1e-9).tolist()
        else:
            tied = sorted({i for t, i in _events(alpha - step * beta, c - step * d, yf - step * g, beta, g, d,
                                                 labels) if t <= step + 1e-12})
        labels, alpha, beta0_hint = _resolve(q, y, d, labels, alpha, c, tied)
        if labels is None:
            raise PathError("no assignment of the tied indices keeps the path feasible", len(out), theta)
    else:
        raise PathError("conventional path exceeded its breakpoint cap", len(out), theta)
    return out


def _events(alpha, c, yf, beta, g, d, labels):
    tb = 1e-11 * (1.0 + np.abs(beta).max())
    tg = 1e-11 * (1.0 + np.abs(g).max())
    out = []
    for i in range(labels.size):
        if labels[i] == OUTSIDE and g[i] < -tg:
            out.append((max((1.0 - yf[i]) / g[i], 0.0), i))
        elif labels[i] == INSIDE and g[i] > tg:
            out.append((max((1.0 - yf[i]) / g[i], 0.0), i))
        elif labels[i] == MARGIN:
            if beta[i] < -tb:
                out.append((max(-alpha[i] / beta[i], 0.0), i))
            if beta[i] - d[i] > tb:
                out.append((max((c[i] - alpha[i]) / (beta[i] - d[i]), 0.0), i))
    return out


def _free_bias_step(yf, rate, y, labels, room, hint):
    """Longest step with a constant bias rate keeping every point feasible, and that rate."""
    idx = np.flatnonzero(labels != MARGIN)
    # candidate lengths: where any two bias limits cross, plus the end of the path
    limits = []
    for i in idx:
        limits.append(((1.0 - yf[i]) / y[i], -rate[i] / y[i]))
    cands = {room}
    for (p1, s1), (p2, s2) in itertools.combinations(limits, 2):
        if s1 != s2:
            t = (p2 - p1) / (s1 - s2)
            if 0 <= t < room:
                cands.add(t)
    best = 0.0
    for t in sorted(cands):
        lo, hi = _bias_range(yf, rate, y, labels, t)
        if lo <= hi + 1e-12 * (1.0 + abs(lo) + abs(hi)):
            best = t
        else:
            break
    if best == 0.0:
        return hint, 0.0
    lo, hi = _bias_range(yf, rate, y, labels, best)
    if np.isfinite(lo) and np.isfinite(hi):
        shift = hint * best if lo <= hint * best <= hi else 0.5 * (lo + hi)
    else:
        shift = lo if np.isfinite(lo) else (hi if np.isfinite(hi) else hint * best)
    return shift / best, best


def _resolve(q, y, d, labels, alpha, c, tied):
    """First stay/move assignment of ``tied`` whose direction satisfies the non-cycling signs."""
    old = labels.copy()
    for size in range(1, len(tied) + 1):
        for moved in itertools.combinations(tied, size):
            for dest in itertools.product(*[_destinations(old[i], alpha[i], c[i]) for i in moved]):
                new = old.copy()
                for i, to in zip(moved, dest):
                    new[i] = to
                if np.any(new == MARGIN):
                    try:
                        beta0, beta, g = _direction(q, y, d, new)
                    except np.linalg.LinAlgError:
                        continue
                else:
                    if abs(y[new == INSIDE] @ d[new == INSIDE]) > 1e-9 * (1.0 + np.abs(d).sum()):
                        continue
                    beta0, beta, g = 0.0, *_direction(q, y, d, new)[1:]
                    beta0 = _sign_feasible_bias(g, y, new, old, tied)
                    if beta0 is None:
                        continue
                    g = g + y * beta0
                if _signs_ok(new, old, tied, beta, g, d, alpha, c):
                    out_alpha = alpha.copy()
                    out_alpha[new == OUTSIDE] = np.where(old[new == OUTSIDE] == OUTSIDE,
                                                         out_alpha[new == OUTSIDE], 0.0)
                    ins = (new == INSIDE) & (old != INSIDE)
                    out_alpha[ins] = c[ins]
                    return new, out_alpha, beta0
    return None, alpha, 0.0


def _destinations(label, a, c):
    if label == MARGIN:
        return (OUTSIDE,) if a <= 0.5 * c else (INSIDE,)
    return (MARGIN,)


def _sign_feasible_bias(g, y, new, old, tied):
    """A bias rate satisfying the outward sign conditions of the tied indices, if any exists."""
    lo, hi = -np.inf, np.inf
    for i in tied:
        # outside needs g_i + y_i b >= 0, inside needs g_i + y_i b <= 0
        if new[i] == MARGIN:
            continue
        edge = -g[i] / y[i]
        if (new[i] == OUTSIDE) == (y[i] > 0):
            lo = max(lo, edge)
        else:
            hi = min(hi, edge)
    if lo > hi:
        return None
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    return lo if np.isfinite(lo) else (hi if np.isfinite(hi) else 0.0)


def _signs_ok(new, old, tied, beta, g, d, alpha, c) -> bool:
    tb = 1e-9 * (1.0 + np.abs(beta).max())
    tg = 1e-9 * (1.0 + np.abs(g).max())
    for i in tied:
        if new[i] == MARGIN and old[i] == OUTSIDE and beta[i] < -tb:
            return False
        if new[i] == MARGIN and old[i] == INSIDE and beta[i] - d[i] > tb:
            return False
        if new[i] == OUTSIDE and g[i] < -tg:
            return False
        if new[i] == INSIDE and g[i] > tg:
            return False
        if new[i] == MARGIN and old[i] == MARGIN:
            # a margin point that touched a bound may only stay if it turns back
            if alpha[i] <= 0.5 * c[i] and beta[i] < -tb:
                return False
            if alpha[i] > 0.5 * c[i] and beta[i] - d[i] > tb:
                return False
    return True

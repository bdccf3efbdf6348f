"""Partition updates at degenerate breakpoints.

At a breakpoint every index that satisfies the membership conditions of two
sets at once is collected into ``B_O`` (margin/outside) or ``B_I``
(margin/inside). A small convex QP then fixes the next direction and, through
the sign pattern of its solution, the set each boundary index joins. The
QP's optimal value is known to be zero, which doubles as a certificate.

With ``z_i = beta_i`` on ``B_O`` and ``z_i = d_i - beta_i`` on ``B_I`` and
``w = (g_{B_O}, -g_{B_I})`` the QP reads ``min z.w`` s.t. ``z, w >= 0`` with
``w`` affine in ``z``; its zero-valued optimum is the complementarity point of
``w = H z + f (+ a beta0)``, which is computed here as the minimiser of the
bound-constrained problem ``1/2 z'Hz + f'z`` (``beta0`` entering as the
multiplier of the equality when the margin set is empty).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PartitionUpdateError, QpError
from .linsys import MarginSystem, StepDirection
from .partition import INSIDE, KKT_SLACK, MARGIN, OUTSIDE, Partition
from .state import PathState

QP_OBJECTIVE_RTOL = 1e-8


@dataclass(frozen=True)
class BoundarySets:
    outside: np.ndarray  # B_O
    inside: np.ndarray  # B_I
    truncated: bool = False
    dropped: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    @property
    def indices(self) -> np.ndarray:
        return np.union1d(self.outside, self.inside)

    @property
    def size(self) -> int:
        return self.outside.size + self.inside.size

    def __post_init__(self) -> None:
        if np.intersect1d(self.outside, self.inside).size:
            raise ValueError("B_O and B_I overlap")


@dataclass
class QpSolution:
    beta0: float
    beta: np.ndarray
    g: np.ndarray
    objective: float
    scale: float
    iterations: int = 0

    def direction(self) -> StepDirection:
        return StepDirection(self.beta0, self.beta.copy(), self.g.copy())


def _empty() -> np.ndarray:
    return np.empty(0, dtype=np.intp)


def collect_boundary_sets(state: PathState, direction: StepDirection, partition: Partition,
                          d: np.ndarray, slack: float = KKT_SLACK) -> BoundarySets:
    """Indices sitting on the strict boundary between two sets and heading across it."""
    s = direction.signs(d)
    lab = partition.labels
    alpha, c, yf = state.alpha, state.c, state.yf
    a_tol = slack * np.maximum(1.0, np.abs(c))
    b_out = ((lab == MARGIN) & (alpha <= a_tol) & s.beta_neg) | ((lab == OUTSIDE) & (yf <= 1.0 + slack) & s.g_neg)
    b_in = ((lab == MARGIN) & (alpha >= c - a_tol) & s.beta_over) | ((lab == INSIDE) & (yf >= 1.0 - slack) & s.g_pos)
    b_in &= ~b_out
    return BoundarySets(np.flatnonzero(b_out), np.flatnonzero(b_in))


def cap_boundary_sets(b: BoundarySets, theta: np.ndarray, b_cap: int) -> BoundarySets:
    """Keep the ``b_cap`` indices with the smallest step candidates (ties: lowest index)."""
    if b_cap < 1:
        raise ValueError("b_cap must be at least 1")
    idx = b.indices
    if idx.size <= b_cap:
        return b
    order = np.lexsort((idx, theta[idx]))
    keep = np.sort(idx[order[:b_cap]])
    dropped = np.sort(idx[order[b_cap:]])
    return BoundarySets(np.intersect1d(b.outside, keep), np.intersect1d(b.inside, keep), True, dropped)


def split_partition(partition: Partition, b: BoundarySets) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(O, M, I)`` with the boundary indices removed."""
    lab = partition.labels.copy()
    lab[b.indices] = -1
    return np.flatnonzero(lab == OUTSIDE), np.flatnonzero(lab == MARGIN), np.flatnonzero(lab == INSIDE)


def nonneg_qp(h: np.ndarray, f: np.ndarray, a: np.ndarray | None = None, r: float = 0.0,
              z0: np.ndarray | None = None, max_iter: int | None = None) -> tuple[np.ndarray, float, int]:
    """Primal active-set method for ``min 1/2 z'Hz + f'z`` s.t. ``z >= 0`` (and ``a'z = r``).

    ``H`` must be positive definite. Returns ``(z, mu, iterations)`` where
    ``mu`` is the multiplier in ``Hz + f + mu a >= 0`` (zero without ``a``).
    """
    m = f.size
    max_iter = max_iter or 50 * (m + 2)
    if m == 0:
        return np.zeros(0), 0.0, 0

    if a is None:
        z = np.zeros(m) if z0 is None else np.maximum(np.asarray(z0, dtype=float), 0.0)
    elif z0 is not None and np.all(z0 >= 0) and abs(a @ z0 - r) <= 1e-14 * (1 + abs(r)):
        z = np.asarray(z0, dtype=float).copy()
    else:
        z = np.zeros(m)
        if r != 0.0:
            cand = np.flatnonzero(a * np.sign(r) > 0)
            if cand.size == 0:
                raise QpError("partition QP is infeasible: equality cannot be met with z >= 0")
            z[cand[0]] = r / a[cand[0]]
    free = z > 0
    mu = 0.0
    scale = 1.0 + np.abs(f).max() + np.abs(h).max() * np.abs(z).max(initial=0.0)

    for it in range(1, max_iter + 1):
        fi = np.flatnonzero(free)
        target = np.zeros(m)
        mu_free = False
        if a is None:
            if fi.size:
                target[fi] = np.linalg.solve(h[np.ix_(fi, fi)], -f[fi])
        elif fi.size:
            k = fi.size
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = h[np.ix_(fi, fi)]
            kkt[:k, k] = a[fi]
            kkt[k, :k] = a[fi]
            sol = np.linalg.solve(kkt, np.r_[-f[fi], r])
            target[fi] = sol[:k]
            mu = float(sol[k])
        else:
            mu_free = True

        step = target - z
        if np.abs(step).max() <= 1e-14 * (1.0 + np.abs(z).max()):
            z = np.where(free, target, 0.0)
            lam = h @ z + f
            if a is not None:
                if mu_free:
                    mu = _central_multiplier(lam, a)
                lam = lam + mu * a
            fixed = np.flatnonzero(~free)
            tol = 1e-12 * scale
            if fixed.size == 0 or lam[fixed].min() >= -tol:
                return z, mu, it
            worst = fixed[np.argmin(lam[fixed])]
            free[worst] = True
            continue

        blocking = np.flatnonzero(free & (step < 0))
        t = 1.0
        hit = -1
        if blocking.size:
            ratios = -z[blocking] / step[blocking]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                t, hit = float(ratios[j]), int(blocking[j])
        z = z + t * step
        if hit >= 0:
            z[hit] = 0.0
            free[hit] = False
        z[~free] = 0.0
        np.maximum(z, 0.0, out=z)

    raise QpError(f"active-set QP did not converge in {max_iter} iterations", iterate=z)


def _central_multiplier(c: np.ndarray, a: np.ndarray) -> float:
    """``mu`` maximising ``min_i (c_i + mu a_i)`` when every variable sits at zero."""
    pos, neg = a > 0, a < 0
    lo = np.max(-c[pos] / a[pos]) if pos.any() else -np.inf
    hi = np.min(-c[neg] / a[neg]) if neg.any() else np.inf
    if np.isfinite(lo) and np.isfinite(hi):
        return float(0.5 * (lo + hi))
    if np.isfinite(lo):
        return float(lo)
    if np.isfinite(hi):
        return float(hi)
    return 0.0


def solve_partition_qp(state: PathState, partition: Partition, b: BoundarySets, q: np.ndarray,
                       y: np.ndarray, d: np.ndarray, system: MarginSystem | None = None,
                       incoming: StepDirection | None = None) -> QpSolution:
    """Solve the reduced partition QP over ``beta_B``.

    ``partition`` is the partition of the segment that just ended; the boundary
    indices are taken out of it internally. ``system``, if given, must be the
    margin system of the margin set with the boundary indices removed.
    """
    outside_h, margin_h, inside_h = split_partition(partition, b)
    bidx = b.indices
    sign = np.where(np.isin(bidx, b.outside), 1.0, -1.0)
    d_tilde = np.where(sign < 0, d[bidx], 0.0)
    qd_inside = q[:, inside_h] @ d[inside_h]
    q_bb = q[np.ix_(bidx, bidx)]

    beta = np.zeros(d.size)
    beta[inside_h] = d[inside_h]

    if margin_h.size:
        if system is None:
            system = MarginSystem.build(margin_h, q, y)
        elif not np.array_equal(system.members, margin_h):
            raise ValueError("margin system does not match the margin set minus B")
        rhs_u = np.r_[-(y[inside_h] @ d[inside_h]), -qd_inside[margin_h]]
        u = system.solve(rhs_u)
        border = np.vstack([y[bidx][None, :], q[np.ix_(margin_h, bidx)]])
        x = system.solve(border)
        q_red = q_bb - border.T @ x
        q_red = 0.5 * (q_red + q_red.T)
        v_b = y[bidx] * u[0] + q[np.ix_(bidx, margin_h)] @ u[1:] + qd_inside[bidx]

        h = sign[:, None] * q_red * sign[None, :]
        f = sign * (q_red @ d_tilde + v_b)
        z0 = None
        if incoming is not None:
            z0 = np.maximum(sign * (incoming.beta[bidx] - d_tilde), 0.0)
        z, _, iters = nonneg_qp(h, f, z0=z0)
        beta_b = sign * z + d_tilde
        sol = u - x @ beta_b
        beta0 = float(sol[0])
        beta[margin_h] = sol[1:]
        beta[bidx] = beta_b
        g = q[:, margin_h] @ sol[1:] + q[:, bidx] @ beta_b + qd_inside + y * beta0
    else:
        h = sign[:, None] * q_bb * sign[None, :]
        f = sign * (q_bb @ d_tilde + qd_inside[bidx])
        a = sign * y[bidx]
        r = -(y[inside_h] @ d[inside_h] + y[bidx] @ d_tilde)
        z, mu, iters = nonneg_qp(h, f, a, r)
        beta_b = sign * z + d_tilde
        beta0 = mu
        beta[bidx] = beta_b
        g = q[:, bidx] @ beta_b + qd_inside + y * beta0

    objective = partition_qp_objective(beta, g, b, d)
    scale = (1.0 + np.abs(beta[bidx]).max(initial=0.0) + np.abs(d[bidx]).max(initial=0.0)) * \
        (1.0 + np.abs(g[bidx]).max(initial=0.0))
    if not -1e-9 * scale <= objective <= QP_OBJECTIVE_RTOL * scale:
        raise QpError(f"partition QP objective {objective:.3e} is not zero (scale {scale:.3e})",
                      iterate=beta)
    return QpSolution(beta0, beta, g, objective, scale, iters)


def partition_qp_objective(beta: np.ndarray, g: np.ndarray, b: BoundarySets, d: np.ndarray) -> float:
    return float(g[b.outside] @ beta[b.outside] + g[b.inside] @ (beta[b.inside] - d[b.inside]))


def update_partition(partition: Partition, b: BoundarySets, sol: QpSolution, d: np.ndarray,
                     slack: float = KKT_SLACK) -> Partition:
    """Assign every boundary index by the sign pattern of the QP solution.

    Zero in both ``beta`` and ``g`` sends an index back to the bound it came
    from (``O`` for ``B_O``, ``I`` for ``B_I``).
    """
    beta, g = sol.beta, sol.g
    tb = slack * (1.0 + np.abs(beta).max(initial=0.0) + np.abs(d).max(initial=0.0))
    tg = slack * (1.0 + np.abs(g).max(initial=0.0))
    lab = partition.labels.copy()
    for i in b.outside:
        if abs(beta[i]) <= tb and g[i] >= -tg:
            lab[i] = OUTSIDE
        elif beta[i] > tb and abs(g[i]) <= tg:
            lab[i] = MARGIN
        else:
            raise PartitionUpdateError(f"index {i} in B_O has beta={beta[i]:.3e}, g={g[i]:.3e}")
    for i in b.inside:
        if abs(beta[i] - d[i]) <= tb and g[i] <= tg:
            lab[i] = INSIDE
        elif beta[i] < d[i] - tb and abs(g[i]) <= tg:
            lab[i] = MARGIN
        else:
            raise PartitionUpdateError(f"index {i} in B_I has beta-d={beta[i] - d[i]:.3e}, g={g[i]:.3e}")
    return Partition(lab)


def noncycling_violation(new: Partition, b: BoundarySets, direction: StepDirection, d: np.ndarray) -> float:
    """Largest breach of the four non-cycling sign conditions, relative to the direction's scale."""
    beta, g = direction.beta, direction.g
    lab = new.labels
    worst = 0.0
    for i in b.outside:
        if lab[i] == MARGIN:
            worst = max(worst, -beta[i], abs(g[i]))
        elif lab[i] == OUTSIDE:
            worst = max(worst, abs(beta[i]), -g[i])
        else:
            return np.inf
    for i in b.inside:
        if lab[i] == MARGIN:
            worst = max(worst, beta[i] - d[i], abs(g[i]))
        elif lab[i] == INSIDE:
            worst = max(worst, abs(beta[i] - d[i]), g[i])
        else:
            return np.inf
    scale = 1.0 + max(np.abs(beta).max(initial=0.0), np.abs(g).max(initial=0.0))
    return float(worst / scale)

"""The bordered margin system ``[[0, y_M^T], [y_M, Q_M]]`` and the path direction.

The system keeps an explicit inverse of the bordered matrix. Membership
changes are applied by bordering (add) and Schur-complement deflation
(remove), each ``O(|M|^2)``; every solve does one pass of iterative
refinement against the assembled matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg

from .errors import InputError, SingularSystemError
from .partition import Partition

SINGULAR_RTOL = 1e-12
REFRESH_EVERY = 64


def bordered_matrix(q: np.ndarray, y: np.ndarray, members: np.ndarray) -> np.ndarray:
    m = members.size
    a = np.empty((m + 1, m + 1))
    a[0, 0] = 0.0
    a[0, 1:] = y[members]
    a[1:, 0] = y[members]
    a[1:, 1:] = q[np.ix_(members, members)]
    return a


class MarginSystem:
    """Inverse of the bordered matrix for an ascending list of margin indices."""

    def __init__(self, q: np.ndarray, y: np.ndarray, members: np.ndarray, inverse: np.ndarray,
                 smallest_pivot: float, updates: int = 0) -> None:
        self.q = q
        self.y = y
        self.members = members
        self.inverse = inverse
        self.smallest_pivot = smallest_pivot
        self.updates = updates

    @property
    def size(self) -> int:
        return self.members.size

    @classmethod
    def build(cls, members: Iterable[int], q: np.ndarray, y: np.ndarray) -> MarginSystem:
        members = np.unique(np.asarray(list(members) if not isinstance(members, np.ndarray) else members,
                                       dtype=np.intp))
        if members.size == 0:
            raise InputError("margin set is empty; the bordered system needs at least one index")
        a = bordered_matrix(q, y, members)
        norm = np.abs(a).sum(axis=1).max()
        _, dblock, _ = scipy.linalg.ldl(a)
        pivot = float(np.abs(np.linalg.eigvalsh(dblock)).min())
        if pivot < SINGULAR_RTOL * norm:
            raise SingularSystemError(f"margin system of size {members.size} is singular", pivot)
        inv = np.linalg.solve(a, np.eye(a.shape[0]))
        inv = 0.5 * (inv + inv.T)
        return cls(q, y, members, inv, pivot)

    def matrix(self) -> np.ndarray:
        return bordered_matrix(self.q, self.y, self.members)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self.inverse @ rhs
        x += self.inverse @ (rhs - self.matrix() @ x)
        return x

    def reconstruction_error(self) -> float:
        """``||A A^-1 - I||_inf`` scaled by ``||A||_inf``."""
        a = self.matrix()
        resid = a @ self.inverse - np.eye(a.shape[0])
        return float(np.abs(resid).sum(axis=1).max() * np.abs(a).sum(axis=1).max())

    def position(self, index: int) -> int:
        pos = int(np.searchsorted(self.members, index))
        if pos >= self.members.size or self.members[pos] != index:
            raise InputError(f"index {index} is not a margin member")
        return pos + 1

    def _remove(self, members: list[int], inv: np.ndarray, index: int) -> tuple[list[int], np.ndarray]:
        p = members.index(index) + 1
        pivot = inv[p, p]
        if abs(pivot) <= SINGULAR_RTOL * np.abs(inv).max():
            raise SingularSystemError(f"removing {index} leaves a singular margin system", abs(pivot))
        keep = np.r_[0:p, p + 1:inv.shape[0]]
        col = inv[keep, p]
        inv = inv[np.ix_(keep, keep)] - np.outer(col, col) / pivot
        return members[:p - 1] + members[p:], inv

    def _add(self, members: list[int], inv: np.ndarray, index: int) -> tuple[list[int], np.ndarray, float]:
        idx = np.asarray(members, dtype=np.intp)
        b = np.empty(idx.size + 1)
        b[0] = self.y[index]
        b[1:] = self.q[idx, index]
        ib = inv @ b
        s = self.q[index, index] - b @ ib
        scale = max(1.0, np.abs(b).sum() + abs(self.q[index, index]))
        if not s > SINGULAR_RTOL * scale:
            raise SingularSystemError(f"adding {index} makes the margin system singular", s)
        m1 = inv.shape[0]
        out = np.empty((m1 + 1, m1 + 1))
        out[:m1, :m1] = inv + np.outer(ib, ib) / s
        out[:m1, m1] = -ib / s
        out[m1, :m1] = -ib / s
        out[m1, m1] = 1.0 / s
        return members + [index], out, float(s)

    def update(self, added: Iterable[int] = (), removed: Iterable[int] = ()) -> MarginSystem:
        """New system for ``(members - removed) | added``; the receiver is left untouched."""
        added = sorted(int(i) for i in added)
        removed = sorted(int(i) for i in removed)
        current = set(self.members.tolist())
        if set(added) & current:
            raise InputError("added indices already in the margin set")
        if not set(removed) <= current:
            raise InputError("removed indices are not margin members")
        if len(removed) == len(current) and not added:
            raise InputError("removing every member leaves an empty margin set")
        if not added and not removed:
            return self

        members = self.members.tolist()
        inv = self.inverse
        pivot = self.smallest_pivot
        # remove first, but hold back one member if the set would pass through empty
        deferred = removed[-1:] if len(removed) == len(current) else []
        for i in removed[:len(removed) - len(deferred)]:
            members, inv = self._remove(members, inv, i)
        for i in added:
            members, inv, s = self._add(members, inv, i)
            pivot = min(pivot, s)
        for i in deferred:
            members, inv = self._remove(members, inv, i)

        order = np.argsort(members, kind="stable")
        perm = np.r_[0, order + 1]
        inv = inv[np.ix_(perm, perm)]
        inv = 0.5 * (inv + inv.T)
        new_members = np.asarray(members, dtype=np.intp)[order]
        updates = self.updates + len(added) + len(removed)
        if updates >= REFRESH_EVERY:
            return MarginSystem.build(new_members, self.q, self.y)
        return MarginSystem(self.q, self.y, new_members, inv, pivot, updates)


def update_members(system: MarginSystem, added: Iterable[int] = (), removed: Iterable[int] = ()) -> MarginSystem:
    return system.update(added, removed)


def build_margin_system(partition: Partition, q: np.ndarray, y: np.ndarray) -> MarginSystem:
    return MarginSystem.build(partition.margin, q, y)


@dataclass
class StepDirection:
    """Rates of change of ``alpha0``, ``alpha`` and the margins ``y f`` along a segment.

    ``g`` is stored with the margin entries set to zero; the value actually
    computed there is kept in ``margin_residual`` as a diagnostic.
    """

    beta0: float
    beta: np.ndarray
    g: np.ndarray
    margin_residual: float = 0.0

    def signs(self, d: np.ndarray) -> DirectionSigns:
        """Sign pattern with round-off sized values treated as zero.

        Step lengths and boundary sets both read this, so an index can never
        limit a step without also qualifying for the boundary set.
        """
        tb = SIGN_RTOL * (1.0 + np.abs(self.beta).max(initial=0.0))
        tg = SIGN_RTOL * (1.0 + np.abs(self.g).max(initial=0.0))
        return DirectionSigns(
            beta_neg=self.beta < -tb,
            beta_over=self.beta - d > tb,
            g_neg=self.g < -tg,
            g_pos=self.g > tg,
        )


SIGN_RTOL = 1e-11


@dataclass(frozen=True)
class DirectionSigns:
    beta_neg: np.ndarray
    beta_over: np.ndarray
    g_neg: np.ndarray
    g_pos: np.ndarray


def inside_term(q: np.ndarray, partition: Partition, d: np.ndarray) -> np.ndarray:
    inside = partition.inside
    return q[:, inside] @ d[inside]


def solve_direction(system: MarginSystem, partition: Partition, d: np.ndarray,
                    qd_inside: np.ndarray | None = None) -> StepDirection:
    """``[beta0; beta_M] = -A^{-1} [y_I^T d_I; Q_MI d_I]``, ``beta_O = 0``, ``beta_I = d_I``."""
    q, y = system.q, system.y
    margin = partition.margin
    if not np.array_equal(margin, system.members):
        raise InputError("margin system was built for a different margin set")
    inside = partition.inside
    if qd_inside is None:
        qd_inside = q[:, inside] @ d[inside]

    rhs = np.empty(margin.size + 1)
    rhs[0] = -(y[inside] @ d[inside])
    rhs[1:] = -qd_inside[margin]
    sol = system.solve(rhs)

    beta = np.zeros_like(d, dtype=float)
    beta[inside] = d[inside]
    beta[margin] = sol[1:]
    beta0 = float(sol[0])
    g = q[:, margin] @ sol[1:] + qd_inside + y * beta0
    resid = float(np.abs(g[margin]).max(initial=0.0))
    g[margin] = 0.0
    return StepDirection(beta0, beta, g, resid)

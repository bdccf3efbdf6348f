"""Index partitions ``(O, M, I)`` and exact / relaxed optimality checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InputError
from .state import PathState

OUTSIDE, MARGIN, INSIDE = 0, 1, 2
SET_NAMES = ("O", "M", "I")
KKT_SLACK = 1e-9


class Partition:
    """Disjoint cover of ``{0..n-1}`` by the outside, margin and inside sets.

    Stored as a read-only label vector; the three sets are exposed as sorted
    index arrays so iteration order is always ascending.
    """

    __slots__ = ("labels",)

    def __init__(self, labels: Iterable[int]) -> None:
        lab = np.array(list(labels) if not isinstance(labels, np.ndarray) else labels, dtype=np.int8)
        if lab.ndim != 1 or np.any((lab < OUTSIDE) | (lab > INSIDE)):
            raise InputError("partition labels must be 0 (O), 1 (M) or 2 (I)")
        lab.setflags(write=False)
        self.labels = lab

    @classmethod
    def from_sets(cls, n: int, outside: Iterable[int] = (), margin: Iterable[int] = (),
                  inside: Iterable[int] = ()) -> Partition:
        lab = np.full(n, -1, dtype=np.int8)
        for code, members in ((OUTSIDE, outside), (MARGIN, margin), (INSIDE, inside)):
            for i in members:
                if not 0 <= i < n:
                    raise InputError(f"index {i} out of range for n={n}")
                if lab[i] != -1:
                    raise InputError(f"index {i} assigned to two sets")
                lab[i] = code
        missing = np.flatnonzero(lab == -1)
        if missing.size:
            raise InputError(f"indices {missing.tolist()} are not assigned to any set")
        return cls(lab)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def outside(self) -> np.ndarray:
        return np.flatnonzero(self.labels == OUTSIDE)

    @property
    def margin(self) -> np.ndarray:
        return np.flatnonzero(self.labels == MARGIN)

    @property
    def inside(self) -> np.ndarray:
        return np.flatnonzero(self.labels == INSIDE)

    def sizes(self) -> tuple[int, int, int]:
        counts = np.bincount(self.labels, minlength=3)
        return int(counts[0]), int(counts[1]), int(counts[2])

    def with_labels(self, indices: Iterable[int], code: int) -> Partition:
        lab = self.labels.copy()
        lab[list(indices)] = code
        return Partition(lab)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Partition) and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash(self.labels.tobytes())

    def __repr__(self) -> str:
        o, m, i = self.sizes()
        return f"Partition(|O|={o}, |M|={m}, |I|={i})"


@dataclass(frozen=True)
class Tolerances:
    """``eps1`` widens the margin condition, ``eps2`` the box on the multipliers."""

    eps1: float = 0.0
    eps2: float = 0.0

    def __post_init__(self) -> None:
        if not (self.eps1 >= 0 and self.eps2 >= 0):
            raise InputError("tolerances must be nonnegative")

    @property
    def exact(self) -> bool:
        return self.eps1 == 0 and self.eps2 == 0

    @classmethod
    def relative(cls, e: float, c: np.ndarray) -> Tolerances:
        """``eps1 = e`` and ``eps2 = e * max(c)``."""
        return cls(e, e * float(np.max(c)))


@dataclass(frozen=True)
class KktReport:
    output_violation: np.ndarray
    multiplier_violation: np.ndarray
    equality_residual: float
    passed: bool
    slack: float

    @property
    def worst_output(self) -> float:
        return float(self.output_violation.max(initial=0.0))

    @property
    def worst_multiplier(self) -> float:
        return float(self.multiplier_violation.max(initial=0.0))

    @property
    def worst(self) -> float:
        return max(self.worst_output, self.worst_multiplier)


def equality_tolerance(alpha: np.ndarray) -> float:
    return 1e-8 * float(np.abs(alpha).sum()) + 1e-12


def raw_violations(state: PathState, partition: Partition, tol: Tolerances) -> tuple[np.ndarray, np.ndarray]:
    """Unslacked distance of every index from its set's relaxed conditions."""
    yf, alpha, c = state.yf, state.alpha, state.c
    e1, e2 = tol.eps1, tol.eps2
    lab = partition.labels
    zero = np.zeros_like(yf)

    out_o = np.maximum(zero, (1.0 - e1) - yf)
    out_m = np.maximum(zero, np.abs(yf - 1.0) - e1)
    out_i = np.maximum(zero, yf - (1.0 + e1))
    output = np.select([lab == OUTSIDE, lab == MARGIN], [out_o, out_m], out_i)

    mul_o = np.maximum.reduce([zero, alpha, -e2 - alpha])
    mul_m = np.maximum.reduce([zero, -e2 - alpha, alpha - (c + e2)])
    mul_i = np.maximum.reduce([zero, c - alpha, alpha - (c + e2)])
    multiplier = np.select([lab == OUTSIDE, lab == MARGIN], [mul_o, mul_m], mul_i)
    return output, multiplier


def check_relaxed(state: PathState, partition: Partition, tol: Tolerances, y: np.ndarray,
                  slack: float = KKT_SLACK) -> KktReport:
    if partition.n != state.alpha.size:
        raise InputError("partition and state sizes differ")
    output, multiplier = raw_violations(state, partition, tol)
    eq = abs(float(y @ state.alpha))
    passed = bool(output.max(initial=0.0) <= slack and multiplier.max(initial=0.0) <= slack
                  and eq <= equality_tolerance(state.alpha))
    return KktReport(np.maximum(output - slack, 0.0), np.maximum(multiplier - slack, 0.0), eq, passed, slack)


def check_exact(state: PathState, partition: Partition, y: np.ndarray, slack: float = KKT_SLACK) -> KktReport:
    return check_relaxed(state, partition, Tolerances(0.0, 0.0), y, slack)


def partition_difference(a: Partition, b: Partition) -> float:
    """Fraction of indices placed in different sets."""
    if a.n != b.n:
        raise InputError("partitions have different sizes")
    return float(np.count_nonzero(a.labels != b.labels)) / a.n

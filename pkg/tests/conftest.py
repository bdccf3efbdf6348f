from __future__ import annotations

import numpy as np
import pytest

from svmpath.cli import generate_synthetic
from svmpath.dataset import Dataset, KernelSpec, build_q
from svmpath.oracle import initialize_path
from svmpath.tracer import PathProblem, trace


def synthetic_problem(n: int = 60, p: int = 2, seed: int = 0, gamma: float = 0.5,
                      c_start: float | None = None, c_end: float | None = None) -> PathProblem:
    """Two-Gaussian instance with the default regularization range ``0.1/n .. 1e6/n``."""
    ds = generate_synthetic(n, p, seed)
    q = build_q(ds, KernelSpec("rbf", gamma, 1e-6)).values
    return PathProblem.between(q, ds.y, 0.1 / n if c_start is None else c_start,
                               1e6 / n if c_end is None else c_end)


def random_q(rng: np.random.Generator, n: int, p: int = 2, gamma: float = 0.5,
             jitter: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Jittered RBF ``Q`` on two random clusters with both labels present."""
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    rng.shuffle(y)
    x = rng.standard_normal((n, p)) + 0.7 * y[:, None]
    q = build_q(Dataset(x, y), KernelSpec("rbf", gamma, jitter)).values
    return q, y


@pytest.fixture(scope="session")
def problem() -> PathProblem:
    return synthetic_problem()


@pytest.fixture(scope="session")
def initial(problem):
    return initialize_path(problem)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


E_VALUES = (0.0, 0.001, 0.01, 0.1, 0.5)


@pytest.fixture(scope="session")
def paths(problem, initial):
    """``paths(e, b_cap=10)`` traces the synthetic problem once per setting."""
    cache = {}

    def get(e: float, b_cap: int = 10):
        if (e, b_cap) not in cache:
            cache[e, b_cap] = trace(problem, initial[0], initial[1], e, b_cap=b_cap)
        return cache[e, b_cap]

    return get


def random_qp_instance(rng: np.random.Generator, empty_margin: bool = False):
    """Random partition-QP input ``(state, partition, b, q, y, d)`` on a small RBF instance.

    Boundary indices come from ``O`` or ``M`` into ``B_O`` and from ``I`` or ``M``
    into ``B_I``. With ``empty_margin`` every margin index is put in ``B``.
    """
    from svmpath.degeneracy import BoundarySets
    from svmpath.partition import INSIDE, MARGIN, OUTSIDE, Partition
    from svmpath.state import PathState

    n = int(rng.integers(4, 13))
    q, y = random_q(rng, n)
    lab = rng.integers(0, 3, n).astype(np.int8)
    margin = np.flatnonzero(lab == MARGIN)
    nb = int(rng.integers(1, min(5, n) + 1))
    if empty_margin:
        extra = rng.choice(np.flatnonzero(lab != MARGIN), max(0, nb - margin.size), replace=False) \
            if np.any(lab != MARGIN) else np.empty(0, dtype=int)
        bidx = np.union1d(margin, extra)
        if bidx.size == 0:
            lab[0] = MARGIN
            bidx = np.array([0])
    else:
        if margin.size < 2:
            lab[rng.choice(n, 2, replace=False)] = MARGIN
        margin = np.flatnonzero(lab == MARGIN)
        keep = rng.choice(margin)
        pool = np.setdiff1d(np.arange(n), [keep])
        bidx = np.sort(rng.choice(pool, min(nb, pool.size), replace=False))
    outside, inside = [], []
    for i in bidx:
        if lab[i] == OUTSIDE or (lab[i] == MARGIN and rng.random() < 0.5):
            outside.append(i)
        else:
            inside.append(i)
    b = BoundarySets(np.array(outside, dtype=np.intp), np.array(inside, dtype=np.intp))
    d = rng.uniform(0.5, 2.0, n)
    c = np.ones(n)
    state = PathState.from_alpha(0.0, 0.0, np.where(lab == INSIDE, c, 0.0), c, q, y)
    return state, Partition(lab), b, q, y, d


def equality_infeasible(partition, b, y, d) -> bool:
    """True when ``z >= 0``, ``a'z = r`` has no solution in the empty-margin form.

    With the margin set emptied, ``y'beta = 0`` reads
    ``sum_{B_O} y_i z_i - sum_{B_I} y_i z_i = -(y_I'd_I + y_{B_I}'d_{B_I})``.
    """
    from svmpath.partition import INSIDE

    inside = np.setdiff1d(np.flatnonzero(partition.labels == INSIDE), b.indices)
    a = np.r_[y[b.outside], -y[b.inside]]
    r = -(y[inside] @ d[inside] + y[b.inside] @ d[b.inside])
    if r > 0:
        return not np.any(a > 0)
    if r < 0:
        return not np.any(a < 0)
    return False
